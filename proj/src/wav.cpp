#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "xdsv/error.hpp"
#include "xdsv/frontend.hpp"

namespace xdsv {

void Waveform::validate() const {
  require(sample_rate > 0, ErrorKind::Validation, "sample rate must be positive");
  for (float s : samples) require(std::isfinite(s), ErrorKind::Numeric, "non-finite sample");
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return std::uint16_t(p[0] | (p[1] << 8));
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open audio " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  require(bytes.size() >= 12 && std::memcmp(bytes.data(), "RIFF", 4) == 0 &&
              std::memcmp(bytes.data() + 8, "WAVE", 4) == 0,
          ErrorKind::Parse, where + "not a RIFF/WAVE file");
  Waveform w;
  int channels = 0, bits = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = read_u32(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    require(pos + 8 + size <= bytes.size(), ErrorKind::Parse, where + "truncated chunk");
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      require(size >= 16, ErrorKind::Parse, where + "short fmt chunk");
      require(read_u16(body) == 1, ErrorKind::Parse, where + "only PCM audio is supported");
      channels = read_u16(body + 2);
      w.sample_rate = static_cast<int>(read_u32(body + 4));
      bits = read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      require(have_fmt, ErrorKind::Parse, where + "data chunk before fmt chunk");
      require(channels == 1 && bits == 16, ErrorKind::Parse,
              where + "expected mono 16-bit PCM");
      const std::size_t n = size / 2;
      w.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        w.samples[i] = static_cast<float>(static_cast<std::int16_t>(read_u16(body + 2 * i))) /
                       32768.0f;
      return w;
    }
    pos += 8 + size + (size & 1);
  }
  fail(ErrorKind::Parse, where + "no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot write audio " + path.string());
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (float s : w.samples) {
    const long q = std::clamp(std::lround(double(s) * 32768.0), -32768l, 32767l);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  require(out.good(), ErrorKind::Io, "short write to " + path.string());
}

}  // namespace xdsv
