#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "xdsv/manifest.hpp"
#include "xdsv/random.hpp"
#include "xdsv/tensor.hpp"

namespace testing {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("xdsv-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline xdsv::UtteranceRecord make_record(const std::string& utt, const std::string& spk,
                                         xdsv::Domain domain, double duration = 2.0) {
  xdsv::UtteranceRecord r;
  r.utt_id = utt;
  r.speaker_id = spk;
  r.play_id = "play0";
  r.domain = domain;
  r.duration_s = duration;
  r.audio_path = "wav/" + spk + "/" + utt + ".wav";
  return r;
}

// counts[k] utterances for speaker names[k], alternating domains.
inline xdsv::Manifest make_manifest(const std::vector<std::string>& names,
                                    const std::vector<int>& counts) {
  std::vector<xdsv::UtteranceRecord> records;
  for (std::size_t k = 0; k < names.size(); ++k)
    for (int i = 0; i < counts[k]; ++i)
      records.push_back(make_record(names[k] + "-u" + std::to_string(i), names[k],
                                    i % 2 ? xdsv::Domain::S : xdsv::Domain::ST));
  return xdsv::Manifest(std::move(records));
}

// n_st ST and n_s S utterances for each of n_speakers speakers.
inline xdsv::Manifest make_two_domain_manifest(int n_speakers, int n_st, int n_s) {
  std::vector<xdsv::UtteranceRecord> records;
  for (int k = 0; k < n_speakers; ++k) {
    const std::string spk = "spk" + std::to_string(100 + k);
    for (int i = 0; i < n_st; ++i)
      records.push_back(make_record(spk + "-ST-" + std::to_string(i), spk, xdsv::Domain::ST));
    for (int i = 0; i < n_s; ++i)
      records.push_back(make_record(spk + "-S-" + std::to_string(i), spk, xdsv::Domain::S));
  }
  return xdsv::Manifest(std::move(records));
}

template <typename T>
xdsv::Tensor<T> random_tensor(std::vector<int> shape, std::uint64_t seed, double scale = 1.0) {
  xdsv::Tensor<T> t(std::move(shape));
  xdsv::Rng rng = xdsv::derive_rng(seed, "test.tensor");
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(scale * xdsv::standard_normal(rng));
  return t;
}

inline std::vector<float> random_vector(int dim, xdsv::Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = static_cast<float>(xdsv::standard_normal(rng));
  return v;
}

template <typename T>
double max_abs_diff(const xdsv::Tensor<T>& a, const xdsv::Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Central differences of f with respect to selected entries of x.
// Relative error is |a - n| / max(|a|, |n|, floor).
struct FdResult {
  double max_rel = 0.0;
  int checked = 0;
};

inline FdResult check_gradient(std::vector<double*> coords, const std::vector<double>& analytic,
                               const std::function<double()>& f, double h = 1e-5,
                               double floor = 1e-6) {
  FdResult r;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double* x = coords[i];
    const double saved = *x;
    *x = saved + h;
    const double up = f();
    *x = saved - h;
    const double down = f();
    *x = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
    r.max_rel = std::max(r.max_rel, std::abs(numeric - analytic[i]) / denom);
    ++r.checked;
  }
  return r;
}

// Evenly spread sample of n indices out of size.
inline std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  xdsv::Rng rng = xdsv::derive_rng(seed, "test.indices");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(n, size); ++i) out.push_back(xdsv::uniform_index(rng, size));
  return out;
}

// Exhaustive threshold sweep. Thresholds are -inf, every midpoint between
// adjacent distinct scores, and +inf; a trial is accepted when its score
// exceeds the threshold.
struct SweepPoint {
  double p_miss;
  double p_fa;
};

inline std::vector<SweepPoint> brute_sweep(const std::vector<double>& targets,
                                           const std::vector<double>& nontargets) {
  std::vector<double> all(targets);
  all.insert(all.end(), nontargets.begin(), nontargets.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> thresholds{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) thresholds.push_back(0.5 * (all[i] + all[i + 1]));
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::vector<SweepPoint> pts;
  for (double t : thresholds) {
    int miss = 0, fa = 0;
    for (double s : targets) miss += !(s > t);
    for (double s : nontargets) fa += s > t;
    pts.push_back({double(miss) / targets.size(), double(fa) / nontargets.size()});
  }
  return pts;
}

// Crossing of the sweep where p_miss first reaches p_fa, linearly
// interpolated from the previous threshold.
inline double brute_eer(const std::vector<double>& targets, const std::vector<double>& nontargets) {
  const auto pts = brute_sweep(targets, nontargets);
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double d = pts[k].p_miss - pts[k].p_fa;
    if (d < 0) continue;
    if (k == 0 || d == 0) return pts[k].p_miss;
    const double dp = pts[k - 1].p_miss - pts[k - 1].p_fa;
    const double t = dp / (dp - d);
    return pts[k - 1].p_miss + t * (pts[k].p_miss - pts[k - 1].p_miss);
  }
  return pts.back().p_miss;
}

inline double brute_mdcf(const std::vector<double>& targets, const std::vector<double>& nontargets,
                         double p_target, double c_miss = 1.0, double c_fa = 1.0) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : brute_sweep(targets, nontargets))
    best = std::min(best, c_miss * p_target * p.p_miss + c_fa * (1 - p_target) * p.p_fa);
  return best / std::min(c_miss * p_target, c_fa * (1 - p_target));
}

}  // namespace testing
