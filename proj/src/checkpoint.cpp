#include "xdsv/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "xdsv/error.hpp"

namespace xdsv {

namespace {

constexpr char kMagic[] = "XDSVCKPT\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

using json = nlohmann::json;

std::map<std::string, TensorF*> named_tensors(SpeakerNet<float>& net, TrainingHeads<float>* heads) {
  ParamList<float> params;
  net.collect_params(params);
  if (heads) heads->collect_params(params);
  BufferList<float> buffers;
  net.collect_buffers(buffers);
  std::map<std::string, TensorF*> out;
  for (auto* p : params) {
    require(out.emplace(p->name, &p->value).second, ErrorKind::Validation,
            "duplicate tensor name " + p->name);
  }
  for (auto& [name, t] : buffers) {
    require(out.emplace(name, t).second, ErrorKind::Validation, "duplicate tensor name " + name);
  }
  return out;
}

}  // namespace

json ModelSpec::to_json() const {
  const auto& b = net.backbone;
  return json{
      {"backbone",
       {{"block_counts", b.block_counts},
        {"channel_widths", b.channel_widths},
        {"input_mels", b.input_mels},
        {"embedding_dim", b.embedding_dim}}},
      {"attention", std::string(to_string(net.attention))},
      {"simam_lambda", net.simam_lambda},
      {"detach_domain", net.detach_domain},
      {"domain_grad_to_backbone", net.domain_grad_to_backbone},
      {"embedding_bn", net.embedding_bn},
      {"arcface", {{"margin", arcface.margin}, {"scale", arcface.scale}, {"n_classes", arcface.n_classes}}},
      {"domain_classifiers", domain_classifiers},
      {"mean_norm", mean_norm},
  };
}

ModelSpec ModelSpec::from_json(const json& j) {
  ModelSpec s;
  try {
    const auto& b = j.at("backbone");
    s.net.backbone.block_counts = b.at("block_counts").get<std::array<int, 4>>();
    s.net.backbone.channel_widths = b.at("channel_widths").get<std::array<int, 4>>();
    s.net.backbone.input_mels = b.at("input_mels").get<int>();
    s.net.backbone.embedding_dim = b.at("embedding_dim").get<int>();
    s.net.attention = parse_attention_kind(j.at("attention").get<std::string>());
    s.net.simam_lambda = j.at("simam_lambda").get<double>();
    s.net.detach_domain = j.at("detach_domain").get<bool>();
    s.net.domain_grad_to_backbone = j.at("domain_grad_to_backbone").get<bool>();
    s.net.embedding_bn = j.value("embedding_bn", false);
    s.arcface.margin = j.at("arcface").at("margin").get<double>();
    s.arcface.scale = j.at("arcface").at("scale").get<double>();
    s.arcface.n_classes = j.at("arcface").at("n_classes").get<int>();
    s.domain_classifiers = j.at("domain_classifiers").get<bool>();
    s.mean_norm = j.at("mean_norm").get<bool>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("checkpoint model description: ") + e.what());
  }
  s.net.backbone.validate();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     SpeakerNet<float>& net, TrainingHeads<float>* heads, const json& extra) {
  const auto tensors = named_tensors(net, heads);
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    index.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
    offset += t->size() * sizeof(float);
  }
  const json header{{"format_version", kCheckpointFormat},
                    {"model", spec.to_json()},
                    {"extra", extra},
                    {"tensors", index},
                    {"payload_bytes", offset}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    require(out.good(), ErrorKind::Io, "cannot write checkpoint " + path.string());
    out.write(kMagic, kMagicLen);
    const std::uint64_t len = text.size();
    unsigned char len_bytes[8];
    for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>(len >> (8 * i));
    out.write(reinterpret_cast<const char*>(len_bytes), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : tensors) {
      out.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->size() * sizeof(float)));
    }
    require(out.good(), ErrorKind::Io, "short write on checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  require(in.good() && std::memcmp(magic, kMagic, kMagicLen) == 0, ErrorKind::Parse,
          path.string() + " is not a checkpoint");
  unsigned char len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(len_bytes[i]) << (8 * i);
  require(in.good() && len < (1u << 30), ErrorKind::Parse, "corrupt checkpoint header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  require(in.good(), ErrorKind::Parse, "truncated checkpoint header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("checkpoint header: ") + e.what());
  }
  require(header.value("format_version", "") == kCheckpointFormat, ErrorKind::Parse,
          "unsupported checkpoint format '" + header.value("format_version", "") + "'");

  Checkpoint ckpt;
  ckpt.spec = ModelSpec::from_json(header.at("model"));
  ckpt.extra = header.value("extra", json::object());
  const std::streamoff base = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    TensorF t(entry.at("shape").get<std::vector<int>>());
    in.seekg(base + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    require(in.good(), ErrorKind::Parse, "truncated checkpoint payload at " + name);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

std::size_t apply_checkpoint(const Checkpoint& ckpt, SpeakerNet<float>& net,
                             TrainingHeads<float>* heads, bool strict) {
  std::size_t copied = 0;
  for (auto& [name, dst] : named_tensors(net, heads)) {
    const auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end() || it->second.shape() != dst->shape()) {
      require(!strict, ErrorKind::Validation,
              "checkpoint tensor " + name +
                  (it == ckpt.tensors.end() ? " missing" : " has shape " + it->second.shape_string() +
                                                               ", model expects " + dst->shape_string()));
      continue;
    }
    *dst = it->second;
    ++copied;
  }
  return copied;
}

std::unique_ptr<SpeakerNet<float>> load_extractor(const Checkpoint& ckpt) {
  auto net = std::make_unique<SpeakerNet<float>>(ckpt.spec.net);
  apply_checkpoint(ckpt, *net, nullptr, true);
  net->set_training(false);
  return net;
}

}  // namespace xdsv
