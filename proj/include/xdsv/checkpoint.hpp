#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "xdsv/net.hpp"

namespace xdsv {

inline constexpr const char* kCheckpointFormat = "xdsv-ckpt-1";

// Everything needed to rebuild the extractor and its training heads.
struct ModelSpec {
  NetConfig net;
  ArcFaceConfig arcface;  // n_classes == 0 when no classifier is stored
  bool domain_classifiers = false;
  bool mean_norm = true;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

struct Checkpoint {
  ModelSpec spec;
  nlohmann::json extra;  // free-form echo (training config, speaker list, step)
  std::map<std::string, TensorF> tensors;
};

// Layout: "XDSVCKPT\n", u64 little-endian header length, JSON header, then
// float32 payload at the offsets listed in the header.
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     SpeakerNet<float>& net, TrainingHeads<float>* heads,
                     const nlohmann::json& extra = nlohmann::json::object());
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Copies stored tensors into the model. Strict mode requires every model
// tensor to be present with the same shape; otherwise mismatches are skipped.
// Returns the number of tensors copied.
std::size_t apply_checkpoint(const Checkpoint& ckpt, SpeakerNet<float>& net,
                             TrainingHeads<float>* heads, bool strict);

// Extractor in evaluation mode.
std::unique_ptr<SpeakerNet<float>> load_extractor(const Checkpoint& ckpt);

}  // namespace xdsv
