#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "xdsv/bcst.hpp"
#include "xdsv/checkpoint.hpp"
#include "xdsv/config.hpp"
#include "xdsv/embedding.hpp"
#include "xdsv/frontend.hpp"
#include "xdsv/manifest.hpp"
#include "xdsv/net.hpp"
#include "xdsv/trials.hpp"

namespace xdsv {

enum class Variant { M0, M1, M2, M3, M4, M5, M6 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

struct VariantSettings {
  AttentionKind attention = AttentionKind::None;
  bool bcst = false;
  double lambda_ddal = 0.0;  // 0 when the DDAL branch is absent
  double lambda_bcst = 0.0;  // 0 when BCST is off
  bool fine_tune = true;
};

VariantSettings resolve_variant(Variant v);

struct TrainConfig {
  Variant variant = Variant::M1;
  double initial_lr = 1e-3;
  std::vector<int> lr_milestones;
  double lr_gamma = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 64;
  double crop_s = 2.0;
  std::uint64_t seed = 0;
  int steps = 1000;
  int checkpoint_every = 0;
  int eval_every = 0;

  BackboneConfig backbone;
  bool embedding_bn = false;
  double arcface_margin = 0.2;
  double arcface_scale = 32.0;

  // Overrides of the variant's resolved settings.
  std::optional<AttentionKind> attention;
  std::optional<bool> bcst;
  std::optional<double> lambda_ddal;
  std::optional<double> lambda_bcst;

  double grl_scale = 1.0;
  bool detach_domain = false;
  bool domain_grad_to_backbone = true;

  AugmentPolicy augment;
  bool mean_norm = true;

  std::filesystem::path run_dir;  // empty: nothing written to disk
  std::string name = "default";
  std::filesystem::path init_checkpoint;

  static TrainConfig from_config(const Config& c);
  VariantSettings settings() const;
  void validate() const;
  nlohmann::json to_json() const;
  std::filesystem::path output_dir() const { return run_dir / name; }
};

// initial_lr * gamma^(number of milestones <= step); steps count from 1.
double lr_at(const TrainConfig& cfg, int step);

struct LossReport {
  int step = 0;
  double lr = 0.0;
  double l_id = 0.0;
  double l_cls1 = 0.0;
  double l_cls2 = 0.0;
  double l_utt_st = 0.0;
  double l_utt_s = 0.0;
  double l_pair = 0.0;
  double total = 0.0;

  bool operator==(const LossReport&) const = default;
};

void write_loss_header(std::ostream& out);
void write_loss_row(std::ostream& out, const LossReport& r);
std::vector<LossReport> parse_loss_log(std::istream& in);

// Batch labels. A Siamese batch holds the ST legs in its first half and the
// matching S legs in its second half.
struct StepLabels {
  std::vector<int> speakers;
  std::vector<int> domains;  // 0 = ST, 1 = S
  bool siamese = false;
};

struct LossWeights {
  double lambda_ddal = 0.0;
  double lambda_bcst = 0.0;
  double grl_scale = 1.0;
};

// Forward pass, loss composition and backward pass for one batch. Parameter
// gradients are accumulated (callers zero them). With a Siamese batch each
// leg gets its own identity (and DDAL) objective and total =
// L_uttS + L_uttST + lambda_bcst * L_pair; otherwise total =
// L_id + lambda_ddal * (L_cls1 + L_cls2).
template <typename T>
LossReport forward_backward(SpeakerNet<T>& net, TrainingHeads<T>& heads, const Tensor<T>& x,
                            const StepLabels& labels, const LossWeights& weights);

// Loads audio relative to a corpus root and keeps it in memory.
class AudioStore {
 public:
  explicit AudioStore(std::filesystem::path root) : root_(std::move(root)) {}

  const Waveform& get(const UtteranceRecord& r);
  void put(const std::string& utt_id, Waveform w) { cache_[utt_id] = std::move(w); }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, Waveform> cache_;
};

// Log-mel features of a waveform as a [1, 1, mels, frames] tensor.
TensorF feature_tensor(const Waveform& w, bool mean_norm);

struct ValidationSet {
  const Manifest* manifest = nullptr;
  std::vector<TrialPair> trials;
};

struct TrainResult {
  std::vector<LossReport> reports;
  double best_eer = -1.0;
  int best_step = 0;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, const Manifest& train, AudioStore& audio);

  // One optimization step (steps count from 1).
  LossReport step(int step_index);
  // Full loop with logging, checkpoints and best-EER retention.
  TrainResult run(const ValidationSet* valid = nullptr,
                  const std::function<void(const LossReport&)>& on_report = {});

  void save(const std::filesystem::path& path, int step);
  ModelSpec spec() const;

  SpeakerNet<float>& net() { return *net_; }
  TrainingHeads<float>& heads() { return *heads_; }
  const TrainConfig& config() const { return cfg_; }
  const VariantSettings& settings() const { return settings_; }
  const std::vector<std::string>& speakers() const { return speakers_; }

  // Builds the step's input batch and its per-item records (exposed for tests).
  TensorF make_batch(int step_index, std::vector<const UtteranceRecord*>& items);

 private:
  LossReport loss_and_backward(const TensorF& x, const std::vector<const UtteranceRecord*>& items,
                               int step_index);
  void sgd_update(double lr);

  TrainConfig cfg_;
  VariantSettings settings_;
  const Manifest* train_;
  AudioStore* audio_;
  std::vector<std::string> speakers_;
  std::map<std::string, int> speaker_index_;
  std::unique_ptr<PairSampler> pairs_;
  std::unique_ptr<SpeakerNet<float>> net_;
  std::unique_ptr<TrainingHeads<float>> heads_;
  ParamList<float> params_;
  std::optional<LossReport> last_finite_;
};

struct ExtractionResult {
  EmbeddingMap embeddings;
  std::vector<std::pair<std::string, std::string>> failures;  // (utt_id, message)
};

// Evaluation-mode z_id for each utterance on its full length. Unreadable
// audio is recorded in failures and the run continues.
ExtractionResult extract_embeddings(SpeakerNet<float>& net, const Manifest& m, AudioStore& audio,
                                    bool mean_norm);
ExtractionResult extract_embeddings(const std::filesystem::path& checkpoint, const Manifest& m,
                                    AudioStore& audio);

}  // namespace xdsv
