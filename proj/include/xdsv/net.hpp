#pragma once

#include <cstdint>
#include <memory>
#include <optional>

#include "xdsv/ddal.hpp"
#include "xdsv/model.hpp"

namespace xdsv {

struct NetConfig {
  BackboneConfig backbone;
  AttentionKind attention = AttentionKind::None;
  double simam_lambda = kSimamLambda;
  // Identity path sees the undisentangled map and the domain branch sends no
  // gradient into the backbone.
  bool detach_domain = false;
  // Whether the domain-classifier gradient reaches the shared backbone (it
  // always reaches the attention module and the domain head).
  bool domain_grad_to_backbone = true;
  // Non-affine BatchNorm on both embedding outputs.
  bool embedding_bn = false;
};

template <typename T>
struct NetOutput {
  Tensor<T> z_id;
  Tensor<T> z_domain;  // empty without a domain branch
};

// Embedding extractor: backbone -> [split] -> statistics pooling -> linear
// heads. Classifier heads live outside (see TrainingHeads).
template <typename T>
class SpeakerNet {
 public:
  explicit SpeakerNet(const NetConfig& cfg);

  void init(std::uint64_t seed);
  NetOutput<T> forward(const Tensor<T>& x);
  // dz_domain may be null (no domain loss this step).
  void backward(const Tensor<T>& dz_id, const Tensor<T>* dz_domain);

  void set_training(bool training);
  void collect_params(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);
  std::size_t param_count();

  bool has_domain_branch() const { return attention_ != nullptr; }
  const NetConfig& config() const { return cfg_; }
  Backbone<T>& backbone() { return backbone_; }
  // Last forward's feature map and split (for inspection in tests).
  const Tensor<T>& feature_map() const { return f_; }
  const Tensor<T>& attention_map() const { return attention_map_; }

 private:
  NetConfig cfg_;
  Backbone<T> backbone_;
  std::unique_ptr<DomainAttention<T>> attention_;
  Linear<T> id_head_;
  std::unique_ptr<BatchNorm2d<T>> id_bn_;
  std::unique_ptr<Linear<T>> domain_head_;
  std::unique_ptr<BatchNorm2d<T>> domain_bn_;
  bool training_ = true;
  Tensor<T> f_, attention_map_, f_id_, f_domain_, pooled_id_, pooled_domain_;
};

// Loss heads used only during training: the ArcFace classifier on z_id, and
// the two vocal-manner classifiers (on z_domain, and on reversed z_id).
template <typename T>
struct TrainingHeads {
  TrainingHeads(int embedding_dim, const ArcFaceConfig& arcface, bool with_domain_classifiers);

  void init(std::uint64_t seed);
  void set_training(bool training);
  void collect_params(ParamList<T>& out);

  ArcFaceHead<T> arcface;
  std::unique_ptr<DomainClassifier<T>> cls1;
  std::unique_ptr<DomainClassifier<T>> cls2;
};

}  // namespace xdsv
