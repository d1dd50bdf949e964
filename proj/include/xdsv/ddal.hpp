#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xdsv/layers.hpp"

namespace xdsv {

// How domain features are gated out of the backbone feature map.
enum class AttentionKind { None, SimAM, ASP };

std::string_view to_string(AttentionKind kind);
AttentionKind parse_attention_kind(std::string_view s);

template <typename T>
struct DisentangledFeatures {
  Tensor<T> f_id;
  Tensor<T> f_domain;
  Tensor<T> attention;
};

// f_domain = A * f and f_id = f - f_domain, elementwise. A must lie in [0, 1].
template <typename T>
DisentangledFeatures<T> disentangle_with(const Tensor<T>& f, const Tensor<T>& attention);

inline constexpr double kSimamLambda = 1e-4;

// Parameter-free energy attention. Per (sample, channel) plane with mean mu
// and n = H*W - 1:
//   A = sigmoid((x - mu)^2 / (4 * (sum (x - mu)^2 / n + lambda)) + 0.5)
template <typename T>
Tensor<T> simam_attention(const Tensor<T>& f, double lambda = kSimamLambda);

// dL/df given dL/dA for the SimAM attention map.
template <typename T>
Tensor<T> simam_attention_backward(const Tensor<T>& f, const Tensor<T>& attention,
                                   const Tensor<T>& dattention, double lambda = kSimamLambda);

// Produces the attention map A for a feature map. SimAM holds no parameters;
// ASP runs a per-position channel bottleneck C -> C (tanh) -> C followed by a
// sigmoid.
template <typename T>
class DomainAttention {
 public:
  DomainAttention(AttentionKind kind, int channels, double simam_lambda = kSimamLambda);

  void init(std::uint64_t seed);
  Tensor<T> forward(const Tensor<T>& f);
  Tensor<T> backward(const Tensor<T>& dattention);
  void set_training(bool training) { training_ = training; }
  void collect_params(ParamList<T>& out);

  AttentionKind kind() const { return kind_; }

 private:
  AttentionKind kind_;
  int channels_;
  double simam_lambda_;
  bool training_ = true;
  Param<T> w1_, b1_, w2_, b2_;
  Tensor<T> input_, hidden_, attention_;
};

// Forward of the split through a learned/parameter-free attention module.
template <typename T>
DisentangledFeatures<T> disentangle(const Tensor<T>& f, DomainAttention<T>& attention);

// dL/df for the split given gradients on both halves. Routes through the
// attention module (accumulating its parameter gradients).
template <typename T>
Tensor<T> disentangle_backward(const Tensor<T>& f, const Tensor<T>& attention_map,
                               DomainAttention<T>& attention, const Tensor<T>& d_id,
                               const Tensor<T>& d_domain);

// Gradient reversal: identity forward, -scale * g backward.
template <typename T>
Tensor<T> grl_forward(const Tensor<T>& x) {
  return x;
}

template <typename T>
Tensor<T> grl_backward(const Tensor<T>& g, double scale) {
  require(scale >= 0.0, ErrorKind::Argument, "gradient reversal scale must be non-negative");
  Tensor<T> out(g.shape());
  const T k = static_cast<T>(-scale);
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = k * g[i];
  return out;
}

// Binary vocal-manner classifier: Linear(D, D) -> ReLU -> Linear(D, 2).
template <typename T>
class DomainClassifier {
 public:
  DomainClassifier(const std::string& name, int dim);

  void init(std::uint64_t seed);
  Tensor<T> forward(const Tensor<T>& z);
  Tensor<T> backward(const Tensor<T>& dlogits);
  void set_training(bool training);
  void collect_params(ParamList<T>& out);

  Linear<T>& hidden() { return fc1_; }
  Linear<T>& output() { return fc2_; }

 private:
  Linear<T> fc1_;
  ReLU<T> relu_;
  Linear<T> fc2_;
};

struct DdalLossConfig {
  double lambda_ddal = 0.5;
  double grl_scale = 1.0;

  void validate() const;
};

// L_id + lambda * (L_cls1 + L_cls2)
double ddal_loss(double l_id, double l_cls1, double l_cls2, const DdalLossConfig& cfg);

}  // namespace xdsv
