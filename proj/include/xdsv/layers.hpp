#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xdsv/tensor.hpp"

namespace xdsv {

template <typename T>
struct Param {
  Param() = default;
  Param(std::string n, std::vector<int> shape, bool apply_decay = true)
      : name(std::move(n)),
        value(shape),
        grad(shape),
        momentum(shape),
        decay(apply_decay) {}

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;
  bool decay = true;
};

template <typename T>
using ParamList = std::vector<Param<T>*>;

// Non-trainable state saved in checkpoints (batch-norm running statistics).
template <typename T>
using BufferList = std::vector<std::pair<std::string, Tensor<T>*>>;

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->grad.zero();
}

std::size_t count_params(const ParamList<float>& params);
std::size_t count_params(const ParamList<double>& params);

// 2-D convolution without bias, square kernel, "same" padding for k = 3.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride);

  void init(std::uint64_t seed);
  Tensor<T> forward(const Tensor<T>& x);
  // Accumulates the weight gradient; returns dL/dx unless need_input_grad is false.
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad = true);

  void set_training(bool training) { training_ = training; }
  void collect_params(ParamList<T>& out) { out.push_back(&weight); }

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int stride() const { return stride_; }

  Param<T> weight;

 private:
  int in_c_ = 0;
  int out_c_ = 0;
  int kernel_ = 3;
  int stride_ = 1;
  bool training_ = true;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels, bool affine = true);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  void set_training(bool training) { training_ = training; }
  void collect_params(ParamList<T>& out) {
    if (!affine_) return;
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void collect_buffers(BufferList<T>& out) {
    out.emplace_back(prefix_ + ".running_mean", &running_mean);
    out.emplace_back(prefix_ + ".running_var", &running_var);
  }

  Param<T> gamma;
  Param<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

 private:
  std::string prefix_;
  int channels_ = 0;
  bool affine_ = true;
  bool training_ = true;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy) const;
  void set_training(bool training) { training_ = training; }

 private:
  bool training_ = true;
  Tensor<T> output_;
};

// y = x W^T + b over rows of a [batch, in] matrix.
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in_features, int out_features, bool bias = true);

  void init(std::uint64_t seed);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy);

  void set_training(bool training) { training_ = training; }
  void collect_params(ParamList<T>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param<T> weight;
  Param<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  bool has_bias_ = true;
  bool training_ = true;
  Tensor<T> input_;
};

// Row-wise softmax cross-entropy, mean over the batch. Writes dL/dlogits when
// grad is non-null.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, Tensor<T>* grad);

}  // namespace xdsv
