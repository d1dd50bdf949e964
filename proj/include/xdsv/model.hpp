#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "xdsv/layers.hpp"

namespace xdsv {

struct BackboneConfig {
  std::array<int, 4> block_counts{3, 4, 6, 3};
  std::array<int, 4> channel_widths{64, 128, 256, 512};
  int input_mels = 80;
  int embedding_dim = 256;

  void validate() const;
  int output_channels() const { return channel_widths[3]; }
  int pooled_dim() const { return 2 * channel_widths[3]; }
  // Frequency/time size after the three stride-2 stages.
  int output_freq() const;
  static int output_time(int frames);
};

bool operator==(const BackboneConfig& a, const BackboneConfig& b);

// conv3x3 -> BN -> ReLU -> conv3x3 -> BN, plus identity or 1x1-conv+BN
// shortcut, then ReLU.
template <typename T>
class BasicBlock {
 public:
  BasicBlock(const std::string& name, int in_channels, int out_channels, int stride);

  void init(std::uint64_t seed);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& dy, bool need_input_grad = true);
  void set_training(bool training);
  void collect_params(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  ReLU<T> relu1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  bool downsample_ = false;
  Conv2d<T> shortcut_conv_;
  BatchNorm2d<T> shortcut_bn_;
  ReLU<T> relu_out_;
};

// ResNet trunk: 3x3 stem at full resolution, four residual stages, the last
// three of which halve frequency and time.
template <typename T>
class Backbone {
 public:
  explicit Backbone(const BackboneConfig& cfg);

  void init(std::uint64_t seed);
  // x: [batch, 1, mels, frames] -> [batch, C4, mels/8, ceil(frames/8)]
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& df, bool need_input_grad = false);
  void set_training(bool training);
  void collect_params(ParamList<T>& out);
  void collect_buffers(BufferList<T>& out);

  const BackboneConfig& config() const { return cfg_; }
  // Output shapes of the stem and the four stages from the last forward.
  const std::vector<std::vector<int>>& stage_shapes() const { return stage_shapes_; }

 private:
  BackboneConfig cfg_;
  Conv2d<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  ReLU<T> stem_relu_;
  std::vector<std::vector<std::unique_ptr<BasicBlock<T>>>> stages_;
  std::vector<std::vector<int>> stage_shapes_;
};

// Global statistics pooling: per-channel mean and standard deviation over
// all frequency x time positions, concatenated as [means | stds].
inline constexpr double kGspEps = 1e-8;

template <typename T>
Tensor<T> gsp_forward(const Tensor<T>& f);

template <typename T>
Tensor<T> gsp_backward(const Tensor<T>& f, const Tensor<T>& pooled, const Tensor<T>& dpooled);

struct ArcFaceConfig {
  double margin = 0.2;
  double scale = 32.0;
  int n_classes = 0;

  void validate() const;
};

template <typename T>
struct ArcFaceResult {
  T loss = 0;
  Tensor<T> dz;       // [batch, dim]
  Tensor<T> dweight;  // [classes, dim]
};

// Additive angular margin softmax loss on length-normalized embeddings and
// class weights, mean over the batch.
template <typename T>
ArcFaceResult<T> arcface_loss(const Tensor<T>& z, const std::vector<int>& labels,
                              const Tensor<T>& weight, const ArcFaceConfig& cfg,
                              bool with_grad = true);

template <typename T>
class ArcFaceHead {
 public:
  ArcFaceHead(const std::string& name, int dim, const ArcFaceConfig& cfg);

  void init(std::uint64_t seed);
  // Returns the loss and dL/dz, accumulating the class-weight gradient.
  T forward_backward(const Tensor<T>& z, const std::vector<int>& labels, Tensor<T>* dz);
  void collect_params(ParamList<T>& out) { out.push_back(&weight); }

  const ArcFaceConfig& config() const { return cfg_; }

  Param<T> weight;

 private:
  ArcFaceConfig cfg_;
};

}  // namespace xdsv
