#include "xdsv/model.hpp"

#include <cmath>
#include <numbers>

#include "xdsv/random.hpp"

namespace xdsv {

void BackboneConfig::validate() const {
  for (int i = 0; i < 4; ++i) {
    require(block_counts[i] > 0, ErrorKind::Config, "block counts must be positive");
    require(channel_widths[i] > 0, ErrorKind::Config, "channel widths must be positive");
    if (i > 0)
      require(channel_widths[i] == 2 * channel_widths[i - 1], ErrorKind::Config,
              "channel widths must double at every stage");
  }
  require(input_mels > 0 && input_mels % 8 == 0, ErrorKind::Config,
          "input mel count must be a positive multiple of 8");
  require(embedding_dim > 0, ErrorKind::Config, "embedding dimension must be positive");
}

int BackboneConfig::output_freq() const { return input_mels / 8; }

int BackboneConfig::output_time(int frames) {
  int t = frames;
  for (int i = 0; i < 3; ++i) t = (t + 1) / 2;
  return t;
}

bool operator==(const BackboneConfig& a, const BackboneConfig& b) {
  return a.block_counts == b.block_counts && a.channel_widths == b.channel_widths &&
         a.input_mels == b.input_mels && a.embedding_dim == b.embedding_dim;
}

// ---------------------------------------------------------------- BasicBlock

template <typename T>
BasicBlock<T>::BasicBlock(const std::string& name, int in_channels, int out_channels, int stride)
    : conv1_(name + ".conv1", in_channels, out_channels, 3, stride),
      bn1_(name + ".bn1", out_channels),
      conv2_(name + ".conv2", out_channels, out_channels, 3, 1),
      bn2_(name + ".bn2", out_channels),
      downsample_(stride != 1 || in_channels != out_channels) {
  if (downsample_) {
    shortcut_conv_ = Conv2d<T>(name + ".shortcut", in_channels, out_channels, 1, stride);
    shortcut_bn_ = BatchNorm2d<T>(name + ".shortcut_bn", out_channels);
  }
}

template <typename T>
void BasicBlock<T>::init(std::uint64_t seed) {
  conv1_.init(seed);
  conv2_.init(seed);
  if (downsample_) shortcut_conv_.init(seed);
}

template <typename T>
Tensor<T> BasicBlock<T>::forward(const Tensor<T>& x) {
  Tensor<T> out = relu1_.forward(bn1_.forward(conv1_.forward(x)));
  out = bn2_.forward(conv2_.forward(out));
  if (downsample_) {
    const Tensor<T> sc = shortcut_bn_.forward(shortcut_conv_.forward(x));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sc[i];
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
  }
  return relu_out_.forward(out);
}

template <typename T>
Tensor<T> BasicBlock<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  const Tensor<T> d = relu_out_.backward(dy);
  Tensor<T> dx = conv1_.backward(
      bn1_.backward(relu1_.backward(conv2_.backward(bn2_.backward(d)))), need_input_grad);
  if (downsample_) {
    const Tensor<T> dsc = shortcut_conv_.backward(shortcut_bn_.backward(d), need_input_grad);
    if (need_input_grad)
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dsc[i];
  } else if (need_input_grad) {
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d[i];
  }
  return dx;
}

template <typename T>
void BasicBlock<T>::set_training(bool training) {
  conv1_.set_training(training);
  bn1_.set_training(training);
  relu1_.set_training(training);
  conv2_.set_training(training);
  bn2_.set_training(training);
  shortcut_conv_.set_training(training);
  shortcut_bn_.set_training(training);
  relu_out_.set_training(training);
}

template <typename T>
void BasicBlock<T>::collect_params(ParamList<T>& out) {
  conv1_.collect_params(out);
  bn1_.collect_params(out);
  conv2_.collect_params(out);
  bn2_.collect_params(out);
  if (downsample_) {
    shortcut_conv_.collect_params(out);
    shortcut_bn_.collect_params(out);
  }
}

template <typename T>
void BasicBlock<T>::collect_buffers(BufferList<T>& out) {
  bn1_.collect_buffers(out);
  bn2_.collect_buffers(out);
  if (downsample_) shortcut_bn_.collect_buffers(out);
}

// ---------------------------------------------------------------- Backbone

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& cfg)
    : cfg_(cfg),
      stem_conv_("backbone.stem", 1, cfg.channel_widths[0], 3, 1),
      stem_bn_("backbone.stem_bn", cfg.channel_widths[0]) {
  cfg_.validate();
  int in_c = cfg.channel_widths[0];
  for (int s = 0; s < 4; ++s) {
    std::vector<std::unique_ptr<BasicBlock<T>>> blocks;
    for (int b = 0; b < cfg.block_counts[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string name =
          "backbone.layer" + std::to_string(s + 1) + "_" + std::to_string(b + 1);
      blocks.push_back(
          std::make_unique<BasicBlock<T>>(name, in_c, cfg.channel_widths[s], stride));
      in_c = cfg.channel_widths[s];
    }
    stages_.push_back(std::move(blocks));
  }
}

template <typename T>
void Backbone<T>::init(std::uint64_t seed) {
  stem_conv_.init(seed);
  for (auto& stage : stages_)
    for (auto& block : stage) block->init(seed);
}

template <typename T>
Tensor<T> Backbone<T>::forward(const Tensor<T>& x) {
  require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == cfg_.input_mels, ErrorKind::Shape,
          "backbone expects [batch,1," + std::to_string(cfg_.input_mels) + ",T], got " +
              x.shape_string());
  require(x.dim(3) >= 8, ErrorKind::Shape, "backbone needs at least 8 frames");
  stage_shapes_.clear();
  Tensor<T> h = stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(x)));
  stage_shapes_.push_back({h.dim(1), h.dim(2), h.dim(3)});
  for (auto& stage : stages_) {
    for (auto& block : stage) h = block->forward(h);
    stage_shapes_.push_back({h.dim(1), h.dim(2), h.dim(3)});
  }
  return h;
}

template <typename T>
Tensor<T> Backbone<T>::backward(const Tensor<T>& df, bool need_input_grad) {
  Tensor<T> d = df;
  for (auto s = stages_.rbegin(); s != stages_.rend(); ++s)
    for (auto b = s->rbegin(); b != s->rend(); ++b) d = (*b)->backward(d, true);
  return stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(d)), need_input_grad);
}

template <typename T>
void Backbone<T>::set_training(bool training) {
  stem_conv_.set_training(training);
  stem_bn_.set_training(training);
  stem_relu_.set_training(training);
  for (auto& stage : stages_)
    for (auto& block : stage) block->set_training(training);
}

template <typename T>
void Backbone<T>::collect_params(ParamList<T>& out) {
  stem_conv_.collect_params(out);
  stem_bn_.collect_params(out);
  for (auto& stage : stages_)
    for (auto& block : stage) block->collect_params(out);
}

template <typename T>
void Backbone<T>::collect_buffers(BufferList<T>& out) {
  stem_bn_.collect_buffers(out);
  for (auto& stage : stages_)
    for (auto& block : stage) block->collect_buffers(out);
}

// ---------------------------------------------------------------- GSP

template <typename T>
Tensor<T> gsp_forward(const Tensor<T>& f) {
  require(f.rank() == 4, ErrorKind::Shape, "statistics pooling expects a 4-D feature map");
  const int batch = f.dim(0), channels = f.dim(1);
  const std::size_t plane = std::size_t(f.dim(2)) * f.dim(3);
  require(plane > 0, ErrorKind::Shape, "statistics pooling over an empty map");
  Tensor<T> out({batch, 2 * channels});
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const T* p = f.data() + (std::size_t(n) * channels + c) * plane;
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      const double mean = sum / double(plane);
      double sq = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
      out.at(n, c) = static_cast<T>(mean);
      out.at(n, channels + c) = static_cast<T>(std::sqrt(sq / double(plane) + kGspEps));
    }
  return out;
}

template <typename T>
Tensor<T> gsp_backward(const Tensor<T>& f, const Tensor<T>& pooled, const Tensor<T>& dpooled) {
  const int batch = f.dim(0), channels = f.dim(1);
  const std::size_t plane = std::size_t(f.dim(2)) * f.dim(3);
  Tensor<T> df(f.shape());
  for (int n = 0; n < batch; ++n)
    for (int c = 0; c < channels; ++c) {
      const std::size_t off = (std::size_t(n) * channels + c) * plane;
      const T mean = pooled.at(n, c);
      const T stddev = pooled.at(n, channels + c);
      const T dmean = dpooled.at(n, c) / T(plane);
      const T dvar_scale = dpooled.at(n, channels + c) / (T(plane) * stddev);
      for (std::size_t i = 0; i < plane; ++i)
        df[off + i] = dmean + dvar_scale * (f[off + i] - mean);
    }
  return df;
}

// ---------------------------------------------------------------- ArcFace

void ArcFaceConfig::validate() const {
  require(margin >= 0.0 && margin < std::numbers::pi / 2, ErrorKind::Config,
          "ArcFace margin must lie in [0, pi/2)");
  require(scale > 0.0, ErrorKind::Config, "ArcFace scale must be positive");
  require(n_classes > 0, ErrorKind::Config, "ArcFace needs at least one class");
}

namespace {

template <typename T>
std::vector<double> row_norms(const Tensor<T>& m) {
  std::vector<double> norms(m.dim(0));
  for (int r = 0; r < m.dim(0); ++r) {
    double s = 0.0;
    for (int c = 0; c < m.dim(1); ++c) s += double(m.at(r, c)) * m.at(r, c);
    norms[r] = std::sqrt(s);
  }
  return norms;
}

}  // namespace

template <typename T>
ArcFaceResult<T> arcface_loss(const Tensor<T>& z, const std::vector<int>& labels,
                              const Tensor<T>& weight, const ArcFaceConfig& cfg, bool with_grad) {
  cfg.validate();
  require(z.rank() == 2 && weight.rank() == 2 && z.dim(1) == weight.dim(1), ErrorKind::Shape,
          "ArcFace: embedding/weight dimension mismatch");
  require(weight.dim(0) == cfg.n_classes, ErrorKind::Shape, "ArcFace: class count mismatch");
  const int batch = z.dim(0), dim = z.dim(1), classes = weight.dim(0);
  require(static_cast<int>(labels.size()) == batch, ErrorKind::Shape,
          "ArcFace: label count mismatch");
  for (int y : labels)
    require(y >= 0 && y < classes, ErrorKind::Argument,
            "ArcFace: label " + std::to_string(y) + " out of range [0," +
                std::to_string(classes) + ")");

  const double cos_m = std::cos(cfg.margin), sin_m = std::sin(cfg.margin);
  const double th = std::cos(std::numbers::pi - cfg.margin);
  const double mm = std::sin(std::numbers::pi - cfg.margin) * cfg.margin;
  const double s = cfg.scale;

  const std::vector<double> zn = row_norms(z);
  const std::vector<double> wn = row_norms(weight);
  for (int n = 0; n < batch; ++n)
    require(zn[n] > 0.0, ErrorKind::Numeric, "ArcFace: zero-norm embedding");
  for (int j = 0; j < classes; ++j)
    require(wn[j] > 0.0, ErrorKind::Numeric, "ArcFace: zero-norm class weight");

  // cosines[n, j]
  std::vector<double> cosines(std::size_t(batch) * classes);
  for (int n = 0; n < batch; ++n)
    for (int j = 0; j < classes; ++j) {
      double dot = 0.0;
      for (int d = 0; d < dim; ++d) dot += double(z.at(n, d)) * weight.at(j, d);
      cosines[std::size_t(n) * classes + j] = std::clamp(dot / (zn[n] * wn[j]), -1.0, 1.0);
    }

  ArcFaceResult<T> result;
  std::vector<double> dcos(with_grad ? cosines.size() : 0);
  double total = 0.0;
  std::vector<double> logits(classes);
  for (int n = 0; n < batch; ++n) {
    const int y = labels[n];
    const double c = cosines[std::size_t(n) * classes + y];
    const double sine = std::sqrt(std::max(0.0, 1.0 - c * c));
    double phi, dphi;
    if (c > th) {
      phi = c * cos_m - sine * sin_m;
      dphi = cos_m + sin_m * c / std::max(sine, 1e-12);
    } else {
      phi = c - mm;
      dphi = 1.0;
    }
    double mx = -1e300;
    for (int j = 0; j < classes; ++j) {
      logits[j] = s * (j == y ? phi : cosines[std::size_t(n) * classes + j]);
      mx = std::max(mx, logits[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < classes; ++j) sum += std::exp(logits[j] - mx);
    const double log_z = mx + std::log(sum);
    total += log_z - logits[y];
    if (with_grad) {
      for (int j = 0; j < classes; ++j) {
        const double p = std::exp(logits[j] - log_z);
        const double dlogit = (p - (j == y ? 1.0 : 0.0)) / batch;
        dcos[std::size_t(n) * classes + j] = s * dlogit * (j == y ? dphi : 1.0);
      }
    }
  }
  result.loss = static_cast<T>(total / batch);
  if (!with_grad) return result;

  // Back through cos = <z/|z|, w/|w|>.
  result.dz = Tensor<T>(z.shape());
  result.dweight = Tensor<T>(weight.shape());
  std::vector<double> dzhat(dim), dwhat(std::size_t(classes) * dim, 0.0);
  for (int n = 0; n < batch; ++n) {
    std::fill(dzhat.begin(), dzhat.end(), 0.0);
    for (int j = 0; j < classes; ++j) {
      const double g = dcos[std::size_t(n) * classes + j];
      if (g == 0.0) continue;
      for (int d = 0; d < dim; ++d) {
        dzhat[d] += g * weight.at(j, d) / wn[j];
        dwhat[std::size_t(j) * dim + d] += g * z.at(n, d) / zn[n];
      }
    }
    double proj = 0.0;
    for (int d = 0; d < dim; ++d) proj += dzhat[d] * z.at(n, d) / zn[n];
    for (int d = 0; d < dim; ++d)
      result.dz.at(n, d) = static_cast<T>((dzhat[d] - proj * z.at(n, d) / zn[n]) / zn[n]);
  }
  for (int j = 0; j < classes; ++j) {
    double proj = 0.0;
    for (int d = 0; d < dim; ++d) proj += dwhat[std::size_t(j) * dim + d] * weight.at(j, d) / wn[j];
    for (int d = 0; d < dim; ++d)
      result.dweight.at(j, d) = static_cast<T>(
          (dwhat[std::size_t(j) * dim + d] - proj * weight.at(j, d) / wn[j]) / wn[j]);
  }
  return result;
}

template <typename T>
ArcFaceHead<T>::ArcFaceHead(const std::string& name, int dim, const ArcFaceConfig& cfg)
    : weight(name + ".weight", {cfg.n_classes, dim}), cfg_(cfg) {
  cfg_.validate();
}

template <typename T>
void ArcFaceHead<T>::init(std::uint64_t seed) {
  Rng rng = derive_rng(seed, weight.name);
  const double bound = std::sqrt(6.0 / (weight.value.dim(0) + weight.value.dim(1)));
  for (auto& w : weight.value.vec()) w = static_cast<T>(uniform_real(rng, -bound, bound));
}

template <typename T>
T ArcFaceHead<T>::forward_backward(const Tensor<T>& z, const std::vector<int>& labels,
                                   Tensor<T>* dz) {
  ArcFaceResult<T> r = arcface_loss(z, labels, weight.value, cfg_, dz != nullptr);
  if (dz) {
    *dz = std::move(r.dz);
    for (std::size_t i = 0; i < weight.grad.size(); ++i) weight.grad[i] += r.dweight[i];
  }
  return r.loss;
}

template class BasicBlock<float>;
template class BasicBlock<double>;
template class Backbone<float>;
template class Backbone<double>;
template class ArcFaceHead<float>;
template class ArcFaceHead<double>;
template Tensor<float> gsp_forward(const Tensor<float>&);
template Tensor<double> gsp_forward(const Tensor<double>&);
template Tensor<float> gsp_backward(const Tensor<float>&, const Tensor<float>&,
                                    const Tensor<float>&);
template Tensor<double> gsp_backward(const Tensor<double>&, const Tensor<double>&,
                                     const Tensor<double>&);
template ArcFaceResult<float> arcface_loss(const Tensor<float>&, const std::vector<int>&,
                                           const Tensor<float>&, const ArcFaceConfig&, bool);
template ArcFaceResult<double> arcface_loss(const Tensor<double>&, const std::vector<int>&,
                                            const Tensor<double>&, const ArcFaceConfig&, bool);

}  // namespace xdsv
