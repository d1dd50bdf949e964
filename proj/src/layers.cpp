#include "xdsv/layers.hpp"

#include <cmath>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "xdsv/kernels.hpp"
#include "xdsv/random.hpp"

namespace xdsv {

namespace {

#if defined(__GLIBC__)
// Keep freed activation buffers in the heap.
[[maybe_unused]] const bool kHeapTuned = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

template <typename T>
std::size_t count_impl(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

}  // namespace

std::size_t count_params(const ParamList<float>& params) { return count_impl(params); }
std::size_t count_params(const ParamList<double>& params) { return count_impl(params); }

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      in_c_(in_channels),
      out_c_(out_channels),
      kernel_(kernel),
      stride_(stride) {
  require(kernel == 1 || kernel == 3, ErrorKind::Shape, "conv kernel must be 1 or 3");
}

template <typename T>
void Conv2d<T>::init(std::uint64_t seed) {
  Rng rng = derive_rng(seed, weight.name);
  const double stddev = std::sqrt(2.0 / (in_c_ * kernel_ * kernel_));
  for (auto& w : weight.value.vec()) w = static_cast<T>(stddev * standard_normal(rng));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  require(x.rank() == 4 && x.dim(1) == in_c_, ErrorKind::Shape,
          weight.name + ": expected input with " + std::to_string(in_c_) + " channels, got " +
              x.shape_string());
  kernels::ConvGeometry g{in_c_, x.dim(2), x.dim(3), out_c_, kernel_, stride_, kernel_ / 2};
  const int batch = x.dim(0);
  Tensor<T> y({batch, out_c_, g.out_h(), g.out_w()});
  const std::size_t in_plane = std::size_t(in_c_) * g.in_h * g.in_w;
  const std::size_t out_plane = std::size_t(out_c_) * g.positions();
  const bool direct = kernel_ == 1 && stride_ == 1;
  std::vector<T> col(direct ? 0 : std::size_t(g.patch()) * g.positions());
  for (int n = 0; n < batch; ++n) {
    const T* src = x.data() + n * in_plane;
    if (!direct) {
      kernels::parallel::im2col(src, g, col.data());
      src = col.data();
    }
    kernels::parallel::gemm_nn(out_c_, g.positions(), g.patch(), weight.value.data(), src,
                               y.data() + n * out_plane);
  }
  if (training_) input_ = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy, bool need_input_grad) {
  const Tensor<T>& x = input_;
  require(!x.empty(), ErrorKind::Shape, weight.name + ": backward without cached forward");
  kernels::ConvGeometry g{in_c_, x.dim(2), x.dim(3), out_c_, kernel_, stride_, kernel_ / 2};
  const int batch = x.dim(0);
  const std::size_t in_plane = std::size_t(in_c_) * g.in_h * g.in_w;
  const std::size_t out_plane = std::size_t(out_c_) * g.positions();
  const bool direct = kernel_ == 1 && stride_ == 1;
  Tensor<T> dx;
  if (need_input_grad) dx = Tensor<T>(x.shape());
  std::vector<T> col(direct ? 0 : std::size_t(g.patch()) * g.positions());
  std::vector<T> dcol(std::size_t(g.patch()) * g.positions());
  for (int n = 0; n < batch; ++n) {
    const T* src = x.data() + n * in_plane;
    const T* grad_out = dy.data() + n * out_plane;
    if (!direct) {
      kernels::parallel::im2col(src, g, col.data());
      src = col.data();
    }
    kernels::parallel::gemm_nt(out_c_, g.patch(), g.positions(), grad_out, src,
                               weight.grad.data());
    if (!need_input_grad) continue;
    if (direct) {
      kernels::parallel::gemm_tn(g.patch(), g.positions(), out_c_, weight.value.data(), grad_out,
                                 dx.data() + n * in_plane);
    } else {
      std::fill(dcol.begin(), dcol.end(), T(0));
      kernels::parallel::gemm_tn(g.patch(), g.positions(), out_c_, weight.value.data(), grad_out,
                                 dcol.data());
      kernels::parallel::col2im(dcol.data(), g, dx.data() + n * in_plane);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const std::string& name, int channels, bool affine)
    : gamma(name + ".gamma", {channels}, false),
      beta(name + ".beta", {channels}, false),
      running_mean({channels}),
      running_var({channels}, T(1)),
      prefix_(name),
      channels_(channels),
      affine_(affine) {
  gamma.value.fill(T(1));
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x) {
  require(x.rank() == 4 && x.dim(1) == channels_, ErrorKind::Shape,
          prefix_ + ": channel mismatch " + x.shape_string());
  const int batch = x.dim(0);
  const std::size_t plane = std::size_t(x.dim(2)) * x.dim(3);
  const std::size_t m = plane * batch;
  Tensor<T> y(x.shape());
  if (training_) {
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(channels_, T(0));
  }
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    T mean, inv_std;
    if (training_) {
      double sum = 0.0;
      for (int n = 0; n < batch; ++n) {
        const T* p = x.data() + (std::size_t(n) * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      const double mu = sum / double(m);
      double sq = 0.0;
      for (int n = 0; n < batch; ++n) {
        const T* p = x.data() + (std::size_t(n) * channels_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / double(m);
      mean = static_cast<T>(mu);
      inv_std = static_cast<T>(1.0 / std::sqrt(var + eps));
      inv_std_[c] = inv_std;
      const double unbiased = m > 1 ? sq / double(m - 1) : var;
      running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mu);
      running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * unbiased);
    } else {
      mean = running_mean[c];
      inv_std = static_cast<T>(1.0 / std::sqrt(double(running_var[c]) + eps));
    }
    const T g = gamma.value[c], b = beta.value[c];
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (std::size_t(n) * channels_ + c) * plane;
      const T* p = x.data() + off;
      T* q = y.data() + off;
      if (training_) {
        T* h = xhat_.data() + off;
        for (std::size_t i = 0; i < plane; ++i) {
          h[i] = (p[i] - mean) * inv_std;
          q[i] = g * h[i] + b;
        }
      } else {
        for (std::size_t i = 0; i < plane; ++i) q[i] = g * (p[i] - mean) * inv_std + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy) {
  require(!xhat_.empty(), ErrorKind::Shape, prefix_ + ": backward without cached forward");
  const int batch = dy.dim(0);
  const std::size_t plane = std::size_t(dy.dim(2)) * dy.dim(3);
  const double m = double(plane) * batch;
  Tensor<T> dx(dy.shape());
#pragma omp parallel for schedule(static)
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (std::size_t(n) * channels_ + c) * plane;
      const T* g = dy.data() + off;
      const T* h = xhat_.data() + off;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += double(g[i]) * h[i];
      }
    }
    if (affine_) {
      gamma.grad[c] += static_cast<T>(sum_dy_xhat);
      beta.grad[c] += static_cast<T>(sum_dy);
    }
    const T scale = gamma.value[c] * inv_std_[c];
    const T mean_dy = static_cast<T>(sum_dy / m);
    const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / m);
    for (int n = 0; n < batch; ++n) {
      const std::size_t off = (std::size_t(n) * channels_ + c) * plane;
      const T* g = dy.data() + off;
      const T* h = xhat_.data() + off;
      T* d = dx.data() + off;
      for (std::size_t i = 0; i < plane; ++i) d[i] = scale * (g[i] - mean_dy - h[i] * mean_dy_xhat);
    }
  }
  return dx;
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  const std::size_t n = x.size();
  const T* p = x.data();
  T* q = y.data();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) q[i] = p[i] > T(0) ? p[i] : T(0);
  if (training_) output_ = y;
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) const {
  Tensor<T> dx(dy.shape());
  const std::size_t n = dy.size();
  const T* g = dy.data();
  const T* y = output_.data();
  T* d = dx.data();
#pragma omp parallel for simd schedule(static)
  for (std::size_t i = 0; i < n; ++i) d[i] = y[i] > T(0) ? g[i] : T(0);
  return dx;
}

// ---------------------------------------------------------------- Linear

template <typename T>
Linear<T>::Linear(const std::string& name, int in_features, int out_features, bool bias)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {bias ? out_features : 0}, false),
      in_(in_features),
      out_(out_features),
      has_bias_(bias) {}

template <typename T>
void Linear<T>::init(std::uint64_t seed) {
  Rng rng = derive_rng(seed, weight.name);
  const double bound = 1.0 / std::sqrt(double(in_));
  for (auto& w : weight.value.vec()) w = static_cast<T>(uniform_real(rng, -bound, bound));
  for (auto& b : bias.value.vec()) b = static_cast<T>(uniform_real(rng, -bound, bound));
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  require(x.rank() == 2 && x.dim(1) == in_, ErrorKind::Shape,
          weight.name + ": expected [batch," + std::to_string(in_) + "], got " + x.shape_string());
  const int batch = x.dim(0);
  Tensor<T> y({batch, out_});
  if (has_bias_)
    for (int n = 0; n < batch; ++n)
      for (int o = 0; o < out_; ++o) y.at(n, o) = bias.value[o];
  kernels::parallel::gemm_nt(batch, out_, in_, x.data(), weight.value.data(), y.data());
  if (training_) input_ = x;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  require(!input_.empty(), ErrorKind::Shape, weight.name + ": backward without cached forward");
  const int batch = dy.dim(0);
  kernels::parallel::gemm_tn(out_, in_, batch, dy.data(), input_.data(), weight.grad.data());
  if (has_bias_)
    for (int n = 0; n < batch; ++n)
      for (int o = 0; o < out_; ++o) bias.grad[o] += dy.at(n, o);
  Tensor<T> dx({batch, in_});
  kernels::parallel::gemm_nn(batch, in_, out_, dy.data(), weight.value.data(), dx.data());
  return dx;
}

// ---------------------------------------------------------------- losses

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels, Tensor<T>* grad) {
  const int batch = logits.dim(0), classes = logits.dim(1);
  require(static_cast<int>(labels.size()) == batch, ErrorKind::Shape, "label count mismatch");
  if (grad) *grad = Tensor<T>(logits.shape());
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    const int y = labels[n];
    require(y >= 0 && y < classes, ErrorKind::Argument,
            "label " + std::to_string(y) + " out of range [0," + std::to_string(classes) + ")");
    double mx = logits.at(n, 0);
    for (int c = 1; c < classes; ++c) mx = std::max(mx, double(logits.at(n, c)));
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp(double(logits.at(n, c)) - mx);
    const double log_z = mx + std::log(z);
    total += log_z - double(logits.at(n, y));
    if (grad) {
      for (int c = 0; c < classes; ++c) {
        const double p = std::exp(double(logits.at(n, c)) - log_z);
        grad->at(n, c) = static_cast<T>((p - (c == y ? 1.0 : 0.0)) / batch);
      }
    }
  }
  return static_cast<T>(total / batch);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ReLU<float>;
template class ReLU<double>;
template class Linear<float>;
template class Linear<double>;
template float softmax_cross_entropy(const Tensor<float>&, const std::vector<int>&, Tensor<float>*);
template double softmax_cross_entropy(const Tensor<double>&, const std::vector<int>&,
                                      Tensor<double>*);

}  // namespace xdsv
