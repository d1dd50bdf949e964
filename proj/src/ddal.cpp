#include "xdsv/ddal.hpp"

#include <cmath>

#include "xdsv/kernels.hpp"
#include "xdsv/random.hpp"

namespace xdsv {

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::None: return "none";
    case AttentionKind::SimAM: return "simam";
    case AttentionKind::ASP: return "asp";
  }
  return "none";
}

AttentionKind parse_attention_kind(std::string_view s) {
  if (s == "none") return AttentionKind::None;
  if (s == "simam") return AttentionKind::SimAM;
  if (s == "asp") return AttentionKind::ASP;
  fail(ErrorKind::Config, "unknown attention variant '" + std::string(s) + "' (none|simam|asp)");
}

template <typename T>
DisentangledFeatures<T> disentangle_with(const Tensor<T>& f, const Tensor<T>& attention) {
  require(f.same_shape(attention), ErrorKind::Shape,
          "attention map " + attention.shape_string() + " does not match features " +
              f.shape_string());
  DisentangledFeatures<T> out{Tensor<T>(f.shape()), Tensor<T>(f.shape()), attention};
  for (std::size_t i = 0; i < f.size(); ++i) {
    const T a = attention[i];
    require(a >= T(0) && a <= T(1), ErrorKind::Numeric, "attention weight outside [0, 1]");
    out.f_domain[i] = a * f[i];
    out.f_id[i] = f[i] - out.f_domain[i];
  }
  return out;
}

namespace {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Tensor<T> simam_attention(const Tensor<T>& f, double lambda) {
  require(f.rank() == 4, ErrorKind::Shape, "SimAM expects a 4-D feature map");
  const std::size_t planes = std::size_t(f.dim(0)) * f.dim(1);
  const std::size_t plane = std::size_t(f.dim(2)) * f.dim(3);
  const double n = plane > 1 ? double(plane - 1) : 1.0;
  Tensor<T> a(f.shape());
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* x = f.data() + p * plane;
    T* out = a.data() + p * plane;
    double mu = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mu += x[i];
    mu /= double(plane);
    double sum_d = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum_d += (x[i] - mu) * (x[i] - mu);
    const double denom = 4.0 * (sum_d / n + lambda);
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = (x[i] - mu) * (x[i] - mu);
      out[i] = static_cast<T>(sigmoid(d / denom + 0.5));
    }
  }
  return a;
}

template <typename T>
Tensor<T> simam_attention_backward(const Tensor<T>& f, const Tensor<T>& attention,
                                   const Tensor<T>& dattention, double lambda) {
  const std::size_t planes = std::size_t(f.dim(0)) * f.dim(1);
  const std::size_t plane = std::size_t(f.dim(2)) * f.dim(3);
  const double n = plane > 1 ? double(plane - 1) : 1.0;
  Tensor<T> df(f.shape());
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < planes; ++p) {
    const T* x = f.data() + p * plane;
    const T* a = attention.data() + p * plane;
    const T* da = dattention.data() + p * plane;
    T* out = df.data() + p * plane;
    double mu = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mu += x[i];
    mu /= double(plane);
    double sum_d = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum_d += (x[i] - mu) * (x[i] - mu);
    const double denom = 4.0 * (sum_d / n + lambda);
    // q = dL/dy where y is the pre-sigmoid energy term.
    double sum_qd = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double q = double(da[i]) * a[i] * (1.0 - a[i]);
      sum_qd += q * (x[i] - mu) * (x[i] - mu);
    }
    const double via_var = -4.0 * sum_qd / (denom * denom * n);
    // r = dL/d(d_i); dx_i = 2 r_i (x_i - mu) - 2/P sum_j r_j (x_j - mu)
    double sum_r_dev = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double q = double(da[i]) * a[i] * (1.0 - a[i]);
      const double r = q / denom + via_var;
      sum_r_dev += r * (x[i] - mu);
    }
    for (std::size_t i = 0; i < plane; ++i) {
      const double q = double(da[i]) * a[i] * (1.0 - a[i]);
      const double r = q / denom + via_var;
      out[i] = static_cast<T>(2.0 * r * (x[i] - mu) - 2.0 * sum_r_dev / double(plane));
    }
  }
  return df;
}

// ---------------------------------------------------------------- DomainAttention

template <typename T>
DomainAttention<T>::DomainAttention(AttentionKind kind, int channels, double simam_lambda)
    : kind_(kind), channels_(channels), simam_lambda_(simam_lambda) {
  require(kind != AttentionKind::None, ErrorKind::Config,
          "domain attention needs a concrete variant");
  if (kind == AttentionKind::ASP) {
    w1_ = Param<T>("ddal.asp.fc1.weight", {channels, channels});
    b1_ = Param<T>("ddal.asp.fc1.bias", {channels}, false);
    w2_ = Param<T>("ddal.asp.fc2.weight", {channels, channels});
    b2_ = Param<T>("ddal.asp.fc2.bias", {channels}, false);
  }
}

template <typename T>
void DomainAttention<T>::init(std::uint64_t seed) {
  if (kind_ != AttentionKind::ASP) return;
  const double bound = 1.0 / std::sqrt(double(channels_));
  for (Param<T>* p : {&w1_, &b1_, &w2_, &b2_}) {
    Rng rng = derive_rng(seed, p->name);
    for (auto& v : p->value.vec()) v = static_cast<T>(uniform_real(rng, -bound, bound));
  }
}

template <typename T>
void DomainAttention<T>::collect_params(ParamList<T>& out) {
  if (kind_ != AttentionKind::ASP) return;
  out.push_back(&w1_);
  out.push_back(&b1_);
  out.push_back(&w2_);
  out.push_back(&b2_);
}

template <typename T>
Tensor<T> DomainAttention<T>::forward(const Tensor<T>& f) {
  require(f.rank() == 4 && f.dim(1) == channels_, ErrorKind::Shape,
          "attention channel mismatch: " + f.shape_string());
  if (kind_ == AttentionKind::SimAM) {
    Tensor<T> a = simam_attention(f, simam_lambda_);
    if (training_) {
      input_ = f;
      attention_ = a;
    }
    return a;
  }
  const int batch = f.dim(0);
  const int positions = f.dim(2) * f.dim(3);
  const std::size_t plane = std::size_t(channels_) * positions;
  Tensor<T> hidden(f.shape()), a(f.shape());
  for (int n = 0; n < batch; ++n) {
    T* h = hidden.data() + n * plane;
    T* e = a.data() + n * plane;
    for (int c = 0; c < channels_; ++c) {
      std::fill(h + std::size_t(c) * positions, h + std::size_t(c + 1) * positions, b1_.value[c]);
      std::fill(e + std::size_t(c) * positions, e + std::size_t(c + 1) * positions, b2_.value[c]);
    }
    kernels::parallel::gemm_nn(channels_, positions, channels_, w1_.value.data(),
                               f.data() + n * plane, h);
    for (std::size_t i = 0; i < plane; ++i) h[i] = std::tanh(h[i]);
    kernels::parallel::gemm_nn(channels_, positions, channels_, w2_.value.data(), h, e);
    for (std::size_t i = 0; i < plane; ++i) e[i] = sigmoid(e[i]);
  }
  if (training_) {
    input_ = f;
    hidden_ = std::move(hidden);
    attention_ = a;
  }
  return a;
}

template <typename T>
Tensor<T> DomainAttention<T>::backward(const Tensor<T>& dattention) {
  require(!input_.empty(), ErrorKind::Shape, "attention backward without cached forward");
  if (kind_ == AttentionKind::SimAM)
    return simam_attention_backward(input_, attention_, dattention, simam_lambda_);
  const int batch = input_.dim(0);
  const int positions = input_.dim(2) * input_.dim(3);
  const std::size_t plane = std::size_t(channels_) * positions;
  Tensor<T> df(input_.shape());
  std::vector<T> de(plane), dh(plane);
  for (int n = 0; n < batch; ++n) {
    const T* a = attention_.data() + n * plane;
    const T* h = hidden_.data() + n * plane;
    const T* da = dattention.data() + n * plane;
    for (std::size_t i = 0; i < plane; ++i) de[i] = da[i] * a[i] * (T(1) - a[i]);
    kernels::parallel::gemm_nt(channels_, channels_, positions, de.data(), h, w2_.grad.data());
    for (int c = 0; c < channels_; ++c) {
      T s = 0;
      for (int p = 0; p < positions; ++p) s += de[std::size_t(c) * positions + p];
      b2_.grad[c] += s;
    }
    std::fill(dh.begin(), dh.end(), T(0));
    kernels::parallel::gemm_tn(channels_, positions, channels_, w2_.value.data(), de.data(),
                               dh.data());
    for (std::size_t i = 0; i < plane; ++i) dh[i] *= T(1) - h[i] * h[i];
    kernels::parallel::gemm_nt(channels_, channels_, positions, dh.data(),
                               input_.data() + n * plane, w1_.grad.data());
    for (int c = 0; c < channels_; ++c) {
      T s = 0;
      for (int p = 0; p < positions; ++p) s += dh[std::size_t(c) * positions + p];
      b1_.grad[c] += s;
    }
    kernels::parallel::gemm_tn(channels_, positions, channels_, w1_.value.data(), dh.data(),
                               df.data() + n * plane);
  }
  return df;
}

template <typename T>
DisentangledFeatures<T> disentangle(const Tensor<T>& f, DomainAttention<T>& attention) {
  return disentangle_with(f, attention.forward(f));
}

template <typename T>
Tensor<T> disentangle_backward(const Tensor<T>& f, const Tensor<T>& attention_map,
                               DomainAttention<T>& attention, const Tensor<T>& d_id,
                               const Tensor<T>& d_domain) {
  // f_id = f - A*f, f_domain = A*f; g = dL/d(A*f).
  Tensor<T> df(f.shape()), dattention(f.shape());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const T g = d_domain[i] - d_id[i];
    df[i] = d_id[i] + g * attention_map[i];
    dattention[i] = g * f[i];
  }
  const Tensor<T> via_attention = attention.backward(dattention);
  for (std::size_t i = 0; i < df.size(); ++i) df[i] += via_attention[i];
  return df;
}

// ---------------------------------------------------------------- DomainClassifier

template <typename T>
DomainClassifier<T>::DomainClassifier(const std::string& name, int dim)
    : fc1_(name + ".fc1", dim, dim), fc2_(name + ".fc2", dim, 2) {}

template <typename T>
void DomainClassifier<T>::init(std::uint64_t seed) {
  fc1_.init(seed);
  fc2_.init(seed);
}

template <typename T>
Tensor<T> DomainClassifier<T>::forward(const Tensor<T>& z) {
  return fc2_.forward(relu_.forward(fc1_.forward(z)));
}

template <typename T>
Tensor<T> DomainClassifier<T>::backward(const Tensor<T>& dlogits) {
  return fc1_.backward(relu_.backward(fc2_.backward(dlogits)));
}

template <typename T>
void DomainClassifier<T>::set_training(bool training) {
  fc1_.set_training(training);
  relu_.set_training(training);
  fc2_.set_training(training);
}

template <typename T>
void DomainClassifier<T>::collect_params(ParamList<T>& out) {
  fc1_.collect_params(out);
  fc2_.collect_params(out);
}

void DdalLossConfig::validate() const {
  require(lambda_ddal >= 0.0, ErrorKind::Config, "ddal.lambda must be non-negative");
  require(grl_scale >= 0.0, ErrorKind::Config, "ddal.grl_scale must be non-negative");
}

double ddal_loss(double l_id, double l_cls1, double l_cls2, const DdalLossConfig& cfg) {
  cfg.validate();
  require(std::isfinite(l_id), ErrorKind::Numeric, "L_id is not finite");
  require(std::isfinite(l_cls1), ErrorKind::Numeric, "L_cls1 is not finite");
  require(std::isfinite(l_cls2), ErrorKind::Numeric, "L_cls2 is not finite");
  return l_id + cfg.lambda_ddal * (l_cls1 + l_cls2);
}

template DisentangledFeatures<float> disentangle_with(const Tensor<float>&, const Tensor<float>&);
template DisentangledFeatures<double> disentangle_with(const Tensor<double>&,
                                                       const Tensor<double>&);
template Tensor<float> simam_attention(const Tensor<float>&, double);
template Tensor<double> simam_attention(const Tensor<double>&, double);
template Tensor<float> simam_attention_backward(const Tensor<float>&, const Tensor<float>&,
                                                const Tensor<float>&, double);
template Tensor<double> simam_attention_backward(const Tensor<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, double);
template class DomainAttention<float>;
template class DomainAttention<double>;
template DisentangledFeatures<float> disentangle(const Tensor<float>&, DomainAttention<float>&);
template DisentangledFeatures<double> disentangle(const Tensor<double>&, DomainAttention<double>&);
template Tensor<float> disentangle_backward(const Tensor<float>&, const Tensor<float>&,
                                            DomainAttention<float>&, const Tensor<float>&,
                                            const Tensor<float>&);
template Tensor<double> disentangle_backward(const Tensor<double>&, const Tensor<double>&,
                                             DomainAttention<double>&, const Tensor<double>&,
                                             const Tensor<double>&);
template class DomainClassifier<float>;
template class DomainClassifier<double>;

}  // namespace xdsv
