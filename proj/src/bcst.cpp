#include "xdsv/bcst.hpp"

#include <cmath>
#include <map>

#include "xdsv/error.hpp"

namespace xdsv {

PairSampler::PairSampler(const Manifest& train) : manifest_(&train) {
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_speaker;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto& entry = by_speaker[train[i].speaker_id];
    (train[i].domain == Domain::ST ? entry.first : entry.second).push_back(i);
  }
  for (auto& [spk, lists] : by_speaker) {
    if (lists.first.empty() || lists.second.empty()) continue;
    speakers_.push_back(spk);
    st_.push_back(std::move(lists.first));
    s_.push_back(std::move(lists.second));
  }
  require(!speakers_.empty(), ErrorKind::Validation,
          "no speaker has both ST and S utterances; disable BCST (bcst.enabled = false)");
}

std::vector<SiamesePair> PairSampler::sample(std::size_t count, Rng& rng) const {
  std::vector<SiamesePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t k = uniform_index(rng, speakers_.size());
    const std::size_t a = st_[k][uniform_index(rng, st_[k].size())];
    const std::size_t b = s_[k][uniform_index(rng, s_[k].size())];
    out.push_back({(*manifest_)[a], (*manifest_)[b], speakers_[k]});
  }
  return out;
}

std::vector<SiamesePair> sample_pairs(const Manifest& train, std::size_t batch_size, Rng& rng) {
  return PairSampler(train).sample(batch_size, rng);
}

namespace {

template <typename T>
void norms_and_dot(std::span<const T> a, std::span<const T> b, double& na, double& nb,
                   double& dot) {
  require(a.size() == b.size(), ErrorKind::Shape, "pair loss: dimension mismatch");
  na = nb = dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
    dot += double(a[i]) * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  require(na > 0.0 && nb > 0.0, ErrorKind::Numeric, "pair loss: zero-norm embedding");
}

}  // namespace

template <typename T>
T pair_loss(std::span<const T> z_st, std::span<const T> z_s) {
  double na, nb, dot;
  norms_and_dot(z_st, z_s, na, nb, dot);
  return static_cast<T>(1.0 - std::clamp(dot / (na * nb), -1.0, 1.0));
}

template <typename T>
void pair_loss_grad(std::span<const T> z_st, std::span<const T> z_s, std::span<T> d_st,
                    std::span<T> d_s) {
  double na, nb, dot;
  norms_and_dot(z_st, z_s, na, nb, dot);
  const double cos = dot / (na * nb);
  // d(-cos)/da = -(b / (|a||b|) - cos * a / |a|^2)
  for (std::size_t i = 0; i < z_st.size(); ++i) {
    d_st[i] = static_cast<T>(-(z_s[i] / (na * nb) - cos * z_st[i] / (na * na)));
    d_s[i] = static_cast<T>(-(z_st[i] / (na * nb) - cos * z_s[i] / (nb * nb)));
  }
}

template <typename T>
T batch_pair_loss(const Tensor<T>& z_st, const Tensor<T>& z_s, Tensor<T>* d_st, Tensor<T>* d_s) {
  require(z_st.same_shape(z_s) && z_st.rank() == 2, ErrorKind::Shape,
          "pair loss: embedding batches differ in shape");
  const int rows = z_st.dim(0), dim = z_st.dim(1);
  require(rows > 0, ErrorKind::Shape, "pair loss: empty batch");
  if (d_st) *d_st = Tensor<T>(z_st.shape());
  if (d_s) *d_s = Tensor<T>(z_s.shape());
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    std::span<const T> a(z_st.data() + std::size_t(r) * dim, dim);
    std::span<const T> b(z_s.data() + std::size_t(r) * dim, dim);
    total += pair_loss(a, b);
    if (d_st && d_s) {
      std::span<T> ga(d_st->data() + std::size_t(r) * dim, dim);
      std::span<T> gb(d_s->data() + std::size_t(r) * dim, dim);
      pair_loss_grad(a, b, ga, gb);
      for (int i = 0; i < dim; ++i) {
        ga[i] /= T(rows);
        gb[i] /= T(rows);
      }
    }
  }
  return static_cast<T>(total / rows);
}

void BcstLossConfig::validate() const {
  require(lambda_bcst >= 0.0, ErrorKind::Config, "bcst.lambda must be non-negative");
}

double bcst_loss(double l_utt_s, double l_utt_st, double l_pair, const BcstLossConfig& cfg) {
  cfg.validate();
  require(std::isfinite(l_utt_s), ErrorKind::Numeric, "L_uttS is not finite");
  require(std::isfinite(l_utt_st), ErrorKind::Numeric, "L_uttST is not finite");
  require(std::isfinite(l_pair), ErrorKind::Numeric, "L_pair is not finite");
  return l_utt_s + l_utt_st + cfg.lambda_bcst * l_pair;
}

template float pair_loss(std::span<const float>, std::span<const float>);
template double pair_loss(std::span<const double>, std::span<const double>);
template void pair_loss_grad(std::span<const float>, std::span<const float>, std::span<float>,
                             std::span<float>);
template void pair_loss_grad(std::span<const double>, std::span<const double>, std::span<double>,
                             std::span<double>);
template float batch_pair_loss(const Tensor<float>&, const Tensor<float>&, Tensor<float>*,
                               Tensor<float>*);
template double batch_pair_loss(const Tensor<double>&, const Tensor<double>&, Tensor<double>*,
                                Tensor<double>*);

}  // namespace xdsv
