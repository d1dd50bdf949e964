#pragma once

#include <span>
#include <string>
#include <vector>

#include "xdsv/manifest.hpp"
#include "xdsv/random.hpp"
#include "xdsv/tensor.hpp"

namespace xdsv {

// Two utterances of one speaker, one per vocal manner.
struct SiamesePair {
  UtteranceRecord utt_st;
  UtteranceRecord utt_s;
  std::string speaker_id;
};

// Draws a speaker uniformly among those with both ST and S utterances, then
// one utterance uniformly from each of that speaker's domains.
class PairSampler {
 public:
  explicit PairSampler(const Manifest& train);

  std::vector<SiamesePair> sample(std::size_t count, Rng& rng) const;
  const std::vector<std::string>& eligible_speakers() const { return speakers_; }

 private:
  const Manifest* manifest_;
  std::vector<std::string> speakers_;
  std::vector<std::vector<std::size_t>> st_, s_;
};

std::vector<SiamesePair> sample_pairs(const Manifest& train, std::size_t batch_size, Rng& rng);

// 1 - cos(z_st, z_s); zero-norm input is an error.
template <typename T>
T pair_loss(std::span<const T> z_st, std::span<const T> z_s);

// Gradients of pair_loss with respect to both inputs.
template <typename T>
void pair_loss_grad(std::span<const T> z_st, std::span<const T> z_s, std::span<T> d_st,
                    std::span<T> d_s);

// Mean pair loss over rows: z_st[i] pairs with z_s[i]. Writes row gradients
// (already divided by the row count) when the outputs are non-null.
template <typename T>
T batch_pair_loss(const Tensor<T>& z_st, const Tensor<T>& z_s, Tensor<T>* d_st, Tensor<T>* d_s);

struct BcstLossConfig {
  double lambda_bcst = 0.5;

  void validate() const;
};

// L_uttS + L_uttST + lambda * L_pair
double bcst_loss(double l_utt_s, double l_utt_st, double l_pair, const BcstLossConfig& cfg);

}  // namespace xdsv
