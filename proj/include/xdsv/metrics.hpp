#pragma once

#include <span>
#include <vector>

#include "xdsv/trials.hpp"

namespace xdsv {

struct DcfConfig {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;

  void validate() const;
};

// One ROC point: decisions accept when score > threshold.
struct OperatingPoint {
  double threshold = 0.0;
  double p_miss = 0.0;
  double p_fa = 0.0;
};

// Points for threshold = -inf and just above every distinct score, in
// increasing threshold order (p_miss non-decreasing, p_fa non-increasing).
std::vector<OperatingPoint> operating_points(std::span<const double> target_scores,
                                             std::span<const double> nontarget_scores);

// Equal error rate in [0, 1], linearly interpolated between the two
// operating points that bracket p_miss = p_fa.
double eer_from_points(const std::vector<OperatingPoint>& points);
double compute_eer(std::span<const double> target_scores, std::span<const double> nontarget_scores);
double compute_eer(const ScoredTrials& scored);

// Minimum normalized detection cost over all operating points.
double mdcf_from_points(const std::vector<OperatingPoint>& points, const DcfConfig& cfg);
double compute_mdcf(std::span<const double> target_scores,
                    std::span<const double> nontarget_scores, const DcfConfig& cfg = {});
double compute_mdcf(const ScoredTrials& scored, const DcfConfig& cfg = {});

void split_scores(const ScoredTrials& scored, std::vector<double>& targets,
                  std::vector<double>& nontargets);

}  // namespace xdsv
