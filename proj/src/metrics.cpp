#include "xdsv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "xdsv/error.hpp"

namespace xdsv {

void DcfConfig::validate() const {
  require(p_target > 0.0 && p_target < 1.0, ErrorKind::Config, "p_target must lie in (0, 1)");
  require(c_miss > 0.0 && c_fa > 0.0, ErrorKind::Config, "detection costs must be positive");
}

std::vector<OperatingPoint> operating_points(std::span<const double> target_scores,
                                             std::span<const double> nontarget_scores) {
  require(!target_scores.empty() && !nontarget_scores.empty(), ErrorKind::Validation,
          "metrics need at least one target and one nontarget score");
  std::vector<std::pair<double, bool>> all;
  all.reserve(target_scores.size() + nontarget_scores.size());
  for (double s : target_scores) all.emplace_back(s, true);
  for (double s : nontarget_scores) all.emplace_back(s, false);
  std::sort(all.begin(), all.end());

  const double nt = double(target_scores.size()), nn = double(nontarget_scores.size());
  std::vector<OperatingPoint> points;
  points.push_back({-std::numeric_limits<double>::infinity(), 0.0, 1.0});
  std::size_t misses = 0, rejected_nontargets = 0;
  for (std::size_t i = 0; i < all.size();) {
    const double v = all[i].first;
    for (; i < all.size() && all[i].first == v; ++i) (all[i].second ? misses : rejected_nontargets)++;
    points.push_back({v, double(misses) / nt, (nn - double(rejected_nontargets)) / nn});
  }
  return points;
}

double eer_from_points(const std::vector<OperatingPoint>& points) {
  require(!points.empty(), ErrorKind::Validation, "no operating points");
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double d = points[k].p_miss - points[k].p_fa;
    if (d < 0.0) continue;
    if (d == 0.0 || k == 0) return points[k].p_miss;
    const auto& a = points[k - 1];
    const auto& b = points[k];
    const double da = a.p_miss - a.p_fa;
    const double t = da / (da - d);
    return a.p_miss + t * (b.p_miss - a.p_miss);
  }
  return points.back().p_miss;
}

double compute_eer(std::span<const double> target_scores, std::span<const double> nontarget_scores) {
  return eer_from_points(operating_points(target_scores, nontarget_scores));
}

double mdcf_from_points(const std::vector<OperatingPoint>& points, const DcfConfig& cfg) {
  cfg.validate();
  const double w_miss = cfg.c_miss * cfg.p_target;
  const double w_fa = cfg.c_fa * (1.0 - cfg.p_target);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : points) best = std::min(best, w_miss * p.p_miss + w_fa * p.p_fa);
  return best / std::min(w_miss, w_fa);
}

double compute_mdcf(std::span<const double> target_scores,
                    std::span<const double> nontarget_scores, const DcfConfig& cfg) {
  return mdcf_from_points(operating_points(target_scores, nontarget_scores), cfg);
}

void split_scores(const ScoredTrials& scored, std::vector<double>& targets,
                  std::vector<double>& nontargets) {
  targets.clear();
  nontargets.clear();
  for (const auto& s : scored) (s.trial.target ? targets : nontargets).push_back(s.score);
}

double compute_eer(const ScoredTrials& scored) {
  std::vector<double> t, n;
  split_scores(scored, t, n);
  return compute_eer(t, n);
}

double compute_mdcf(const ScoredTrials& scored, const DcfConfig& cfg) {
  std::vector<double> t, n;
  split_scores(scored, t, n);
  return compute_mdcf(t, n, cfg);
}

}  // namespace xdsv
