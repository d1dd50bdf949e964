#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xdsv/embedding.hpp"
#include "xdsv/manifest.hpp"
#include "xdsv/random.hpp"

namespace xdsv {

// undiff: any domains; st: ST/ST; s: S/S; cross: enroll S, test ST.
enum class Scenario { Undiff, ST, S, Cross };

inline constexpr std::array<Scenario, 4> kAllScenarios = {Scenario::Undiff, Scenario::ST,
                                                          Scenario::S, Scenario::Cross};

std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view s);

struct TrialPair {
  std::string enroll_utt;
  std::string test_utt;
  bool target = false;
  Scenario scenario = Scenario::Undiff;

  bool operator==(const TrialPair&) const = default;
};

// Every utterance of the scenario's test pool is a test side; up to n_pos
// same-speaker and n_neg different-speaker enrollment utterances are drawn
// without replacement from the enrollment pool, self-pairs excluded.
std::vector<TrialPair> build_trials(const Manifest& test, Scenario scenario, Rng& rng,
                                    int n_pos = 5, int n_neg = 5);

// `<scenario-prefix>.<undiff|st|s|cross>.trials`
std::filesystem::path trial_path(const std::filesystem::path& prefix, Scenario scenario);
Scenario scenario_from_path(const std::filesystem::path& path);

// Lines: `<label:{0,1}> <enroll_utt_id> <test_utt_id>`
void write_trials(const std::vector<TrialPair>& trials, std::ostream& out);
void save_trials(const std::vector<TrialPair>& trials, const std::filesystem::path& path);
std::vector<TrialPair> parse_trials(std::istream& in, Scenario scenario,
                                    const std::string& source = "<stream>");
std::vector<TrialPair> load_trials(const std::filesystem::path& path);

double cosine_score(std::span<const float> a, std::span<const float> b);

struct ScoredTrial {
  TrialPair trial;
  double score = 0.0;
};

using ScoredTrials = std::vector<ScoredTrial>;

ScoredTrials score_trials(const std::vector<TrialPair>& trials, const EmbeddingMap& embeddings);

// Lines: `<enroll_utt_id> <test_utt_id> <score:%.6f>`
void write_scores(const ScoredTrials& scored, std::ostream& out);
void save_scores(const ScoredTrials& scored, const std::filesystem::path& path);

struct ScoreLine {
  std::string enroll_utt;
  std::string test_utt;
  double score = 0.0;
};
std::vector<ScoreLine> parse_scores(std::istream& in, const std::string& source = "<stream>");
std::vector<ScoreLine> load_scores(const std::filesystem::path& path);

// Attaches a score to every trial; any trial without one is an error that
// lists the missing pairs.
ScoredTrials join_scores(const std::vector<TrialPair>& trials, const std::vector<ScoreLine>& scores);

}  // namespace xdsv
