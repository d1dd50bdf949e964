#include "xdsv/trials.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "xdsv/error.hpp"

namespace xdsv {

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::Undiff: return "undiff";
    case Scenario::ST: return "st";
    case Scenario::S: return "s";
    case Scenario::Cross: return "cross";
  }
  return "undiff";
}

Scenario parse_scenario(std::string_view s) {
  for (Scenario sc : kAllScenarios)
    if (to_string(sc) == s) return sc;
  fail(ErrorKind::Argument, "unknown scenario '" + std::string(s) + "' (undiff|st|s|cross)");
}

namespace {

bool in_test_pool(Scenario sc, Domain d) {
  switch (sc) {
    case Scenario::Undiff: return true;
    case Scenario::ST: return d == Domain::ST;
    case Scenario::S: return d == Domain::S;
    case Scenario::Cross: return d == Domain::ST;
  }
  return false;
}

bool in_enroll_pool(Scenario sc, Domain d) {
  switch (sc) {
    case Scenario::Undiff: return true;
    case Scenario::ST: return d == Domain::ST;
    case Scenario::S: return d == Domain::S;
    case Scenario::Cross: return d == Domain::S;
  }
  return false;
}

// Partial Fisher-Yates: the first k entries become a uniform k-subset.
void choose(std::vector<std::size_t>& pool, std::size_t k, Rng& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
}

}  // namespace

std::vector<TrialPair> build_trials(const Manifest& test, Scenario scenario, Rng& rng, int n_pos,
                                    int n_neg) {
  require(!test.empty(), ErrorKind::Validation, "cannot build trials from an empty manifest");
  require(n_pos >= 0 && n_neg >= 0, ErrorKind::Argument, "trial counts must be non-negative");
  std::vector<std::size_t> test_pool, enroll_pool;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (in_test_pool(scenario, test[i].domain)) test_pool.push_back(i);
    if (in_enroll_pool(scenario, test[i].domain)) enroll_pool.push_back(i);
  }
  require(!test_pool.empty() && !enroll_pool.empty(), ErrorKind::Validation,
          "scenario '" + std::string(to_string(scenario)) + "' has an empty utterance pool");

  std::vector<TrialPair> trials;
  std::vector<std::size_t> same, other;
  for (std::size_t t : test_pool) {
    const auto& rec = test[t];
    same.clear();
    other.clear();
    for (std::size_t e : enroll_pool) {
      if (e == t) continue;
      (test[e].speaker_id == rec.speaker_id ? same : other).push_back(e);
    }
    choose(same, static_cast<std::size_t>(n_pos), rng);
    choose(other, static_cast<std::size_t>(n_neg), rng);
    for (std::size_t e : same) trials.push_back({test[e].utt_id, rec.utt_id, true, scenario});
    for (std::size_t e : other) trials.push_back({test[e].utt_id, rec.utt_id, false, scenario});
  }
  return trials;
}

std::filesystem::path trial_path(const std::filesystem::path& prefix, Scenario scenario) {
  return prefix.string() + "." + std::string(to_string(scenario)) + ".trials";
}

Scenario scenario_from_path(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  for (Scenario sc : kAllScenarios) {
    const std::string suffix = "." + std::string(to_string(sc)) + ".trials";
    if (name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
      return sc;
  }
  fail(ErrorKind::Argument,
       "cannot infer scenario from '" + name + "' (expected .undiff/.st/.s/.cross.trials)");
}

void write_trials(const std::vector<TrialPair>& trials, std::ostream& out) {
  for (const auto& t : trials)
    out << (t.target ? 1 : 0) << ' ' << t.enroll_utt << ' ' << t.test_utt << '\n';
}

void save_trials(const std::vector<TrialPair>& trials, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write trials " + path.string());
  write_trials(trials, out);
}

std::vector<TrialPair> parse_trials(std::istream& in, Scenario scenario, const std::string& source) {
  std::vector<TrialPair> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string label, enroll, test, extra;
    if (!(ls >> label)) continue;
    require(static_cast<bool>(ls >> enroll >> test) && !(ls >> extra) &&
                (label == "0" || label == "1"),
            ErrorKind::Parse,
            source + ":" + std::to_string(line_no) + ": expected '<0|1> <enroll> <test>'");
    out.push_back({enroll, test, label == "1", scenario});
  }
  return out;
}

std::vector<TrialPair> load_trials(const std::filesystem::path& path) {
  const Scenario sc = scenario_from_path(path);
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open trials " + path.string());
  return parse_trials(in, sc, path.string());
}

double cosine_score(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size(), ErrorKind::Shape, "cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  require(na > 0.0 && nb > 0.0, ErrorKind::Numeric, "cosine: zero-norm embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

ScoredTrials score_trials(const std::vector<TrialPair>& trials, const EmbeddingMap& embeddings) {
  ScoredTrials out(trials.size());
  for (const auto& t : trials) {
    require(embeddings.count(t.enroll_utt), ErrorKind::Validation,
            "no embedding for '" + t.enroll_utt + "'");
    require(embeddings.count(t.test_utt), ErrorKind::Validation,
            "no embedding for '" + t.test_utt + "'");
  }
  for (const auto& [utt, e] : embeddings)
    require(std::any_of(e.begin(), e.end(), [](float v) { return v != 0.0f; }),
            ErrorKind::Numeric, "zero-norm embedding for '" + utt + "'");
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < trials.size(); ++i) {
    out[i].trial = trials[i];
    out[i].score =
        cosine_score(embeddings.at(trials[i].enroll_utt), embeddings.at(trials[i].test_utt));
  }
  return out;
}

void write_scores(const ScoredTrials& scored, std::ostream& out) {
  char buf[64];
  for (const auto& s : scored) {
    std::snprintf(buf, sizeof(buf), "%.6f", s.score);
    out << s.trial.enroll_utt << ' ' << s.trial.test_utt << ' ' << buf << '\n';
  }
}

void save_scores(const ScoredTrials& scored, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write scores " + path.string());
  write_scores(scored, out);
}

std::vector<ScoreLine> parse_scores(std::istream& in, const std::string& source) {
  std::vector<ScoreLine> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    ScoreLine s;
    std::string value;
    if (!(ls >> s.enroll_utt)) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    require(static_cast<bool>(ls >> s.test_utt >> value), ErrorKind::Parse,
            where + ": expected '<enroll> <test> <score>'");
    try {
      std::size_t used = 0;
      s.score = std::stod(value, &used);
      require(used == value.size(), ErrorKind::Parse, "trailing characters");
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, where + ": bad score '" + value + "'");
    }
    require(std::isfinite(s.score), ErrorKind::Parse, where + ": non-finite score");
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ScoreLine> load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open scores " + path.string());
  return parse_scores(in, path.string());
}

ScoredTrials join_scores(const std::vector<TrialPair>& trials, const std::vector<ScoreLine>& scores) {
  std::map<std::pair<std::string, std::string>, double> lookup;
  for (const auto& s : scores) lookup[{s.enroll_utt, s.test_utt}] = s.score;
  ScoredTrials out;
  out.reserve(trials.size());
  std::vector<std::string> missing;
  for (const auto& t : trials) {
    const auto it = lookup.find({t.enroll_utt, t.test_utt});
    if (it == lookup.end()) {
      missing.push_back(t.enroll_utt + " " + t.test_utt);
      continue;
    }
    out.push_back({t, it->second});
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " trial(s) without a score:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " [" + missing[i] + "]";
    if (missing.size() > 20) msg += " ...";
    fail(ErrorKind::Validation, msg);
  }
  return out;
}

}  // namespace xdsv
