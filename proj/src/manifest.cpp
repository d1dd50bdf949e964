#include "xdsv/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "xdsv/error.hpp"

namespace xdsv {

using json = nlohmann::json;

std::string_view to_string(Domain d) { return d == Domain::ST ? "ST" : "S"; }

Domain parse_domain(std::string_view s) {
  if (s == "ST") return Domain::ST;
  if (s == "S") return Domain::S;
  fail(ErrorKind::Validation, "domain must be ST or S, got '" + std::string(s) + "'");
}

std::string_view to_string(Gender g) { return g == Gender::M ? "M" : "F"; }

Gender parse_gender(std::string_view s) {
  if (s == "M") return Gender::M;
  if (s == "F") return Gender::F;
  fail(ErrorKind::Validation, "gender must be M or F, got '" + std::string(s) + "'");
}

void validate_record(const UtteranceRecord& r) {
  require(!r.utt_id.empty(), ErrorKind::Validation, "empty utt_id");
  require(!r.speaker_id.empty(), ErrorKind::Validation, r.utt_id + ": empty speaker_id");
  require(std::isfinite(r.duration_s) && r.duration_s > 0.0, ErrorKind::Validation,
          r.utt_id + ": duration_s must be > 0");
}

Manifest::Manifest(std::vector<UtteranceRecord> records, std::optional<SplitTag> split_tag)
    : records_(std::move(records)), split_tag_(split_tag) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    validate_record(records_[i]);
    const auto [it, inserted] = index_.emplace(records_[i].utt_id, i);
    require(inserted, ErrorKind::Validation, "duplicate utt_id '" + records_[i].utt_id + "'");
  }
}

const UtteranceRecord* Manifest::find(std::string_view utt_id) const {
  const auto it = index_.find(std::string(utt_id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

std::map<std::string, std::size_t> Manifest::speaker_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records_) ++counts[r.speaker_id];
  return counts;
}

std::vector<std::string> Manifest::speakers() const {
  std::vector<std::string> out;
  for (const auto& [spk, n] : speaker_counts()) out.push_back(spk);
  return out;
}

// ---------------------------------------------------------------- I/O

namespace {

UtteranceRecord record_from_json(const json& j) {
  auto str = [&](const char* key) -> std::string {
    require(j.contains(key) && j.at(key).is_string(), ErrorKind::Parse,
            std::string("missing or non-string key '") + key + "'");
    return j.at(key).get<std::string>();
  };
  auto opt_str = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    require(j.at(key).is_string(), ErrorKind::Parse, std::string("key '") + key + "' must be a string or null");
    return j.at(key).get<std::string>();
  };
  UtteranceRecord r;
  r.utt_id = str("utt_id");
  r.speaker_id = str("speaker_id");
  r.play_id = str("play_id");
  r.domain = parse_domain(str("domain"));
  require(j.contains("duration_s") && j.at("duration_s").is_number(), ErrorKind::Parse,
          "missing or non-numeric key 'duration_s'");
  r.duration_s = j.at("duration_s").get<double>();
  r.audio_path = str("audio_path");
  r.character = opt_str("character");
  if (auto g = opt_str("gender")) r.gender = parse_gender(*g);
  r.text = opt_str("text");
  return r;
}

json record_to_json(const UtteranceRecord& r) {
  json j;
  j["utt_id"] = r.utt_id;
  j["speaker_id"] = r.speaker_id;
  j["play_id"] = r.play_id;
  j["domain"] = std::string(to_string(r.domain));
  j["duration_s"] = r.duration_s;
  j["audio_path"] = r.audio_path;
  j["character"] = r.character ? json(*r.character) : json(nullptr);
  j["gender"] = r.gender ? json(std::string(to_string(*r.gender))) : json(nullptr);
  j["text"] = r.text ? json(*r.text) : json(nullptr);
  return j;
}

}  // namespace

Manifest parse_manifest(std::istream& in, const std::string& source) {
  std::vector<UtteranceRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return Manifest(std::move(records));
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open manifest " + path.string());
  return parse_manifest(in, path.string());
}

void write_manifest(const Manifest& m, std::ostream& out) {
  for (const auto& r : m.records()) out << record_to_json(r).dump() << '\n';
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write manifest " + path.string());
  write_manifest(m, out);
}

// ---------------------------------------------------------------- split

std::pair<Manifest, Manifest> split_by_utterance_count(const Manifest& m,
                                                       std::size_t n_train_speakers) {
  const auto counts = m.speaker_counts();
  require(n_train_speakers <= counts.size(), ErrorKind::Argument,
          "cannot put " + std::to_string(n_train_speakers) + " speakers in train: manifest has " +
              std::to_string(counts.size()));
  std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::set<std::string> train_speakers;
  for (std::size_t i = 0; i < n_train_speakers; ++i) train_speakers.insert(order[i].first);
  std::vector<UtteranceRecord> train, test;
  for (const auto& r : m.records()) (train_speakers.count(r.speaker_id) ? train : test).push_back(r);
  return {Manifest(std::move(train), SplitTag::Train), Manifest(std::move(test), SplitTag::Test)};
}

// ---------------------------------------------------------------- QA

QAReport quality_assess(const Manifest& m, const EmbeddingMap& embeddings, double threshold) {
  using Key = std::pair<std::string, Domain>;
  std::map<Key, std::vector<const UtteranceRecord*>> groups;
  for (const auto& r : m.records()) {
    require(embeddings.count(r.utt_id) > 0, ErrorKind::Validation,
            "missing embedding for utterance '" + r.utt_id + "'");
    groups[{r.speaker_id, r.domain}].push_back(&r);
  }
  QAReport report;
  report.threshold = threshold;
  for (const auto& [key, members] : groups) {
    const std::size_t dim = embeddings.at(members.front()->utt_id).size();
    std::vector<double> mean(dim, 0.0);
    for (const auto* r : members) {
      const Embedding& e = embeddings.at(r->utt_id);
      require(e.size() == dim, ErrorKind::Shape, "embedding dimension mismatch at " + r->utt_id);
      for (std::size_t d = 0; d < dim; ++d) mean[d] += e[d];
    }
    double mean_norm = 0.0;
    for (auto& v : mean) {
      v /= double(members.size());
      mean_norm += v * v;
    }
    mean_norm = std::sqrt(mean_norm);
    for (const auto* r : members) {
      const Embedding& e = embeddings.at(r->utt_id);
      double dot = 0.0, norm = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        dot += e[d] * mean[d];
        norm += double(e[d]) * e[d];
      }
      norm = std::sqrt(norm);
      // A zero vector has no direction; its similarity is 0.
      const double sim = (norm > 0.0 && mean_norm > 0.0) ? dot / (norm * mean_norm) : 0.0;
      if (sim < threshold) report.flagged.push_back({r->utt_id, std::clamp(sim, -1.0, 1.0)});
    }
  }
  std::sort(report.flagged.begin(), report.flagged.end(), [](const QAEntry& a, const QAEntry& b) {
    return std::tie(a.similarity, a.utt_id) < std::tie(b.similarity, b.utt_id);
  });
  return report;
}

void write_qa_report(const QAReport& report, std::ostream& out) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(6);
  for (const auto& e : report.flagged) out << e.utt_id << '\t' << e.similarity << '\n';
  out.flags(flags);
}

// ---------------------------------------------------------------- stats

ManifestStats manifest_stats(const Manifest& m) {
  require(!m.empty(), ErrorKind::Validation, "statistics of an empty manifest");
  ManifestStats stats;
  std::set<std::string> spk_st, spk_s, spk_all;
  double sec_st = 0.0, sec_s = 0.0;
  for (const auto& r : m.records()) {
    spk_all.insert(r.speaker_id);
    if (r.domain == Domain::ST) {
      spk_st.insert(r.speaker_id);
      ++stats.st.utterances;
      sec_st += r.duration_s;
    } else {
      spk_s.insert(r.speaker_id);
      ++stats.s.utterances;
      sec_s += r.duration_s;
    }
  }
  auto finish = [](DomainStats& d, std::size_t speakers, double seconds) {
    d.speakers = speakers;
    d.hours = seconds / 3600.0;
    d.mean_utts_per_speaker = speakers ? double(d.utterances) / double(speakers) : 0.0;
    d.mean_length_s = d.utterances ? seconds / double(d.utterances) : 0.0;
  };
  finish(stats.st, spk_st.size(), sec_st);
  finish(stats.s, spk_s.size(), sec_s);
  stats.all.utterances = stats.st.utterances + stats.s.utterances;
  finish(stats.all, spk_all.size(), sec_st + sec_s);
  return stats;
}

std::string format_stats(const ManifestStats& stats) {
  std::ostringstream os;
  os << std::fixed;
  os << "domain\tspeakers\tutterances\thours\tutts_per_speaker\tmean_length_s\n";
  auto row = [&](const char* name, const DomainStats& d) {
    os << name << '\t' << d.speakers << '\t' << d.utterances << '\t' << std::setprecision(4)
       << d.hours << '\t' << std::setprecision(2) << d.mean_utts_per_speaker << '\t'
       << d.mean_length_s << '\n';
  };
  row("ST", stats.st);
  row("S", stats.s);
  row("all", stats.all);
  return os.str();
}

}  // namespace xdsv
