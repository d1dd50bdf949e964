#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "xdsv/embedding.hpp"

namespace xdsv {

// Vocal manner: stage speech (ST) or singing (S).
enum class Domain { ST = 0, S = 1 };
enum class Gender { M, F };
enum class SplitTag { Unsplit, Train, Test };

std::string_view to_string(Domain d);
Domain parse_domain(std::string_view s);
std::string_view to_string(Gender g);
Gender parse_gender(std::string_view s);

struct UtteranceRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string play_id;
  Domain domain = Domain::ST;
  double duration_s = 0.0;
  std::string audio_path;
  std::optional<std::string> character;
  std::optional<Gender> gender;
  std::optional<std::string> text;

  bool operator==(const UtteranceRecord&) const = default;
};

class Manifest {
 public:
  Manifest() = default;
  // Validates every record; duplicate utt_id is an error.
  explicit Manifest(std::vector<UtteranceRecord> records,
                    std::optional<SplitTag> split_tag = std::nullopt);

  const std::vector<UtteranceRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const UtteranceRecord& operator[](std::size_t i) const { return records_[i]; }

  const UtteranceRecord* find(std::string_view utt_id) const;
  // Utterance count per speaker, keyed in lexicographic speaker order.
  std::map<std::string, std::size_t> speaker_counts() const;
  std::vector<std::string> speakers() const;

  std::optional<SplitTag> split_tag() const { return split_tag_; }

 private:
  std::vector<UtteranceRecord> records_;
  std::unordered_map<std::string, std::size_t> index_;
  std::optional<SplitTag> split_tag_;
};

void validate_record(const UtteranceRecord& r);

// One JSON object per line. Blank lines are skipped.
Manifest parse_manifest(std::istream& in, const std::string& source = "<stream>");
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& m, std::ostream& out);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

// Speakers ordered by utterance count (descending, ties by ascending
// speaker_id); the first n go to train, the rest to test. Record order is
// preserved inside each part.
std::pair<Manifest, Manifest> split_by_utterance_count(const Manifest& m,
                                                       std::size_t n_train_speakers);

struct QAEntry {
  std::string utt_id;
  double similarity = 0.0;
};

struct QAReport {
  std::vector<QAEntry> flagged;  // ascending similarity
  double threshold = 0.4;
};

// Cosine similarity of each utterance to the mean embedding of its
// (speaker, domain) group; those below threshold are flagged.
QAReport quality_assess(const Manifest& m, const EmbeddingMap& embeddings,
                        double threshold = 0.4);
void write_qa_report(const QAReport& report, std::ostream& out);

struct DomainStats {
  std::size_t speakers = 0;
  std::size_t utterances = 0;
  double hours = 0.0;
  double mean_utts_per_speaker = 0.0;
  double mean_length_s = 0.0;
};

struct ManifestStats {
  DomainStats st;
  DomainStats s;
  DomainStats all;
};

ManifestStats manifest_stats(const Manifest& m);
std::string format_stats(const ManifestStats& stats);

}  // namespace xdsv
