#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "xdsv/error.hpp"
#include "xdsv/manifest.hpp"

using namespace xdsv;
using testing::make_manifest;
using testing::make_record;

namespace {

const char* kThreeLines =
    R"({"utt_id":"a1","speaker_id":"a","play_id":"p1","domain":"ST","duration_s":2.5,"audio_path":"a/a1.wav","character":"Dan","gender":"F","text":"hello"}
{"utt_id":"a2","speaker_id":"a","play_id":"p1","domain":"S","duration_s":3.0,"audio_path":"a/a2.wav","character":null,"gender":null,"text":null}

{"utt_id":"b1","speaker_id":"b","play_id":"p2","domain":"S","duration_s":1.25,"audio_path":"b/b1.wav","character":"LaoSheng","gender":"M","text":null}
)";

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Argument;
}

}  // namespace

TEST_CASE("manifest: three well-formed lines") {
  std::istringstream in(kThreeLines);
  const Manifest m = parse_manifest(in);
  REQUIRE(m.size() == 3);
  CHECK(m[0].character == std::optional<std::string>("Dan"));
  CHECK(m[0].gender == Gender::F);
  CHECK(m[1].domain == Domain::S);
  CHECK_FALSE(m[1].text.has_value());
  CHECK(m[2].duration_s == 1.25);
  CHECK(m.find("b1") != nullptr);
  CHECK(m.find("zz") == nullptr);
  CHECK(m.speaker_counts() == std::map<std::string, std::size_t>{{"a", 2}, {"b", 1}});
}

TEST_CASE("manifest: duplicate utt_id is a validation error") {
  std::string text = kThreeLines;
  text += R"({"utt_id":"a1","speaker_id":"c","play_id":"p","domain":"ST","duration_s":1,"audio_path":"x.wav"})";
  std::istringstream in(text);
  CHECK(kind_of([&] { parse_manifest(in); }) == ErrorKind::Validation);
}

TEST_CASE("manifest: malformed line reports its line number") {
  std::istringstream in(std::string(kThreeLines) + "{not json\n");
  try {
    parse_manifest(in, "m.jsonl");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("m.jsonl:5") != std::string::npos);
  }
}

TEST_CASE("manifest: field validation") {
  auto parse_one = [](const std::string& line) {
    std::istringstream in(line);
    return parse_manifest(in);
  };
  CHECK_THROWS_AS(parse_one(R"({"utt_id":"x","speaker_id":"s","play_id":"p","domain":"XX","duration_s":1,"audio_path":"x"})"),
                  Error);
  CHECK_THROWS_AS(parse_one(R"({"utt_id":"x","speaker_id":"s","play_id":"p","domain":"ST","duration_s":0,"audio_path":"x"})"),
                  Error);
  CHECK_THROWS_AS(parse_one(R"({"utt_id":"x","speaker_id":"s","play_id":"p","domain":"ST","audio_path":"x"})"),
                  Error);
}

TEST_CASE("manifest: write/parse round trip") {
  std::istringstream in(kThreeLines);
  const Manifest m = parse_manifest(in);
  std::ostringstream out;
  write_manifest(m, out);
  std::istringstream back(out.str());
  const Manifest m2 = parse_manifest(back);
  REQUIRE(m2.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(m2[i] == m[i]);

  testing::TempDir dir("manifest");
  save_manifest(m, dir / "m.jsonl");
  CHECK(load_manifest(dir / "m.jsonl").records() == m.records());
  CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl"), Error);
}

TEST_CASE("split: the largest speakers go to train") {
  const Manifest m = make_manifest({"e", "d", "c", "b", "a"}, {10, 8, 6, 4, 2});
  const auto [train, test] = split_by_utterance_count(m, 3);
  CHECK(train.speakers() == std::vector<std::string>{"c", "d", "e"});
  CHECK(test.speakers() == std::vector<std::string>{"a", "b"});
  CHECK(train.size() == 24);
  CHECK(test.size() == 6);
  CHECK(train.split_tag() == SplitTag::Train);
  CHECK(test.split_tag() == SplitTag::Test);
  CHECK_THROWS_AS(split_by_utterance_count(m, 6), Error);
}

TEST_CASE("split: ties follow a stable sort by speaker id") {
  xdsv::Rng rng = derive_rng(11, "split.ties");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> names;
    std::vector<int> counts;
    const int n = 4 + int(uniform_index(rng, 8));
    for (int k = 0; k < n; ++k) {
      names.push_back("s" + std::to_string(uniform_index(rng, 1000)) + "_" + std::to_string(k));
      counts.push_back(1 + int(uniform_index(rng, 3)));
    }
    const Manifest m = make_manifest(names, counts);
    const std::size_t k = uniform_index(rng, std::size_t(n) + 1);

    // Oracle: sort by name, then stable-sort by count descending.
    std::vector<std::pair<std::string, int>> order;
    for (int i = 0; i < n; ++i) order.emplace_back(names[i], counts[i]);
    std::sort(order.begin(), order.end());
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::set<std::string> expected;
    for (std::size_t i = 0; i < k; ++i) expected.insert(order[i].first);

    const auto [train, test] = split_by_utterance_count(m, k);
    const auto got = train.speakers();
    CHECK(std::set<std::string>(got.begin(), got.end()) == expected);
  }
}

TEST_CASE("split: partition invariants") {
  xdsv::Rng rng = derive_rng(5, "split.props");
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<std::string> names;
    std::vector<int> counts;
    const int n = 2 + int(uniform_index(rng, 10));
    for (int k = 0; k < n; ++k) {
      names.push_back("spk" + std::to_string(k));
      counts.push_back(1 + int(uniform_index(rng, 12)));
    }
    const Manifest m = make_manifest(names, counts);
    const std::size_t k = uniform_index(rng, std::size_t(n) + 1);
    const auto [train, test] = split_by_utterance_count(m, k);

    std::multiset<std::string> in, out;
    for (const auto& r : m.records()) in.insert(r.utt_id);
    for (const auto& r : train.records()) out.insert(r.utt_id);
    for (const auto& r : test.records()) out.insert(r.utt_id);
    CHECK(in == out);

    const auto tc = train.speaker_counts(), sc = test.speaker_counts();
    CHECK(tc.size() == k);
    for (const auto& [spk, c] : tc) {
      CHECK(sc.count(spk) == 0);
      for (const auto& [spk2, c2] : sc) CHECK(c >= c2);
    }
  }
}

TEST_CASE("qa: identical embeddings are never flagged") {
  const Manifest m = make_manifest({"a"}, {6});
  EmbeddingMap emb;
  for (const auto& r : m.records()) emb[r.utt_id] = {0.3f, -1.0f, 2.0f};
  CHECK(quality_assess(m, emb).flagged.empty());
}

TEST_CASE("qa: an utterance orthogonal to its group mean is flagged") {
  std::vector<UtteranceRecord> recs;
  for (int i = 0; i < 4; ++i) recs.push_back(make_record("u" + std::to_string(i), "a", Domain::ST));
  const Manifest m(recs);
  // Mean of the four is (1, 0, 0); u3 is orthogonal to it.
  EmbeddingMap emb{{"u0", {2, 1, 0}}, {"u1", {2, -1, 0}}, {"u2", {0, 0, 1}}, {"u3", {0, 0, -1}}};
  const QAReport r = quality_assess(m, emb);
  REQUIRE(r.flagged.size() == 2);
  CHECK(r.flagged[0].similarity == doctest::Approx(0.0));
  CHECK(r.flagged[1].similarity == doctest::Approx(0.0));
  for (const auto& e : r.flagged) CHECK(e.similarity < r.threshold);
}

namespace {

// Independent recomputation: group means and cosines with plain loops.
std::vector<std::pair<std::string, double>> qa_oracle(const Manifest& m, const EmbeddingMap& emb,
                                                      double threshold) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& r : m.records()) {
    std::vector<double> mean(emb.at(r.utt_id).size(), 0.0);
    int n = 0;
    for (const auto& q : m.records()) {
      if (q.speaker_id != r.speaker_id || q.domain != r.domain) continue;
      for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += emb.at(q.utt_id)[d];
      ++n;
    }
    double dot = 0, a = 0, b = 0;
    for (std::size_t d = 0; d < mean.size(); ++d) {
      const double md = mean[d] / n, e = emb.at(r.utt_id)[d];
      dot += md * e;
      a += md * md;
      b += e * e;
    }
    const double sim = dot / std::sqrt(a * b);
    if (sim < threshold) out.emplace_back(r.utt_id, sim);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return std::tie(x.second, x.first) < std::tie(y.second, y.first); });
  return out;
}

}  // namespace

TEST_CASE("qa: random groups match a brute-force recomputation") {
  xdsv::Rng rng = derive_rng(3, "qa.random");
  std::vector<UtteranceRecord> recs;
  EmbeddingMap emb;
  // 20 utterances in one group plus a second speaker, with a shared direction
  // so that similarities straddle the threshold.
  std::vector<float> base = testing::random_vector(16, rng);
  for (int i = 0; i < 20; ++i) {
    recs.push_back(make_record("a" + std::to_string(i), "a", Domain::S));
    auto v = testing::random_vector(16, rng);
    for (std::size_t d = 0; d < v.size(); ++d) v[d] = 0.4f * base[d] + v[d] * 0.6f;
    emb[recs.back().utt_id] = v;
  }
  for (int i = 0; i < 7; ++i) {
    recs.push_back(make_record("b" + std::to_string(i), "b", i % 2 ? Domain::ST : Domain::S));
    emb[recs.back().utt_id] = testing::random_vector(16, rng);
  }
  const Manifest m(recs);
  const QAReport r = quality_assess(m, emb);
  const auto oracle = qa_oracle(m, emb, 0.4);
  REQUIRE(r.flagged.size() == oracle.size());
  CHECK(!oracle.empty());
  CHECK(oracle.size() < recs.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    CHECK(r.flagged[i].utt_id == oracle[i].first);
    CHECK(r.flagged[i].similarity == doctest::Approx(oracle[i].second).epsilon(1e-9));
  }

  SUBCASE("permutation invariance") {
    std::vector<UtteranceRecord> shuffled = recs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const QAReport r2 = quality_assess(Manifest(shuffled), emb);
    REQUIRE(r2.flagged.size() == r.flagged.size());
    for (std::size_t i = 0; i < r.flagged.size(); ++i) {
      CHECK(r2.flagged[i].utt_id == r.flagged[i].utt_id);
      CHECK(r2.flagged[i].similarity == doctest::Approx(r.flagged[i].similarity).epsilon(1e-12));
    }
  }
}

TEST_CASE("qa: missing embedding names the utterance") {
  const Manifest m = make_manifest({"a"}, {3});
  EmbeddingMap emb{{"a-u0", {1, 0}}, {"a-u1", {1, 0}}};
  try {
    quality_assess(m, emb);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("a-u2") != std::string::npos);
  }
}

TEST_CASE("qa: report format") {
  QAReport r;
  r.flagged = {{"x", -0.25}, {"y", 0.125}};
  std::ostringstream out;
  write_qa_report(r, out);
  CHECK(out.str() == "x\t-0.250000\ny\t0.125000\n");
}

TEST_CASE("stats: singleton and empty") {
  const Manifest one({make_record("u", "s", Domain::ST, 4.0)});
  const ManifestStats st = manifest_stats(one);
  CHECK(st.st.utterances == 1);
  CHECK(st.st.speakers == 1);
  CHECK(st.st.hours == doctest::Approx(4.0 / 3600.0));
  CHECK(st.st.mean_length_s == doctest::Approx(4.0));
  CHECK(st.s.utterances == 0);
  CHECK(st.all.utterances == 1);
  CHECK_THROWS_AS(manifest_stats(Manifest()), Error);
  CHECK(format_stats(st).find("ST") != std::string::npos);
}

TEST_CASE("stats: additive over disjoint speakers") {
  xdsv::Rng rng = derive_rng(9, "stats.add");
  std::vector<UtteranceRecord> a, b;
  for (int i = 0; i < 40; ++i) {
    auto r = make_record("u" + std::to_string(i), "spk" + std::to_string(i % 7),
                         uniform01(rng) < 0.5 ? Domain::ST : Domain::S, 0.5 + 4 * uniform01(rng));
    (i % 7 < 3 ? a : b).push_back(r);
  }
  std::vector<UtteranceRecord> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto sa = manifest_stats(Manifest(a)), sb = manifest_stats(Manifest(b)),
             sab = manifest_stats(Manifest(ab));
  for (auto pick : {&ManifestStats::st, &ManifestStats::s, &ManifestStats::all}) {
    CHECK((sa.*pick).speakers + (sb.*pick).speakers == (sab.*pick).speakers);
    CHECK((sa.*pick).utterances + (sb.*pick).utterances == (sab.*pick).utterances);
    CHECK((sa.*pick).hours + (sb.*pick).hours == doctest::Approx((sab.*pick).hours).epsilon(1e-12));
  }
}
