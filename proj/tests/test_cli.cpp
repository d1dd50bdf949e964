#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <numbers>
#include <sstream>

#include "test_support.hpp"
#include "xdsv/embedding.hpp"
#include "xdsv/metrics.hpp"
#include "xdsv/trainer.hpp"
#include "xdsv/trials.hpp"

using namespace xdsv;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const testing::TempDir& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(XDSV_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testing::read_file(out);
  r.err = testing::read_file(err);
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Mean magnitude-spectrum centroid over a few 512-sample frames (direct DFT).
double spectral_centroid(const Waveform& w) {
  const int n = 512;
  double num = 0, den = 0;
  const std::size_t frames = std::min<std::size_t>(8, w.samples.size() / n);
  for (std::size_t f = 0; f < frames; ++f) {
    const float* x = w.samples.data() + (w.samples.size() / (frames + 1)) * (f + 1) - n / 2;
    for (int k = 1; k < n / 2; ++k) {
      std::complex<double> acc = 0;
      for (int t = 0; t < n; ++t) acc += double(x[t]) * std::polar(1.0, -2 * std::numbers::pi * k * t / n);
      const double mag = std::abs(acc);
      num += mag * k * w.sample_rate / n;
      den += mag;
    }
  }
  return num / den;
}

EmbeddingMap clustered_embeddings(const Manifest& m, std::uint64_t seed) {
  Rng rng = derive_rng(seed, "clusters");
  std::map<std::string, std::vector<float>> centers;
  EmbeddingMap out;
  for (const auto& r : m.records()) {
    auto& c = centers[r.speaker_id];
    if (c.empty()) c = testing::random_vector(kEmbeddingDim, rng);
    Embedding e(c);
    for (auto& v : e) v += 0.1f * float(standard_normal(rng));
    out[r.utt_id] = e;
  }
  return out;
}

}  // namespace

TEST_CASE("cli: gen-toy writes a deterministic two-domain corpus") {
  testing::TempDir a("gen-a"), b("gen-b");
  REQUIRE(run_cli("gen-toy --out " + q(a / "c"), a).code == 0);
  REQUIRE(run_cli("gen-toy --out " + q(b / "c"), b).code == 0);
  const Manifest m = load_manifest(a / "c" / "manifest.jsonl");
  CHECK(m.size() == 600);
  CHECK(m.speakers().size() == 30);
  int wavs = 0;
  for (const auto& e : fs::recursive_directory_iterator(a / "c"))
    if (e.path().extension() == ".wav") ++wavs;
  CHECK(wavs == 600);

  bool identical = testing::read_file(a / "c" / "manifest.jsonl") == testing::read_file(b / "c" / "manifest.jsonl");
  for (const auto& r : m.records())
    identical = identical && testing::read_file(a / "c" / r.audio_path) == testing::read_file(b / "c" / r.audio_path);
  CHECK(identical);

  // Centroids of the two domains are separable: nearly every S file lies above every ST file.
  std::vector<double> st, s;
  for (const auto& r : m.records()) {
    if (r.utt_id.back() > '2') continue;  // three utterances per speaker and domain
    (r.domain == Domain::ST ? st : s).push_back(spectral_centroid(read_wav(a / "c" / r.audio_path)));
  }
  double above = 0;
  for (double x : s)
    for (double y : st) above += x > y ? 1 : 0;
  const double auc = above / double(s.size() * st.size());
  CAPTURE(auc);
  CHECK(auc > 0.95);
}

TEST_CASE("cli: commands are thin adapters over the library") {
  testing::TempDir dir("cli");
  REQUIRE(run_cli("gen-toy --out " + q(dir / "c") + " --speakers 8 --utts 3 --min-duration 1 --max-duration 1.5",
                  dir).code == 0);
  const fs::path manifest = dir / "c" / "manifest.jsonl";
  const Manifest m = load_manifest(manifest);

  auto r = run_cli("stats --manifest " + q(manifest), dir);
  CHECK(r.code == 0);
  CHECK(r.out == format_stats(manifest_stats(m)));

  r = run_cli("split --manifest " + q(manifest) + " --n-train 5 --train-out " + q(dir / "train.jsonl") +
                  " --test-out " + q(dir / "test.jsonl"),
              dir);
  CHECK(r.code == 0);
  const auto [tr, te] = split_by_utterance_count(m, 5);
  std::ostringstream tr_text, te_text;
  write_manifest(tr, tr_text);
  write_manifest(te, te_text);
  CHECK(testing::read_file(dir / "train.jsonl") == tr_text.str());
  CHECK(testing::read_file(dir / "test.jsonl") == te_text.str());

  r = run_cli("trials --manifest " + q(dir / "test.jsonl") + " --out-prefix " + q(dir / "t" / "test") + " --seed 3", dir);
  CHECK(r.code == 0);
  for (Scenario sc : kAllScenarios) {
    Rng rng = derive_rng(3, "trials", std::uint64_t(sc));
    CHECK(load_trials(trial_path(dir / "t" / "test", sc)) == build_trials(te, sc, rng));
  }

  const std::string sets =
      " --set variant=M4 --set model.widths=4,8,16,32 --set model.blocks=1,1,1,1 --set train.batch_size=8"
      " --set train.crop_s=0.5 --set train.steps=2 --set frontend.mean_norm=false --set run.name=r";
  r = run_cli("train --manifest " + q(dir / "train.jsonl") + " --audio-root " + q(dir / "c") + sets +
                  " --set run.dir=" + q(dir / "runs") + " --seed 5",
              dir);
  REQUIRE(r.code == 0);
  {
    Config c;
    for (const char* kv : {"variant=M4", "model.widths=4,8,16,32", "model.blocks=1,1,1,1", "train.batch_size=8",
                           "train.crop_s=0.5", "train.steps=2", "frontend.mean_norm=false", "train.seed=5"})
      c.set_assignment(kv);
    AudioStore audio(dir / "c");
    Trainer t(TrainConfig::from_config(c), tr, audio);
    std::ostringstream log;
    write_loss_header(log);
    for (const auto& rep : t.run().reports) write_loss_row(log, rep);
    CHECK(testing::read_file(dir / "runs" / "r" / "loss.csv") == log.str());
  }

  const fs::path ckpt = dir / "runs" / "r" / "best.ckpt";
  r = run_cli("embed --checkpoint " + q(ckpt) + " --manifest " + q(dir / "test.jsonl") + " --audio-root " +
                  q(dir / "c") + " --out " + q(dir / "emb.txt"),
              dir);
  CHECK(r.code == 0);
  AudioStore audio(dir / "c");
  const EmbeddingMap emb = extract_embeddings(ckpt, te, audio).embeddings;
  std::ostringstream emb_text;
  write_embeddings(emb, emb_text);
  CHECK(testing::read_file(dir / "emb.txt") == emb_text.str());

  const fs::path cross = trial_path(dir / "t" / "test", Scenario::Cross);
  r = run_cli("score --trials " + q(cross) + " --embeddings " + q(dir / "emb.txt") + " --out " + q(dir / "x.scores"), dir);
  CHECK(r.code == 0);
  const ScoredTrials scored = score_trials(load_trials(cross), load_embeddings(dir / "emb.txt"));
  std::ostringstream score_text;
  write_scores(scored, score_text);
  CHECK(testing::read_file(dir / "x.scores") == score_text.str());

  r = run_cli("eval --trials " + q(cross) + " --scores " + q(dir / "x.scores"), dir);
  CHECK(r.code == 0);
  const ScoredTrials joined = join_scores(load_trials(cross), load_scores(dir / "x.scores"));
  char line[160];
  std::snprintf(line, sizeof line, "cross EER %.2f%% mDCF %.2f\n", 100.0 * compute_eer(joined), compute_mdcf(joined));
  CHECK(r.out == line);

  r = run_cli("qa --manifest " + q(dir / "test.jsonl") + " --embeddings " + q(dir / "emb.txt") + " --threshold 0.9", dir);
  CHECK(r.code == 0);
  std::ostringstream qa_text;
  write_qa_report(quality_assess(te, load_embeddings(dir / "emb.txt"), 0.9), qa_text);
  CHECK(r.out == qa_text.str());
}

TEST_CASE("cli: evaluation report and error prefix") {
  testing::TempDir dir("eval");
  testing::write_file(dir / "p.st.trials", "1 a b\n1 c d\n0 a d\n0 c b\n");
  testing::write_file(dir / "p.scores", "a b 0.9\nc d 0.8\na d 0.1\nc b 0.2\n");
  auto r = run_cli("eval --trials " + q(dir / "p.st.trials") + " --scores " + q(dir / "p.scores"), dir);
  CHECK(r.code == 0);
  CHECK(r.out == "st EER 0.00% mDCF 0.00\n");

  testing::write_file(dir / "q.scores", "a b 0.9\nc d 0.8\na d 0.1\n");
  r = run_cli("eval --trials " + q(dir / "p.st.trials") + " --scores " + q(dir / "q.scores"), dir);
  CHECK(r.code != 0);
  CHECK(r.err.rfind("xdsv: error[", 0) == 0);
  CHECK(r.err.find("c b") != std::string::npos);

  r = run_cli("stats --manifest " + q(dir / "missing.jsonl"), dir);
  CHECK(r.code != 0);
  CHECK(r.err.rfind("xdsv: error[", 0) == 0);
  r = run_cli("frobnicate", dir);
  CHECK(r.code != 0);
  CHECK(r.err.rfind("xdsv: error[argument]", 0) == 0);
}

TEST_CASE("cli: t-SNE scatter of pre-clustered embeddings") {
  testing::TempDir dir("tsne");
  const Manifest m = testing::make_two_domain_manifest(14, 4, 4);
  save_manifest(m, dir / "m.jsonl");
  save_embeddings(clustered_embeddings(m, 1), dir / "e.txt");
  const std::string args = "tsne --embeddings " + q(dir / "e.txt") + " --manifest " + q(dir / "m.jsonl") +
                           " --iterations 400 --seed 9 --out " + q(dir / "a.svg");
  REQUIRE(run_cli(args + " --coords " + q(dir / "a.txt"), dir).code == 0);
  REQUIRE(run_cli(args + " --coords " + q(dir / "b.txt"), dir).code == 0);
  CHECK(testing::read_file(dir / "a.txt") == testing::read_file(dir / "b.txt"));

  const std::string svg = testing::read_file(dir / "a.svg");
  auto count = [&](const std::string& needle) {
    int n = 0;
    for (auto p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) ++n;
    return n;
  };
  CHECK(count("class=\"legend-speaker\"") == 11);
  CHECK(count("class=\"marker-st\"") == 11 * 4);
  CHECK(count("class=\"marker-s\"") == 11 * 4);

  struct P {
    std::string spk;
    double x, y;
  };
  std::vector<P> pts;
  std::istringstream in(testing::read_file(dir / "a.txt"));
  std::string utt, spk, dom;
  double x, y;
  while (in >> utt >> spk >> dom >> x >> y) pts.push_back({spk, x, y});
  REQUIRE(pts.size() == 88);
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y);
      if (pts[i].spk == pts[j].spk) intra += d, ++n_intra;
      else inter += d, ++n_inter;
    }
  CHECK(intra / n_intra < inter / n_inter);

  const Manifest few = testing::make_two_domain_manifest(5, 2, 2);
  save_manifest(few, dir / "few.jsonl");
  save_embeddings(clustered_embeddings(few, 2), dir / "few.txt");
  const auto r = run_cli("tsne --embeddings " + q(dir / "few.txt") + " --manifest " + q(dir / "few.jsonl") +
                             " --out " + q(dir / "f.svg") + " --coords " + q(dir / "f.txt"),
                         dir);
  CHECK(r.code != 0);
  CHECK(r.err.rfind("xdsv: error[", 0) == 0);
}
