#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "test_support.hpp"
#include "toy_fixture.hpp"
#include "xdsv/bcst.hpp"
#include "xdsv/ddal.hpp"
#include "xdsv/metrics.hpp"
#include "xdsv/trainer.hpp"

using namespace xdsv;
using testing::tiny_train_config;

namespace {

Config parse_config(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.conf");
}

double mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  return std::accumulate(v.begin() + begin, v.begin() + end, 0.0) / double(end - begin);
}

}  // namespace

TEST_CASE("variants resolve to their settings") {
  const auto m4 = resolve_variant(Variant::M4);
  CHECK(m4.attention == AttentionKind::SimAM);
  CHECK(m4.bcst);
  CHECK(m4.lambda_ddal == 1.0);
  CHECK(m4.lambda_bcst == 1.5);
  CHECK_FALSE(resolve_variant(Variant::M0).fine_tune);
  const auto m2 = resolve_variant(Variant::M2);
  CHECK(m2.attention == AttentionKind::None);
  CHECK(m2.bcst);
  CHECK(m2.lambda_bcst == 0.5);
  CHECK(resolve_variant(Variant::M3).lambda_ddal == 0.5);
  CHECK(resolve_variant(Variant::M5).attention == AttentionKind::ASP);
  CHECK(resolve_variant(Variant::M6).lambda_bcst == 1.5);
  CHECK(resolve_variant(Variant::M1).lambda_ddal == 0.0);
  CHECK(parse_variant("m6") == Variant::M6);
  CHECK_THROWS_AS(parse_variant("M7"), Error);
  CHECK_THROWS_AS(parse_variant(""), Error);
}

TEST_CASE("train config parsing and overrides") {
  const TrainConfig t = TrainConfig::from_config(parse_config(
      "variant = M5\n# comment\ntrain.lr = 0.01\ntrain.milestones = 10,20\nmodel.widths = 4,8,16,32\n"
      "ddal.lambda = 0.25\nfrontend.mean_norm = false\n"));
  CHECK(t.variant == Variant::M5);
  CHECK(t.initial_lr == 0.01);
  CHECK(t.lr_milestones == std::vector<int>{10, 20});
  CHECK(t.backbone.channel_widths[3] == 32);
  CHECK(t.settings().lambda_ddal == 0.25);
  CHECK(t.settings().attention == AttentionKind::ASP);
  CHECK_FALSE(t.mean_norm);

  // Turning a branch off zeroes its weight; turning it on gives the standalone default.
  const TrainConfig off = TrainConfig::from_config(parse_config("variant = M4\nbcst.enabled = false\n"));
  CHECK(off.settings().lambda_bcst == 0.0);
  CHECK(off.settings().lambda_ddal == 1.0);
  const TrainConfig on = TrainConfig::from_config(parse_config("variant = M1\nddal.variant = simam\n"));
  CHECK(on.settings().lambda_ddal == 0.5);

  auto kind_of = [](const std::string& text) {
    try {
      TrainConfig::from_config(parse_config(text));
    } catch (const Error& e) {
      return std::optional<ErrorKind>(e.kind());
    }
    return std::optional<ErrorKind>();
  };
  CHECK(kind_of("train.lrr = 1\n") == ErrorKind::Config);
  CHECK(kind_of("train.lr = 0\n") == ErrorKind::Config);
  CHECK(kind_of("train.lr = fast\n") == ErrorKind::Config);
  CHECK(kind_of("model.widths = 1,2,3\n") == ErrorKind::Config);
  CHECK(kind_of("variant = M9\n") == ErrorKind::Config);
  CHECK(kind_of("ddal.lambda = -1\nvariant = M3\n") == ErrorKind::Config);
  CHECK_FALSE(kind_of("variant = M0\n").has_value());
}

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  c.initial_lr = 0.1;
  c.lr_milestones = {5, 9, 9, 20};
  c.lr_gamma = 0.5;
  for (int s = 1; s < 5; ++s) CHECK(lr_at(c, s) == 0.1);
  CHECK(lr_at(c, 5) == doctest::Approx(0.05));
  CHECK(lr_at(c, 9) == doctest::Approx(0.0125));
  double prev = lr_at(c, 1);
  for (int s = 2; s < 40; ++s) {
    CHECK(lr_at(c, s) <= prev);
    prev = lr_at(c, s);
  }
}

TEST_CASE("loss log round trip") {
  std::vector<LossReport> reports{{1, 0.02, 3.5, 0.69, 0.7, 1.2, 1.3, 0.25, 2.875},
                                  {2, 1e-3, 1.0 / 3.0, 0, 0, 0, 0, 0, 1.0 / 3.0}};
  std::ostringstream out;
  write_loss_header(out);
  for (const auto& r : reports) write_loss_row(out, r);
  std::istringstream in(out.str());
  CHECK(parse_loss_log(in) == reports);
  std::istringstream bad("header\n1,2,3\n");
  CHECK_THROWS_AS(parse_loss_log(bad), Error);
}

TEST_CASE("training is deterministic and totals recompose") {
  testing::ToyFixture toy(4, 3);
  for (Variant v : {Variant::M1, Variant::M4, Variant::M6}) {
    CAPTURE(to_string(v));
    const TrainConfig cfg = tiny_train_config(v, 3);
    Trainer a(cfg, toy.manifest, toy.audio), b(cfg, toy.manifest, toy.audio);
    const auto ra = a.run().reports, rb = b.run().reports;
    CHECK(ra == rb);
    const auto s = a.settings();
    for (const auto& r : ra) {
      if (s.bcst) {
        CHECK(std::abs(r.l_utt_st + r.l_utt_s + s.lambda_bcst * r.l_pair - r.total) < 1e-6);
        CHECK(std::abs(r.l_utt_st + r.l_utt_s -
                       (r.l_id + s.lambda_ddal * (r.l_cls1 + r.l_cls2))) < 1e-6);
      } else {
        CHECK(std::abs(r.l_id + s.lambda_ddal * (r.l_cls1 + r.l_cls2) - r.total) < 1e-6);
      }
      CHECK(r.lr == cfg.initial_lr);
    }
  }
}

TEST_CASE("zero-weight detached domain branch reproduces the baseline stream") {
  testing::ToyFixture toy(4, 3);
  TrainConfig base = tiny_train_config(Variant::M1, 4);
  TrainConfig probe = tiny_train_config(Variant::M3, 4);
  probe.lambda_ddal = 0.0;
  probe.detach_domain = true;
  Trainer a(base, toy.manifest, toy.audio), b(probe, toy.manifest, toy.audio);
  const auto ra = a.run().reports, rb = b.run().reports;
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].l_id == rb[i].l_id);
    CHECK(ra[i].total == rb[i].total);
  }
  CHECK(rb.back().l_cls1 > 0.0);
}

TEST_CASE("checkpoint round trip and embedding extraction") {
  testing::ToyFixture toy(4, 2);
  testing::TempDir dir("ckpt");
  for (bool bn : {false, true}) {
    CAPTURE(bn);
    TrainConfig cfg = tiny_train_config(Variant::M4, 2);
    cfg.run_dir = dir.path();
    cfg.name = bn ? "bn" : "r";
    cfg.embedding_bn = bn;
    const auto run = dir / cfg.name;
    Trainer t(cfg, toy.manifest, toy.audio);
    t.run();
    CHECK(std::filesystem::exists(run / "best.ckpt"));
    CHECK(std::filesystem::exists(run / "step-2.ckpt"));
    CHECK(read_checkpoint(run / "best.ckpt").spec.net.embedding_bn == bn);
    std::ifstream log(run / "loss.csv");
    CHECK(parse_loss_log(log).size() == 2);

    t.net().set_training(false);
    const ExtractionResult direct = extract_embeddings(t.net(), toy.manifest, toy.audio, cfg.mean_norm);
    const ExtractionResult loaded = extract_embeddings(run / "best.ckpt", toy.manifest, toy.audio);
    const ExtractionResult again = extract_embeddings(run / "best.ckpt", toy.manifest, toy.audio);
    CHECK(direct.failures.empty());
    REQUIRE(direct.embeddings.size() == toy.manifest.size());
    for (const auto& [utt, e] : direct.embeddings) {
      CHECK(e.size() == 256);
      const auto& l = loaded.embeddings.at(utt);
      double diff = 0;
      for (std::size_t i = 0; i < e.size(); ++i) diff = std::max(diff, double(std::abs(e[i] - l[i])));
      CHECK(diff < 1e-6);
      CHECK(again.embeddings.at(utt) == l);
    }
  }

  const auto bad = dir / "bad.ckpt";
  testing::write_file(bad, "XDSVCKPT\ngarbage");
  try {
    read_checkpoint(bad);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
  }
}

TEST_CASE("unreadable audio becomes a failure entry") {
  testing::ToyFixture toy(2, 1);
  std::vector<UtteranceRecord> recs = toy.manifest.records();
  recs.push_back(testing::make_record("ghost", "spk-x", Domain::ST));
  const Manifest m(recs);
  Trainer t(tiny_train_config(Variant::M1, 0), toy.manifest, toy.audio);
  t.net().set_training(false);
  const ExtractionResult r = extract_embeddings(t.net(), m, toy.audio, false);
  CHECK(r.embeddings.size() == toy.manifest.size());
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].first == "ghost");
}

TEST_CASE("divergence and evaluation-only variants are reported") {
  testing::ToyFixture toy(4, 2);
  TrainConfig cfg = tiny_train_config(Variant::M1, 30);
  cfg.initial_lr = 1e12;
  Trainer t(cfg, toy.manifest, toy.audio);
  try {
    t.run();
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
    CHECK(std::string(e.what()).find("last finite") != std::string::npos);
  }
  try {
    Trainer m0(tiny_train_config(Variant::M0), toy.manifest, toy.audio);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  CHECK_THROWS_AS(Trainer(tiny_train_config(Variant::M1), Manifest(), toy.audio), Error);
}

TEST_CASE("toy training: domain classifiers and speaker separation") {
  testing::ToyFixture toy(6, 4);
  TrainConfig cfg = tiny_train_config(Variant::M3, 60);
  Trainer t(cfg, toy.manifest, toy.audio);
  const auto reports = t.run().reports;
  std::vector<double> c1, c2;
  for (const auto& r : reports) c1.push_back(r.l_cls1), c2.push_back(r.l_cls2);
  CHECK(mean(c1, 50, 60) < mean(c1, 0, 10));
  CHECK(mean(c2, 50, 60) > 0.1);

  t.net().set_training(false);
  const auto ex = extract_embeddings(t.net(), toy.manifest, toy.audio, cfg.mean_norm);
  double same = 0, diff = 0;
  int n_same = 0, n_diff = 0;
  const auto& recs = toy.manifest.records();
  for (std::size_t i = 0; i < recs.size(); ++i)
    for (std::size_t j = i + 1; j < recs.size(); ++j) {
      const double c = cosine_score(ex.embeddings.at(recs[i].utt_id), ex.embeddings.at(recs[j].utt_id));
      if (recs[i].speaker_id == recs[j].speaker_id) same += c, ++n_same;
      else diff += c, ++n_diff;
    }
  CHECK(same / n_same > diff / n_diff);
}
