#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xdsv/checkpoint.hpp"
#include "xdsv/config.hpp"
#include "xdsv/error.hpp"
#include "xdsv/manifest.hpp"
#include "xdsv/metrics.hpp"
#include "xdsv/toy_corpus.hpp"
#include "xdsv/trainer.hpp"
#include "xdsv/trials.hpp"
#include "xdsv/tsne.hpp"

namespace fs = std::filesystem;
using namespace xdsv;

namespace {

void make_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path& path) {
  make_parent(path);
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write " + path.string());
  return out;
}

fs::path audio_root_for(const std::string& flag, const fs::path& manifest) {
  return flag.empty() ? manifest.parent_path() : fs::path(flag);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain speaker verification toolkit"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "Generate the synthetic two-domain corpus");
  std::string gen_out;
  ToyCorpusSpec toy;
  std::uint64_t gen_seed = toy.seed;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--speakers", toy.n_speakers, "Number of speakers");
  gen->add_option("--utts", toy.utts_per_domain, "Utterances per speaker and domain");
  gen->add_option("--min-duration", toy.min_duration_s, "Shortest utterance (s)");
  gen->add_option("--max-duration", toy.max_duration_s, "Longest utterance (s)");
  gen->add_option("--seed", gen_seed, "Random seed");

  // stats
  auto* stats = app.add_subcommand("stats", "Print per-domain manifest statistics");
  std::string stats_manifest;
  stats->add_option("--manifest", stats_manifest)->required();
  stats->add_option("--seed", seed, "Unused; accepted for uniformity");

  // split
  auto* split = app.add_subcommand("split", "Speaker split by utterance count");
  std::string split_manifest, split_train, split_test;
  std::size_t split_n = 0;
  split->add_option("--manifest", split_manifest)->required();
  split->add_option("--n-train", split_n, "Speakers assigned to training")->required();
  split->add_option("--train-out", split_train)->required();
  split->add_option("--test-out", split_test)->required();
  split->add_option("--seed", seed, "Unused; the split is deterministic");

  // qa
  auto* qa = app.add_subcommand("qa", "Flag utterances far from their speaker/domain mean");
  std::string qa_manifest, qa_embeddings, qa_out;
  double qa_threshold = 0.4;
  qa->add_option("--manifest", qa_manifest)->required();
  qa->add_option("--embeddings", qa_embeddings)->required();
  qa->add_option("--threshold", qa_threshold);
  qa->add_option("--out", qa_out, "Report file (default stdout)");
  qa->add_option("--seed", seed, "Unused; accepted for uniformity");

  // train
  auto* train = app.add_subcommand("train", "Train an embedding extractor");
  std::string train_manifest, train_audio, train_config, valid_manifest, valid_trials;
  std::vector<std::string> train_sets;
  train->add_option("--manifest", train_manifest)->required();
  train->add_option("--audio-root", train_audio, "Default: manifest directory");
  train->add_option("--config", train_config, "key = value config file");
  train->add_option("--set", train_sets, "Override, key=value (repeatable)");
  train->add_option("--valid-manifest", valid_manifest);
  train->add_option("--valid-trials", valid_trials);
  auto* train_seed = train->add_option("--seed", seed, "Overrides train.seed");

  // embed
  auto* embed = app.add_subcommand("embed", "Extract embeddings with a checkpoint");
  std::string embed_ckpt, embed_manifest, embed_audio, embed_out;
  embed->add_option("--checkpoint", embed_ckpt)->required();
  embed->add_option("--manifest", embed_manifest)->required();
  embed->add_option("--audio-root", embed_audio);
  embed->add_option("--out", embed_out)->required();
  embed->add_option("--seed", seed, "Unused; extraction is deterministic");

  // trials
  auto* trials = app.add_subcommand("trials", "Build verification trials");
  std::string trials_manifest, trials_prefix;
  std::vector<std::string> trials_scenarios{"undiff", "st", "s", "cross"};
  int n_pos = 5, n_neg = 5;
  trials->add_option("--manifest", trials_manifest)->required();
  trials->add_option("--out-prefix", trials_prefix, "Writes <prefix>.<scenario>.trials")->required();
  trials->add_option("--scenario", trials_scenarios, "Subset of undiff, st, s, cross");
  trials->add_option("--n-pos", n_pos);
  trials->add_option("--n-neg", n_neg);
  trials->add_option("--seed", seed);

  // score
  auto* score = app.add_subcommand("score", "Cosine-score a trial list");
  std::string score_trials_path, score_embeddings, score_out;
  score->add_option("--trials", score_trials_path)->required();
  score->add_option("--embeddings", score_embeddings)->required();
  score->add_option("--out", score_out)->required();
  score->add_option("--seed", seed, "Unused; accepted for uniformity");

  // eval
  auto* eval = app.add_subcommand("eval", "EER and mDCF per scenario");
  std::vector<std::string> eval_trials, eval_scores;
  std::string eval_out;
  double p_target = 0.01;
  eval->add_option("--trials", eval_trials)->required();
  eval->add_option("--scores", eval_scores)->required();
  eval->add_option("--p-target", p_target);
  eval->add_option("--out", eval_out, "Also write the report here");
  eval->add_option("--seed", seed, "Unused; accepted for uniformity");

  // tsne
  auto* ts = app.add_subcommand("tsne", "2-D t-SNE scatter of embeddings");
  std::string ts_embeddings, ts_manifest, ts_svg, ts_coords, ts_title;
  int ts_speakers = 11;
  TsneConfig ts_cfg;
  ts->add_option("--embeddings", ts_embeddings)->required();
  ts->add_option("--manifest", ts_manifest)->required();
  ts->add_option("--out", ts_svg, "SVG image")->required();
  ts->add_option("--coords", ts_coords, "Coordinates file")->required();
  ts->add_option("--speakers", ts_speakers);
  ts->add_option("--perplexity", ts_cfg.perplexity);
  ts->add_option("--iterations", ts_cfg.iterations);
  ts->add_option("--title", ts_title);
  ts->add_option("--seed", seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "xdsv: error[argument]: %s\n", e.what());
    return 2;
  }

  try {
    if (*gen) {
      toy.seed = gen_seed;
      const Manifest m = generate_toy_corpus(toy, gen_out);
      std::printf("wrote %zu utterances to %s\n", m.size(), gen_out.c_str());
    } else if (*stats) {
      std::fputs(format_stats(manifest_stats(load_manifest(stats_manifest))).c_str(), stdout);
    } else if (*split) {
      const auto [tr, te] = split_by_utterance_count(load_manifest(split_manifest), split_n);
      make_parent(split_train);
      make_parent(split_test);
      save_manifest(tr, split_train);
      save_manifest(te, split_test);
      std::printf("train: %zu speakers, %zu utterances\ntest: %zu speakers, %zu utterances\n",
                  tr.speakers().size(), tr.size(), te.speakers().size(), te.size());
    } else if (*qa) {
      const QAReport report =
          quality_assess(load_manifest(qa_manifest), load_embeddings(qa_embeddings), qa_threshold);
      if (qa_out.empty()) {
        write_qa_report(report, std::cout);
      } else {
        auto out = open_out(qa_out);
        write_qa_report(report, out);
      }
    } else if (*train) {
      Config cfg = train_config.empty() ? Config() : Config::load(train_config);
      for (const auto& s : train_sets) cfg.set_assignment(s);
      if (train_seed->count()) cfg.set("train.seed", std::to_string(seed));
      const TrainConfig tc = TrainConfig::from_config(cfg);
      require(!tc.run_dir.empty(), ErrorKind::Config, "run.dir must be set for the train command");
      const Manifest m = load_manifest(train_manifest);
      AudioStore audio(audio_root_for(train_audio, train_manifest));
      Manifest vm;
      ValidationSet valid;
      require(valid_manifest.empty() == valid_trials.empty(), ErrorKind::Argument,
              "--valid-manifest and --valid-trials go together");
      if (!valid_manifest.empty()) {
        vm = load_manifest(valid_manifest);
        valid = {&vm, load_trials(valid_trials)};
      }
      Trainer trainer(tc, m, audio);
      const TrainResult r = trainer.run(valid_manifest.empty() ? nullptr : &valid, [](const LossReport& rep) {
        if (rep.step % 10 == 0 || rep.step == 1) {
          std::printf("step %d lr %.3g total %.4f L_id %.4f L_cls1 %.4f L_cls2 %.4f L_pair %.4f\n",
                      rep.step, rep.lr, rep.total, rep.l_id, rep.l_cls1, rep.l_cls2, rep.l_pair);
          std::fflush(stdout);
        }
      });
      if (r.best_eer >= 0.0) std::printf("best validation EER %.2f%% at step %d\n", 100.0 * r.best_eer, r.best_step);
      std::printf("checkpoints in %s\n", tc.output_dir().c_str());
    } else if (*embed) {
      const Manifest m = load_manifest(embed_manifest);
      AudioStore audio(audio_root_for(embed_audio, embed_manifest));
      const ExtractionResult r = extract_embeddings(embed_ckpt, m, audio);
      make_parent(embed_out);
      save_embeddings(r.embeddings, embed_out);
      for (const auto& [utt, msg] : r.failures) std::fprintf(stderr, "xdsv: warning: %s: %s\n", utt.c_str(), msg.c_str());
      std::printf("embedded %zu of %zu utterances\n", r.embeddings.size(), m.size());
      if (!r.failures.empty()) return 3;
    } else if (*trials) {
      const Manifest m = load_manifest(trials_manifest);
      make_parent(trials_prefix);
      for (const auto& name : trials_scenarios) {
        const Scenario sc = parse_scenario(name);
        Rng rng = derive_rng(seed, "trials", static_cast<std::uint64_t>(sc));
        const auto list = build_trials(m, sc, rng, n_pos, n_neg);
        const auto path = trial_path(trials_prefix, sc);
        save_trials(list, path);
        std::printf("%s: %zu trials -> %s\n", std::string(to_string(sc)).c_str(), list.size(), path.c_str());
      }
    } else if (*score) {
      make_parent(score_out);
      save_scores(score_trials(load_trials(score_trials_path), load_embeddings(score_embeddings)), score_out);
    } else if (*eval) {
      require(eval_trials.size() == eval_scores.size(), ErrorKind::Argument,
              "give one --scores file per --trials file");
      DcfConfig dcf;
      dcf.p_target = p_target;
      std::string report;
      for (std::size_t i = 0; i < eval_trials.size(); ++i) {
        const auto list = load_trials(eval_trials[i]);
        const ScoredTrials scored = join_scores(list, load_scores(eval_scores[i]));
        char line[160];
        std::snprintf(line, sizeof line, "%s EER %.2f%% mDCF %.2f\n",
                      std::string(to_string(scenario_from_path(eval_trials[i]))).c_str(),
                      100.0 * compute_eer(scored), compute_mdcf(scored, dcf));
        report += line;
      }
      std::fputs(report.c_str(), stdout);
      if (!eval_out.empty()) open_out(eval_out) << report;
    } else if (*ts) {
      ts_cfg.seed = seed;
      const TsnePlot plot = visualize_tsne(load_embeddings(ts_embeddings), load_manifest(ts_manifest),
                                           ts_speakers, ts_cfg);
      open_out(ts_svg) << render_tsne_svg(plot, ts_title);
      auto coords = open_out(ts_coords);
      write_tsne_coords(plot, coords);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "xdsv: error[%s]: %s\n", std::string(to_string(e.kind())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "xdsv: error[io]: %s\n", e.what());
    return 1;
  }
  return 0;
}
