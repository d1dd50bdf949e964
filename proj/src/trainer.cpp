#include "xdsv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "xdsv/error.hpp"
#include "xdsv/metrics.hpp"

namespace xdsv {

std::string_view to_string(Variant v) {
  static constexpr const char* names[] = {"M0", "M1", "M2", "M3", "M4", "M5", "M6"};
  return names[static_cast<int>(v)];
}

Variant parse_variant(std::string_view s) {
  if (s.size() == 2 && (s[0] == 'M' || s[0] == 'm') && s[1] >= '0' && s[1] <= '6') {
    return static_cast<Variant>(s[1] - '0');
  }
  fail(ErrorKind::Config, "unknown variant '" + std::string(s) + "' (M0..M6)");
}

VariantSettings resolve_variant(Variant v) {
  switch (v) {
    case Variant::M0: return {AttentionKind::None, false, 0.0, 0.0, false};
    case Variant::M1: return {AttentionKind::None, false, 0.0, 0.0, true};
    case Variant::M2: return {AttentionKind::None, true, 0.0, 0.5, true};
    case Variant::M3: return {AttentionKind::SimAM, false, 0.5, 0.0, true};
    case Variant::M4: return {AttentionKind::SimAM, true, 1.0, 1.5, true};
    case Variant::M5: return {AttentionKind::ASP, false, 0.5, 0.0, true};
    case Variant::M6: return {AttentionKind::ASP, true, 1.0, 1.5, true};
  }
  fail(ErrorKind::Config, "unknown variant");
}

namespace {

const std::set<std::string> kKnownKeys = {
    "variant",         "train.lr",          "train.milestones",   "train.gamma",
    "train.momentum",  "train.weight_decay", "train.batch_size",  "train.crop_s",
    "train.steps",     "train.seed",        "train.checkpoint_every", "train.eval_every",
    "model.blocks",    "model.widths",      "model.embedding_dim", "model.embedding_bn", "arcface.margin",
    "arcface.scale",   "ddal.variant",      "ddal.lambda",        "ddal.grl_scale",
    "ddal.detach",     "ddal.domain_grad_to_backbone", "bcst.enabled", "bcst.lambda",
    "augment.snr",     "frontend.mean_norm", "run.dir",           "run.name",
    "init.checkpoint",
};

std::array<int, 4> four(const std::vector<int>& v, const std::string& key) {
  require(v.size() == 4, ErrorKind::Config, key + " needs exactly 4 values");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

TrainConfig TrainConfig::from_config(const Config& c) {
  for (const auto& [key, value] : c.values()) {
    require(kKnownKeys.count(key) > 0, ErrorKind::Config, "unknown config key '" + key + "'");
  }
  TrainConfig t;
  t.variant = parse_variant(c.get_string("variant", "M1"));
  t.initial_lr = c.get_double("train.lr", t.initial_lr);
  t.lr_milestones = c.get_int_list("train.milestones", t.lr_milestones);
  t.lr_gamma = c.get_double("train.gamma", t.lr_gamma);
  t.momentum = c.get_double("train.momentum", t.momentum);
  t.weight_decay = c.get_double("train.weight_decay", t.weight_decay);
  t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
  t.crop_s = c.get_double("train.crop_s", t.crop_s);
  t.steps = static_cast<int>(c.get_int("train.steps", t.steps));
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
  t.checkpoint_every = static_cast<int>(c.get_int("train.checkpoint_every", 0));
  t.eval_every = static_cast<int>(c.get_int("train.eval_every", 0));
  if (c.has("model.blocks")) t.backbone.block_counts = four(c.get_int_list("model.blocks", {}), "model.blocks");
  if (c.has("model.widths")) t.backbone.channel_widths = four(c.get_int_list("model.widths", {}), "model.widths");
  t.backbone.embedding_dim = static_cast<int>(c.get_int("model.embedding_dim", t.backbone.embedding_dim));
  t.embedding_bn = c.get_bool("model.embedding_bn", t.embedding_bn);
  t.arcface_margin = c.get_double("arcface.margin", t.arcface_margin);
  t.arcface_scale = c.get_double("arcface.scale", t.arcface_scale);
  if (c.has("ddal.variant")) t.attention = parse_attention_kind(*c.get("ddal.variant"));
  if (c.has("ddal.lambda")) t.lambda_ddal = c.get_double("ddal.lambda", 0.0);
  t.grl_scale = c.get_double("ddal.grl_scale", t.grl_scale);
  t.detach_domain = c.get_bool("ddal.detach", t.detach_domain);
  t.domain_grad_to_backbone = c.get_bool("ddal.domain_grad_to_backbone", t.domain_grad_to_backbone);
  if (c.has("bcst.enabled")) t.bcst = c.get_bool("bcst.enabled", false);
  if (c.has("bcst.lambda")) t.lambda_bcst = c.get_double("bcst.lambda", 0.0);
  if (const auto snr = c.get("augment.snr"); snr && *snr != "off") {
    const auto range = c.get_int_list("augment.snr", {});
    require(range.size() == 2, ErrorKind::Config, "augment.snr must be 'off' or 'lo,hi' in dB");
    t.augment = AugmentPolicy::white_noise(range[0], range[1]);
  }
  t.mean_norm = c.get_bool("frontend.mean_norm", t.mean_norm);
  t.run_dir = c.get_string("run.dir", "");
  t.name = c.get_string("run.name", t.name);
  t.init_checkpoint = c.get_string("init.checkpoint", "");
  t.validate();
  return t;
}

VariantSettings TrainConfig::settings() const {
  VariantSettings s = resolve_variant(variant);
  if (attention) {
    if (s.attention == AttentionKind::None && *attention != AttentionKind::None) s.lambda_ddal = 0.5;
    s.attention = *attention;
  }
  if (bcst) {
    if (!s.bcst && *bcst) s.lambda_bcst = 0.5;
    s.bcst = *bcst;
  }
  if (lambda_ddal) s.lambda_ddal = *lambda_ddal;
  if (lambda_bcst) s.lambda_bcst = *lambda_bcst;
  if (s.attention == AttentionKind::None) s.lambda_ddal = 0.0;
  if (!s.bcst) s.lambda_bcst = 0.0;
  return s;
}

void TrainConfig::validate() const {
  require(initial_lr > 0.0, ErrorKind::Config, "train.lr must be positive");
  require(lr_gamma > 0.0 && lr_gamma <= 1.0, ErrorKind::Config, "train.gamma must lie in (0, 1]");
  require(std::is_sorted(lr_milestones.begin(), lr_milestones.end()), ErrorKind::Config,
          "train.milestones must be ascending");
  require(momentum >= 0.0 && momentum < 1.0, ErrorKind::Config, "train.momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, ErrorKind::Config, "train.weight_decay must be non-negative");
  require(batch_size >= 2, ErrorKind::Config, "train.batch_size must be at least 2");
  require(crop_s > 0.0, ErrorKind::Config, "train.crop_s must be positive");
  require(steps >= 0, ErrorKind::Config, "train.steps must be non-negative");
  require(grl_scale >= 0.0, ErrorKind::Config, "ddal.grl_scale must be non-negative");
  const auto s = settings();
  require(s.lambda_ddal >= 0.0 && s.lambda_bcst >= 0.0, ErrorKind::Config,
          "loss weights must be non-negative");
  backbone.validate();
  augment.validate();
}

nlohmann::json TrainConfig::to_json() const {
  const auto s = settings();
  return {
      {"variant", std::string(to_string(variant))},
      {"train.lr", initial_lr},
      {"train.milestones", lr_milestones},
      {"train.gamma", lr_gamma},
      {"train.momentum", momentum},
      {"train.weight_decay", weight_decay},
      {"train.batch_size", batch_size},
      {"train.crop_s", crop_s},
      {"train.steps", steps},
      {"train.seed", seed},
      {"model.embedding_bn", embedding_bn},
      {"ddal.variant", std::string(to_string(s.attention))},
      {"ddal.lambda", s.lambda_ddal},
      {"ddal.grl_scale", grl_scale},
      {"ddal.detach", detach_domain},
      {"bcst.enabled", s.bcst},
      {"bcst.lambda", s.lambda_bcst},
      {"augment.snr", augment.enabled ? std::to_string(augment.snr_db_min) + "," +
                                            std::to_string(augment.snr_db_max)
                                      : std::string("off")},
      {"frontend.mean_norm", mean_norm},
  };
}

double lr_at(const TrainConfig& cfg, int step) {
  int passed = 0;
  for (int m : cfg.lr_milestones) passed += step >= m ? 1 : 0;
  return cfg.initial_lr * std::pow(cfg.lr_gamma, passed);
}

void write_loss_header(std::ostream& out) {
  out << "step,lr,L_id,L_cls1,L_cls2,L_uttST,L_uttS,L_pair,total\n";
}

void write_loss_row(std::ostream& out, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step,
                r.lr, r.l_id, r.l_cls1, r.l_cls2, r.l_utt_st, r.l_utt_s, r.l_pair, r.total);
  out << buf;
}

std::vector<LossReport> parse_loss_log(std::istream& in) {
  std::vector<LossReport> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    LossReport r;
    const int got = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.step, &r.lr,
                                &r.l_id, &r.l_cls1, &r.l_cls2, &r.l_utt_st, &r.l_utt_s, &r.l_pair,
                                &r.total);
    require(got == 9, ErrorKind::Parse, "loss log line " + std::to_string(line_no) + ": expected 9 fields");
    out.push_back(r);
  }
  return out;
}

const Waveform& AudioStore::get(const UtteranceRecord& r) {
  auto it = cache_.find(r.utt_id);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(r.utt_id, read_wav(root_ / r.audio_path)).first->second;
}

TensorF feature_tensor(const Waveform& w, bool mean_norm) {
  LogMelFeature f = log_mel(w);
  if (mean_norm) mean_normalize(f);
  TensorF x({1, 1, f.n_mels(), f.frames()});
  std::copy(f.values.vec().begin(), f.values.vec().end(), x.vec().begin());
  return x;
}

namespace {

template <typename T>
Tensor<T> rows(const Tensor<T>& t, int begin, int end) {
  const int cols = t.dim(1);
  Tensor<T> out({end - begin, cols});
  std::copy(t.data() + std::size_t(begin) * cols, t.data() + std::size_t(end) * cols, out.data());
  return out;
}

template <typename T>
void add_rows(Tensor<T>& dst, const Tensor<T>& src, int begin, T scale = T(1)) {
  const int cols = dst.dim(1);
  T* d = dst.data() + std::size_t(begin) * cols;
  for (std::size_t i = 0; i < src.size(); ++i) d[i] += scale * src[i];
}

std::string describe(const LossReport& r) {
  std::ostringstream s;
  s << "step " << r.step << ": L_id=" << r.l_id << " L_cls1=" << r.l_cls1 << " L_cls2=" << r.l_cls2
    << " L_pair=" << r.l_pair << " total=" << r.total;
  return s.str();
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, const Manifest& train, AudioStore& audio)
    : cfg_(std::move(cfg)), train_(&train), audio_(&audio) {
  cfg_.validate();
  settings_ = cfg_.settings();
  require(settings_.fine_tune, ErrorKind::Config,
          "variant M0 is evaluation-only; extract embeddings from an imported checkpoint instead");
  require(!train.empty(), ErrorKind::Validation, "training manifest is empty");
  speakers_ = train.speakers();
  for (std::size_t i = 0; i < speakers_.size(); ++i) speaker_index_[speakers_[i]] = int(i);
  if (settings_.bcst) pairs_ = std::make_unique<PairSampler>(train);

  net_ = std::make_unique<SpeakerNet<float>>(spec().net);
  const ModelSpec s = spec();
  heads_ = std::make_unique<TrainingHeads<float>>(cfg_.backbone.embedding_dim, s.arcface,
                                                  s.domain_classifiers);
  net_->init(cfg_.seed);
  heads_->init(cfg_.seed);
  if (!cfg_.init_checkpoint.empty()) {
    const Checkpoint ckpt = read_checkpoint(cfg_.init_checkpoint);
    require(ckpt.spec.net.backbone == cfg_.backbone, ErrorKind::Config,
            "imported checkpoint has a different backbone configuration");
    apply_checkpoint(ckpt, *net_, heads_.get(), false);
  }
  net_->collect_params(params_);
  heads_->collect_params(params_);
  net_->set_training(true);
  heads_->set_training(true);
}

ModelSpec Trainer::spec() const {
  ModelSpec s;
  s.net.backbone = cfg_.backbone;
  s.net.attention = settings_.attention;
  s.net.detach_domain = cfg_.detach_domain;
  s.net.domain_grad_to_backbone = cfg_.domain_grad_to_backbone;
  s.net.embedding_bn = cfg_.embedding_bn;
  s.arcface.margin = cfg_.arcface_margin;
  s.arcface.scale = cfg_.arcface_scale;
  s.arcface.n_classes = static_cast<int>(speakers_.size());
  s.domain_classifiers = settings_.attention != AttentionKind::None;
  s.mean_norm = cfg_.mean_norm;
  return s;
}

TensorF Trainer::make_batch(int step_index, std::vector<const UtteranceRecord*>& items) {
  items.clear();
  Rng rng = derive_rng(cfg_.seed, "batch", static_cast<std::uint64_t>(step_index));
  if (pairs_) {
    const auto n_pairs = std::max<std::size_t>(1, std::size_t(cfg_.batch_size) / 2);
    const auto pairs = pairs_->sample(n_pairs, rng);
    for (const auto& p : pairs) items.push_back(train_->find(p.utt_st.utt_id));
    for (const auto& p : pairs) items.push_back(train_->find(p.utt_s.utt_id));
  } else {
    for (int i = 0; i < cfg_.batch_size; ++i) items.push_back(&(*train_)[uniform_index(rng, train_->size())]);
  }

  TensorF x;
  for (std::size_t i = 0; i < items.size(); ++i) {
    Rng item_rng = derive_rng(cfg_.seed, "crop", (std::uint64_t(step_index) << 20) + i);
    Waveform w = crop_or_pad(audio_->get(*items[i]), cfg_.crop_s, item_rng);
    w = augment(w, cfg_.augment, item_rng);
    const TensorF f = feature_tensor(w, cfg_.mean_norm);
    if (x.empty()) x = TensorF({int(items.size()), 1, f.dim(2), f.dim(3)});
    std::copy(f.vec().begin(), f.vec().end(), x.data() + i * f.size());
  }
  return x;
}

template <typename T>
LossReport forward_backward(SpeakerNet<T>& net, TrainingHeads<T>& heads, const Tensor<T>& x,
                            const StepLabels& labels, const LossWeights& weights) {
  const int batch = static_cast<int>(labels.speakers.size());
  require(batch == x.dim(0) && labels.domains.size() == labels.speakers.size(), ErrorKind::Shape,
          "label count does not match the batch");
  require(!labels.siamese || batch % 2 == 0, ErrorKind::Shape, "a Siamese batch needs an even size");
  // Legs: the ST half and the S half of a Siamese batch, or the whole batch.
  std::vector<std::pair<int, int>> legs;
  if (labels.siamese) {
    legs = {{0, batch / 2}, {batch / 2, batch}};
  } else {
    legs = {{0, batch}};
  }

  const NetOutput<T> out = net.forward(x);
  const bool ddal = net.has_domain_branch();
  require(!ddal || heads.cls1, ErrorKind::Config, "domain branch without domain classifiers");
  const T lam_ddal = static_cast<T>(weights.lambda_ddal);

  LossReport r;
  Tensor<T> dz_id(out.z_id.shape());
  Tensor<T> logits1, logits2, dlogits1, dlogits2;
  if (ddal) {
    logits1 = heads.cls1->forward(out.z_domain);
    logits2 = heads.cls2->forward(grl_forward(out.z_id));
    dlogits1 = Tensor<T>(logits1.shape());
    dlogits2 = Tensor<T>(logits2.shape());
  }

  std::vector<double> leg_loss;
  for (const auto& [b, e] : legs) {
    const std::vector<int> leg_spk(labels.speakers.begin() + b, labels.speakers.begin() + e);
    const std::vector<int> leg_dom(labels.domains.begin() + b, labels.domains.begin() + e);
    Tensor<T> dz;
    const double l_id = heads.arcface.forward_backward(rows(out.z_id, b, e), leg_spk, &dz);
    add_rows(dz_id, dz, b);
    double l1 = 0.0, l2 = 0.0;
    if (ddal) {
      Tensor<T> g1, g2;
      l1 = softmax_cross_entropy(rows(logits1, b, e), leg_dom, &g1);
      l2 = softmax_cross_entropy(rows(logits2, b, e), leg_dom, &g2);
      add_rows(dlogits1, g1, b, lam_ddal);
      add_rows(dlogits2, g2, b, lam_ddal);
    }
    r.l_id += l_id;
    r.l_cls1 += l1;
    r.l_cls2 += l2;
    leg_loss.push_back(ddal_loss(l_id, l1, l2, {weights.lambda_ddal, weights.grl_scale}));
  }

  if (labels.siamese) {
    const int half = batch / 2;
    Tensor<T> d_st, d_s;
    r.l_pair = batch_pair_loss(rows(out.z_id, 0, half), rows(out.z_id, half, batch), &d_st, &d_s);
    const auto lam_b = static_cast<T>(weights.lambda_bcst);
    add_rows(dz_id, d_st, 0, lam_b);
    add_rows(dz_id, d_s, half, lam_b);
    r.l_utt_st = leg_loss[0];
    r.l_utt_s = leg_loss[1];
    r.total = bcst_loss(r.l_utt_s, r.l_utt_st, r.l_pair, {weights.lambda_bcst});
  } else {
    r.total = leg_loss[0];
  }
  require(std::isfinite(r.total), ErrorKind::Numeric, "total loss is not finite");

  if (ddal) {
    const Tensor<T> dz_domain = heads.cls1->backward(dlogits1);
    const Tensor<T> dreversed = grl_backward(heads.cls2->backward(dlogits2), weights.grl_scale);
    for (std::size_t i = 0; i < dz_id.size(); ++i) dz_id[i] += dreversed[i];
    net.backward(dz_id, &dz_domain);
  } else {
    net.backward(dz_id, nullptr);
  }
  return r;
}

template LossReport forward_backward(SpeakerNet<float>&, TrainingHeads<float>&, const TensorF&,
                                     const StepLabels&, const LossWeights&);
template LossReport forward_backward(SpeakerNet<double>&, TrainingHeads<double>&, const TensorD&,
                                     const StepLabels&, const LossWeights&);

LossReport Trainer::loss_and_backward(const TensorF& x,
                                      const std::vector<const UtteranceRecord*>& items,
                                      int step_index) {
  StepLabels labels;
  labels.siamese = pairs_ != nullptr;
  for (const auto* item : items) {
    labels.speakers.push_back(speaker_index_.at(item->speaker_id));
    labels.domains.push_back(item->domain == Domain::ST ? 0 : 1);
  }
  zero_grads(params_);
  LossReport r = forward_backward(*net_, *heads_, x, labels,
                                  {settings_.lambda_ddal, settings_.lambda_bcst, cfg_.grl_scale});
  r.step = step_index;
  return r;
}

void Trainer::sgd_update(double lr) {
  const auto mu = static_cast<float>(cfg_.momentum);
  const auto wd = static_cast<float>(cfg_.weight_decay);
  const auto rate = static_cast<float>(lr);
  for (auto* p : params_) {
    float* w = p->value.data();
    const float* g = p->grad.data();
    float* v = p->momentum.data();
    const float decay = p->decay ? wd : 0.0f;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      v[i] = mu * v[i] + (g[i] + decay * w[i]);
      w[i] -= rate * v[i];
    }
  }
}

LossReport Trainer::step(int step_index) {
  std::vector<const UtteranceRecord*> items;
  const TensorF x = make_batch(step_index, items);
  LossReport r;
  try {
    r = loss_and_backward(x, items, step_index);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Numeric) throw;
    fail(ErrorKind::Numeric, "training diverged at step " + std::to_string(step_index) + " (" +
                                 e.what() + ")" +
                                 (last_finite_ ? "; last finite report " + describe(*last_finite_)
                                               : "; no finite step recorded"));
  }
  r.lr = lr_at(cfg_, step_index);
  sgd_update(r.lr);
  last_finite_ = r;
  return r;
}

void Trainer::save(const std::filesystem::path& path, int step) {
  nlohmann::json extra{{"step", step}, {"speakers", speakers_}, {"train", cfg_.to_json()}};
  save_checkpoint(path, spec(), *net_, heads_.get(), extra);
}

TrainResult Trainer::run(const ValidationSet* valid,
                         const std::function<void(const LossReport&)>& on_report) {
  TrainResult result;
  const bool to_disk = !cfg_.run_dir.empty();
  std::ofstream log;
  if (to_disk) {
    std::filesystem::create_directories(cfg_.output_dir());
    log.open(cfg_.output_dir() / "loss.csv");
    require(log.good(), ErrorKind::Io, "cannot write " + (cfg_.output_dir() / "loss.csv").string());
    write_loss_header(log);
  }

  auto validate_at = [&](int step) {
    net_->set_training(false);
    const ExtractionResult ex = extract_embeddings(*net_, *valid->manifest, *audio_, cfg_.mean_norm);
    net_->set_training(true);
    require(ex.failures.empty(), ErrorKind::Io,
            "validation audio failed: " + (ex.failures.empty() ? "" : ex.failures.front().second));
    const double eer = compute_eer(score_trials(valid->trials, ex.embeddings));
    if (result.best_eer < 0.0 || eer < result.best_eer) {
      result.best_eer = eer;
      result.best_step = step;
      if (to_disk) save(cfg_.output_dir() / "best.ckpt", step);
    }
  };

  for (int s = 1; s <= cfg_.steps; ++s) {
    const LossReport r = step(s);
    result.reports.push_back(r);
    if (to_disk) {
      write_loss_row(log, r);
      log.flush();
    }
    if (on_report) on_report(r);
    if (to_disk && cfg_.checkpoint_every > 0 && s % cfg_.checkpoint_every == 0) {
      save(cfg_.output_dir() / ("step-" + std::to_string(s) + ".ckpt"), s);
    }
    if (valid && cfg_.eval_every > 0 && (s % cfg_.eval_every == 0 || s == cfg_.steps)) validate_at(s);
  }
  if (valid && cfg_.eval_every <= 0) validate_at(cfg_.steps);
  if (to_disk) {
    const auto final_path = cfg_.output_dir() / ("step-" + std::to_string(cfg_.steps) + ".ckpt");
    if (!std::filesystem::exists(final_path)) save(final_path, cfg_.steps);
    if (!valid) {
      std::filesystem::copy_file(final_path, cfg_.output_dir() / "best.ckpt",
                                 std::filesystem::copy_options::overwrite_existing);
      result.best_step = cfg_.steps;
    }
  }
  return result;
}

ExtractionResult extract_embeddings(SpeakerNet<float>& net, const Manifest& m, AudioStore& audio,
                                    bool mean_norm) {
  require(net.config().backbone.embedding_dim == int(kEmbeddingDim), ErrorKind::Config,
          "embedding files require " + std::to_string(kEmbeddingDim) + "-dim embeddings");
  ExtractionResult result;
  // Shortest input that survives three stride-2 stages with 8 frames.
  const double min_s = 0.1;
  for (const auto& r : m.records()) {
    try {
      Waveform w = audio.get(r);
      if (w.duration_s() < min_s) {
        Rng unused(0);
        w = crop_or_pad(w, min_s, unused);
      }
      const NetOutput<float> out = net.forward(feature_tensor(w, mean_norm));
      result.embeddings.emplace(r.utt_id, Embedding(out.z_id.vec().begin(), out.z_id.vec().end()));
    } catch (const Error& e) {
      result.failures.emplace_back(r.utt_id, e.what());
    }
  }
  return result;
}

ExtractionResult extract_embeddings(const std::filesystem::path& checkpoint, const Manifest& m,
                                    AudioStore& audio) {
  const Checkpoint ckpt = read_checkpoint(checkpoint);
  auto net = load_extractor(ckpt);
  return extract_embeddings(*net, m, audio, ckpt.spec.mean_norm);
}

}  // namespace xdsv
