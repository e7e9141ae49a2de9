#include "jointssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "jointssl/errors.hpp"
#include "jointssl/random.hpp"

#ifndef JOINTSSL_VERSION
#define JOINTSSL_VERSION "0.0.0"
#endif

namespace jointssl {

namespace {

constexpr std::uint64_t kInitStream = 21;
constexpr std::uint64_t kLabeledStream = 22;
constexpr std::uint64_t kUnlabeledStream = 23;
constexpr std::uint64_t kViewStream = 24;

void scale(Tensor& t, double s) {
  for (double& v : t.data) v *= s;
}

// Forward state of one view of one sample.
struct ViewState {
  ImageTensor clean;  // reconstruction target
  ImageTensor input;  // clean + noise
  EncoderPass enc;
  std::optional<DecoderPass> dec;
};

void forward_view(const Model& model, ViewState& v, bool decode) {
  v.enc = model.encoder().encode(v.input);
  if (decode) v.dec = model.decoder().decode(v.enc.stage4_output(), v.enc.skips);
}

// Backprop one view: decoder (if its gradient is wanted) then encoder.
void backward_view(Model& model, ViewState& v, double cr_scale, const TrainConfig& cfg, Tensor feature_grad) {
  std::vector<Tensor> skip_grads;
  if (cr_scale != 0.0 && v.dec) {
    Tensor d_recon = consistency_loss_grad(v.clean, v.dec->reconstruction, cfg.l2);
    scale(d_recon, cr_scale);
    DecoderGrads g = model.decoder().backward(*v.dec, d_recon);
    skip_grads = std::move(g.skips);
    // The decoder is seeded with the stage-4 output, which is the last tap.
    skip_grads.back() += g.input;
  }
  if (skip_grads.empty() && feature_grad.empty()) return;
  model.encoder().backward(v.enc, skip_grads, feature_grad);
}

void add_into(Tensor& acc, const Tensor& g) {
  if (acc.empty()) {
    acc = g;
  } else {
    acc += g;
  }
}

Tensor vector_tensor(const std::vector<double>& v) {
  Tensor t(1, 1, static_cast<int>(v.size()));
  t.data = v;
  return t;
}

}  // namespace

std::string version_string() { return JOINTSSL_VERSION; }

std::string to_string(Variant v) {
  switch (v) {
    case Variant::ssl_scr: return "ssl-scr";
    case Variant::ssl_tfsim: return "ssl+tfsim";
    case Variant::ssl: return "ssl";
    case Variant::supervised: return "supervised";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "ssl-scr") return Variant::ssl_scr;
  if (s == "ssl+tfsim") return Variant::ssl_tfsim;
  if (s == "ssl") return Variant::ssl;
  if (s == "supervised") return Variant::supervised;
  throw ConfigError("unknown variant '" + s + "' (expected ssl-scr, ssl+tfsim, ssl or supervised)");
}

VariantTerms terms_of(Variant v) {
  switch (v) {
    case Variant::ssl_scr: return {true, true, true, true};
    case Variant::ssl_tfsim: return {true, false, true, true};
    case Variant::ssl: return {true, false, false, true};
    case Variant::supervised: return {false, false, false, false};
  }
  return {};
}

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be a finite value >= 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr_decay_factor must be in (0, 1]");
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(dampening >= 0.0 && dampening <= 1.0)) throw ConfigError("dampening must be in [0, 1]");
  if (batch_size_labeled < 1) throw ConfigError("batch_size_labeled must be >= 1");
  if (batch_size_unlabeled < 0) throw ConfigError("batch_size_unlabeled must be >= 0 (0 = ratio based)");
  noise.validate();
  weights.validate();
  transform.validate();
}

LossWeights TrainConfig::effective_weights() const {
  const VariantTerms t = terms_of(variant);
  LossWeights w = weights;
  if (!t.consistency) w.lambda_cr = 0.0;
  if (!t.similarity) w.lambda_sim = 0.0;
  return w;
}

int TrainConfig::unlabeled_batch_size(int ratio) const {
  return batch_size_unlabeled > 0 ? batch_size_unlabeled : batch_size_labeled * std::max(ratio, 1);
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"base_lr", c.base_lr},
          {"lr_decay_factor", c.lr_decay_factor},
          {"lr_decay_every", c.lr_decay_every},
          {"epochs", c.epochs},
          {"momentum", c.momentum},
          {"dampening", c.dampening},
          {"batch_size_labeled", c.batch_size_labeled},
          {"batch_size_unlabeled", c.batch_size_unlabeled},
          {"noise", {{"mean", c.noise.mean}, {"std", c.noise.std}}},
          {"weights", {{"lambda_cr", c.weights.lambda_cr}, {"lambda_sim", c.weights.lambda_sim}}},
          {"variant", to_string(c.variant)},
          {"transform", to_json(c.transform)},
          {"l2", c.l2 == L2Normalization::per_element ? "per_element" : "raw_sum"},
          {"train_classifier", c.train_classifier},
          {"seed", c.seed}};
}

double lr_at(int epoch, double base_lr, double factor, int every) {
  if (epoch < 0) throw ContractError("epoch must be >= 0");
  return base_lr * std::pow(factor, epoch / every);
}

// ------------------------------------------------------------------ batches

BatchSampler::BatchSampler(std::size_t n_labeled, std::size_t n_unlabeled, int batch_labeled,
                           int batch_unlabeled, std::uint64_t seed)
    : n_labeled_(n_labeled),
      n_unlabeled_(n_unlabeled),
      batch_labeled_(batch_labeled),
      batch_unlabeled_(batch_unlabeled),
      seed_(seed) {
  if (n_labeled == 0) throw ConfigError("labeled pool is empty");
  if (batch_labeled < 1 || batch_unlabeled < 0) throw ConfigError("invalid batch sizes");
}

int BatchSampler::steps_per_epoch() const {
  return static_cast<int>((n_labeled_ + batch_labeled_ - 1) / batch_labeled_);
}

std::vector<Batch> BatchSampler::compose_epoch(int epoch) const {
  const int steps = steps_per_epoch();
  std::vector<std::size_t> order(n_labeled_);
  std::iota(order.begin(), order.end(), 0);
  Rng lrng = make_rng(seed_, {kLabeledStream, static_cast<std::uint64_t>(epoch)});
  std::shuffle(order.begin(), order.end(), lrng);

  std::vector<Batch> batches(steps);
  for (int s = 0; s < steps; ++s) {
    const std::size_t lo = static_cast<std::size_t>(s) * batch_labeled_;
    const std::size_t hi = std::min(lo + batch_labeled_, n_labeled_);
    batches[s].labeled.assign(order.begin() + lo, order.begin() + hi);
  }
  if (n_unlabeled_ == 0 || batch_unlabeled_ == 0) return batches;

  // Global draw position of this epoch's first unlabeled sample; pass p of the
  // pool is permutation p of the unlabeled stream.
  std::uint64_t pos = static_cast<std::uint64_t>(epoch) * steps * batch_unlabeled_;
  std::uint64_t pass = ~0ULL;
  std::vector<std::size_t> perm(n_unlabeled_);
  for (int s = 0; s < steps; ++s) {
    for (int j = 0; j < batch_unlabeled_; ++j, ++pos) {
      if (pos / n_unlabeled_ != pass) {
        pass = pos / n_unlabeled_;
        std::iota(perm.begin(), perm.end(), 0);
        Rng urng = make_rng(seed_, {kUnlabeledStream, pass});
        std::shuffle(perm.begin(), perm.end(), urng);
      }
      batches[s].unlabeled.push_back(perm[pos % n_unlabeled_]);
    }
  }
  return batches;
}

TrainingPools materialize_pools(const Dataset& dataset, const SplitPlan& plan) {
  const auto index = dataset.index();
  auto find = [&](const std::string& id) -> const Sample& {
    auto it = index.find(id);
    if (it == index.end()) throw ContractError("split plan names unknown sample '" + id + "'");
    return dataset.samples[it->second];
  };
  TrainingPools pools;
  for (const auto& id : plan.labeled_train) {
    const Sample& s = find(id);
    if (!s.label) throw ContractError("labeled sample " + id + " carries no label");
    pools.labeled.push_back(&s.image);
    pools.labels.push_back(*s.label);
  }
  for (const auto& item : plan.selected_unlabeled) {
    const Sample& s = find(item.source_id);
    if (item.rotation_deg == 0.0) {
      pools.unlabeled.push_back(&s.image);
    } else {
      pools.owned.push_back(std::make_unique<ImageTensor>(rotate(s.image, item.rotation_deg)));
      pools.unlabeled.push_back(pools.owned.back().get());
    }
  }
  for (const auto& id : plan.validation) {
    const Sample& s = find(id);
    if (!s.label) throw ContractError("validation sample " + id + " carries no label");
    pools.validation.push_back(&s.image);
    pools.validation_labels.push_back(*s.label);
  }
  return pools;
}

// ------------------------------------------------------------------ one step

StepLosses accumulate_gradients(Model& model, const StepBatch& batch, const TrainConfig& cfg) {
  if (batch.labeled.size() != batch.labels.size()) throw ContractError("labels do not match labeled batch");
  const VariantTerms terms = terms_of(cfg.variant);
  const LossWeights w = cfg.effective_weights();
  const std::size_t n_labeled = batch.labeled.size();
  const std::size_t n_unlabeled = terms.uses_unlabeled ? batch.unlabeled.size() : 0;
  const std::size_t n_all = n_labeled + n_unlabeled;
  model.zero_grad();
  if (n_all == 0) return {};

  const double ce_scale = cfg.train_classifier && n_labeled > 0 ? 1.0 / static_cast<double>(n_labeled) : 0.0;
  const double cr_scale = w.lambda_cr / static_cast<double>(n_all);
  const double sim_scale = w.lambda_sim / static_cast<double>(n_all);
  double ce_sum = 0.0, cr_sum = 0.0, sim_sum = 0.0;

  for (std::size_t i = 0; i < n_all; ++i) {
    const bool labeled = i < n_labeled;
    const std::size_t j = labeled ? i : i - n_labeled;
    const ImageTensor& x = labeled ? *batch.labeled[j] : *batch.unlabeled[j];
    Rng rng = make_rng(cfg.seed, {kViewStream, static_cast<std::uint64_t>(batch.epoch),
                                  static_cast<std::uint64_t>(batch.step), labeled ? 0ULL : 1ULL, j});

    ViewState v1;
    v1.clean = x;
    v1.input = add_gaussian_noise(x, cfg.noise, rng);
    forward_view(model, v1, terms.consistency);

    std::optional<ViewState> v2;
    if (terms.consistency || terms.similarity) {
      v2.emplace();
      v2->clean = terms.transform ? similarity_transform(x, cfg.transform, rng) : x;
      v2->input = add_gaussian_noise(v2->clean, cfg.noise, rng);
      forward_view(model, *v2, terms.consistency);
    }

    Tensor fg1, fg2;
    if (labeled) {
      nn::Dense::Cache head_cache;
      const auto probs = softmax(model.head().logits(v1.enc.feature, head_cache));
      ce_sum += supervised_loss(batch.labels[j], probs);
      if (ce_scale != 0.0) {
        auto d = supervised_loss_grad(batch.labels[j], probs);
        for (double& g : d) g *= ce_scale;
        fg1 = model.head().backward(d, head_cache);
      }
    }
    if (terms.consistency) {
      cr_sum += consistency_loss(v1.clean, v1.dec->reconstruction, v2->clean, v2->dec->reconstruction, cfg.l2);
    }
    if (terms.similarity) {
      sim_sum += similarity_loss(v1.enc.feature.data, v2->enc.feature.data);
      if (sim_scale != 0.0) {
        auto g = similarity_loss_grad(v1.enc.feature.data, v2->enc.feature.data);
        for (double& d : g.du) d *= sim_scale;
        for (double& d : g.dv) d *= sim_scale;
        add_into(fg1, vector_tensor(g.du));
        fg2 = vector_tensor(g.dv);
      }
    }
    backward_view(model, v1, cr_scale, cfg, std::move(fg1));
    if (v2) backward_view(model, *v2, cr_scale, cfg, std::move(fg2));
  }

  StepLosses out;
  out.parts.ce = n_labeled > 0 ? ce_sum / static_cast<double>(n_labeled) : 0.0;
  out.parts.cr = cr_sum / static_cast<double>(n_all);
  out.parts.sim = sim_sum / static_cast<double>(n_all);
  LossWeights logged = w;
  if (!cfg.train_classifier) {
    // CE is reported but not part of the optimized objective.
    LossComponents p = out.parts;
    p.ce = 0.0;
    total_loss(out.parts, logged);  // still checks every term is finite
    out.total = total_loss(p, logged);
  } else {
    out.total = total_loss(out.parts, logged);
  }
  return out;
}

SgdOptimizer::SgdOptimizer(double momentum, double dampening) : momentum_(momentum), dampening_(dampening) {}

void SgdOptimizer::step(const nn::ParamRefs& params, double lr) {
  if (momentum_ == 0.0) {
    for (nn::Param* p : params) {
      for (std::size_t i = 0; i < p->size(); ++i) p->value[i] -= lr * p->grad[i];
    }
    return;
  }
  const bool first = velocity_.empty();
  if (first) velocity_.resize(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Param* p = params[k];
    auto& v = velocity_[k];
    if (first) {
      v = p->grad;
    } else {
      for (std::size_t i = 0; i < p->size(); ++i) v[i] = momentum_ * v[i] + (1.0 - dampening_) * p->grad[i];
    }
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] -= lr * v[i];
  }
}

StepLosses train_step(Model& model, SgdOptimizer& opt, const StepBatch& batch, const TrainConfig& cfg,
                      double lr) {
  StepLosses losses;
  try {
    losses = accumulate_gradients(model, batch, cfg);
  } catch (const DivergenceError& e) {
    throw DivergenceError(fmt::format("{} (epoch {}, step {}, lr {:.6g})", e.what(), batch.epoch, batch.step, lr));
  }
  opt.step(model.params(), lr);
  return losses;
}

double accuracy(const Model& model, const std::vector<const ImageTensor*>& images, const std::vector<int>& labels) {
  if (images.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i) correct += model.predict(*images[i]) == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

// ------------------------------------------------------------------ fit

nlohmann::json make_manifest(const TrainConfig& cfg, const ModelConfig& model_cfg, const SplitPlan& plan) {
  const LossWeights w = cfg.effective_weights();
  const bool unl = terms_of(cfg.variant).uses_unlabeled;
  return {{"version", version_string()},
          {"train", to_json(cfg)},
          {"effective_weights", {{"lambda_ce", cfg.train_classifier ? 1.0 : 0.0},
                                 {"lambda_cr", w.lambda_cr},
                                 {"lambda_sim", w.lambda_sim}}},
          {"resolved_batch_size_unlabeled", unl ? cfg.unlabeled_batch_size(plan.ratio) : 0},
          {"model", to_json(model_cfg)},
          {"split",
           {{"fold_index", plan.fold_index},
            {"k", plan.k},
            {"seed", plan.seed},
            {"dataset_size", plan.dataset_size},
            {"label_fraction", plan.label_fraction},
            {"ratio", plan.ratio},
            {"achieved_ratio", plan.achieved_ratio},
            {"labeled", plan.labeled_train.size()},
            {"unlabeled_selected", plan.selected_unlabeled.size()},
            {"validation", plan.validation.size()},
            {"test", plan.test.size()}}}};
}

TrainState fit(const Dataset& dataset, const SplitPlan& plan, const TrainConfig& cfg, const ModelConfig& model_cfg,
               const FitOptions& options) {
  cfg.validate();
  model_cfg.encoder.validate();
  if (model_cfg.num_classes != dataset.num_classes()) {
    throw ConfigError(fmt::format("model has {} classes, dataset {}", model_cfg.num_classes, dataset.num_classes()));
  }
  const TrainingPools pools = materialize_pools(dataset, plan);
  const VariantTerms terms = terms_of(cfg.variant);
  const int bu = terms.uses_unlabeled ? cfg.unlabeled_batch_size(plan.ratio) : 0;
  if (terms.uses_unlabeled && pools.unlabeled.empty()) {
    spdlog::warn("variant {} runs without unlabeled data", to_string(cfg.variant));
  }
  const BatchSampler sampler(pools.labeled.size(), terms.uses_unlabeled ? pools.unlabeled.size() : 0,
                             cfg.batch_size_labeled, bu, cfg.seed);

  TrainState state(options.initial ? *options.initial : Model(model_cfg));
  if (!options.initial) state.model.init(derive_seed(cfg.seed, kInitStream));
  Model& model = state.model;
  if (!(model.config() == model_cfg)) throw ConfigError("initial model does not match the model config");
  state.manifest = make_manifest(cfg, model_cfg, plan);

  std::ofstream csv;
  std::filesystem::path ckpt;
  if (options.out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir->string() + ": " + ec.message());
    std::ofstream mf(*options.out_dir / "manifest.json");
    mf << state.manifest.dump(2) << '\n';
    if (!mf) throw IoError("cannot write " + (*options.out_dir / "manifest.json").string());
    csv.open(*options.out_dir / "epochs.csv");
    if (!csv) throw IoError("cannot write " + (*options.out_dir / "epochs.csv").string());
    csv << "epoch,l_CE,l_CR,l_Sim,l_total,lr,val_accuracy\n" << std::flush;
    ckpt = *options.out_dir / "best.ckpt";
  }

  SgdOptimizer opt(cfg.momentum, cfg.dampening);
  std::vector<double> best = model.snapshot();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.base_lr, cfg.lr_decay_factor, cfg.lr_decay_every);
    const auto batches = sampler.compose_epoch(epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    double n_lab = 0.0, n_all = 0.0;
    for (std::size_t s = 0; s < batches.size(); ++s) {
      StepBatch sb;
      sb.epoch = epoch;
      sb.step = static_cast<int>(s);
      for (auto i : batches[s].labeled) {
        sb.labeled.push_back(pools.labeled[i]);
        sb.labels.push_back(pools.labels[i]);
      }
      for (auto i : batches[s].unlabeled) sb.unlabeled.push_back(pools.unlabeled[i]);
      const StepLosses l = train_step(model, opt, sb, cfg, lr);
      const double nl = static_cast<double>(sb.labeled.size());
      const double na = nl + static_cast<double>(terms.uses_unlabeled ? sb.unlabeled.size() : 0);
      rec.parts.ce += l.parts.ce * nl;
      rec.parts.cr += l.parts.cr * na;
      rec.parts.sim += l.parts.sim * na;
      n_lab += nl;
      n_all += na;
    }
    rec.parts.ce /= n_lab;
    rec.parts.cr /= n_all;
    rec.parts.sim /= n_all;
    const LossWeights w = cfg.effective_weights();
    rec.total = (cfg.train_classifier ? rec.parts.ce : 0.0) + w.lambda_cr * rec.parts.cr + w.lambda_sim * rec.parts.sim;
    rec.val_accuracy = accuracy(model, pools.validation, pools.validation_labels);
    state.epochs_run = epoch + 1;

    if (rec.val_accuracy > state.best_val_accuracy) {
      state.best_val_accuracy = rec.val_accuracy;
      state.best_epoch = epoch;
      best = model.snapshot();
      if (options.out_dir) {
        nlohmann::json meta = state.manifest;
        meta["best_epoch"] = epoch;
        meta["val_accuracy"] = rec.val_accuracy;
        save_checkpoint(ckpt, model, meta);
        state.checkpoint = ckpt;
      }
    }
    spdlog::info("epoch {:3d}  ce {:.4f}  cr {:.5f}  sim {:.4f}  lr {:.5g}  val {:.4f}", epoch, rec.parts.ce,
                 rec.parts.cr, rec.parts.sim, lr, rec.val_accuracy);
    if (csv.is_open()) {
      csv << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", epoch, rec.parts.ce, rec.parts.cr,
                         rec.parts.sim, rec.total, lr, rec.val_accuracy)
          << std::flush;
    }
    state.log.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  model.restore(best);
  return state;
}

}  // namespace jointssl
