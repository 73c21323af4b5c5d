#include "appgen/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <sstream>

#include "appgen/common.hpp"
#include "appgen/optim.hpp"

namespace appgen {

std::string to_string(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::full: return "full";
    case AblationVariant::no_spatial: return "no_spatial";
    case AblationVariant::no_history: return "no_history";
    case AblationVariant::no_current_context: return "no_current_context";
  }
  return "full";
}

AblationVariant ablation_from_string(const std::string& name) {
  for (auto v : {AblationVariant::full, AblationVariant::no_spatial, AblationVariant::no_history,
                 AblationVariant::no_current_context})
    if (to_string(v) == name) return v;
  throw Error("invalid-config", "unknown ablation variant '" + name + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error("invalid-config", "model." + field + ": " + why);
  };
  if (window < 1) fail("window", "must be >= 1");
  if (attn_dim < 1) fail("attn_dim", "must be >= 1");
  if (value_dim < 1) fail("value_dim", "must be >= 1");
  if (diffusion_steps < 1) fail("diffusion_steps", "must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    fail("beta_start", "need 0 < beta_start <= beta_end < 1");
  if (!(lambda_alpha >= 0.0 && lambda_alpha <= 1.0)) fail("lambda_alpha", "must lie in [0, 1]");
  if (channels < 1) fail("channels", "must be >= 1");
  if (blocks < 1) fail("blocks", "must be >= 1");
  if (step_hidden < 1) fail("step_hidden", "must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) fail("final_lr_fraction", "must lie in (0, 1]");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (epochs < 0) fail("epochs", "must be >= 0");
}

namespace {

struct Trainable {
  AttentionParams attention;
  DenoiserParams denoiser;

  template <class Self, class F>
  static void visit(Self& self, F&& f) {
    AttentionParams::visit(self.attention, f);
    DenoiserParams::visit(self.denoiser, f);
  }
};

struct PositionState {
  HistoryWindow window;
  AttentionResult attention;
  Condition condition;
};

PositionState condition_at(const Trajectory& traj, std::span<const int> apps, int position, const ModelConfig& cfg,
                           const FeatureTables& tables, const AttentionParams& attention, AblationVariant variant,
                           AccessLog* log) {
  const bool mask_spatial = variant == AblationVariant::no_spatial;
  PositionState st;
  st.condition.history = Eigen::VectorXd::Zero(cfg.value_dim + 1);
  if (variant != AblationVariant::no_history) {
    st.window = build_window(traj, apps, position, cfg.window, tables, mask_spatial, log);
    st.attention = encode_history(st.window, attention);
    st.condition.history.head(cfg.value_dim) = st.attention.output;
    st.condition.history[cfg.value_dim] = st.window.empty() ? 1.0 : 0.0;
  }
  if (variant == AblationVariant::no_current_context)
    st.condition.context = Eigen::VectorXd::Zero(tables.context_dim());
  else
    st.condition.context = tables.context_features(traj[position - 1], mask_spatial);
  return st;
}

struct SequenceView {
  Trajectory trajectory;
  std::vector<int> apps;
};

std::vector<SequenceView> views_of(const Dataset& data) {
  std::vector<SequenceView> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back({s.trajectory(), s.apps()});
  return out;
}

void check_coverage(const Dataset& data, const EmbeddingTable& apps, const EmbeddingTable& locations) {
  for (const auto& s : data)
    for (const auto& e : s.events) {
      if (!apps.contains(e.app_id)) throw Error("missing-embedding", "app " + std::to_string(e.app_id) + " has no embedding");
      if (!locations.contains(e.location_id))
        throw Error("unknown-location", "location " + std::to_string(e.location_id) + " has no embedding");
    }
}

struct Example {
  int sequence;
  int position;  // 1-based
  int step;
  Eigen::VectorXd eps;
};

std::vector<Example> enumerate_examples(const std::vector<SequenceView>& seqs) {
  std::vector<Example> out;
  for (std::size_t s = 0; s < seqs.size(); ++s)
    for (std::size_t i = 1; i <= seqs[s].apps.size(); ++i) out.push_back({static_cast<int>(s), static_cast<int>(i), 0, {}});
  return out;
}

void draw_noise(Example& ex, int steps, int dim, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(1, steps);
  std::normal_distribution<double> normal;
  ex.step = pick(rng);
  ex.eps.resize(dim);
  for (int d = 0; d < dim; ++d) ex.eps[d] = normal(rng);
}

class BatchRunner {
 public:
  BatchRunner(const std::vector<SequenceView>& seqs, const ModelConfig& cfg, const FeatureTables& tables,
              const EmbeddingTable& apps, const NoiseSchedule& schedule)
      : seqs_(seqs), cfg_(cfg), tables_(tables), apps_(apps), schedule_(schedule) {}

  DiffusionLoss run(const Trainable& params, std::span<const Example* const> batch, Trainable* grads) {
    const auto n = static_cast<Eigen::Index>(batch.size());
    DiffusionBatch db;
    db.x0.resize(apps_.dim(), n);
    db.eps.resize(apps_.dim(), n);
    db.steps.resize(batch.size());
    db.history.resize(cfg_.value_dim + 1, n);
    db.context.resize(tables_.context_dim(), n);
    states_.resize(batch.size());
    for (Eigen::Index b = 0; b < n; ++b) {
      const Example& ex = *batch[b];
      const auto& seq = seqs_[ex.sequence];
      states_[b] = condition_at(seq.trajectory, seq.apps, ex.position, cfg_, tables_, params.attention, cfg_.variant,
                                nullptr);
      db.x0.col(b) = apps_.row(seq.apps[ex.position - 1]);
      db.eps.col(b) = ex.eps;
      db.steps[b] = ex.step;
      db.history.col(b) = states_[b].condition.history;
      db.context.col(b) = states_[b].condition.context;
    }
    DiffusionLoss loss = training_loss(params.denoiser, db, cfg_.lambda_alpha, schedule_, grads != nullptr);
    if (grads) {
      grads->denoiser = std::move(loss.grads.params);
      grads->attention = zeros_like(params.attention);
      if (cfg_.variant != AblationVariant::no_history)
        for (Eigen::Index b = 0; b < n; ++b)
          attention_backward(states_[b].window, params.attention, states_[b].attention,
                             loss.grads.d_history.col(b).head(cfg_.value_dim), grads->attention);
    }
    return loss;
  }

  double evaluate(const Trainable& params, const std::vector<Example>& examples) {
    if (examples.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    std::vector<const Example*> ptrs;
    for (std::size_t at = 0; at < examples.size(); at += cfg_.batch_size) {
      ptrs.clear();
      for (std::size_t k = at; k < std::min(examples.size(), at + cfg_.batch_size); ++k) ptrs.push_back(&examples[k]);
      total += run(params, ptrs, nullptr).loss * static_cast<double>(ptrs.size());
    }
    return total / static_cast<double>(examples.size());
  }

 private:
  const std::vector<SequenceView>& seqs_;
  const ModelConfig& cfg_;
  const FeatureTables& tables_;
  const EmbeddingTable& apps_;
  const NoiseSchedule& schedule_;
  std::vector<PositionState> states_;
};

std::string format_model_config(const ModelConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "model.window=" << c.window << "\nmodel.attn_dim=" << c.attn_dim << "\nmodel.value_dim=" << c.value_dim
      << "\ndiffusion.steps=" << c.diffusion_steps << "\ndiffusion.beta_start=" << c.beta_start
      << "\ndiffusion.beta_end=" << c.beta_end << "\ndiffusion.lambda_alpha=" << c.lambda_alpha
      << "\ndiffusion.channels=" << c.channels << "\ndiffusion.blocks=" << c.blocks
      << "\ndiffusion.step_hidden=" << c.step_hidden << "\ntrain.learning_rate=" << c.learning_rate
      << "\ntrain.final_lr_fraction=" << c.final_lr_fraction
      << "\ntrain.batch_size=" << c.batch_size << "\ntrain.epochs=" << c.epochs << "\nseed=" << c.seed
      << "\nworld.tz_offset=" << c.tz_offset_seconds << "\nmodel.variant=" << to_string(c.variant)
      << "\nmodel.standardize_apps=" << c.standardize_apps << "\n";
  return out.str();
}

}  // namespace

EmbeddingTable standardize_table(const EmbeddingTable& table) {
  EmbeddingTable out = table;
  if (table.size() == 0) return out;
  out.vectors.colwise() -= table.vectors.rowwise().mean();
  const double radius = std::sqrt(static_cast<double>(out.dim()));
  for (Eigen::Index a = 0; a < out.vectors.cols(); ++a) {
    const double n = out.vectors.col(a).norm();
    if (n > 0.0) out.vectors.col(a) *= radius / n;
  }
  return out;
}

ModelCheckpoint train(const Dataset& train_split, const Dataset& validation, const EmbeddingTable& apps,
                      const EmbeddingTable& locations, const ModelConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_split.empty() || count_events(train_split) == 0) throw Error("empty-split", "training split is empty");
  check_coverage(train_split, apps, locations);
  check_coverage(validation, apps, locations);

  ModelCheckpoint ckpt;
  ckpt.config = config;
  ckpt.config_text = format_model_config(config);
  ckpt.config_hash = fnv1a(ckpt.config_text);
  ckpt.apps = config.standardize_apps ? standardize_table(apps) : apps;
  ckpt.locations = locations;
  ckpt.schedule = make_schedule(config.diffusion_steps, config.beta_start, config.beta_end);

  const FeatureTables tables{&ckpt.apps, &ckpt.locations, config.tz_offset_seconds};
  DenoiserConfig dc;
  dc.length = apps.dim();
  dc.channels = config.channels;
  dc.blocks = config.blocks;
  dc.step_hidden = config.step_hidden;
  dc.history_dim = config.value_dim + 1;
  dc.context_dim = tables.context_dim();

  std::mt19937_64 rng(derive_seed(config.seed, "train"));
  Trainable params{make_attention_params(tables.feature_dim(), config.attn_dim, config.value_dim, rng),
                   make_denoiser_params(dc, rng)};

  const auto train_seqs = views_of(train_split);
  const auto val_seqs = views_of(validation);
  auto examples = enumerate_examples(train_seqs);

  // fixed noise draws so losses are comparable across epochs
  std::mt19937_64 eval_rng(derive_seed(config.seed, "train-eval"));
  auto val_examples = enumerate_examples(val_seqs);
  for (auto& ex : val_examples) draw_noise(ex, config.diffusion_steps, apps.dim(), eval_rng);
  std::vector<Example> train_probe;
  {
    std::vector<Example> all = examples;
    std::shuffle(all.begin(), all.end(), eval_rng);
    all.resize(std::min<std::size_t>(all.size(), 1024));
    for (auto& ex : all) draw_noise(ex, config.diffusion_steps, apps.dim(), eval_rng);
    train_probe = std::move(all);
  }

  BatchRunner train_runner(train_seqs, config, tables, ckpt.apps, ckpt.schedule);
  BatchRunner val_runner(val_seqs, config, tables, ckpt.apps, ckpt.schedule);
  auto score = [&](const Trainable& p, double& train_loss, double& val_loss) {
    train_loss = train_runner.evaluate(p, train_probe);
    val_loss = val_examples.empty() ? train_loss : val_runner.evaluate(p, val_examples);
  };

  auto& meta = ckpt.metadata;
  meta.seed = config.seed;
  double tl = 0, vl = 0;
  score(params, tl, vl);
  meta.train_loss.push_back(tl);
  meta.validation_loss.push_back(vl);
  if (on_epoch) on_epoch(0, tl, vl);
  Trainable best = params;
  double best_loss = vl;

  Adam adam(config.learning_rate);
  Trainable grads;
  std::vector<const Example*> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double progress = config.epochs > 1 ? static_cast<double>(epoch - 1) / (config.epochs - 1) : 0.0;
    const double f = config.final_lr_fraction;
    adam.set_learning_rate(config.learning_rate * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(M_PI * progress))));
    for (auto& ex : examples) draw_noise(ex, config.diffusion_steps, apps.dim(), rng);
    std::shuffle(examples.begin(), examples.end(), rng);
    for (std::size_t at = 0; at < examples.size(); at += config.batch_size) {
      batch.clear();
      for (std::size_t k = at; k < std::min(examples.size(), at + config.batch_size); ++k) batch.push_back(&examples[k]);
      try {
        train_runner.run(params, batch, &grads);
      } catch (const Error& e) {
        throw Error("diverged", "epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(at / config.batch_size) + ": " + e.what());
      }
      adam.step(params, grads);
    }
    if (!all_finite(params))
      throw Error("diverged", "epoch " + std::to_string(epoch) + ": parameters became non-finite");
    score(params, tl, vl);
    meta.train_loss.push_back(tl);
    meta.validation_loss.push_back(vl);
    meta.epochs_run = epoch;
    if (on_epoch) on_epoch(epoch, tl, vl);
    if (!std::isfinite(vl)) throw Error("diverged", "epoch " + std::to_string(epoch) + ": validation loss is not finite");
    if (vl < best_loss) {
      best_loss = vl;
      best = params;
      meta.best_epoch = epoch;
    }
  }
  ckpt.attention = std::move(best.attention);
  ckpt.denoiser = std::move(best.denoiser);
  return ckpt;
}

std::uint64_t sequence_seed(std::uint64_t seed, std::size_t index) {
  return splitmix64(derive_seed(seed, "generate") + static_cast<std::uint64_t>(index));
}

namespace {

struct Sampler {
  std::mt19937_64 rng;
  std::normal_distribution<double> normal;

  explicit Sampler(std::uint64_t seed) : rng(seed) {}
  void fill(Eigen::Ref<Eigen::VectorXd> v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  }
};

void check_trajectory(const ModelCheckpoint& ckpt, const Trajectory& traj) {
  for (const auto& p : traj)
    if (!ckpt.locations.contains(p.location_id))
      throw Error("unknown-location", "location " + std::to_string(p.location_id) + " is not covered by the checkpoint");
}

// Generates every trajectory in lockstep; `trace` only for a single sequence.
std::vector<std::vector<int>> generate_lockstep(const ModelCheckpoint& ckpt, const std::vector<const Trajectory*>& trajs,
                                                AblationVariant variant, const std::vector<std::uint64_t>& seeds,
                                                GenerationTrace* trace) {
  const auto& cfg = ckpt.config;
  const FeatureTables tables{&ckpt.apps, &ckpt.locations, cfg.tz_offset_seconds};
  const int dim = ckpt.apps.dim();
  const int steps = ckpt.schedule.steps();
  std::vector<Sampler> samplers;
  std::vector<std::vector<int>> out(trajs.size());
  std::size_t longest = 0;
  for (std::size_t s = 0; s < trajs.size(); ++s) {
    check_trajectory(ckpt, *trajs[s]);
    samplers.emplace_back(seeds[s]);
    out[s].reserve(trajs[s]->size());
    longest = std::max(longest, trajs[s]->size());
  }

  std::vector<int> active;
  DenoiserInput in;
  for (std::size_t i = 1; i <= longest; ++i) {
    active.clear();
    for (std::size_t s = 0; s < trajs.size(); ++s)
      if (trajs[s]->size() >= i) active.push_back(static_cast<int>(s));
    const auto n = static_cast<Eigen::Index>(active.size());
    in.x.resize(dim, n);
    in.steps.assign(active.size(), steps);
    in.history.resize(cfg.value_dim + 1, n);
    in.context.resize(tables.context_dim(), n);
    for (Eigen::Index b = 0; b < n; ++b) {
      const int s = active[b];
      AccessLog log;
      const auto st = condition_at(*trajs[s], out[s], static_cast<int>(i), cfg, tables, ckpt.attention, variant,
                                   trace ? &log : nullptr);
      in.history.col(b) = st.condition.history;
      in.context.col(b) = st.condition.context;
      if (trace) {
        trace->window_reads.push_back(std::move(log));
        trace->context_reads.push_back(variant == AblationVariant::no_current_context ? std::vector<int>{}
                                                                                       : std::vector<int>{static_cast<int>(i)});
        trace->conditions.push_back(st.condition);
      }
      samplers[s].fill(in.x.col(b));
    }
    Eigen::MatrixXd z(dim, n);
    for (int t = steps; t >= 1; --t) {
      std::fill(in.steps.begin(), in.steps.end(), t);
      const Eigen::MatrixXd eps_hat = denoise_predict(ckpt.denoiser, in);
      if (t > 1)
        for (Eigen::Index b = 0; b < n; ++b) samplers[active[b]].fill(z.col(b));
      in.x = reverse_update(in.x, t, eps_hat, z, ckpt.schedule);
    }
    for (Eigen::Index b = 0; b < n; ++b) {
      Eigen::VectorXd a = in.x.col(b);
      if (a.norm() == 0.0) a = Eigen::VectorXd::Constant(dim, 1e-300);
      out[active[b]].push_back(decode_app(a, ckpt.apps));
    }
  }
  return out;
}

}  // namespace

std::vector<int> generate_sequence(const ModelCheckpoint& ckpt, const Trajectory& trajectory, AblationVariant variant,
                                   std::uint64_t seed, GenerationTrace* trace) {
  if (trajectory.empty()) throw Error("invalid-argument", "cannot generate for an empty trajectory");
  if (trace) *trace = {};
  return generate_lockstep(ckpt, {&trajectory}, variant, {seed}, trace).front();
}

Dataset generate_corpus(const ModelCheckpoint& ckpt, const Dataset& conditions, AblationVariant variant,
                        std::uint64_t seed) {
  constexpr std::size_t kChunk = 512;
  Dataset out = conditions;
  std::vector<Trajectory> trajs;
  for (const auto& s : conditions) trajs.push_back(s.trajectory());
  for (std::size_t at = 0; at < conditions.size(); at += kChunk) {
    const std::size_t end = std::min(conditions.size(), at + kChunk);
    std::vector<const Trajectory*> ptrs;
    std::vector<std::uint64_t> seeds;
    for (std::size_t s = at; s < end; ++s) {
      ptrs.push_back(&trajs[s]);
      seeds.push_back(sequence_seed(seed, s));
    }
    const auto apps = generate_lockstep(ckpt, ptrs, variant, seeds, nullptr);
    for (std::size_t s = at; s < end; ++s) {
      auto& events = out[s].events;
      for (std::size_t i = 0; i < events.size(); ++i) {
        const int app = apps[s - at][i];
        events[i].app_id = app;
        if (app < static_cast<int>(ckpt.app_category.size()))
          events[i].category_id = ckpt.app_category[app];
        else
          events[i].category_id.reset();
      }
    }
  }
  return out;
}

}  // namespace appgen
