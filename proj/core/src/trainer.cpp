#include "repfair/trainer.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>

#include "repfair/csv.hpp"
#include "repfair/errors.hpp"

namespace repfair {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_grad_norm && !(*max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (noise_dim == 0) throw ConfigError("noise_dim must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (checkpoint_every > 0 && checkpoint_dir.empty()) {
    throw ConfigError("checkpoint_every needs a checkpoint_dir");
  }
}

std::size_t resolve_batches_per_epoch(const TrainConfig& cfg, std::size_t dataset_size,
                                      bool alternating) {
  std::size_t b = cfg.batches_per_epoch;
  if (b == 0) b = std::max<std::size_t>(1, (dataset_size + cfg.batch_size - 1) / cfg.batch_size);
  if (alternating && b % 2 == 1) ++b;
  return b;
}

namespace {

enum Stream : std::uint64_t { kDataStream = 1, kNoiseStream = 2, kProbeStream = 3, kLabelStream = 4 };

Tensor filled(std::size_t rows, double v) { return Tensor({rows, 1}, v); }

void check_loss(double loss, const char* what, int epoch) {
  if (!std::isfinite(loss) || loss > kDivergenceLoss) {
    throw DivergenceError(std::string(what) + " loss diverged to " + format_number(loss), epoch);
  }
}

std::optional<std::span<const int>> label_view(const std::optional<std::vector<int>>& labels) {
  if (!labels) return std::nullopt;
  return std::span<const int>(*labels);
}

struct Saved {
  std::vector<std::optional<std::vector<double>>> grads;
};

Saved save_grads(const NetworkParams& p) {
  Saved s;
  for (const auto& [name, t] : p) {
    if (t.has_grad()) {
      s.grads.emplace_back(std::vector<double>(t.grad().begin(), t.grad().end()));
    } else {
      s.grads.emplace_back();
    }
  }
  return s;
}

void restore_grads(NetworkParams& p, const Saved& s) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    Tensor& t = p[i].second;
    if (s.grads[i]) {
      auto g = t.grad_buffer();
      std::copy(s.grads[i]->begin(), s.grads[i]->end(), g.begin());
    } else {
      t.clear_grad();
    }
  }
}

class GanRun {
 public:
  GanRun(GeneratorNet& g, DiscriminatorNet& d, const GroupedDataset& ds, const TrainConfig& cfg,
         const TrainHooks& hooks, bool alternate, std::optional<double> clip)
      : g_(g),
        d_(d),
        ds_(ds),
        cfg_(cfg),
        hooks_(hooks),
        alternate_(alternate),
        clip_(clip),
        g_opt_(AdamState::for_params(g.params, cfg.adam())),
        d_opt_(AdamState::for_params(d.params, cfg.adam())),
        data_rng_(derive_seed(cfg.seed, kDataStream)),
        probe_rng_(derive_seed(cfg.seed, kProbeStream)),
        label_rng_(derive_seed(cfg.seed, kLabelStream)),
        noise_(g.noise_dim(), derive_seed(cfg.seed, kNoiseStream)) {}

  RunTelemetry run() {
    check_compatibility();
    RunTelemetry t;
    t.batches_per_epoch = resolve_batches_per_epoch(cfg_, ds_.size(), alternate_);
    const auto run_start = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const auto start = std::chrono::steady_clock::now();
      EpochTelemetry e;
      e.epoch = epoch;
      std::array<double, 2> norm_sum{}, loss_sum{};
      std::array<std::size_t, 2> steps{}, clipped{};
      double fake_sum = 0.0, g_sum = 0.0;
      bool use_group0 = true;
      for (std::size_t b = 0; b < t.batches_per_epoch; ++b) {
        const int group = alternate_ ? (use_group0 ? 0 : 1) : -1;
        StepRecord rec = step(epoch, b, group);
        if (group >= 0) {
          norm_sum[group] += rec.real_clip.pre_norm;
          loss_sum[group] += rec.d_real_loss;
          steps[group] += 1;
          clipped[group] += rec.real_clip.clipped ? 1 : 0;
          t.real_steps[group] += 1;
        } else {
          t.mixed_real_steps += 1;
        }
        t.clipped_real_steps += rec.real_clip.clipped ? 1 : 0;
        fake_sum += rec.d_fake_loss;
        g_sum += rec.g_loss;
        if (hooks_.on_step) hooks_.on_step(rec, g_, d_);
        if (alternate_) use_group0 = !use_group0;
      }
      const auto nb = static_cast<double>(t.batches_per_epoch);
      e.d_fake_loss = fake_sum / nb;
      e.g_loss = g_sum / nb;
      const auto probes = probe_epoch();
      for (int k = 0; k < 2; ++k) {
        e.probe_grad_norm[k] = probes[k].grad_norm;
        if (alternate_) {
          const auto n = static_cast<double>(std::max<std::size_t>(steps[k], 1));
          e.grad_norm_preclip[k] = norm_sum[k] / n;
          e.d_loss[k] = loss_sum[k] / n;
          e.clip_rate[k] = static_cast<double>(clipped[k]) / n;
        } else {
          e.grad_norm_preclip[k] = probes[k].grad_norm;
          e.d_loss[k] = probes[k].loss;
          e.clip_rate[k] = 0.0;
        }
      }
      e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (hooks_.on_epoch) hooks_.on_epoch(e);
      t.epochs.push_back(e);
      if (cfg_.checkpoint_every > 0 && (epoch + 1) % cfg_.checkpoint_every == 0) {
        const auto tag = std::to_string(epoch + 1);
        save_checkpoint(cfg_.checkpoint_dir / ("generator_epoch" + tag + ".ckpt"), "generator",
                        g_.topology, g_.params);
        save_checkpoint(cfg_.checkpoint_dir / ("discriminator_epoch" + tag + ".ckpt"),
                        "discriminator", d_.topology, d_.params);
      }
    }
    t.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
    return t;
  }

 private:
  void check_compatibility() const {
    cfg_.validate();
    if (g_.output_dim() != ds_.dim() || d_.input_dim() != ds_.dim()) {
      throw DimensionError("network dimensions do not match dataset dimension " + std::to_string(ds_.dim()));
    }
    if (g_.noise_dim() != cfg_.noise_dim) throw ConfigError("generator noise_dim differs from config");
    if (cfg_.conditional != g_.conditional() || cfg_.conditional != d_.conditional()) {
      throw ConfigError("conditional flag differs between config and networks");
    }
    if (cfg_.conditional && !ds_.has_labels()) throw DataError("conditional training needs class labels");
    if (alternate_) {
      for (int k = 0; k < 2; ++k) {
        if (ds_.count(k) == 0) throw DataError("group " + std::to_string(k) + " missing from dataset");
      }
    }
  }

  std::optional<std::vector<int>> fake_labels(std::size_t n) {
    if (!cfg_.conditional) return std::nullopt;
    std::uniform_int_distribution<int> pick(0, static_cast<int>(g_.topology.num_classes) - 1);
    std::vector<int> labels(n);
    for (int& c : labels) c = pick(label_rng_);
    return labels;
  }

  StepRecord step(int epoch, std::size_t b, int group) {
    epoch_ = epoch;
    StepRecord rec;
    rec.epoch = epoch;
    rec.batch = b;
    rec.real_group = group;
    const std::size_t n = cfg_.batch_size;
    const Batch real = group >= 0 ? group_minibatch(ds_, group, n, data_rng_) : minibatch(ds_, n, data_rng_);

    // Discriminator on real samples.
    {
      Tape tape;
      Var p = discriminator_forward(tape, d_, tape.constant(real.x),
                                    cfg_.conditional ? label_view(real.labels) : std::nullopt);
      Var loss = tape.bce(p, filled(n, 1.0));
      rec.d_real_loss = tape.value(loss).item();
      check_loss(rec.d_real_loss, "discriminator (real)", epoch);
      tape.backward(loss);
    }
    rec.real_clip = clip_real();
    adam_step(d_opt_, d_.params);

    // Discriminator on generated samples.
    {
      auto labels = fake_labels(n);
      const Tensor fake = generate(g_, noise_.sample(n), label_view(labels));
      Tape tape;
      Var p = discriminator_forward(tape, d_, tape.constant(fake), label_view(labels));
      Var loss = tape.bce(p, filled(n, 0.0));
      rec.d_fake_loss = tape.value(loss).item();
      check_loss(rec.d_fake_loss, "discriminator (fake)", epoch);
      tape.backward(loss);
    }
    if (clip_ && cfg_.clip_fake_step) rec.fake_clip = checked_clip(*clip_, epoch);
    adam_step(d_opt_, d_.params);

    // Generator, non-saturating objective -log D(G(z)).
    {
      auto labels = fake_labels(n);
      Tape tape;
      Var x = generator_forward(tape, g_, tape.constant(noise_.sample(n)), label_view(labels));
      Var p = discriminator_forward(tape, d_, x, label_view(labels), /*track_params=*/false);
      Var loss = tape.bce(p, filled(n, 1.0));
      rec.g_loss = tape.value(loss).item();
      check_loss(rec.g_loss, "generator", epoch);
      tape.backward(loss);
    }
    for (const auto& [name, t] : g_.params) {
      for (double v : t.grad()) {
        if (!std::isfinite(v)) throw DivergenceError("non-finite generator gradient in " + name, epoch);
      }
    }
    adam_step(g_opt_, g_.params);
    return rec;
  }

  ClipReport checked_clip(double c, int epoch) {
    try {
      return clip_grad_norm(d_.params, c);
    } catch (const NumericError& e) {
      throw DivergenceError(e.what(), epoch);
    }
  }

  ClipReport clip_real() {
    if (hooks_.before_clip) hooks_.before_clip(d_.params);
    ClipReport r;
    if (clip_) {
      r = checked_clip(*clip_, epoch_);
    } else {
      r.pre_norm = r.post_norm = global_l2_norm(d_.params);
    }
    if (hooks_.after_clip) hooks_.after_clip(d_.params, r);
    return r;
  }

  std::array<GroupProbe, 2> probe_epoch() {
    std::array<GroupProbe, 2> out{};
    if (cfg_.probe_batches == 0) return out;
    for (int k = 0; k < 2; ++k) {
      if (ds_.count(k) == 0) continue;
      double norm = 0.0, loss = 0.0;
      for (std::size_t i = 0; i < cfg_.probe_batches; ++i) {
        const Batch batch = group_minibatch(ds_, k, cfg_.batch_size, probe_rng_);
        const GroupProbe p = probe_group(d_, batch, k);
        norm += p.grad_norm;
        loss += p.loss;
      }
      out[k] = {norm / static_cast<double>(cfg_.probe_batches), loss / static_cast<double>(cfg_.probe_batches)};
    }
    return out;
  }

  GeneratorNet& g_;
  DiscriminatorNet& d_;
  const GroupedDataset& ds_;
  const TrainConfig& cfg_;
  const TrainHooks& hooks_;
  bool alternate_;
  std::optional<double> clip_;
  AdamState g_opt_;
  AdamState d_opt_;
  Rng data_rng_;
  Rng probe_rng_;
  Rng label_rng_;
  NoiseSource noise_;
  int epoch_ = 0;
};

}  // namespace

RunTelemetry train_vanilla(GeneratorNet& g, DiscriminatorNet& d, const GroupedDataset& ds,
                           const TrainConfig& cfg, const TrainHooks& hooks) {
  if (cfg.max_grad_norm) throw ConfigError("train_vanilla needs max_grad_norm = none");
  return GanRun(g, d, ds, cfg, hooks, false, std::nullopt).run();
}

RunTelemetry train_repfair(GeneratorNet& g, DiscriminatorNet& d, const GroupedDataset& ds,
                           const TrainConfig& cfg, const TrainHooks& hooks) {
  if (!cfg.max_grad_norm || !(*cfg.max_grad_norm > 0.0)) {
    throw ConfigError("train_repfair needs a positive max_grad_norm");
  }
  return GanRun(g, d, ds, cfg, hooks, cfg.alternate_groups, cfg.max_grad_norm).run();
}

RunTelemetry train(GeneratorNet& g, DiscriminatorNet& d, const GroupedDataset& ds,
                   const TrainConfig& cfg, const TrainHooks& hooks) {
  return cfg.max_grad_norm ? train_repfair(g, d, ds, cfg, hooks) : train_vanilla(g, d, ds, cfg, hooks);
}

GroupProbe probe_group(DiscriminatorNet& d, const Batch& real_batch, int group_id) {
  if (group_id != 0 && group_id != 1) throw ContractError("group must be 0 or 1");
  for (int s : real_batch.sensitive) {
    if (s != group_id) throw ContractError("probe batch mixes groups");
  }
  const Saved saved = save_grads(d.params);
  d.params.zero_grad();
  GroupProbe out;
  {
    Tape tape;
    std::optional<std::span<const int>> labels;
    if (d.conditional()) {
      if (!real_batch.labels) throw ContractError("conditional discriminator needs batch labels");
      labels = std::span<const int>(*real_batch.labels);
    }
    Var p = discriminator_forward(tape, d, tape.constant(real_batch.x), labels);
    Var loss = tape.bce(p, filled(real_batch.x.rows(), 1.0));
    out.loss = tape.value(loss).item();
    tape.backward(loss);
  }
  out.grad_norm = global_l2_norm(d.params);
  restore_grads(d.params, saved);
  return out;
}

double record_group_grad_norm(DiscriminatorNet& d, const Batch& real_batch, int group_id) {
  return probe_group(d, real_batch, group_id).grad_norm;
}

void write_telemetry_header(std::ostream& out) {
  out << "epoch,group,grad_norm_preclip,clip_rate,d_loss,g_loss\n";
}

void write_telemetry_rows(std::ostream& out, const EpochTelemetry& e) {
  for (int k = 0; k < 2; ++k) {
    out << e.epoch << ',' << k << ',' << format_number(e.grad_norm_preclip[k]) << ','
        << format_number(e.clip_rate[k]) << ',' << format_number(e.d_loss[k]) << ','
        << format_number(e.g_loss) << '\n';
  }
}

void write_telemetry_csv(std::ostream& out, const RunTelemetry& t) {
  write_telemetry_header(out);
  for (const auto& e : t.epochs) write_telemetry_rows(out, e);
}

double mean_grad_gap(const RunTelemetry& t, std::size_t begin, std::size_t end) {
  end = std::min(end, t.epochs.size());
  if (begin >= end) throw ContractError("empty epoch window for gradient gap");
  double acc = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    acc += std::abs(t.epochs[i].grad_norm_preclip[0] - t.epochs[i].grad_norm_preclip[1]);
  }
  return acc / static_cast<double>(end - begin);
}

}  // namespace repfair
