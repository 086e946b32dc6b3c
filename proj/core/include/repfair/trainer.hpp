#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "repfair/data.hpp"
#include "repfair/models.hpp"
#include "repfair/optim.hpp"

namespace repfair {

// Losses above this (or non-finite) abort a run.
inline constexpr double kDivergenceLoss = 1e6;

struct TrainConfig {
  int epochs = 200;
  std::size_t batch_size = 64;
  // Maximum discriminator gradient norm C. nullopt selects the vanilla
  // baseline (no clipping, no alternation).
  std::optional<double> max_grad_norm;
  // Feed real batches from groups 0,1,0,1,... (reset to group 0 each epoch).
  bool alternate_groups = true;
  bool clip_fake_step = false;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t noise_dim = 8;
  bool conditional = false;
  std::uint64_t seed = 0;
  // 0 derives ceil(N / batch_size); rounded up to even when alternating so
  // both groups get the same number of real steps per epoch.
  std::size_t batches_per_epoch = 0;
  // Single-group measurement batches per group per epoch.
  std::size_t probe_batches = 4;
  // Write generator/discriminator checkpoints every K epochs (0 = never).
  int checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;

  void validate() const;
  AdamConfig adam() const { return AdamConfig{lr, beta1, beta2, adam_eps}; }
  bool repfair() const noexcept { return max_grad_norm.has_value(); }
};

std::size_t resolve_batches_per_epoch(const TrainConfig& cfg, std::size_t dataset_size,
                                      bool alternating);

struct EpochTelemetry {
  int epoch = 0;
  // Mean pre-clip discriminator gradient norm on single-group real batches.
  // Taken from the real training steps when groups alternate, otherwise
  // from the measurement probes.
  std::array<double, 2> grad_norm_preclip{};
  // Probe-measured norms, available for every trainer.
  std::array<double, 2> probe_grad_norm{};
  std::array<double, 2> clip_rate{};
  // Mean real-sample discriminator BCE per group (same source as grad_norm_preclip).
  std::array<double, 2> d_loss{};
  double d_fake_loss = 0.0;
  double g_loss = 0.0;
  double wall_seconds = 0.0;
};

struct RunTelemetry {
  std::vector<EpochTelemetry> epochs;
  std::size_t batches_per_epoch = 0;
  // Real discriminator steps per group; mixed steps count under neither.
  std::array<std::size_t, 2> real_steps{};
  std::size_t mixed_real_steps = 0;
  std::size_t clipped_real_steps = 0;
  // Filled after training by an audit; sums to 1.
  std::optional<std::array<double, 2>> group_frequencies;
  double total_seconds = 0.0;
};

// One discriminator-real / discriminator-fake / generator triple.
struct StepRecord {
  int epoch = 0;
  std::size_t batch = 0;
  int real_group = -1;  // -1 for a mixed batch
  ClipReport real_clip;
  std::optional<ClipReport> fake_clip;
  double d_real_loss = 0.0;
  double d_fake_loss = 0.0;
  double g_loss = 0.0;
};

// Optional observation points; none of them may mutate training state.
struct TrainHooks {
  // Real-batch discriminator gradients right before clipping.
  std::function<void(const NetworkParams&)> before_clip;
  // Same gradients right after clipping (before the Adam step).
  std::function<void(const NetworkParams&, const ClipReport&)> after_clip;
  std::function<void(const StepRecord&, const GeneratorNet&, const DiscriminatorNet&)> on_step;
  std::function<void(const EpochTelemetry&)> on_epoch;
};

// Classic GAN training: mixed-group real batches, no clipping. Requires
// cfg.max_grad_norm == nullopt.
RunTelemetry train_vanilla(GeneratorNet& g, DiscriminatorNet& d, const GroupedDataset& ds,
                           const TrainConfig& cfg, const TrainHooks& hooks = {});

// Group-alternating, norm-clipped discriminator training. Requires
// cfg.max_grad_norm > 0 (may be +infinity).
RunTelemetry train_repfair(GeneratorNet& g, DiscriminatorNet& d, const GroupedDataset& ds,
                           const TrainConfig& cfg, const TrainHooks& hooks = {});

// Dispatches on cfg.max_grad_norm.
RunTelemetry train(GeneratorNet& g, DiscriminatorNet& d, const GroupedDataset& ds,
                   const TrainConfig& cfg, const TrainHooks& hooks = {});

struct GroupProbe {
  double grad_norm = 0.0;
  double loss = 0.0;
};

// Real-sample discriminator loss and its global gradient norm on a
// single-group batch, without updating anything. Existing gradients are
// restored afterwards.
GroupProbe probe_group(DiscriminatorNet& d, const Batch& real_batch, int group_id);
double record_group_grad_norm(DiscriminatorNet& d, const Batch& real_batch, int group_id);

// epoch,group,grad_norm_preclip,clip_rate,d_loss,g_loss
void write_telemetry_header(std::ostream& out);
void write_telemetry_rows(std::ostream& out, const EpochTelemetry& e);
void write_telemetry_csv(std::ostream& out, const RunTelemetry& t);

// |norm0 - norm1| averaged over the epochs in [begin, end).
double mean_grad_gap(const RunTelemetry& t, std::size_t begin, std::size_t end);

}  // namespace repfair
