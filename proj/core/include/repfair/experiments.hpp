#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "repfair/config.hpp"
#include "repfair/fairness.hpp"
#include "repfair/trainer.hpp"

namespace repfair {

// One (trainer, sweep point, seed) training run and its audit.
struct RunResult {
  std::string trainer;  // "vanilla" or "repfair"
  std::optional<double> sweep_value;
  std::optional<double> max_grad_norm;
  double group_ratio = 0.5;
  std::uint64_t seed = 0;
  bool diverged = false;
  std::optional<int> divergence_epoch;
  std::string divergence_reason;
  RunTelemetry telemetry;
  // Absent for diverged runs.
  std::optional<FairnessReport> report;
  double initial_quality = 0.0;  // energy distance of the untrained generator
  double final_quality = 0.0;
  bool converged = false;
  bool degenerate = false;
  // |norm0 - norm1| at the final epoch.
  double final_grad_gap = 0.0;
  std::filesystem::path run_dir;
};

struct Summary {
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

// Median of the values (mean of the two middle ones for even counts);
// order-invariant. Throws ContractError on an empty input.
Summary summarize(std::vector<double> values);

// Per (trainer, sweep point) statistics over the seeds that did not diverge.
struct AggregateResult {
  std::string trainer;
  std::optional<double> sweep_value;
  std::size_t runs = 0;
  std::size_t diverged = 0;
  std::size_t non_converged = 0;
  std::size_t degenerate = 0;
  // Statistics below are over runs - diverged completed runs and are left at
  // zero when every run diverged.
  Summary kl;
  Summary tv;
  // |freq0 - freq1|
  Summary freq_gap;
  std::array<double, 2> mean_frequencies{};
  double mean_final_grad_gap = 0.0;
  double median_quality = 0.0;
};

std::vector<AggregateResult> aggregate(const std::vector<RunResult>& runs);

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<RunResult> runs;
  std::vector<AggregateResult> aggregates;
};

// Progress callback invoked after every finished run (from the worker that
// ran it, serialized by the harness).
using ProgressFn = std::function<void(const RunResult&)>;

// Runs one training + audit for the given trainer on `ds`. Divergence is
// captured in the result, never thrown.
RunResult run_single(const ExperimentSpec& spec, const GroupedDataset& ds, bool repfair,
                     std::optional<double> max_grad_norm, std::uint64_t seed,
                     const std::filesystem::path& run_dir = {});

// Executes every (sweep point x trainer x seed) run of the spec and, when
// spec.output_dir is non-empty, writes per-run telemetry, fairness.csv,
// aggregate.csv, metadata.json and the charts. The output directory is
// validated before any training starts.
ExperimentResult run_experiment(const ExperimentSpec& spec, const ProgressFn& progress = {});

// Vanilla and RepFair on identical datasets and seeds (spec.sweep must be none).
struct PairedSummary {
  AggregateResult vanilla;
  AggregateResult repfair;
  // vanilla median gap minus repfair median gap; positive means RepFair is fairer.
  double freq_gap_delta = 0.0;
  double kl_delta = 0.0;
};

PairedSummary compare_baseline(const ExperimentResult& result);
ExperimentResult compare_baseline(const ExperimentSpec& spec, const ProgressFn& progress = {});

// Convenience wrappers that set the sweep axis.
ExperimentResult sweep_max_grad_norm(ExperimentSpec spec, const std::vector<double>& values,
                                     const ProgressFn& progress = {});
ExperimentResult sweep_group_ratio(ExperimentSpec spec, const std::vector<double>& values,
                                   const ProgressFn& progress = {});

// File writers (also used by the CLI's render path).
void write_fairness_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs);
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateResult>& aggs);
void write_metadata_json(const std::filesystem::path& path, const ExperimentSpec& spec,
                         const std::vector<RunResult>& runs);
std::string version_string();

}  // namespace repfair
