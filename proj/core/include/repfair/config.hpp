#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "repfair/data.hpp"
#include "repfair/fairness.hpp"
#include "repfair/trainer.hpp"

namespace repfair {

enum class DatasetKind { kGauss2d, kBgDigits, kMnistIdx, kCsv };
enum class TrainerKind { kVanilla, kRepFair, kBoth };
enum class SweepAxis { kNone, kMaxGradNorm, kGroupRatio };

std::string to_string(DatasetKind k);
std::string to_string(TrainerKind k);
std::string to_string(SweepAxis a);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGauss2d;
  std::size_t n_samples = 1024;
  double group_ratio = 0.5;
  std::uint64_t seed = 0;
  double separation = 0.5;
  std::array<double, 2> spreads{0.04, 0.2};
  std::size_t side = 8;
  GroupTransform transform = GroupTransform::kInvert;
  std::filesystem::path images;
  std::filesystem::path labels;
  std::filesystem::path csv;
  std::size_t num_classes = 0;

  // Builds the dataset; `group_ratio` overrides the spec value (ratio sweeps).
  GroupedDataset build(std::optional<double> group_ratio = std::nullopt) const;
};

// TrainConfig defaults with the RepFair clipping norm C = 2 filled in.
inline TrainConfig default_experiment_train() {
  TrainConfig c;
  c.max_grad_norm = 2.0;
  return c;
}

// Everything a harness invocation needs. Parsed from a plain-text file of
// `key = value` lines; `#` starts a comment, lists are comma-separated.
struct ExperimentSpec {
  std::string name = "experiment";
  DatasetSpec dataset;
  // max_grad_norm is RepFair's C; vanilla runs ignore it.
  TrainConfig train = default_experiment_train();
  std::vector<std::size_t> g_hidden{128, 256};
  std::vector<std::size_t> d_hidden{256, 128};
  std::size_t embed_dim = 16;
  TrainerKind trainer = TrainerKind::kBoth;
  SweepAxis sweep = SweepAxis::kNone;
  std::vector<double> sweep_values;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::size_t audit_samples = 10000;
  Distance distance = Distance::kKL;
  OracleMode oracle = OracleMode::kAnalytic2d;
  std::size_t oracle_pixel = 0;
  // A run is flagged non-converged when its final energy distance to the
  // data exceeds this fraction of the untrained generator's.
  double convergence_ratio = 0.5;
  // Frequencies at or beyond this share for one group count as degenerate.
  double degenerate_share = 0.99;
  std::size_t threads = 1;
  std::filesystem::path output_dir = "out";

  void validate() const;
};

// Throws ConfigError naming the 1-based line for malformed lines, unknown or
// repeated keys and invalid values.
ExperimentSpec parse_spec(std::istream& in);
ExperimentSpec parse_spec_text(const std::string& text);
ExperimentSpec load_spec(const std::filesystem::path& path);

// Applies one `key = value` assignment (CLI overrides use the same syntax).
void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value);

// Canonical text form; parse_spec(write_spec(s)) reproduces s.
void write_spec(std::ostream& out, const ExperimentSpec& spec);
std::string spec_text(const ExperimentSpec& spec);

}  // namespace repfair
