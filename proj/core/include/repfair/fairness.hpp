#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "repfair/data.hpp"
#include "repfair/models.hpp"

namespace repfair {

enum class OracleMode { kAnalytic2d, kCornerPixel, kTrainedClassifier };

std::string to_string(OracleMode mode);

struct ClassifierOptions {
  std::size_t hidden = 32;
  std::size_t steps = 400;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

// Sensitive-attribute predictor h: X -> {0, 1}.
//
//  * analytic-2d:        x0 < 0 -> 0, otherwise 1 (the Bayes rule for the
//                        two-Gaussian plane data).
//  * corner-pixel:       designated pixel > 0 on the [-1, 1] scale (0.5 on
//                        [0, 1]) means a light background -> 1.
//  * trained-classifier: one-hidden-layer MLP fitted on a split of real
//                        data; accuracy is measured on the held-out rest.
class AttributeOracle {
 public:
  static AttributeOracle analytic_2d();
  static AttributeOracle corner_pixel(std::size_t input_dim, std::size_t pixel = 0);
  static AttributeOracle train_classifier(const GroupedDataset& ds, const ClassifierOptions& opts = {});

  OracleMode mode() const noexcept { return mode_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  // Held-out accuracy; nullopt for the analytic modes.
  std::optional<double> accuracy() const noexcept { return accuracy_; }

  std::vector<int> predict(const Tensor& x) const;

 private:
  OracleMode mode_ = OracleMode::kAnalytic2d;
  std::size_t input_dim_ = 2;
  std::size_t pixel_ = 0;
  std::optional<double> accuracy_;
  // Shared so oracles stay cheap to copy; predict() never mutates it.
  std::shared_ptr<DiscriminatorNet> classifier_;
};

std::vector<int> oracle_predict(const AttributeOracle& h, const Tensor& x);

enum class Distance { kKL, kTV };

std::string to_string(Distance d);
// "kl" or "tv" (case-insensitive); anything else is a ConfigError.
Distance parse_distance(const std::string& name);

// KL(P || U) in nats with 0 log 0 = 0, and total variation to uniform.
double kl_to_uniform(std::span<const double> p);
double tv_to_uniform(std::span<const double> p);

struct FairnessReport {
  std::array<std::size_t, 2> counts{};
  std::array<double, 2> frequencies{};
  double kl_to_uniform = 0.0;
  double tv_to_uniform = 0.0;
  Distance distance = Distance::kKL;
  // Observed distance under `distance`; for multi-audits the maximum.
  double epsilon = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::optional<int> class_id;
  std::optional<double> oracle_accuracy;

  double distance_value(Distance d) const { return d == Distance::kKL ? kl_to_uniform : tv_to_uniform; }
};

FairnessReport report_from_counts(std::size_t count0, std::size_t count1,
                                  Distance distance = Distance::kKL, std::uint64_t seed = 0);

// Draws n_samples from g (uniform class conditioning when conditional, or
// the fixed class), labels them with h and summarizes the group split.
FairnessReport sample_and_audit(GeneratorNet& g, const AttributeOracle& h, std::size_t n_samples,
                                NoiseSource& noise, std::optional<int> fixed_class = std::nullopt,
                                Distance distance = Distance::kKL);

// Repeated independent audits; epsilon is the maximum distance observed.
struct MultiAudit {
  std::vector<FairnessReport> audits;
  double epsilon = 0.0;
};

MultiAudit multi_audit(GeneratorNet& g, const AttributeOracle& h, std::size_t n_samples,
                       std::size_t repeats, NoiseSource& noise, Distance distance = Distance::kKL);

// One report per class id of a conditional generator.
std::vector<FairnessReport> classwise_audit(GeneratorNet& g, const AttributeOracle& h,
                                            std::size_t n_samples_per_class, NoiseSource& noise);

bool is_eps_fair(const FairnessReport& report, double eps, Distance distance);

// Energy distance (V-statistic) between two empirical distributions:
// 2 E|X-Y| - E|X-X'| - E|Y-Y'|. Symmetric, zero for identical sets.
double quality_proxy(const Tensor& real, const Tensor& fake);

// seed,class,n_samples,count0,count1,freq0,freq1,kl_to_uniform,tv_to_uniform,distance,epsilon,oracle_accuracy
void write_fairness_header(std::ostream& out, const std::string& prefix_columns = "");
void write_fairness_row(std::ostream& out, const FairnessReport& r, const std::string& prefix_cells = "");

}  // namespace repfair
