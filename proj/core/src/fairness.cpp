#include "repfair/fairness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <ostream>

#include "repfair/csv.hpp"
#include "repfair/errors.hpp"
#include "repfair/optim.hpp"

namespace repfair {

std::string to_string(OracleMode mode) {
  switch (mode) {
    case OracleMode::kAnalytic2d:
      return "analytic-2d";
    case OracleMode::kCornerPixel:
      return "corner-pixel";
    case OracleMode::kTrainedClassifier:
      return "trained-classifier";
  }
  return "unknown";
}

AttributeOracle AttributeOracle::analytic_2d() {
  AttributeOracle h;
  h.mode_ = OracleMode::kAnalytic2d;
  h.input_dim_ = 2;
  return h;
}

AttributeOracle AttributeOracle::corner_pixel(std::size_t input_dim, std::size_t pixel) {
  if (pixel >= input_dim) throw ConfigError("corner pixel index outside the image");
  AttributeOracle h;
  h.mode_ = OracleMode::kCornerPixel;
  h.input_dim_ = input_dim;
  h.pixel_ = pixel;
  return h;
}

namespace {

double classifier_accuracy(DiscriminatorNet& net, const Batch& b) {
  const Tensor p = discriminate(net, b.x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < b.sensitive.size(); ++i) {
    hits += ((p[i] > 0.5 ? 1 : 0) == b.sensitive[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(b.sensitive.size());
}

}  // namespace

AttributeOracle AttributeOracle::train_classifier(const GroupedDataset& ds, const ClassifierOptions& opts) {
  if (!(opts.train_fraction > 0.0 && opts.train_fraction < 1.0)) {
    throw ConfigError("classifier train_fraction must lie in (0, 1)");
  }
  if (ds.size() < 4) throw DataError("too few samples to fit an attribute classifier");
  Rng rng(opts.seed);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(opts.train_fraction * static_cast<double>(ds.size()))), 1,
      ds.size() - 1);
  const std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> test_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());

  auto net = std::make_shared<DiscriminatorNet>(
      DiscriminatorNet::create(ds.dim(), {opts.hidden}, 0, 0, derive_seed(opts.seed, 11)));
  AdamState opt = AdamState::for_params(net->params, AdamConfig{opts.lr, 0.9, 0.999, 1e-8});
  std::uniform_int_distribution<std::size_t> pick(0, train_rows.size() - 1);
  std::vector<std::size_t> rows(opts.batch_size);
  for (std::size_t step = 0; step < opts.steps; ++step) {
    for (auto& r : rows) r = train_rows[pick(rng)];
    const Batch b = gather(ds, rows);
    Tensor y({b.sensitive.size(), 1});
    for (std::size_t i = 0; i < b.sensitive.size(); ++i) y[i] = b.sensitive[i];
    Tape tape;
    Var loss = tape.bce(discriminator_forward(tape, *net, tape.constant(b.x), std::nullopt), y);
    tape.backward(loss);
    adam_step(opt, net->params);
  }

  AttributeOracle h;
  h.mode_ = OracleMode::kTrainedClassifier;
  h.input_dim_ = ds.dim();
  h.accuracy_ = classifier_accuracy(*net, gather(ds, test_rows));
  h.classifier_ = std::move(net);
  return h;
}

std::vector<int> AttributeOracle::predict(const Tensor& x) const {
  if (x.rank() != 2 || x.shape()[1] != input_dim_) {
    throw ContractError(to_string(mode_) + " oracle expects [n x " + std::to_string(input_dim_) +
                        "] input, got " + repfair::to_string(x.shape()));
  }
  const std::size_t n = x.shape()[0];
  std::vector<int> out(n);
  switch (mode_) {
    case OracleMode::kAnalytic2d:
      for (std::size_t i = 0; i < n; ++i) out[i] = x.at(i, 0) < 0.0 ? 0 : 1;
      break;
    case OracleMode::kCornerPixel:
      for (std::size_t i = 0; i < n; ++i) out[i] = x.at(i, pixel_) > 0.0 ? 1 : 0;
      break;
    case OracleMode::kTrainedClassifier: {
      const Tensor p = discriminate(*classifier_, x);
      for (std::size_t i = 0; i < n; ++i) out[i] = p[i] > 0.5 ? 1 : 0;
      break;
    }
  }
  return out;
}

std::vector<int> oracle_predict(const AttributeOracle& h, const Tensor& x) { return h.predict(x); }

std::string to_string(Distance d) { return d == Distance::kKL ? "kl" : "tv"; }

Distance parse_distance(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "kl") return Distance::kKL;
  if (lower == "tv") return Distance::kTV;
  throw ConfigError("unknown distance '" + name + "' (expected kl or tv)");
}

double kl_to_uniform(std::span<const double> p) {
  const double k = static_cast<double>(p.size());
  double kl = 0.0;
  for (double pi : p) {
    if (pi > 0.0) kl += pi * std::log(pi * k);
  }
  return std::max(kl, 0.0);
}

double tv_to_uniform(std::span<const double> p) {
  const double u = 1.0 / static_cast<double>(p.size());
  double tv = 0.0;
  for (double pi : p) tv += std::abs(pi - u);
  return 0.5 * tv;
}

FairnessReport report_from_counts(std::size_t count0, std::size_t count1, Distance distance,
                                  std::uint64_t seed) {
  const std::size_t n = count0 + count1;
  if (n == 0) throw ContractError("fairness report needs at least one sample");
  FairnessReport r;
  r.counts = {count0, count1};
  r.frequencies[0] = static_cast<double>(count0) / static_cast<double>(n);
  r.frequencies[1] = static_cast<double>(count1) / static_cast<double>(n);
  r.kl_to_uniform = kl_to_uniform(r.frequencies);
  r.tv_to_uniform = tv_to_uniform(r.frequencies);
  r.distance = distance;
  r.epsilon = r.distance_value(distance);
  r.n_samples = n;
  r.seed = seed;
  return r;
}

FairnessReport sample_and_audit(GeneratorNet& g, const AttributeOracle& h, std::size_t n_samples,
                                NoiseSource& noise, std::optional<int> fixed_class, Distance distance) {
  if (n_samples < 100) throw ContractError("an audit needs at least 100 samples");
  if (fixed_class && !g.conditional()) throw ContractError("class-conditioned audit of an unconditional generator");
  constexpr std::size_t kChunk = 1000;
  std::array<std::size_t, 2> counts{};
  std::uniform_int_distribution<int> pick(0, g.conditional() ? static_cast<int>(g.topology.num_classes) - 1 : 0);
  for (std::size_t done = 0; done < n_samples; done += kChunk) {
    const std::size_t m = std::min(kChunk, n_samples - done);
    const Tensor z = noise.sample(m);
    std::optional<std::vector<int>> labels;
    if (g.conditional()) {
      labels.emplace(m);
      for (int& c : *labels) c = fixed_class ? *fixed_class : pick(noise.rng());
    }
    const Tensor x = labels ? generate(g, z, std::span<const int>(*labels)) : generate(g, z);
    std::vector<int> s;
    try {
      s = h.predict(x);
    } catch (const Error& e) {
      throw ContractError(std::string("attribute oracle failed during audit: ") + e.what());
    }
    for (int v : s) counts[v] += 1;
  }
  FairnessReport r = report_from_counts(counts[0], counts[1], distance, noise.seed());
  r.class_id = fixed_class;
  r.oracle_accuracy = h.accuracy();
  return r;
}

MultiAudit multi_audit(GeneratorNet& g, const AttributeOracle& h, std::size_t n_samples,
                       std::size_t repeats, NoiseSource& noise, Distance distance) {
  if (repeats == 0) throw ContractError("multi_audit needs at least one repeat");
  MultiAudit out;
  for (std::size_t i = 0; i < repeats; ++i) {
    out.audits.push_back(sample_and_audit(g, h, n_samples, noise, std::nullopt, distance));
    out.epsilon = std::max(out.epsilon, out.audits.back().distance_value(distance));
  }
  return out;
}

std::vector<FairnessReport> classwise_audit(GeneratorNet& g, const AttributeOracle& h,
                                            std::size_t n_samples_per_class, NoiseSource& noise) {
  if (!g.conditional()) throw ContractError("classwise_audit needs a conditional generator");
  std::vector<FairnessReport> out;
  for (std::size_t c = 0; c < g.topology.num_classes; ++c) {
    out.push_back(sample_and_audit(g, h, n_samples_per_class, noise, static_cast<int>(c)));
  }
  return out;
}

bool is_eps_fair(const FairnessReport& report, double eps, Distance distance) {
  if (!(eps >= 0.0)) throw ConfigError("epsilon must be non-negative");
  return report.distance_value(distance) <= eps;
}

namespace {

double mean_pairwise(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = a.data().data() + i * d;
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double* y = b.data().data() + j * d;
      double sq = 0.0;
      for (std::size_t k = 0; k < d; ++k) sq += (x[k] - y[k]) * (x[k] - y[k]);
      row += std::sqrt(sq);
    }
    acc += row;
  }
  return acc / (static_cast<double>(n) * static_cast<double>(m));
}

}  // namespace

double quality_proxy(const Tensor& real, const Tensor& fake) {
  if (real.rank() != 2 || fake.rank() != 2 || real.cols() != fake.cols()) {
    throw ContractError("quality_proxy needs two [n x d] sets of equal d, got " + to_string(real.shape()) +
                        " and " + to_string(fake.shape()));
  }
  // Canonical operand order keeps the cross term bit-identical under swap.
  const bool swap = std::lexicographical_compare(fake.data().begin(), fake.data().end(),
                                                 real.data().begin(), real.data().end());
  const Tensor& a = swap ? fake : real;
  const Tensor& b = swap ? real : fake;
  const double ed = 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
  return std::max(ed, 0.0);
}

void write_fairness_header(std::ostream& out, const std::string& prefix_columns) {
  out << prefix_columns
      << "seed,class,n_samples,count0,count1,freq0,freq1,kl_to_uniform,tv_to_uniform,distance,epsilon,"
         "oracle_accuracy\n";
}

void write_fairness_row(std::ostream& out, const FairnessReport& r, const std::string& prefix_cells) {
  out << prefix_cells << r.seed << ',' << (r.class_id ? std::to_string(*r.class_id) : std::string("all")) << ','
      << r.n_samples << ',' << r.counts[0] << ',' << r.counts[1] << ',' << format_number(r.frequencies[0]) << ','
      << format_number(r.frequencies[1]) << ',' << format_number(r.kl_to_uniform) << ','
      << format_number(r.tv_to_uniform) << ',' << to_string(r.distance) << ',' << format_number(r.epsilon) << ','
      << (r.oracle_accuracy ? format_number(*r.oracle_accuracy) : std::string("exact")) << '\n';
}

}  // namespace repfair
