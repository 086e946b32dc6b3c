#include "repfair/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "repfair/charts.hpp"
#include "repfair/csv.hpp"
#include "repfair/errors.hpp"
#include "repfair/version.hpp"

namespace repfair {

namespace {

enum Stream : std::uint64_t {
  kGeneratorInit = 100,
  kDiscriminatorInit = 101,
  kAuditNoise = 200,
  kQualityReal = 300,
  kQualityNoise = 301,
  kOracleFit = 400,
};

constexpr std::size_t kQualitySamples = 500;

AttributeOracle make_oracle(const ExperimentSpec& spec, const GroupedDataset& ds) {
  switch (spec.oracle) {
    case OracleMode::kAnalytic2d:
      if (ds.dim() != 2) throw ConfigError("the analytic-2d oracle needs 2D data");
      return AttributeOracle::analytic_2d();
    case OracleMode::kCornerPixel:
      return AttributeOracle::corner_pixel(ds.dim(), spec.oracle_pixel);
    case OracleMode::kTrainedClassifier: {
      ClassifierOptions opts;
      opts.seed = derive_seed(spec.dataset.seed, kOracleFit);
      return AttributeOracle::train_classifier(ds, opts);
    }
  }
  throw ConfigError("unknown oracle");
}

double generator_quality(GeneratorNet& g, const GroupedDataset& ds, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kQualityReal));
  const Batch real = minibatch(ds, kQualitySamples, rng);
  NoiseSource noise(g.noise_dim(), derive_seed(seed, kQualityNoise));
  const Tensor z = noise.sample(kQualitySamples);
  if (!g.conditional()) return quality_proxy(real.x, generate(g, z));
  // Conditional generators are scored on the real batch's labels.
  return quality_proxy(real.x, generate(g, z, std::span<const int>(*real.labels)));
}

std::string point_tag(const ExperimentSpec& spec, std::optional<double> value) {
  if (!value) return "";
  return (spec.sweep == SweepAxis::kMaxGradNorm ? "_C" : "_ratio") + format_number(*value);
}

void ensure_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (std::filesystem::exists(dir, ec) && !std::filesystem::is_directory(dir, ec)) {
    throw IoError("output path " + dir.string() + " exists and is not a directory");
  }
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".write-probe";
  {
    std::ofstream out(probe);
    if (!out || !(out << "ok")) throw IoError("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::ordered_json spec_json(const ExperimentSpec& spec) {
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  std::istringstream lines(spec_text(spec));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    cfg[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return cfg;
}

nlohmann::ordered_json optional_number(std::optional<double> v) {
  if (!v) return nullptr;
  if (!std::isfinite(*v)) return format_number(*v);
  return *v;
}

struct Job {
  const GroupedDataset* ds;
  bool repfair;
  std::optional<double> c;
  std::optional<double> sweep_value;
  double ratio;
  std::uint64_t seed;
  std::filesystem::path run_dir;
};

}  // namespace

std::string version_string() { return std::string(kVersion) + " (" + kGitDescribe + ")"; }

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw ContractError("cannot summarize an empty set of values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  Summary s;
  s.min = values.front();
  s.max = values.back();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

RunResult run_single(const ExperimentSpec& spec, const GroupedDataset& ds, bool repfair,
                     std::optional<double> max_grad_norm, std::uint64_t seed,
                     const std::filesystem::path& run_dir) {
  RunResult r;
  r.trainer = repfair ? "repfair" : "vanilla";
  r.seed = seed;
  r.group_ratio = ds.group_ratio();
  r.run_dir = run_dir;

  TrainConfig cfg = spec.train;
  cfg.seed = seed;
  cfg.max_grad_norm = repfair ? max_grad_norm : std::nullopt;
  if (repfair && !cfg.max_grad_norm) throw ConfigError("the repfair trainer needs max_grad_norm");
  r.max_grad_norm = cfg.max_grad_norm;
  if (cfg.checkpoint_every > 0) {
    if (run_dir.empty()) throw ConfigError("checkpointing needs an output directory");
    cfg.checkpoint_dir = run_dir / "checkpoints";
    std::filesystem::create_directories(cfg.checkpoint_dir);
  }
  const std::size_t classes = cfg.conditional ? ds.num_classes() : 0;
  const std::size_t embed = classes ? spec.embed_dim : 0;
  GeneratorNet g = GeneratorNet::create(cfg.noise_dim, spec.g_hidden, ds.dim(), classes, embed,
                                        derive_seed(seed, kGeneratorInit));
  DiscriminatorNet d = DiscriminatorNet::create(ds.dim(), spec.d_hidden, classes, embed,
                                                derive_seed(seed, kDiscriminatorInit));
  const AttributeOracle oracle = make_oracle(spec, ds);
  r.initial_quality = generator_quality(g, ds, seed);

  // Completed epochs survive a divergence abort.
  std::vector<EpochTelemetry> partial;
  TrainHooks hooks;
  hooks.on_epoch = [&partial](const EpochTelemetry& e) { partial.push_back(e); };
  try {
    r.telemetry = train(g, d, ds, cfg, hooks);
  } catch (const DivergenceError& e) {
    r.telemetry.epochs = std::move(partial);
    r.diverged = true;
    r.divergence_epoch = e.epoch();
    r.divergence_reason = e.what();
  }
  if (!r.diverged) {
    NoiseSource audit_noise(cfg.noise_dim, derive_seed(seed, kAuditNoise));
    r.report = sample_and_audit(g, oracle, spec.audit_samples, audit_noise, std::nullopt, spec.distance);
    r.report->seed = seed;
    r.telemetry.group_frequencies = r.report->frequencies;
    r.final_quality = generator_quality(g, ds, seed);
    r.converged = r.final_quality < spec.convergence_ratio * r.initial_quality;
    r.degenerate = std::max(r.report->frequencies[0], r.report->frequencies[1]) >= spec.degenerate_share;
    if (!r.telemetry.epochs.empty()) {
      const auto& last = r.telemetry.epochs.back();
      r.final_grad_gap = std::abs(last.grad_norm_preclip[0] - last.grad_norm_preclip[1]);
    }
  }

  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    {
      std::ofstream out(run_dir / "telemetry.csv", std::ios::binary);
      if (!out) throw IoError("cannot write telemetry in " + run_dir.string());
      write_telemetry_csv(out, r.telemetry);
    }
    nlohmann::ordered_json meta;
    meta["version"] = kVersion;
    meta["git_describe"] = kGitDescribe;
    meta["trainer"] = r.trainer;
    meta["seed"] = seed;
    meta["max_grad_norm"] = optional_number(r.max_grad_norm);
    meta["group_ratio"] = r.group_ratio;
    meta["fake_step_policy"] = "per_real_batch";
    meta["diverged"] = r.diverged;
    meta["divergence_epoch"] = r.divergence_epoch ? nlohmann::ordered_json(*r.divergence_epoch) : nlohmann::ordered_json(nullptr);
    meta["config"] = spec_json(spec);
    write_text(run_dir / "metadata.json", meta.dump(2) + "\n");
    if (!r.telemetry.epochs.empty()) {
      write_text(run_dir / "grad_norms.svg",
                 grad_norm_chart_svg(read_csv(run_dir / "telemetry.csv"), r.trainer + " seed " + std::to_string(seed)));
    }
  }
  return r;
}

std::vector<AggregateResult> aggregate(const std::vector<RunResult>& runs) {
  std::vector<AggregateResult> out;
  std::vector<std::vector<const RunResult*>> members;
  for (const auto& r : runs) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AggregateResult& a) {
      return a.trainer == r.trainer && a.sweep_value == r.sweep_value;
    });
    if (it == out.end()) {
      AggregateResult a;
      a.trainer = r.trainer;
      a.sweep_value = r.sweep_value;
      out.push_back(a);
      members.emplace_back();
      it = out.end() - 1;
    }
    members[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    AggregateResult& a = out[i];
    // Sorting by seed keeps sums independent of run order.
    auto ms = members[i];
    std::sort(ms.begin(), ms.end(), [](const RunResult* x, const RunResult* y) { return x->seed < y->seed; });
    std::vector<double> kl, tv, gap, quality;
    std::array<double, 2> freq_sum{};
    double grad_gap_sum = 0.0;
    for (const RunResult* r : ms) {
      a.runs += 1;
      if (r->diverged) {
        a.diverged += 1;
        continue;
      }
      a.non_converged += r->converged ? 0 : 1;
      a.degenerate += r->degenerate ? 1 : 0;
      kl.push_back(r->report->kl_to_uniform);
      tv.push_back(r->report->tv_to_uniform);
      gap.push_back(std::abs(r->report->frequencies[0] - r->report->frequencies[1]));
      quality.push_back(r->final_quality);
      freq_sum[0] += r->report->frequencies[0];
      freq_sum[1] += r->report->frequencies[1];
      grad_gap_sum += r->final_grad_gap;
    }
    if (!kl.empty()) {
      const auto n = static_cast<double>(kl.size());
      a.kl = summarize(kl);
      a.tv = summarize(tv);
      a.freq_gap = summarize(gap);
      a.mean_frequencies = {freq_sum[0] / n, freq_sum[1] / n};
      a.mean_final_grad_gap = grad_gap_sum / n;
      a.median_quality = summarize(quality).median;
    }
  }
  return out;
}

void write_fairness_csv(const std::filesystem::path& path, const std::vector<RunResult>& runs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_fairness_header(out, "trainer,sweep_value,max_grad_norm,group_ratio,status,converged,energy_distance,");
  for (const auto& r : runs) {
    std::string prefix = r.trainer + ',' + (r.sweep_value ? format_number(*r.sweep_value) : "none") + ',' +
                         (r.max_grad_norm ? format_number(*r.max_grad_norm) : "none") + ',' +
                         format_number(r.group_ratio) + ',';
    if (r.diverged) {
      out << prefix << "diverged,0,nan," << r.seed << ",all,0,0,0,nan,nan,nan,nan,none,nan,nan\n";
      continue;
    }
    prefix += std::string(r.degenerate ? "degenerate" : "ok") + ',' + (r.converged ? "1" : "0") + ',' +
              format_number(r.final_quality) + ',';
    write_fairness_row(out, *r.report, prefix);
  }
}

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateResult>& aggs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "trainer,sweep_value,runs,diverged,non_converged,degenerate,kl_median,kl_min,kl_max,tv_median,tv_min,"
         "tv_max,freq_gap_median,freq_gap_min,freq_gap_max,freq0_mean,freq1_mean,final_grad_gap_mean,"
         "quality_median\n";
  for (const auto& a : aggs) {
    const auto f = format_number;
    out << a.trainer << ',' << (a.sweep_value ? f(*a.sweep_value) : "none") << ',' << a.runs << ',' << a.diverged
        << ',' << a.non_converged << ',' << a.degenerate << ',' << f(a.kl.median) << ',' << f(a.kl.min) << ','
        << f(a.kl.max) << ',' << f(a.tv.median) << ',' << f(a.tv.min) << ',' << f(a.tv.max) << ','
        << f(a.freq_gap.median) << ',' << f(a.freq_gap.min) << ',' << f(a.freq_gap.max) << ','
        << f(a.mean_frequencies[0]) << ',' << f(a.mean_frequencies[1]) << ',' << f(a.mean_final_grad_gap) << ','
        << f(a.median_quality) << '\n';
  }
}

void write_metadata_json(const std::filesystem::path& path, const ExperimentSpec& spec,
                         const std::vector<RunResult>& runs) {
  nlohmann::ordered_json meta;
  meta["name"] = spec.name;
  meta["version"] = kVersion;
  meta["git_describe"] = kGitDescribe;
  meta["fake_step_policy"] = "per_real_batch";
  meta["config"] = spec_json(spec);
  meta["seeds"] = spec.seeds;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& r : runs) {
    nlohmann::ordered_json j;
    j["trainer"] = r.trainer;
    j["seed"] = r.seed;
    j["sweep_value"] = optional_number(r.sweep_value);
    j["max_grad_norm"] = optional_number(r.max_grad_norm);
    j["diverged"] = r.diverged;
    j["run_dir"] = r.run_dir.filename().string();
    list.push_back(j);
  }
  meta["runs"] = list;
  write_text(path, meta.dump(2) + "\n");
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const ProgressFn& progress) {
  spec.validate();
  const bool write = !spec.output_dir.empty();
  if (write) ensure_output_dir(spec.output_dir);

  const bool with_vanilla = spec.trainer != TrainerKind::kRepFair;
  const bool with_repfair = spec.trainer != TrainerKind::kVanilla;

  // Datasets first so every trainer and seed of a point shares one instance.
  std::vector<std::optional<double>> points;
  if (spec.sweep == SweepAxis::kNone) {
    points.emplace_back();
  } else {
    for (double v : spec.sweep_values) points.emplace_back(v);
  }
  std::vector<GroupedDataset> datasets;
  if (spec.sweep == SweepAxis::kGroupRatio) {
    for (const auto& p : points) datasets.push_back(spec.dataset.build(*p));
  } else {
    datasets.push_back(spec.dataset.build());
  }

  std::vector<Job> jobs;
  const auto dir_for = [&](const std::string& trainer, std::optional<double> point, std::uint64_t seed) {
    if (!write) return std::filesystem::path{};
    return spec.output_dir / "runs" / (trainer + point_tag(spec, point) + "_seed" + std::to_string(seed));
  };
  const auto add = [&](const GroupedDataset& ds, bool repfair, std::optional<double> c,
                       std::optional<double> point) {
    for (auto seed : spec.seeds) {
      jobs.push_back(Job{&ds, repfair, c, point, ds.group_ratio(), seed,
                         dir_for(repfair ? "repfair" : "vanilla", point, seed)});
    }
  };
  if (spec.sweep == SweepAxis::kMaxGradNorm) {
    if (with_vanilla) add(datasets[0], false, std::nullopt, std::nullopt);
    for (const auto& p : points) add(datasets[0], true, *p, p);
  } else {
    for (std::size_t i = 0; i < points.size(); ++i) {
      const GroupedDataset& ds = datasets[spec.sweep == SweepAxis::kGroupRatio ? i : 0];
      if (with_vanilla) add(ds, false, std::nullopt, points[i]);
      if (with_repfair) add(ds, true, spec.train.max_grad_norm, points[i]);
    }
  }

  ExperimentResult result;
  result.spec = spec;
  result.runs.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const Job& job = jobs[i];
        RunResult r = run_single(spec, *job.ds, job.repfair, job.c, job.seed, job.run_dir);
        r.sweep_value = job.sweep_value;
        std::lock_guard lock(mu);
        result.runs[i] = std::move(r);
        if (progress) progress(result.runs[i]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
        return;
      }
    }
  };
  const std::size_t n_threads = std::min(spec.threads, std::max<std::size_t>(jobs.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  result.aggregates = aggregate(result.runs);
  if (write) {
    write_fairness_csv(spec.output_dir / "fairness.csv", result.runs);
    write_aggregate_csv(spec.output_dir / "aggregate.csv", result.aggregates);
    write_metadata_json(spec.output_dir / "metadata.json", spec, result.runs);
    render_charts(spec.output_dir);
  }
  return result;
}

PairedSummary compare_baseline(const ExperimentResult& result) {
  PairedSummary s;
  bool have_v = false, have_r = false;
  for (const auto& a : result.aggregates) {
    if (a.sweep_value) throw ContractError("compare_baseline expects an experiment without a sweep axis");
    if (a.trainer == "vanilla") s.vanilla = a, have_v = true;
    if (a.trainer == "repfair") s.repfair = a, have_r = true;
  }
  if (!have_v || !have_r) throw ContractError("compare_baseline needs both vanilla and repfair runs");
  s.freq_gap_delta = s.vanilla.freq_gap.median - s.repfair.freq_gap.median;
  s.kl_delta = s.vanilla.kl.median - s.repfair.kl.median;
  return s;
}

ExperimentResult compare_baseline(const ExperimentSpec& spec, const ProgressFn& progress) {
  if (spec.sweep != SweepAxis::kNone) throw ConfigError("compare needs a spec without a sweep axis");
  ExperimentSpec s = spec;
  s.trainer = TrainerKind::kBoth;
  return run_experiment(s, progress);
}

ExperimentResult sweep_max_grad_norm(ExperimentSpec spec, const std::vector<double>& values,
                                     const ProgressFn& progress) {
  spec.sweep = SweepAxis::kMaxGradNorm;
  spec.sweep_values = values;
  if (spec.trainer == TrainerKind::kVanilla) spec.trainer = TrainerKind::kBoth;
  return run_experiment(spec, progress);
}

ExperimentResult sweep_group_ratio(ExperimentSpec spec, const std::vector<double>& values,
                                   const ProgressFn& progress) {
  spec.sweep = SweepAxis::kGroupRatio;
  spec.sweep_values = values;
  return run_experiment(spec, progress);
}

}  // namespace repfair
