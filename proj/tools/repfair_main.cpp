#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "repfair/charts.hpp"
#include "repfair/config.hpp"
#include "repfair/csv.hpp"
#include "repfair/errors.hpp"
#include "repfair/experiments.hpp"
#include "repfair/fairness.hpp"
#include "repfair/models.hpp"

namespace {

using namespace repfair;

struct Common {
  std::string spec_path;
  std::vector<std::string> overrides;
  std::string out;
  std::size_t threads = 0;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-s,--spec", c.spec_path, "Experiment spec file (key = value lines)");
  cmd->add_option("--set", c.overrides, "Override a spec setting, e.g. --set epochs=50")->take_all();
  cmd->add_option("-o,--out", c.out, "Output directory (overrides output_dir)");
  cmd->add_option("-j,--threads", c.threads, "Concurrent runs (overrides threads)");
  cmd->add_flag("-q,--quiet", c.quiet, "Do not print per-run progress");
}

ExperimentSpec load(const Common& c) {
  ExperimentSpec spec = c.spec_path.empty() ? ExperimentSpec{} : load_spec(c.spec_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(spec, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!c.out.empty()) spec.output_dir = c.out;
  if (c.threads > 0) spec.threads = c.threads;
  return spec;
}

ProgressFn progress_printer(bool quiet) {
  if (quiet) return {};
  return [](const RunResult& r) {
    std::printf("  %-8s seed %-4llu", r.trainer.c_str(), static_cast<unsigned long long>(r.seed));
    if (r.sweep_value) std::printf(" point %-8s", format_number(*r.sweep_value).c_str());
    if (r.diverged) {
      std::printf(" DIVERGED at epoch %d\n", r.divergence_epoch.value_or(-1));
    } else {
      std::printf(" freq %.3f/%.3f  kl %.5f%s%s\n", r.report->frequencies[0], r.report->frequencies[1],
                  r.report->kl_to_uniform, r.converged ? "" : "  [non-converged]",
                  r.degenerate ? "  [degenerate]" : "");
    }
    std::fflush(stdout);
  };
}

void print_aggregates(const ExperimentResult& res) {
  std::printf("%-8s %-10s %4s %4s %4s %4s %10s %10s %10s %10s\n", "trainer", "point", "runs", "div", "ncv", "deg",
              "kl_med", "kl_min", "kl_max", "gap_med");
  for (const auto& a : res.aggregates) {
    std::printf("%-8s %-10s %4zu %4zu %4zu %4zu %10.5f %10.5f %10.5f %10.4f\n", a.trainer.c_str(),
                a.sweep_value ? format_number(*a.sweep_value).c_str() : "-", a.runs, a.diverged, a.non_converged,
                a.degenerate, a.kl.median, a.kl.min, a.kl.max, a.freq_gap.median);
  }
  if (!res.spec.output_dir.empty()) std::printf("artifacts in %s\n", res.spec.output_dir.string().c_str());
}

AttributeOracle audit_oracle(const std::string& mode, std::size_t dim, std::size_t pixel,
                             const std::string& data_csv, std::uint64_t seed) {
  if (mode == "analytic-2d") return AttributeOracle::analytic_2d();
  if (mode == "corner-pixel") return AttributeOracle::corner_pixel(dim, pixel);
  if (mode == "trained-classifier") {
    if (data_csv.empty()) throw ConfigError("the trained-classifier oracle needs --data");
    ClassifierOptions opts;
    opts.seed = seed;
    return AttributeOracle::train_classifier(read_dataset_csv(data_csv), opts);
  }
  throw ConfigError("unknown oracle '" + mode + "'");
}

int run(int argc, char** argv) {
  CLI::App app{"Group-alternating, norm-clipped GAN training and representational-fairness audits"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  Common train_opts, sweep_c_opts, sweep_r_opts, compare_opts;
  std::string trainer = "repfair";
  auto* train = app.add_subcommand("train", "Train one trainer over the spec's seeds and audit it");
  add_common(train, train_opts);
  train->add_option("-t,--trainer", trainer, "vanilla | repfair | both")->check(CLI::IsMember({"vanilla", "repfair", "both"}));

  std::vector<double> c_values{0.1, 0.5, 1, 2, 10, 20, 50, 100};
  auto* sweep_c = app.add_subcommand("sweep-c", "Sweep the maximum gradient norm C (with a vanilla reference)");
  add_common(sweep_c, sweep_c_opts);
  sweep_c->add_option("--values", c_values, "C values")->delimiter(',');

  std::vector<double> ratios{0.2, 0.3, 0.4};
  auto* sweep_r = app.add_subcommand("sweep-ratio", "Sweep the group-0 share of the dataset (paired trainers)");
  add_common(sweep_r, sweep_r_opts);
  sweep_r->add_option("--values", ratios, "group ratios")->delimiter(',');

  auto* compare = app.add_subcommand("compare", "Vanilla vs RepFair on shared datasets and seeds");
  add_common(compare, compare_opts);

  std::string ckpt, audit_out, oracle = "analytic-2d", distance = "kl", data_csv;
  std::size_t samples = 10000, repeats = 1, pixel = 0;
  std::uint64_t audit_seed = 0;
  std::optional<int> fixed_class;
  bool classwise = false;
  auto* audit = app.add_subcommand("audit", "Audit a generator checkpoint with an attribute oracle");
  audit->add_option("checkpoint", ckpt, "Generator checkpoint file")->required()->check(CLI::ExistingFile);
  audit->add_option("-n,--samples", samples, "Samples per audit");
  audit->add_option("-r,--repeats", repeats, "Independent audits (epsilon is their maximum)");
  audit->add_option("--seed", audit_seed, "Noise seed");
  audit->add_option("--oracle", oracle, "analytic-2d | corner-pixel | trained-classifier");
  audit->add_option("--pixel", pixel, "Pixel index for the corner-pixel oracle");
  audit->add_option("--data", data_csv, "Dataset CSV for fitting the trained-classifier oracle");
  audit->add_option("--distance", distance, "kl | tv");
  audit->add_option("--class", fixed_class, "Condition every sample on this class");
  audit->add_flag("--classwise", classwise, "One audit per class of a conditional generator");
  audit->add_option("-o,--out", audit_out, "Write the reports as CSV here");

  std::string render_dir;
  auto* render = app.add_subcommand("render", "Re-render SVG charts from an output directory's CSV files");
  render->add_option("dir", render_dir, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);

  if (*train) {
    ExperimentSpec spec = load(train_opts);
    spec.trainer = trainer == "vanilla" ? TrainerKind::kVanilla
                   : trainer == "both"  ? TrainerKind::kBoth
                                        : TrainerKind::kRepFair;
    spec.sweep = SweepAxis::kNone;
    spec.sweep_values.clear();
    print_aggregates(run_experiment(spec, progress_printer(train_opts.quiet)));
  } else if (*sweep_c) {
    print_aggregates(sweep_max_grad_norm(load(sweep_c_opts), c_values, progress_printer(sweep_c_opts.quiet)));
  } else if (*sweep_r) {
    ExperimentSpec spec = load(sweep_r_opts);
    spec.trainer = TrainerKind::kBoth;
    print_aggregates(sweep_group_ratio(spec, ratios, progress_printer(sweep_r_opts.quiet)));
  } else if (*compare) {
    const ExperimentResult res = compare_baseline(load(compare_opts), progress_printer(compare_opts.quiet));
    print_aggregates(res);
    const PairedSummary p = compare_baseline(res);
    std::printf("median KL  vanilla %.5f  repfair %.5f  (delta %+.5f)\n", p.vanilla.kl.median, p.repfair.kl.median,
                p.kl_delta);
    std::printf("median |freq0 - freq1|  vanilla %.4f  repfair %.4f  (delta %+.4f)\n", p.vanilla.freq_gap.median,
                p.repfair.freq_gap.median, p.freq_gap_delta);
  } else if (*audit) {
    Checkpoint c = load_checkpoint(ckpt);
    if (c.kind != "generator") throw ConfigError("checkpoint holds a " + c.kind + ", not a generator");
    GeneratorNet g{c.topology, std::move(c.params)};
    const Distance dist = parse_distance(distance);
    const AttributeOracle h = audit_oracle(oracle, g.output_dim(), pixel, data_csv, audit_seed);
    NoiseSource noise(g.noise_dim(), audit_seed);
    std::vector<FairnessReport> reports;
    if (classwise) {
      reports = classwise_audit(g, h, samples, noise);
    } else {
      for (std::size_t i = 0; i < repeats; ++i) {
        reports.push_back(sample_and_audit(g, h, samples, noise, fixed_class, dist));
      }
    }
    double eps = 0.0;
    write_fairness_header(std::cout);
    for (const auto& r : reports) {
      write_fairness_row(std::cout, r);
      eps = std::max(eps, r.distance_value(dist));
    }
    std::printf("epsilon (%s, max over %zu audits) = %.6f\n", to_string(dist).c_str(), reports.size(), eps);
    if (!audit_out.empty()) {
      std::ofstream out(audit_out, std::ios::binary);
      if (!out) throw IoError("cannot write " + audit_out);
      write_fairness_header(out);
      for (const auto& r : reports) write_fairness_row(out, r);
    }
  } else if (*render) {
    render_charts(render_dir);
    std::printf("charts rendered in %s\n", render_dir.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const repfair::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const repfair::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
