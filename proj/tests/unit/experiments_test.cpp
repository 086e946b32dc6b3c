#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "repfair/charts.hpp"
#include "repfair/csv.hpp"
#include "repfair/errors.hpp"
#include "repfair/experiments.hpp"

namespace {

using namespace repfair;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentSpec tiny_spec(const std::string& out) {
  ExperimentSpec s;
  s.name = "tiny";
  s.dataset.n_samples = 128;
  s.train.epochs = 2;
  s.train.batch_size = 32;
  s.train.probe_batches = 1;
  s.g_hidden = {16, 16};
  s.d_hidden = {16, 16};
  s.seeds = {1, 2};
  s.audit_samples = 500;
  s.output_dir = out.empty() ? fs::path{} : fs::temp_directory_path() / out;
  if (!out.empty()) fs::remove_all(s.output_dir);
  return s;
}

TEST(Summary, MedianMinMax) {
  const Summary odd = summarize({3, 1, 2});
  EXPECT_EQ(odd.median, 2);
  EXPECT_EQ(odd.min, 1);
  EXPECT_EQ(odd.max, 3);
  EXPECT_EQ(summarize({4, 1, 3, 2}).median, 2.5);
  EXPECT_EQ(summarize({2, 4, 1, 3}).median, 2.5);
  EXPECT_THROW(summarize({}), ContractError);
}

TEST(Aggregate, CountsDivergedRunsWithoutDroppingThem) {
  std::vector<RunResult> runs(3);
  for (std::size_t i = 0; i < 3; ++i) {
    runs[i].trainer = "repfair";
    runs[i].sweep_value = 0.1;
    runs[i].seed = i + 1;
  }
  runs[0].diverged = true;
  runs[1].report = report_from_counts(60, 40);
  runs[1].converged = true;
  runs[2].report = report_from_counts(100, 0);
  runs[2].degenerate = true;
  const auto aggs = aggregate(runs);
  ASSERT_EQ(aggs.size(), 1u);
  EXPECT_EQ(aggs[0].runs, 3u);
  EXPECT_EQ(aggs[0].diverged, 1u);
  EXPECT_EQ(aggs[0].degenerate, 1u);
  EXPECT_EQ(aggs[0].non_converged, 1u);
  EXPECT_NEAR(aggs[0].kl.max, std::log(2.0), 1e-15);
  EXPECT_NEAR(aggs[0].freq_gap.median, 0.6, 1e-12);
  EXPECT_NEAR(aggs[0].mean_frequencies[0], 0.8, 1e-12);
}

TEST(Experiment, SmokeRunWritesArtifacts) {
  ExperimentSpec s = tiny_spec("repfair_exp_smoke");
  s.train.epochs = 0;
  s.seeds = {1};
  const ExperimentResult r = run_experiment(s);
  ASSERT_EQ(r.runs.size(), 2u);
  EXPECT_EQ(r.runs[0].trainer, "vanilla");
  EXPECT_EQ(r.runs[1].trainer, "repfair");
  for (const char* f : {"fairness.csv", "aggregate.csv", "metadata.json", "frequency.svg"}) {
    EXPECT_TRUE(fs::exists(s.output_dir / f)) << f;
  }
  EXPECT_TRUE(fs::exists(s.output_dir / "runs" / "vanilla_seed1" / "telemetry.csv"));
  // untrained generators share the same init, so both audits agree
  EXPECT_EQ(r.runs[0].report->counts, r.runs[1].report->counts);
  const auto meta = nlohmann::json::parse(slurp(s.output_dir / "metadata.json"));
  EXPECT_TRUE(meta.contains("config"));
  EXPECT_TRUE(meta.contains("git_describe"));
  const auto run_meta = nlohmann::json::parse(slurp(s.output_dir / "runs" / "repfair_seed1" / "metadata.json"));
  EXPECT_EQ(run_meta["seed"], 1);
  EXPECT_EQ(run_meta["fake_step_policy"], "per_real_batch");
}

TEST(Experiment, UnwritableOutputFailsBeforeTraining) {
  const fs::path file = fs::temp_directory_path() / "repfair_exp_blocker";
  { std::ofstream(file) << "x"; }
  ExperimentSpec s = tiny_spec("");
  s.output_dir = file / "sub";
  bool trained = false;
  EXPECT_THROW(run_experiment(s, [&](const RunResult&) { trained = true; }), IoError);
  EXPECT_FALSE(trained);
}

TEST(Experiment, RepeatRunsAreByteIdentical) {
  ExperimentSpec a = tiny_spec("repfair_exp_rep_a");
  ExperimentSpec b = tiny_spec("repfair_exp_rep_b");
  b.threads = 2;  // scheduling must not change any byte
  run_experiment(a);
  run_experiment(b);
  for (const char* f : {"fairness.csv", "aggregate.csv", "frequency.svg", "runs/repfair_seed2/telemetry.csv",
                        "runs/vanilla_seed1/grad_norms.svg"}) {
    EXPECT_EQ(slurp(a.output_dir / f), slurp(b.output_dir / f)) << f;
  }
}

TEST(Experiment, CSweepLayout) {
  ExperimentSpec s = tiny_spec("repfair_exp_csweep");
  s.seeds = {1};
  const ExperimentResult r = sweep_max_grad_norm(s, {0.1, 100});
  ASSERT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.runs[0].trainer, "vanilla");
  EXPECT_FALSE(r.runs[0].sweep_value.has_value());
  EXPECT_EQ(r.runs[1].max_grad_norm, 0.1);
  EXPECT_EQ(r.runs[2].max_grad_norm, 100.0);
  EXPECT_TRUE(fs::exists(s.output_dir / "sweep.svg"));
  EXPECT_TRUE(fs::exists(s.output_dir / "runs" / "repfair_C0.1_seed1"));
}

TEST(Experiment, RatioSweepPairsTrainers) {
  ExperimentSpec s = tiny_spec("repfair_exp_ratio");
  s.seeds = {1};
  const ExperimentResult r = sweep_group_ratio(s, {0.2, 0.4});
  ASSERT_EQ(r.runs.size(), 4u);
  // realized share of the 128-sample dataset
  EXPECT_NEAR(r.runs[0].group_ratio, 0.2, 1.0 / 128);
  EXPECT_NEAR(r.runs[3].group_ratio, 0.4, 1.0 / 128);
  EXPECT_EQ(r.runs[0].sweep_value, 0.2);
  EXPECT_EQ(r.aggregates.size(), 4u);
}

TEST(Experiment, CompareBaselinePairs) {
  ExperimentSpec s = tiny_spec("");
  const ExperimentResult r = compare_baseline(s);
  const PairedSummary p = compare_baseline(r);
  EXPECT_EQ(p.vanilla.trainer, "vanilla");
  EXPECT_EQ(p.repfair.trainer, "repfair");
  EXPECT_DOUBLE_EQ(p.kl_delta, p.vanilla.kl.median - p.repfair.kl.median);
  s.sweep = SweepAxis::kMaxGradNorm;
  s.sweep_values = {1.0};
  EXPECT_THROW(compare_baseline(s), ConfigError);
}

TEST(Csv, NumberFormatting) {
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(format_number(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_TRUE(std::isnan(parse_number("nan")));
  EXPECT_EQ(parse_number("2.5"), 2.5);
}

CsvTable aggregate_table(const std::vector<std::vector<std::string>>& rows) {
  CsvTable t;
  t.header = {"trainer", "sweep_value", "runs", "diverged", "kl_median", "kl_min", "kl_max", "freq0_mean",
              "freq1_mean"};
  t.rows = rows;
  return t;
}

TEST(Charts, FrequencyBarsSumToHundredPercent) {
  const CsvTable t = aggregate_table({{"vanilla", "", "5", "0", "0.1", "0", "0.2", "0.6667", "0.3333"},
                                      {"repfair", "", "5", "5", "0", "0", "0", "nan", "nan"}});
  const std::string svg = frequency_chart_svg(t, "freq");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("sum 100%"), std::string::npos);
  EXPECT_NE(svg.find("66.7%"), std::string::npos);
  EXPECT_NE(svg.find("33.3%"), std::string::npos);
  EXPECT_NE(svg.find("all diverged"), std::string::npos);
  EXPECT_EQ(svg, frequency_chart_svg(t, "freq"));
}

TEST(Charts, SweepAndGradNormCharts) {
  const CsvTable agg = aggregate_table({{"vanilla", "none", "2", "0", "0.3", "0.2", "0.4", "0.5", "0.5"},
                                        {"repfair", "0.1", "2", "1", "0.6", "0.6", "0.6", "1", "0"},
                                        {"repfair", "2", "2", "0", "0.01", "0", "0.02", "0.5", "0.5"}});
  const std::string sweep = sweep_chart_svg(agg, "sweep");
  EXPECT_NE(sweep.find("stroke-dasharray"), std::string::npos);
  EXPECT_NE(sweep.find("data-value=\"0.6\""), std::string::npos);

  CsvTable tel;
  tel.header = {"epoch", "group", "grad_norm_preclip", "clip_rate", "d_loss", "g_loss"};
  tel.rows = {{"0", "0", "1.5", "0", "0.7", "0.7"}, {"0", "1", "2.5", "0", "0.7", "0.7"},
              {"1", "0", "1.25", "0", "0.7", "0.7"}, {"1", "1", "2", "0", "0.7", "0.7"}};
  const std::string g = grad_norm_chart_svg(tel, "norms");
  EXPECT_NE(g.find("data-value=\"1.25\""), std::string::npos);
  EXPECT_NE(g.find("<polyline"), std::string::npos);

  CsvTable broken;
  broken.header = {"epoch"};
  EXPECT_THROW(grad_norm_chart_svg(broken, "x"), ChartError);
  tel.rows.clear();
  EXPECT_THROW(grad_norm_chart_svg(tel, "x"), ChartError);
}

TEST(Charts, RenderReproducesFiles) {
  ExperimentSpec s = tiny_spec("repfair_exp_render");
  s.seeds = {1};
  run_experiment(s);
  const std::string freq = slurp(s.output_dir / "frequency.svg");
  const std::string norms = slurp(s.output_dir / "runs" / "repfair_seed1" / "grad_norms.svg");
  fs::remove(s.output_dir / "frequency.svg");
  render_charts(s.output_dir);
  EXPECT_EQ(slurp(s.output_dir / "frequency.svg"), freq);
  EXPECT_EQ(slurp(s.output_dir / "runs" / "repfair_seed1" / "grad_norms.svg"), norms);
}

}  // namespace
