#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "repfair/errors.hpp"
#include "repfair/fairness.hpp"

namespace {

using namespace repfair;

// Generator whose output is a constant point c (zero weights, head bias atanh(c)).
GeneratorNet constant_generator(double x0, double x1, std::size_t classes = 0) {
  GeneratorNet g = GeneratorNet::create(3, {4}, 2, classes, classes ? 2 : 0, 1);
  for (auto& [name, t] : g.params) {
    if (name != "embed") {
      for (auto& v : t.data()) v = 0.0;
    }
  }
  g.params.get("fc1.bias")[0] = std::atanh(x0);
  g.params.get("fc1.bias")[1] = std::atanh(x1);
  return g;
}

TEST(Oracle, AnalyticSignRule) {
  const AttributeOracle h = AttributeOracle::analytic_2d();
  EXPECT_EQ(h.mode(), OracleMode::kAnalytic2d);
  EXPECT_EQ(h.predict(Tensor::matrix({{-0.7, 0.1}, {0.3, -0.9}})), (std::vector<int>{0, 1}));
  EXPECT_FALSE(h.accuracy().has_value());
  EXPECT_THROW(h.predict(Tensor({2, 3}, 0.0)), ContractError);
}

TEST(Oracle, CornerPixelThreshold) {
  const AttributeOracle h = AttributeOracle::corner_pixel(4, 0);
  // intensity 0.9 on [0, 1] is 0.8 on [-1, 1]
  EXPECT_EQ(h.predict(Tensor::matrix({{0.8, 0, 0, 0}, {-0.8, 1, 1, 1}})), (std::vector<int>{1, 0}));
  EXPECT_THROW(AttributeOracle::corner_pixel(4, 4), ConfigError);
  EXPECT_THROW(h.predict(Tensor({1, 2}, 0.0)), ContractError);
  const AttributeOracle last = AttributeOracle::corner_pixel(4, 3);
  EXPECT_EQ(last.predict(Tensor::matrix({{0.8, 0, 0, -0.5}})), (std::vector<int>{0}));
}

TEST(Oracle, TrainedClassifierOnGlyphs) {
  const GroupedDataset ds = make_bgdigits({2000, 0.5, 7, 8, GroupTransform::kInvert});
  ClassifierOptions opts;
  opts.seed = 3;
  const AttributeOracle h = AttributeOracle::train_classifier(ds, opts);
  ASSERT_TRUE(h.accuracy().has_value());
  EXPECT_GE(*h.accuracy(), 0.98);
  // independent held-out data
  const GroupedDataset fresh = make_bgdigits({1000, 0.5, 99, 8, GroupTransform::kInvert});
  const auto pred = h.predict(fresh.samples());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == fresh.sensitive()[i];
  EXPECT_GE(static_cast<double>(ok) / 1000.0, 0.98);
  for (int v : pred) EXPECT_TRUE(v == 0 || v == 1);
}

TEST(Oracle, TrainedClassifierOnShadedGlyphs) {
  const GroupedDataset ds = make_bgdigits({2000, 0.5, 7, 8, GroupTransform::kShade});
  const AttributeOracle h = AttributeOracle::train_classifier(ds);
  EXPECT_GE(*h.accuracy(), 0.95);
}

TEST(Metrics, CountExamples) {
  const FairnessReport even = report_from_counts(5000, 5000);
  EXPECT_EQ(even.kl_to_uniform, 0.0);
  EXPECT_EQ(even.epsilon, 0.0);
  const FairnessReport sixty = report_from_counts(6000, 4000);
  EXPECT_NEAR(sixty.kl_to_uniform, 0.6 * std::log(1.2) + 0.4 * std::log(0.8), 1e-15);
  EXPECT_NEAR(sixty.kl_to_uniform, 0.02014, 5e-6);
  EXPECT_NEAR(sixty.tv_to_uniform, 0.1, 1e-15);
  const FairnessReport all0 = report_from_counts(10000, 0);
  EXPECT_NEAR(all0.kl_to_uniform, std::log(2.0), 1e-15);
  EXPECT_NEAR(all0.tv_to_uniform, 0.5, 1e-15);
  EXPECT_NEAR(all0.frequencies[0] + all0.frequencies[1], 1.0, 1e-9);
  EXPECT_THROW(report_from_counts(0, 0), ContractError);
}

TEST(Metrics, RelabelingInvarianceAndBounds) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> u(0, 10000);
  for (int i = 0; i < 200; ++i) {
    const std::size_t a = u(rng), b = 10000 - a;
    const FairnessReport r = report_from_counts(a, b), s = report_from_counts(b, a);
    EXPECT_NEAR(r.kl_to_uniform, s.kl_to_uniform, 1e-15);
    EXPECT_NEAR(r.tv_to_uniform, s.tv_to_uniform, 1e-15);
    EXPECT_GE(r.kl_to_uniform, 0.0);
    EXPECT_LE(r.kl_to_uniform, std::log(2.0) + 1e-15);
    EXPECT_LE(r.tv_to_uniform, 1.0);
    EXPECT_EQ(r.kl_to_uniform == 0.0, a == b);
  }
}

TEST(Metrics, EpsFair) {
  EXPECT_TRUE(is_eps_fair(report_from_counts(50, 50), 0.0, Distance::kKL));
  EXPECT_FALSE(is_eps_fair(report_from_counts(6000, 4000), 0.01, Distance::kKL));
  EXPECT_TRUE(is_eps_fair(report_from_counts(6000, 4000), 0.1, Distance::kTV));
  EXPECT_TRUE(is_eps_fair(report_from_counts(100, 0), std::log(2.0), Distance::kKL));
  EXPECT_THROW(is_eps_fair(report_from_counts(1, 1), -0.1, Distance::kKL), ConfigError);
  EXPECT_EQ(parse_distance("KL"), Distance::kKL);
  EXPECT_EQ(parse_distance("tv"), Distance::kTV);
  EXPECT_THROW(parse_distance("js"), ConfigError);
}

TEST(Audit, ConstantGeneratorsAreDegenerate) {
  GeneratorNet left = constant_generator(-0.5, 0.0);
  NoiseSource noise(3, 1);
  const FairnessReport r = sample_and_audit(left, AttributeOracle::analytic_2d(), 1000, noise);
  EXPECT_EQ(r.counts[0], 1000u);
  EXPECT_NEAR(r.kl_to_uniform, std::log(2.0), 1e-15);
  EXPECT_EQ(r.n_samples, 1000u);
  EXPECT_THROW(sample_and_audit(left, AttributeOracle::analytic_2d(), 99, noise), ContractError);
  EXPECT_THROW(sample_and_audit(left, AttributeOracle::corner_pixel(5), 100, noise), ContractError);
}

TEST(Audit, LargeAuditsConverge) {
  GeneratorNet g = GeneratorNet::create(3, {16}, 2, 0, 0, 4);
  NoiseSource a(3, 10), b(3, 11);
  const auto h = AttributeOracle::analytic_2d();
  const FairnessReport ra = sample_and_audit(g, h, 100000, a);
  const FairnessReport rb = sample_and_audit(g, h, 100000, b);
  EXPECT_LT(std::abs(ra.frequencies[0] - rb.frequencies[0]), 0.01);
}

TEST(Audit, MultiAuditReportsMaximum) {
  GeneratorNet g = GeneratorNet::create(3, {16}, 2, 0, 0, 4);
  NoiseSource noise(3, 2);
  const MultiAudit m = multi_audit(g, AttributeOracle::analytic_2d(), 200, 6, noise);
  ASSERT_EQ(m.audits.size(), 6u);
  double mx = 0.0;
  for (const auto& r : m.audits) mx = std::max(mx, r.kl_to_uniform);
  EXPECT_EQ(m.epsilon, mx);
  double mean = 0.0;
  for (const auto& r : m.audits) mean += r.kl_to_uniform / 6.0;
  EXPECT_GE(m.epsilon, mean);
}

TEST(Audit, ClasswiseMatchesPooled) {
  GeneratorNet g = GeneratorNet::create(3, {16}, 2, 10, 4, 6);
  GeneratorNet plain = GeneratorNet::create(3, {16}, 2, 0, 0, 6);
  const auto h = AttributeOracle::analytic_2d();
  NoiseSource noise(3, 3);
  EXPECT_THROW(classwise_audit(plain, h, 100, noise), ContractError);
  const auto per_class = classwise_audit(g, h, 2000, noise);
  ASSERT_EQ(per_class.size(), 10u);
  std::size_t c0 = 0, total = 0;
  for (std::size_t c = 0; c < 10; ++c) {
    EXPECT_EQ(per_class[c].class_id, static_cast<int>(c));
    EXPECT_NEAR(per_class[c].frequencies[0] + per_class[c].frequencies[1], 1.0, 1e-9);
    c0 += per_class[c].counts[0];
    total += per_class[c].n_samples;
  }
  NoiseSource pooled_noise(3, 4);
  const FairnessReport pooled = sample_and_audit(g, h, 20000, pooled_noise);
  const double p = pooled.frequencies[0];
  const double agg = static_cast<double>(c0) / static_cast<double>(total);
  const double sd = std::sqrt(p * (1 - p) * (1.0 / 20000 + 1.0 / static_cast<double>(total)));
  EXPECT_LT(std::abs(agg - p), 4 * sd + 1e-12);
}

TEST(Quality, EnergyDistanceProperties) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  auto draw = [&](double shift) {
    Tensor t({2000, 2});
    for (std::size_t i = 0; i < 2000; ++i) {
      t.at(i, 0) = n(rng) + shift;
      t.at(i, 1) = n(rng);
    }
    return t;
  };
  const Tensor a = draw(0), b = draw(0), far = draw(2);
  EXPECT_EQ(quality_proxy(a, a), 0.0);
  EXPECT_LT(quality_proxy(a, b), quality_proxy(a, far));
  EXPECT_DOUBLE_EQ(quality_proxy(a, far), quality_proxy(far, a));
  EXPECT_THROW(quality_proxy(a, Tensor({3, 3}, 0.0)), ContractError);
}

TEST(Quality, MatchesDirectFormulaOnSmallSets) {
  const Tensor x = Tensor::matrix({{0, 0}, {1, 0}});
  const Tensor y = Tensor::matrix({{0, 1}});
  // 2 E|X-Y| - E|X-X'| - E|Y-Y'| over all ordered pairs
  const double exy = (1.0 + std::sqrt(2.0)) / 2.0;
  const double exx = (0 + 1 + 1 + 0) / 4.0;
  EXPECT_NEAR(quality_proxy(x, y), 2 * exy - exx - 0.0, 1e-15);
}

TEST(Report, CsvRow) {
  std::ostringstream s;
  write_fairness_header(s);
  FairnessReport r = report_from_counts(6, 4, Distance::kKL, 9);
  write_fairness_row(s, r);
  std::istringstream in(s.str());
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header,
            "seed,class,n_samples,count0,count1,freq0,freq1,kl_to_uniform,tv_to_uniform,distance,epsilon,"
            "oracle_accuracy");
  EXPECT_EQ(row.substr(0, 14), "9,all,10,6,4,0");
}

}  // namespace
