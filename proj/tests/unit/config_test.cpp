#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "repfair/config.hpp"
#include "repfair/errors.hpp"

namespace {

using namespace repfair;

TEST(Spec, DefaultsMatchTheDocumentedGrid) {
  const ExperimentSpec s;
  EXPECT_EQ(s.train.epochs, 200);
  EXPECT_EQ(s.train.batch_size, 64u);
  EXPECT_EQ(s.train.max_grad_norm, 2.0);
  EXPECT_EQ(s.train.lr, 2e-4);
  EXPECT_EQ(s.train.beta1, 0.5);
  EXPECT_EQ(s.seeds.size(), 5u);
  EXPECT_EQ(s.trainer, TrainerKind::kBoth);
  EXPECT_EQ(s.dataset.kind, DatasetKind::kGauss2d);
  EXPECT_NO_THROW(s.validate());
}

TEST(Spec, ParsesKeysCommentsAndLists) {
  const ExperimentSpec s = parse_spec_text(
      "# a comment\n"
      "name = trial   # trailing comment\n"
      "\n"
      "epochs = 12\n"
      "max_grad_norm = none\n"
      "spreads = 0.05, 0.1\n"
      "seeds = 3,4\n"
      "sweep = c\n"
      "sweep_values = 0.5, 2\n"
      "trainer = repfair\n"
      "distance = tv\n");
  EXPECT_EQ(s.name, "trial");
  EXPECT_EQ(s.train.epochs, 12);
  EXPECT_FALSE(s.train.max_grad_norm.has_value());
  EXPECT_EQ(s.dataset.spreads[1], 0.1);
  EXPECT_EQ(s.seeds, (std::vector<std::uint64_t>{3, 4}));
  EXPECT_EQ(s.sweep, SweepAxis::kMaxGradNorm);
  EXPECT_EQ(s.sweep_values, (std::vector<double>{0.5, 2}));
  EXPECT_EQ(s.trainer, TrainerKind::kRepFair);
  EXPECT_EQ(s.distance, Distance::kTV);
}

TEST(Spec, InfiniteNorm) {
  ExperimentSpec s;
  apply_setting(s, "max_grad_norm", "inf");
  ASSERT_TRUE(s.train.max_grad_norm.has_value());
  EXPECT_TRUE(std::isinf(*s.train.max_grad_norm));
}

TEST(Spec, ErrorsNameTheLine) {
  auto message = [](const std::string& text) {
    try {
      parse_spec_text(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("epochs = 3\nbogus = 1\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("epochs = 3\nepochs = 4\n").find("line 2"), std::string::npos);
  EXPECT_NE(message("epochs 3\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("epochs = three\n").find("line 1"), std::string::npos);
  EXPECT_NE(message("seeds = \n"), "no error");
  EXPECT_NE(message("trainer = gan\n"), "no error");
}

TEST(Spec, ValidationRejectsBadGrids) {
  ExperimentSpec s;
  s.seeds.clear();
  EXPECT_THROW(s.validate(), ConfigError);
  s = ExperimentSpec{};
  s.sweep = SweepAxis::kMaxGradNorm;
  s.sweep_values = {1.0, -2.0};
  EXPECT_THROW(s.validate(), ConfigError);
  s.sweep_values = {};
  EXPECT_THROW(s.validate(), ConfigError);
  s = ExperimentSpec{};
  s.sweep = SweepAxis::kGroupRatio;
  s.sweep_values = {0.2, 1.0};
  EXPECT_THROW(s.validate(), ConfigError);
  s = ExperimentSpec{};
  s.audit_samples = 10;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Spec, CanonicalTextRoundTrips) {
  ExperimentSpec s;
  s.name = "roundtrip";
  s.dataset.group_ratio = 0.3;
  s.dataset.spreads = {0.1 / 3.0, 0.2};
  s.train.lr = 1.0 / 3.0 * 1e-3;
  s.train.max_grad_norm = std::nullopt;
  s.sweep = SweepAxis::kGroupRatio;
  s.sweep_values = {0.2, 0.3, 0.4};
  s.seeds = {9, 8};
  const std::string text = spec_text(s);
  const ExperimentSpec back = parse_spec_text(text);
  EXPECT_EQ(spec_text(back), text);
  EXPECT_EQ(back.dataset.spreads[0], s.dataset.spreads[0]);
  EXPECT_EQ(back.train.lr, s.train.lr);
}

TEST(Spec, DatasetBuild) {
  DatasetSpec d;
  d.n_samples = 200;
  EXPECT_EQ(d.build().size(), 200u);
  EXPECT_NEAR(d.build(0.2).group_ratio(), 0.2, 1.0 / 200);
  d.kind = DatasetKind::kBgDigits;
  d.side = 4;
  EXPECT_EQ(d.build().dim(), 16u);
  d.kind = DatasetKind::kCsv;
  EXPECT_THROW(d.build(0.3), ConfigError);
}

}  // namespace
