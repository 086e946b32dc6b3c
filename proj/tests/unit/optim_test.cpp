#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "repfair/errors.hpp"
#include "repfair/optim.hpp"

namespace {

using namespace repfair;

NetworkParams three_four() {
  NetworkParams p;
  p.add("a", Tensor({1}));
  p.add("b", Tensor({1}));
  p.get("a").grad_buffer()[0] = 3;
  p.get("b").grad_buffer()[0] = 4;
  return p;
}

TEST(Clip, BelowThresholdUntouched) {
  NetworkParams p = three_four();
  const ClipReport r = clip_grad_norm(p, 10);
  EXPECT_FALSE(r.clipped);
  EXPECT_EQ(r.pre_norm, 5.0);
  EXPECT_EQ(r.post_norm, 5.0);
  EXPECT_EQ(r.scale, 1.0);
  EXPECT_EQ(p.get("a").grad()[0], 3.0);
  EXPECT_EQ(p.get("b").grad()[0], 4.0);
}

TEST(Clip, AboveThresholdScalesToC) {
  NetworkParams p = three_four();
  const ClipReport r = clip_grad_norm(p, 1);
  EXPECT_TRUE(r.clipped);
  EXPECT_NEAR(r.scale, 0.2, 1e-12);
  EXPECT_NEAR(p.get("a").grad()[0], 0.6, 1e-12);
  EXPECT_NEAR(p.get("b").grad()[0], 0.8, 1e-12);
  EXPECT_NEAR(global_l2_norm(p), 1.0, 1e-12);
  EXPECT_LE(r.post_norm, 1.0 + 1e-9);
  EXPECT_EQ(r.post_norm, global_l2_norm(p));
}

TEST(Clip, ZeroGradsAndInfinity) {
  NetworkParams p;
  p.add("a", Tensor({4}));
  p.get("a").grad_buffer();
  const ClipReport r = clip_grad_norm(p, 0.5);
  EXPECT_EQ(r.pre_norm, 0.0);
  EXPECT_FALSE(r.clipped);
  NetworkParams q = three_four();
  EXPECT_FALSE(clip_grad_norm(q, std::numeric_limits<double>::infinity()).clipped);
  EXPECT_EQ(q.get("b").grad()[0], 4.0);
}

TEST(Clip, Errors) {
  NetworkParams p = three_four();
  EXPECT_THROW(clip_grad_norm(p, 0.0), ConfigError);
  EXPECT_THROW(clip_grad_norm(p, -1.0), ConfigError);
  p.get("b").mutable_grad()[0] = std::nan("");
  try {
    clip_grad_norm(p, 1.0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
}

TEST(Clip, IdempotentAndDirectionPreserving) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    NetworkParams p;
    p.add("w", Tensor({13}));
    p.add("v", Tensor({5, 2}));
    std::vector<double> before;
    for (auto& [name, t] : p) {
      for (auto& g : t.grad_buffer()) {
        g = n(rng);
        before.push_back(g);
      }
    }
    const double c = 0.5 + trial * 0.1;
    const ClipReport r1 = clip_grad_norm(p, c);
    EXPECT_EQ(r1.clipped, r1.pre_norm > c);
    std::vector<double> after;
    for (auto& [name, t] : p) after.insert(after.end(), t.grad().begin(), t.grad().end());
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < after.size(); ++i) {
      dot += before[i] * after[i];
      na += before[i] * before[i];
      nb += after[i] * after[i];
    }
    EXPECT_NEAR(dot / std::sqrt(na * nb), 1.0, 1e-12);
    const ClipReport r2 = clip_grad_norm(p, c);
    EXPECT_FALSE(r2.clipped);
    EXPECT_LE(r2.pre_norm, c + 1e-9);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  NetworkParams p;
  p.add("w", Tensor({1}));
  AdamState s = AdamState::for_params(p, AdamConfig{0.1, 0.5, 0.999, 1e-8});
  p.get("w").grad_buffer()[0] = 1.0;
  adam_step(s, p);
  // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
  EXPECT_NEAR(p.get("w")[0], -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(s.step, 1);
  EXPECT_EQ(p.get("w").grad()[0], 0.0);
}

TEST(Adam, MatchesHandRolledReference) {
  const AdamConfig cfg{0.01, 0.5, 0.999, 1e-8};
  NetworkParams p;
  p.add("w", Tensor::vector({0.3, -0.2}));
  AdamState s = AdamState::for_params(p, cfg);
  double w[2] = {0.3, -0.2}, m[2] = {0, 0}, v[2] = {0, 0};
  const double grads[3][2] = {{0.5, -1.0}, {0.1, 2.0}, {-0.7, 0.0}};
  for (int t = 1; t <= 3; ++t) {
    for (int i = 0; i < 2; ++i) {
      p.get("w").grad_buffer()[i] = grads[t - 1][i];
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * grads[t - 1][i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * grads[t - 1][i] * grads[t - 1][i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, t));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, t));
      w[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
    adam_step(s, p);
    EXPECT_NEAR(p.get("w")[0], w[0], 1e-15);
    EXPECT_NEAR(p.get("w")[1], w[1], 1e-15);
  }
}

TEST(Adam, ZeroGradsAndZeroLrAreIdentity) {
  NetworkParams p;
  p.add("w", Tensor::vector({1.5, -2.5}));
  const NetworkParams orig = p;
  AdamState s = AdamState::for_params(p);
  for (int i = 0; i < 5; ++i) {
    p.get("w").grad_buffer();
    adam_step(s, p);
  }
  EXPECT_EQ(p, orig);
  AdamState z = AdamState::for_params(p, AdamConfig{0.0, 0.5, 0.999, 1e-8});
  p.get("w").grad_buffer()[0] = 3.0;
  adam_step(z, p);
  EXPECT_EQ(p, orig);
}

TEST(Adam, UninitializedStateRejected) {
  NetworkParams p;
  p.add("w", Tensor({1}));
  p.get("w").grad_buffer();
  AdamState s;
  EXPECT_THROW(adam_step(s, p), ContractError);
}

TEST(Adam, IdenticalRunsIdenticalTrajectories) {
  auto run = [] {
    NetworkParams p;
    p.add("w", Tensor::vector({0.1, 0.2, 0.3}));
    AdamState s = AdamState::for_params(p);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    for (int t = 0; t < 20; ++t) {
      for (auto& g : p.get("w").grad_buffer()) g = n(rng);
      adam_step(s, p);
    }
    return p;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
