#pragma once

#include <cstdint>
#include <vector>

#include "repfair/params.hpp"

namespace repfair {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam moments for one network. Build it with for_params(); a
// default-constructed state is uninitialized and adam_step rejects it.
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;

  static AdamState for_params(const NetworkParams& params, AdamConfig config = {});
};

// One bias-corrected Adam update from the populated gradients, which are
// zeroed afterwards.
void adam_step(AdamState& state, NetworkParams& params);

struct ClipReport {
  double pre_norm = 0.0;
  double post_norm = 0.0;
  bool clipped = false;
  double scale = 1.0;
};

inline constexpr double kClipDelta = 1e-12;

// Global-L2 norm clipping: when the joint gradient norm g exceeds max_norm,
// every gradient element is scaled by max_norm / (g + kClipDelta).
// max_norm may be +infinity (never clips).
ClipReport clip_grad_norm(NetworkParams& params, double max_norm);

}  // namespace repfair
