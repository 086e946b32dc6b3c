#include "repfair/optim.hpp"

#include <cmath>

#include "repfair/errors.hpp"

namespace repfair {

AdamState AdamState::for_params(const NetworkParams& params, AdamConfig config) {
  if (!(config.lr >= 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  AdamState state;
  state.config = config;
  for (const auto& [name, t] : params) {
    state.first_moment.emplace_back(t.size(), 0.0);
    state.second_moment.emplace_back(t.size(), 0.0);
  }
  return state;
}

void adam_step(AdamState& state, NetworkParams& params) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("Adam state is not initialized for these parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, t] = params[i];
    if (state.first_moment[i].size() != t.size()) {
      throw ContractError("Adam moment buffer does not match parameter '" + name + "'");
    }
    if (!t.has_grad()) throw ContractError("gradient missing for parameter '" + name + "'");
  }
  const auto& cfg = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].second;
    auto w = t.data();
    auto g = t.mutable_grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
      g[j] = 0.0;
    }
  }
}

ClipReport clip_grad_norm(NetworkParams& params, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("max gradient norm must be positive");
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("gradient missing for parameter '" + name + "'");
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    }
  }
  ClipReport report;
  report.pre_norm = global_l2_norm(params);
  if (report.pre_norm > max_norm) {
    report.scale = max_norm / (report.pre_norm + kClipDelta);
    report.clipped = true;
    for (auto& [name, t] : params) {
      for (double& g : t.mutable_grad()) g *= report.scale;
    }
    report.post_norm = global_l2_norm(params);
  } else {
    report.post_norm = report.pre_norm;
  }
  return report;
}

}  // namespace repfair
