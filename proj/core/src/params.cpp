#include "repfair/params.hpp"

#include <algorithm>
#include <cmath>

#include "repfair/errors.hpp"

namespace repfair {

Tensor& NetworkParams::add(std::string name, Tensor t) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  entries_.emplace_back(std::move(name), std::move(t));
  return entries_.back().second;
}

Tensor& NetworkParams::get(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named '" + name + "'");
}

const Tensor& NetworkParams::get(const std::string& name) const {
  return const_cast<NetworkParams*>(this)->get(name);
}

bool NetworkParams::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

std::size_t NetworkParams::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void NetworkParams::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

void NetworkParams::clear_grad() {
  for (auto& [name, t] : entries_) t.clear_grad();
}

double global_l2_norm(const NetworkParams& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw ContractError("gradient missing for parameter '" + name + "'");
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

}  // namespace repfair
