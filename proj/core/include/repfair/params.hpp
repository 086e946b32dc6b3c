#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "repfair/tensor.hpp"

namespace repfair {

// Ordered, uniquely named parameter tensors of one network.
//
// Iteration order is insertion order and never changes. Every tensor added
// here is flagged requires_grad.
class NetworkParams {
 public:
  using Entry = std::pair<std::string, Tensor>;

  Tensor& add(std::string name, Tensor t);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  // Total number of scalar parameters.
  std::size_t element_count() const noexcept;

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  void zero_grad();
  void clear_grad();

  friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
};

// sqrt of the sum of squares of every gradient element of every tensor.
// Throws ContractError naming the first parameter without a gradient.
double global_l2_norm(const NetworkParams& params);

}  // namespace repfair
