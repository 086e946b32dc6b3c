#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "repfair/params.hpp"
#include "repfair/tape.hpp"
#include "repfair/tensor.hpp"

namespace repfair {

inline constexpr double kLeakySlope = 0.2;

// Dense network shape. A non-zero num_classes makes the network conditional:
// an embed_dim-wide label embedding is concatenated to the input.
struct Topology {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  std::size_t num_classes = 0;
  std::size_t embed_dim = 0;

  bool conditional() const noexcept { return num_classes > 0; }
  void validate() const;

  friend bool operator==(const Topology&, const Topology&) = default;
};

std::size_t parameter_count(const Topology& topo);

// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer; the
// label embedding ~ N(0, 1). Parameter names: "embed", "fc<i>.weight",
// "fc<i>.bias". Weights are stored [fan_in x fan_out].
NetworkParams init_params(const Topology& topo, std::uint64_t seed);

// Generator: R^n (+ label embedding) -> [-1, 1]^d with a tanh head.
struct GeneratorNet {
  Topology topology;
  NetworkParams params;

  static GeneratorNet create(std::size_t noise_dim, std::vector<std::size_t> hidden,
                             std::size_t output_dim, std::size_t num_classes,
                             std::size_t embed_dim, std::uint64_t seed);

  std::size_t noise_dim() const noexcept { return topology.input_dim; }
  std::size_t output_dim() const noexcept { return topology.output_dim; }
  bool conditional() const noexcept { return topology.conditional(); }
};

// Discriminator: R^d (+ label embedding) -> probability of "real".
struct DiscriminatorNet {
  Topology topology;
  NetworkParams params;

  static DiscriminatorNet create(std::size_t input_dim, std::vector<std::size_t> hidden,
                                 std::size_t num_classes, std::size_t embed_dim,
                                 std::uint64_t seed);

  std::size_t input_dim() const noexcept { return topology.input_dim; }
  bool conditional() const noexcept { return topology.conditional(); }
};

// Records the generator on `tape`. Parameter gradients are tracked only when
// `track_params` is set. `labels` must be present iff g is conditional.
Var generator_forward(Tape& tape, GeneratorNet& g, Var z,
                      std::optional<std::span<const int>> labels, bool track_params = true);

Var discriminator_forward(Tape& tape, DiscriminatorNet& d, Var x,
                          std::optional<std::span<const int>> labels, bool track_params = true);

// Gradient-free conveniences.
Tensor generate(GeneratorNet& g, const Tensor& z, std::optional<std::span<const int>> labels = {});
Tensor discriminate(DiscriminatorNet& d, const Tensor& x,
                    std::optional<std::span<const int>> labels = {});

// Text checkpoint of a topology and its parameters. Values are written as
// C99 hex-float literals so a reload is bit-exact.
void write_checkpoint(std::ostream& out, const std::string& kind, const Topology& topo,
                      const NetworkParams& params);
void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const Topology& topo, const NetworkParams& params);

struct Checkpoint {
  std::string kind;
  Topology topology;
  NetworkParams params;
};

Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace repfair
