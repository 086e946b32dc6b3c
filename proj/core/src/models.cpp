#include "repfair/models.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "repfair/errors.hpp"

namespace repfair {

void Topology::validate() const {
  if (input_dim == 0) throw ConfigError("topology input_dim must be positive");
  if (output_dim == 0) throw ConfigError("topology output_dim must be positive");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("topology has a zero-size hidden layer");
  }
  if (num_classes > 0 && embed_dim == 0) {
    throw ConfigError("conditional topology needs a positive embed_dim");
  }
}

namespace {

std::vector<std::size_t> layer_widths(const Topology& topo) {
  std::vector<std::size_t> widths;
  widths.push_back(topo.input_dim + (topo.conditional() ? topo.embed_dim : 0));
  widths.insert(widths.end(), topo.hidden.begin(), topo.hidden.end());
  widths.push_back(topo.output_dim);
  return widths;
}

std::string weight_name(std::size_t layer) { return "fc" + std::to_string(layer) + ".weight"; }
std::string bias_name(std::size_t layer) { return "fc" + std::to_string(layer) + ".bias"; }

// Shared MLP body: optional embedding concat, leaky-relu hidden layers, and
// a linear output layer (the head activation is applied by the caller).
Var mlp_forward(Tape& tape, const Topology& topo, NetworkParams& params, Var x,
                std::optional<std::span<const int>> labels, bool track) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2 || xv.shape()[1] != topo.input_dim) {
    throw DimensionError("network expects [batch x " + std::to_string(topo.input_dim) +
                         "] input, got " + to_string(xv.shape()));
  }
  const std::size_t batch = xv.shape()[0];
  if (topo.conditional()) {
    if (!labels) throw ContractError("conditional network needs class labels");
    if (labels->size() != batch) {
      throw ContractError("label count " + std::to_string(labels->size()) +
                          " does not match batch of " + std::to_string(batch));
    }
    Var emb = tape.embedding(tape.leaf(params.get("embed"), track), *labels);
    x = tape.concat_cols(x, emb);
  } else if (labels) {
    throw ContractError("labels passed to an unconditional network");
  }
  const std::size_t layers = topo.hidden.size() + 1;
  Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.linear(h, tape.leaf(params.get(weight_name(l)), track),
                    tape.leaf(params.get(bias_name(l)), track));
    if (l + 1 < layers) h = tape.leaky_relu(h, kLeakySlope);
  }
  return h;
}

}  // namespace

std::size_t parameter_count(const Topology& topo) {
  topo.validate();
  const auto widths = layer_widths(topo);
  std::size_t n = topo.conditional() ? topo.num_classes * topo.embed_dim : 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += widths[l] * widths[l + 1] + widths[l + 1];
  return n;
}

NetworkParams init_params(const Topology& topo, std::uint64_t seed) {
  topo.validate();
  std::mt19937_64 rng(seed);
  NetworkParams params;
  if (topo.conditional()) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor table({topo.num_classes, topo.embed_dim});
    for (double& v : table.data()) v = normal(rng);
    params.add("embed", std::move(table));
  }
  const auto widths = layer_widths(topo);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Tensor w({widths[l], widths[l + 1]});
    for (double& v : w.data()) v = uni(rng);
    Tensor b({widths[l + 1]});
    for (double& v : b.data()) v = uni(rng);
    params.add(weight_name(l), std::move(w));
    params.add(bias_name(l), std::move(b));
  }
  return params;
}

GeneratorNet GeneratorNet::create(std::size_t noise_dim, std::vector<std::size_t> hidden,
                                  std::size_t output_dim, std::size_t num_classes,
                                  std::size_t embed_dim, std::uint64_t seed) {
  Topology topo{noise_dim, std::move(hidden), output_dim, num_classes,
                num_classes > 0 ? embed_dim : 0};
  auto params = init_params(topo, seed);
  return GeneratorNet{std::move(topo), std::move(params)};
}

DiscriminatorNet DiscriminatorNet::create(std::size_t input_dim, std::vector<std::size_t> hidden,
                                          std::size_t num_classes, std::size_t embed_dim,
                                          std::uint64_t seed) {
  Topology topo{input_dim, std::move(hidden), 1, num_classes, num_classes > 0 ? embed_dim : 0};
  auto params = init_params(topo, seed);
  return DiscriminatorNet{std::move(topo), std::move(params)};
}

Var generator_forward(Tape& tape, GeneratorNet& g, Var z,
                      std::optional<std::span<const int>> labels, bool track_params) {
  return tape.tanh(mlp_forward(tape, g.topology, g.params, z, labels, track_params));
}

Var discriminator_forward(Tape& tape, DiscriminatorNet& d, Var x,
                          std::optional<std::span<const int>> labels, bool track_params) {
  return tape.sigmoid(mlp_forward(tape, d.topology, d.params, x, labels, track_params));
}

Tensor generate(GeneratorNet& g, const Tensor& z, std::optional<std::span<const int>> labels) {
  Tape tape;
  Var out = generator_forward(tape, g, tape.constant(z), labels, false);
  return tape.value(out);
}

Tensor discriminate(DiscriminatorNet& d, const Tensor& x, std::optional<std::span<const int>> labels) {
  Tape tape;
  Var out = discriminator_forward(tape, d, tape.constant(x), labels, false);
  return tape.value(out);
}

// Checkpoint layout (line oriented, whitespace separated):
//   repfair-checkpoint 1
//   kind <generator|discriminator|...>
//   topology <input_dim> <output_dim> <num_classes> <embed_dim> <n_hidden> <h...>
//   tensors <count>
//   tensor <name> <rank> <extents...>
//   <values as hex floats, one line>
//   ...
void write_checkpoint(std::ostream& out, const std::string& kind, const Topology& topo,
                      const NetworkParams& params) {
  out << "repfair-checkpoint 1\n";
  out << "kind " << kind << "\n";
  out << "topology " << topo.input_dim << ' ' << topo.output_dim << ' ' << topo.num_classes << ' '
      << topo.embed_dim << ' ' << topo.hidden.size();
  for (auto h : topo.hidden) out << ' ' << h;
  out << "\ntensors " << params.size() << "\n";
  char buf[64];
  for (const auto& [name, t] : params) {
    out << "tensor " << name << ' ' << t.rank();
    for (auto e : t.shape()) out << ' ' << e;
    out << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%a", t[i]);
      if (i) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

void save_checkpoint(const std::filesystem::path& path, const std::string& kind,
                     const Topology& topo, const NetworkParams& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(out, kind, topo, params);
  if (!out) throw IoError("failed while writing checkpoint " + path.string());
}

namespace {

void expect_token(std::istream& in, const std::string& want) {
  std::string got;
  if (!(in >> got) || got != want) {
    throw IoError("checkpoint: expected '" + want + "', got '" + got + "'");
  }
}

template <typename T>
T read_value(std::istream& in, const char* what) {
  T v{};
  if (!(in >> v)) throw IoError(std::string("checkpoint: cannot read ") + what);
  return v;
}

}  // namespace

Checkpoint read_checkpoint(std::istream& in) {
  Checkpoint ck;
  expect_token(in, "repfair-checkpoint");
  if (read_value<int>(in, "version") != 1) throw IoError("checkpoint: unsupported version");
  expect_token(in, "kind");
  ck.kind = read_value<std::string>(in, "kind");
  expect_token(in, "topology");
  ck.topology.input_dim = read_value<std::size_t>(in, "input_dim");
  ck.topology.output_dim = read_value<std::size_t>(in, "output_dim");
  ck.topology.num_classes = read_value<std::size_t>(in, "num_classes");
  ck.topology.embed_dim = read_value<std::size_t>(in, "embed_dim");
  const auto n_hidden = read_value<std::size_t>(in, "hidden count");
  for (std::size_t i = 0; i < n_hidden; ++i) ck.topology.hidden.push_back(read_value<std::size_t>(in, "hidden"));
  ck.topology.validate();
  expect_token(in, "tensors");
  const auto count = read_value<std::size_t>(in, "tensor count");
  for (std::size_t k = 0; k < count; ++k) {
    expect_token(in, "tensor");
    auto name = read_value<std::string>(in, "tensor name");
    const auto rank = read_value<std::size_t>(in, "rank");
    Shape shape(rank);
    for (auto& e : shape) e = read_value<std::size_t>(in, "extent");
    std::vector<double> data(element_count(shape));
    std::string tok;
    for (double& v : data) {
      if (!(in >> tok)) throw IoError("checkpoint: truncated values for '" + name + "'");
      char* end = nullptr;
      v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw IoError("checkpoint: bad value '" + tok + "'");
    }
    ck.params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const auto reference = init_params(ck.topology, 0);
  if (reference.size() != ck.params.size()) throw IoError("checkpoint: tensor set does not match topology");
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i].first != ck.params[i].first ||
        reference[i].second.shape() != ck.params[i].second.shape()) {
      throw IoError("checkpoint: tensor '" + ck.params[i].first + "' does not match topology");
    }
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace repfair
