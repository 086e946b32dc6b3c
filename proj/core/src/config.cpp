#include "repfair/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "repfair/csv.hpp"
#include "repfair/errors.hpp"

namespace repfair {

std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::kGauss2d:
      return "gauss2d";
    case DatasetKind::kBgDigits:
      return "bgdigits";
    case DatasetKind::kMnistIdx:
      return "mnist-idx";
    case DatasetKind::kCsv:
      return "csv";
  }
  return "unknown";
}

std::string to_string(TrainerKind k) {
  switch (k) {
    case TrainerKind::kVanilla:
      return "vanilla";
    case TrainerKind::kRepFair:
      return "repfair";
    case TrainerKind::kBoth:
      return "both";
  }
  return "unknown";
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::kNone:
      return "none";
    case SweepAxis::kMaxGradNorm:
      return "max_grad_norm";
    case SweepAxis::kGroupRatio:
      return "group_ratio";
  }
  return "unknown";
}

GroupedDataset DatasetSpec::build(std::optional<double> ratio) const {
  const double r = ratio.value_or(group_ratio);
  switch (kind) {
    case DatasetKind::kGauss2d:
      return make_gauss2d(Gauss2dParams{n_samples, r, seed, separation, spreads});
    case DatasetKind::kBgDigits:
      return make_bgdigits(BgDigitsParams{n_samples, r, seed, side, transform});
    case DatasetKind::kMnistIdx:
      // Group 1 is the inverted fraction, so its share is 1 - ratio.
      return load_mnist_idx(images, labels, 1.0 - r, seed);
    case DatasetKind::kCsv:
      if (ratio) throw ConfigError("group_ratio sweeps need a generated dataset, not a CSV file");
      return read_dataset_csv(csv, num_classes);
  }
  throw ConfigError("unknown dataset kind");
}

void ExperimentSpec::validate() const {
  train.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (audit_samples < 100) throw ConfigError("audit_samples must be at least 100");
  if (g_hidden.empty() || d_hidden.empty()) throw ConfigError("hidden layer lists must not be empty");
  if (threads == 0) throw ConfigError("threads must be positive");
  if (!(convergence_ratio > 0.0)) throw ConfigError("convergence_ratio must be positive");
  if (!(degenerate_share > 0.5 && degenerate_share <= 1.0)) {
    throw ConfigError("degenerate_share must lie in (0.5, 1]");
  }
  if (sweep == SweepAxis::kNone) {
    if (!sweep_values.empty()) throw ConfigError("sweep_values given without a sweep axis");
  } else {
    if (sweep_values.empty()) throw ConfigError("sweep " + to_string(sweep) + " needs sweep_values");
    for (double v : sweep_values) {
      if (!(v > 0.0)) throw ConfigError("sweep values must be strictly positive");
      if (sweep == SweepAxis::kGroupRatio && !(v < 1.0)) throw ConfigError("group ratios must lie in (0, 1)");
    }
  }
  if (sweep == SweepAxis::kMaxGradNorm && trainer == TrainerKind::kVanilla) {
    throw ConfigError("a max_grad_norm sweep needs the repfair trainer");
  }
  if (train.conditional && dataset.kind == DatasetKind::kGauss2d) {
    throw ConfigError("the gauss2d dataset has no class labels for conditional training");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty list element in '" + v + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

double to_double(const std::string& v) {
  try {
    return parse_number(lower(v));
  } catch (const Error&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& v) {
  if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("integer out of range: '" + v + "'");
  }
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

int to_int(const std::string& v) {
  const auto u = to_u64(v);
  if (u > 1000000000ULL) throw ConfigError("integer too large: '" + v + "'");
  return static_cast<int>(u);
}

bool to_bool(const std::string& v) {
  const auto l = lower(v);
  if (l == "true" || l == "yes" || l == "on" || l == "1") return true;
  if (l == "false" || l == "no" || l == "off" || l == "0") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F convert) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) out.push_back(convert(item));
  return out;
}

using Setter = std::function<void(ExperimentSpec&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"name", [](ExperimentSpec& s, const std::string& v) { s.name = v; }},
      {"dataset",
       [](ExperimentSpec& s, const std::string& v) {
         const auto l = lower(v);
         if (l == "gauss2d") s.dataset.kind = DatasetKind::kGauss2d;
         else if (l == "bgdigits") s.dataset.kind = DatasetKind::kBgDigits;
         else if (l == "mnist-idx") s.dataset.kind = DatasetKind::kMnistIdx;
         else if (l == "csv") s.dataset.kind = DatasetKind::kCsv;
         else throw ConfigError("unknown dataset '" + v + "'");
       }},
      {"n_samples", [](ExperimentSpec& s, const std::string& v) { s.dataset.n_samples = to_size(v); }},
      {"group_ratio", [](ExperimentSpec& s, const std::string& v) { s.dataset.group_ratio = to_double(v); }},
      {"data_seed", [](ExperimentSpec& s, const std::string& v) { s.dataset.seed = to_u64(v); }},
      {"separation", [](ExperimentSpec& s, const std::string& v) { s.dataset.separation = to_double(v); }},
      {"spreads",
       [](ExperimentSpec& s, const std::string& v) {
         const auto xs = to_list<double>(v, to_double);
         if (xs.size() != 2) throw ConfigError("spreads needs exactly two values");
         s.dataset.spreads = {xs[0], xs[1]};
       }},
      {"side", [](ExperimentSpec& s, const std::string& v) { s.dataset.side = to_size(v); }},
      {"transform",
       [](ExperimentSpec& s, const std::string& v) {
         const auto l = lower(v);
         if (l == "invert") s.dataset.transform = GroupTransform::kInvert;
         else if (l == "shade") s.dataset.transform = GroupTransform::kShade;
         else throw ConfigError("unknown transform '" + v + "'");
       }},
      {"images", [](ExperimentSpec& s, const std::string& v) { s.dataset.images = v; }},
      {"labels", [](ExperimentSpec& s, const std::string& v) { s.dataset.labels = v; }},
      {"csv", [](ExperimentSpec& s, const std::string& v) { s.dataset.csv = v; }},
      {"num_classes", [](ExperimentSpec& s, const std::string& v) { s.dataset.num_classes = to_size(v); }},
      {"epochs", [](ExperimentSpec& s, const std::string& v) { s.train.epochs = to_int(v); }},
      {"batch_size", [](ExperimentSpec& s, const std::string& v) { s.train.batch_size = to_size(v); }},
      {"max_grad_norm",
       [](ExperimentSpec& s, const std::string& v) {
         if (lower(v) == "none") s.train.max_grad_norm.reset();
         else s.train.max_grad_norm = to_double(v);
       }},
      {"alternate_groups", [](ExperimentSpec& s, const std::string& v) { s.train.alternate_groups = to_bool(v); }},
      {"clip_fake_step", [](ExperimentSpec& s, const std::string& v) { s.train.clip_fake_step = to_bool(v); }},
      {"lr", [](ExperimentSpec& s, const std::string& v) { s.train.lr = to_double(v); }},
      {"beta1", [](ExperimentSpec& s, const std::string& v) { s.train.beta1 = to_double(v); }},
      {"beta2", [](ExperimentSpec& s, const std::string& v) { s.train.beta2 = to_double(v); }},
      {"adam_eps", [](ExperimentSpec& s, const std::string& v) { s.train.adam_eps = to_double(v); }},
      {"noise_dim", [](ExperimentSpec& s, const std::string& v) { s.train.noise_dim = to_size(v); }},
      {"conditional", [](ExperimentSpec& s, const std::string& v) { s.train.conditional = to_bool(v); }},
      {"batches_per_epoch",
       [](ExperimentSpec& s, const std::string& v) { s.train.batches_per_epoch = to_size(v); }},
      {"probe_batches", [](ExperimentSpec& s, const std::string& v) { s.train.probe_batches = to_size(v); }},
      {"checkpoint_every", [](ExperimentSpec& s, const std::string& v) { s.train.checkpoint_every = to_int(v); }},
      {"g_hidden", [](ExperimentSpec& s, const std::string& v) { s.g_hidden = to_list<std::size_t>(v, to_size); }},
      {"d_hidden", [](ExperimentSpec& s, const std::string& v) { s.d_hidden = to_list<std::size_t>(v, to_size); }},
      {"embed_dim", [](ExperimentSpec& s, const std::string& v) { s.embed_dim = to_size(v); }},
      {"trainer",
       [](ExperimentSpec& s, const std::string& v) {
         const auto l = lower(v);
         if (l == "vanilla") s.trainer = TrainerKind::kVanilla;
         else if (l == "repfair") s.trainer = TrainerKind::kRepFair;
         else if (l == "both") s.trainer = TrainerKind::kBoth;
         else throw ConfigError("unknown trainer '" + v + "'");
       }},
      {"sweep",
       [](ExperimentSpec& s, const std::string& v) {
         const auto l = lower(v);
         if (l == "none") s.sweep = SweepAxis::kNone;
         else if (l == "max_grad_norm" || l == "c") s.sweep = SweepAxis::kMaxGradNorm;
         else if (l == "group_ratio" || l == "ratio") s.sweep = SweepAxis::kGroupRatio;
         else throw ConfigError("unknown sweep axis '" + v + "'");
       }},
      {"sweep_values", [](ExperimentSpec& s, const std::string& v) { s.sweep_values = to_list<double>(v, to_double); }},
      {"seeds", [](ExperimentSpec& s, const std::string& v) { s.seeds = to_list<std::uint64_t>(v, to_u64); }},
      {"audit_samples", [](ExperimentSpec& s, const std::string& v) { s.audit_samples = to_size(v); }},
      {"distance", [](ExperimentSpec& s, const std::string& v) { s.distance = parse_distance(v); }},
      {"oracle",
       [](ExperimentSpec& s, const std::string& v) {
         const auto l = lower(v);
         if (l == "analytic-2d") s.oracle = OracleMode::kAnalytic2d;
         else if (l == "corner-pixel") s.oracle = OracleMode::kCornerPixel;
         else if (l == "trained-classifier") s.oracle = OracleMode::kTrainedClassifier;
         else throw ConfigError("unknown oracle '" + v + "'");
       }},
      {"oracle_pixel", [](ExperimentSpec& s, const std::string& v) { s.oracle_pixel = to_size(v); }},
      {"convergence_ratio", [](ExperimentSpec& s, const std::string& v) { s.convergence_ratio = to_double(v); }},
      {"degenerate_share", [](ExperimentSpec& s, const std::string& v) { s.degenerate_share = to_double(v); }},
      {"threads", [](ExperimentSpec& s, const std::string& v) { s.threads = to_size(v); }},
      {"output_dir", [](ExperimentSpec& s, const std::string& v) { s.output_dir = v; }},
  };
  return table;
}

std::string exact(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    out += fmt(xs[i]);
  }
  return out;
}

std::string transform_name(GroupTransform t) { return t == GroupTransform::kInvert ? "invert" : "shade"; }

}  // namespace

void apply_setting(ExperimentSpec& spec, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown setting '" + key + "'");
  it->second(spec, value);
}

ExperimentSpec parse_spec(std::istream& in) {
  ExperimentSpec spec;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto at = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + "expected 'key = value'");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(at + "missing key");
    if (value.empty()) throw ConfigError(at + "missing value for '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(at + "'" + key + "' set twice");
    try {
      apply_setting(spec, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(at + e.what());
    }
  }
  spec.validate();
  return spec;
}

ExperimentSpec parse_spec_text(const std::string& text) {
  std::istringstream in(text);
  return parse_spec(in);
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open spec file " + path.string());
  return parse_spec(in);
}

void write_spec(std::ostream& out, const ExperimentSpec& s) {
  const auto u = [](auto v) { return std::to_string(v); };
  out << "name = " << s.name << '\n';
  out << "dataset = " << to_string(s.dataset.kind) << '\n';
  out << "n_samples = " << s.dataset.n_samples << '\n';
  out << "group_ratio = " << exact(s.dataset.group_ratio) << '\n';
  out << "data_seed = " << s.dataset.seed << '\n';
  out << "separation = " << exact(s.dataset.separation) << '\n';
  out << "spreads = " << exact(s.dataset.spreads[0]) << ", " << exact(s.dataset.spreads[1]) << '\n';
  out << "side = " << s.dataset.side << '\n';
  out << "transform = " << transform_name(s.dataset.transform) << '\n';
  if (!s.dataset.images.empty()) out << "images = " << s.dataset.images.string() << '\n';
  if (!s.dataset.labels.empty()) out << "labels = " << s.dataset.labels.string() << '\n';
  if (!s.dataset.csv.empty()) out << "csv = " << s.dataset.csv.string() << '\n';
  out << "num_classes = " << s.dataset.num_classes << '\n';
  out << "epochs = " << s.train.epochs << '\n';
  out << "batch_size = " << s.train.batch_size << '\n';
  out << "max_grad_norm = " << (s.train.max_grad_norm ? exact(*s.train.max_grad_norm) : "none") << '\n';
  out << "alternate_groups = " << (s.train.alternate_groups ? "true" : "false") << '\n';
  out << "clip_fake_step = " << (s.train.clip_fake_step ? "true" : "false") << '\n';
  out << "lr = " << exact(s.train.lr) << '\n';
  out << "beta1 = " << exact(s.train.beta1) << '\n';
  out << "beta2 = " << exact(s.train.beta2) << '\n';
  out << "adam_eps = " << exact(s.train.adam_eps) << '\n';
  out << "noise_dim = " << s.train.noise_dim << '\n';
  out << "conditional = " << (s.train.conditional ? "true" : "false") << '\n';
  out << "batches_per_epoch = " << s.train.batches_per_epoch << '\n';
  out << "probe_batches = " << s.train.probe_batches << '\n';
  out << "checkpoint_every = " << s.train.checkpoint_every << '\n';
  out << "g_hidden = " << join(s.g_hidden, u) << '\n';
  out << "d_hidden = " << join(s.d_hidden, u) << '\n';
  out << "embed_dim = " << s.embed_dim << '\n';
  out << "trainer = " << to_string(s.trainer) << '\n';
  out << "sweep = " << to_string(s.sweep) << '\n';
  if (!s.sweep_values.empty()) out << "sweep_values = " << join(s.sweep_values, exact) << '\n';
  out << "seeds = " << join(s.seeds, u) << '\n';
  out << "audit_samples = " << s.audit_samples << '\n';
  out << "distance = " << to_string(s.distance) << '\n';
  out << "oracle = " << to_string(s.oracle) << '\n';
  out << "oracle_pixel = " << s.oracle_pixel << '\n';
  out << "convergence_ratio = " << exact(s.convergence_ratio) << '\n';
  out << "degenerate_share = " << exact(s.degenerate_share) << '\n';
  out << "threads = " << s.threads << '\n';
  out << "output_dir = " << s.output_dir.string() << '\n';
}

std::string spec_text(const ExperimentSpec& spec) {
  std::ostringstream out;
  write_spec(out, spec);
  return out.str();
}

}  // namespace repfair
