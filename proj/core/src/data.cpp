#include "repfair/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>

#include "repfair/errors.hpp"

namespace repfair {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

GroupedDataset GroupedDataset::build(Tensor samples, std::vector<int> sensitive,
                                     std::optional<std::vector<int>> labels,
                                     std::size_t num_classes) {
  if (samples.rank() != 2) throw DimensionError("dataset samples must be [N x d], got " + to_string(samples.shape()));
  const std::size_t n = samples.shape()[0];
  if (sensitive.size() != n) throw DataError("sensitive attribute count differs from sample count");
  for (int s : sensitive) {
    if (s != 0 && s != 1) throw DataError("sensitive attribute must be 0 or 1");
  }
  for (double v : samples.data()) {
    if (!std::isfinite(v) || v < -1.0 || v > 1.0) throw DataError("dataset sample outside [-1, 1]");
  }
  if (labels) {
    if (labels->size() != n) throw DataError("label count differs from sample count");
    if (num_classes == 0) {
      num_classes = static_cast<std::size_t>(*std::max_element(labels->begin(), labels->end())) + 1;
    }
    for (int c : *labels) {
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw DataError("class label out of range");
    }
  } else {
    num_classes = 0;
  }
  GroupedDataset ds;
  ds.samples_ = std::move(samples);
  ds.sensitive_ = std::move(sensitive);
  ds.labels_ = std::move(labels);
  ds.num_classes_ = num_classes;
  for (std::size_t i = 0; i < n; ++i) ds.index_[ds.sensitive_[i]].push_back(i);
  return ds;
}

double GroupedDataset::group_ratio() const noexcept {
  return size() == 0 ? 0.0 : static_cast<double>(index_[0].size()) / static_cast<double>(size());
}

const std::vector<std::size_t>& GroupedDataset::group_indices(int group) const {
  if (group != 0 && group != 1) throw ContractError("group must be 0 or 1");
  return index_[group];
}

Tensor GroupedDataset::group_samples(int group) const {
  const auto& rows = group_indices(group);
  if (rows.empty()) throw DataError("group " + std::to_string(group) + " is empty");
  return gather(*this, rows).x;
}

Batch gather(const GroupedDataset& ds, const std::vector<std::size_t>& rows) {
  const std::size_t d = ds.dim();
  Batch b;
  b.x = Tensor({rows.size(), d});
  b.sensitive.reserve(rows.size());
  if (ds.has_labels()) b.labels.emplace();
  auto src = ds.samples().data();
  auto dst = b.x.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(src.data() + rows[i] * d, d, dst.data() + i * d);
    b.sensitive.push_back(ds.sensitive()[rows[i]]);
    if (b.labels) b.labels->push_back((*ds.labels())[rows[i]]);
  }
  return b;
}

Batch group_minibatch(const GroupedDataset& ds, int group, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const auto& pool = ds.group_indices(group);
  if (pool.empty()) throw DataError("no samples in group " + std::to_string(group));
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::size_t> rows(batch_size);
  for (auto& r : rows) r = pool[pick(rng)];
  return gather(ds, rows);
}

Batch minibatch(const GroupedDataset& ds, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (ds.size() == 0) throw DataError("empty dataset");
  std::uniform_int_distribution<std::size_t> pick(0, ds.size() - 1);
  std::vector<std::size_t> rows(batch_size);
  for (auto& r : rows) r = pick(rng);
  return gather(ds, rows);
}

NoiseSource::NoiseSource(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed), rng_(seed) {
  if (dim == 0) throw ConfigError("noise dimension must be positive");
}

Tensor NoiseSource::sample(std::size_t batch) {
  Tensor z({batch, dim_});
  for (double& v : z.data()) v = normal_(rng_);
  return z;
}

namespace {

void check_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("group_ratio must lie in (0, 1)");
}

// Group assignment with exactly round(n * ratio) zeros, in shuffled order.
std::vector<int> assign_groups(std::size_t n, double ratio, Rng& rng) {
  const auto n0 = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  std::vector<int> s(n, 1);
  std::fill_n(s.begin(), std::min(n0, n), 0);
  std::shuffle(s.begin(), s.end(), rng);
  return s;
}

}  // namespace

GroupedDataset make_gauss2d(const Gauss2dParams& p) {
  if (p.n_samples < 2) throw ConfigError("make_gauss2d needs at least 2 samples");
  check_ratio(p.group_ratio);
  if (!(p.spreads[0] > 0.0) || !(p.spreads[1] > 0.0)) throw ConfigError("group spreads must be positive");
  Rng rng(p.seed);
  auto s = assign_groups(p.n_samples, p.group_ratio, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x({p.n_samples, 2});
  for (std::size_t i = 0; i < p.n_samples; ++i) {
    const double center = s[i] == 0 ? -p.separation : p.separation;
    const double spread = p.spreads[s[i]];
    x.at(i, 0) = std::tanh(center + spread * normal(rng));
    x.at(i, 1) = std::tanh(spread * normal(rng));
  }
  return GroupedDataset::build(std::move(x), std::move(s));
}

namespace {

// Seven-segment masks, bit order a b c d e f g.
constexpr std::array<unsigned, 10> kSegments = {
    0b1111110, 0b0110000, 0b1101101, 0b1111001, 0b0110011,
    0b1011011, 0b1011111, 0b1110000, 0b1111111, 0b1111011,
};

std::vector<double> render_glyph(int digit, std::size_t side) {
  std::vector<double> img(side * side, 0.0);
  const std::size_t top = 1, bottom = side - 2;
  const std::size_t left = std::max<std::size_t>(1, side / 4), right = side - 1 - left;
  const std::size_t mid = (top + bottom) / 2;
  auto hline = [&](std::size_t r) {
    for (std::size_t c = left; c <= right; ++c) img[r * side + c] = 1.0;
  };
  auto vline = [&](std::size_t c, std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r <= r1; ++r) img[r * side + c] = 1.0;
  };
  const unsigned m = kSegments[digit];
  if (m & 0b1000000) hline(top);
  if (m & 0b0100000) vline(right, top, mid);
  if (m & 0b0010000) vline(right, mid, bottom);
  if (m & 0b0001000) hline(bottom);
  if (m & 0b0000100) vline(left, mid, bottom);
  if (m & 0b0000010) vline(left, top, mid);
  if (m & 0b0000001) hline(mid);
  return img;
}

}  // namespace

GroupedDataset make_bgdigits(const BgDigitsParams& p) {
  if (p.side < 4) throw ConfigError("glyph side must be at least 4");
  if (p.n_samples < 2) throw ConfigError("make_bgdigits needs at least 2 samples");
  check_ratio(p.group_ratio);
  Rng rng(p.seed);
  auto s = assign_groups(p.n_samples, p.group_ratio, rng);
  std::array<std::vector<double>, 10> glyphs;
  for (int k = 0; k < 10; ++k) glyphs[k] = render_glyph(k, p.side);
  std::uniform_int_distribution<int> pick_class(0, 9);
  std::uniform_real_distribution<double> stroke(0.75, 1.0);
  std::uniform_real_distribution<double> background(0.0, 0.1);
  std::uniform_real_distribution<double> jitter(-0.08, 0.08);
  const std::size_t d = p.side * p.side;
  Tensor x({p.n_samples, d});
  std::vector<int> labels(p.n_samples);
  for (std::size_t i = 0; i < p.n_samples; ++i) {
    const int k = pick_class(rng);
    labels[i] = k;
    const double ink = stroke(rng);
    for (std::size_t j = 0; j < d; ++j) {
      double v = glyphs[k][j] > 0.0 ? ink + jitter(rng) : background(rng);
      v = std::clamp(v, 0.0, 1.0);
      if (s[i] == 1) v = p.transform == GroupTransform::kInvert ? 1.0 - v : v * kShadeFactor;
      x.at(i, j) = 2.0 * v - 1.0;
    }
  }
  return GroupedDataset::build(std::move(x), std::move(s), std::move(labels), 10);
}

namespace {

std::size_t idx_element_size(std::uint8_t type_code, std::size_t offset) {
  switch (type_code) {
    case 0x08:
    case 0x09:
      return 1;
    case 0x0B:
      return 2;
    case 0x0C:
    case 0x0D:
      return 4;
    case 0x0E:
      return 8;
    default:
      throw ParseError("unknown IDX element type 0x" + [&] {
        std::ostringstream os;
        os << std::hex << static_cast<int>(type_code);
        return os.str();
      }(), offset);
  }
}

}  // namespace

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw ParseError("IDX header truncated", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) throw ParseError("bad IDX magic number", 0);
  IdxArray a;
  a.type_code = bytes[2];
  const std::size_t elem = idx_element_size(a.type_code, 2);
  const std::size_t ndims = bytes[3];
  if (ndims == 0) throw ParseError("IDX array with zero dimensions", 3);
  std::size_t off = 4;
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    if (off + 4 > bytes.size()) throw ParseError("IDX dimension list truncated", bytes.size());
    const std::uint32_t dim = (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
                              (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
    a.dims.push_back(dim);
    count *= dim;
    off += 4;
  }
  const std::size_t need = count * elem;
  if (bytes.size() - off < need) {
    throw ParseError("IDX payload truncated: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - off),
                     bytes.size());
  }
  if (bytes.size() - off > need) throw ParseError("trailing bytes after IDX payload", off + need);
  a.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
  return a;
}

std::vector<std::uint8_t> serialize_idx(const IdxArray& a) {
  if (a.dims.empty() || a.dims.size() > 255) throw ContractError("IDX arrays need 1..255 dimensions");
  std::size_t count = 1;
  for (auto d : a.dims) count *= d;
  if (a.payload.size() != count * idx_element_size(a.type_code, 2)) {
    throw ContractError("IDX payload size does not match dimensions");
  }
  std::vector<std::uint8_t> out = {0, 0, a.type_code, static_cast<std::uint8_t>(a.dims.size())};
  for (auto d : a.dims) {
    out.push_back(static_cast<std::uint8_t>(d >> 24));
    out.push_back(static_cast<std::uint8_t>(d >> 16));
    out.push_back(static_cast<std::uint8_t>(d >> 8));
    out.push_back(static_cast<std::uint8_t>(d));
  }
  out.insert(out.end(), a.payload.begin(), a.payload.end());
  return out;
}

IdxArray read_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open IDX file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

void write_idx(const std::filesystem::path& path, const IdxArray& a) {
  const auto bytes = serialize_idx(a);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write IDX file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed while writing " + path.string());
}

GroupedDataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                              double invert_fraction, std::uint64_t seed) {
  if (!(invert_fraction >= 0.0 && invert_fraction <= 1.0)) {
    throw ConfigError("invert_fraction must lie in [0, 1]");
  }
  const IdxArray img = read_idx(images);
  const IdxArray lab = read_idx(labels);
  if (img.magic() != kIdxImagesMagic) throw ParseError("image file magic is not 0x00000803", 0);
  if (lab.magic() != kIdxLabelsMagic) throw ParseError("label file magic is not 0x00000801", 0);
  const std::size_t n = img.dims[0];
  if (lab.dims[0] != n) throw ParseError("label count does not match image count", 4);
  const std::size_t d = std::size_t{img.dims[1]} * img.dims[2];
  if (n == 0 || d == 0) throw DataError("IDX file holds no images");

  Rng rng(seed);
  std::vector<int> s(n, 0);
  const auto n_inv = static_cast<std::size_t>(std::llround(static_cast<double>(n) * invert_fraction));
  std::fill_n(s.begin(), n_inv, 1);
  std::shuffle(s.begin(), s.end(), rng);

  Tensor x({n, d});
  auto dst = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double v = img.payload[i * d + j] / 255.0;
      if (s[i] == 1) v = 1.0 - v;
      dst[i * d + j] = 2.0 * v - 1.0;
    }
  }
  std::vector<int> y(lab.payload.begin(), lab.payload.end());
  const int max_label = *std::max_element(y.begin(), y.end());
  return GroupedDataset::build(std::move(x), std::move(s), std::move(y),
                               static_cast<std::size_t>(std::max(max_label + 1, 10)));
}

void write_dataset_csv(const GroupedDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t d = ds.dim();
  for (std::size_t j = 0; j < d; ++j) out << 'x' << j << ',';
  out << 's';
  if (ds.has_labels()) out << ",label";
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << ds.samples().at(i, j) << ',';
    out << ds.sensitive()[i];
    if (ds.has_labels()) out << ',' << (*ds.labels())[i];
    out << '\n';
  }
  if (!out) throw IoError("failed while writing " + path.string());
}

GroupedDataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty dataset CSV " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const bool with_labels = !header.empty() && header.back() == "label";
  const std::size_t d = header.size() - (with_labels ? 2 : 1);
  if (header.size() < 2 || header[d] != "s") throw DataError("dataset CSV header must end in s[,label]");
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j)) throw DataError("unexpected CSV column " + header[j]);
  }
  std::vector<double> values;
  std::vector<int> s;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) + " cells");
    }
    for (std::size_t j = 0; j < d; ++j) values.push_back(std::stod(cells[j]));
    s.push_back(std::stoi(cells[d]));
    if (with_labels) labels.push_back(std::stoi(cells[d + 1]));
  }
  if (s.empty()) throw DataError("dataset CSV has no rows");
  Tensor x({s.size(), d}, std::move(values));
  std::optional<std::vector<int>> lab;
  if (with_labels) lab = std::move(labels);
  return GroupedDataset::build(std::move(x), std::move(s), std::move(lab), num_classes);
}

}  // namespace repfair
