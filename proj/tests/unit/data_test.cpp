#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "repfair/data.hpp"
#include "repfair/errors.hpp"

namespace {

using namespace repfair;
namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("repfair_data_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Gauss2d, RatioAndRange) {
  for (double ratio : {0.5, 0.2, 0.3, 0.4}) {
    const GroupedDataset ds = make_gauss2d({1000, ratio, 3, 0.5, {0.04, 0.2}});
    EXPECT_NEAR(static_cast<double>(ds.count(0)), 1000 * ratio, 1.0) << ratio;
    EXPECT_EQ(ds.count(0) + ds.count(1), 1000u);
    EXPECT_NEAR(ds.group_ratio(), ratio, 1.0 / 1000);
    for (double v : ds.samples().data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Gauss2d, PureFunctionOfSeedAndValidated) {
  const Gauss2dParams p{256, 0.5, 11, 0.5, {0.05, 0.1}};
  EXPECT_EQ(make_gauss2d(p).samples(), make_gauss2d(p).samples());
  Gauss2dParams q = p;
  q.seed = 12;
  EXPECT_FALSE(make_gauss2d(p).samples() == make_gauss2d(q).samples());
  q.spreads = {0.0, 0.1};
  EXPECT_THROW(make_gauss2d(q), ConfigError);
  q.spreads = {0.1, 0.1};
  q.group_ratio = 1.0;
  EXPECT_THROW(make_gauss2d(q), ConfigError);
  q.group_ratio = 0.5;
  q.n_samples = 1;
  EXPECT_THROW(make_gauss2d(q), ConfigError);
}

TEST(Gauss2d, SignRuleIsNearlyBayesOptimal) {
  const GroupedDataset ds = make_gauss2d({10000, 0.5, 1, 0.8, {0.1, 0.2}});
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int guess = ds.samples().at(i, 0) < 0.0 ? 0 : 1;
    correct += guess == ds.sensitive()[i];
  }
  EXPECT_GE(static_cast<double>(correct) / ds.size(), 0.99);
}

TEST(Gauss2d, GroupMeansAndSpreads) {
  const GroupedDataset ds = make_gauss2d({20000, 0.5, 2, 0.5, {0.04, 0.2}});
  for (int g = 0; g < 2; ++g) {
    const Tensor x = ds.group_samples(g);
    double mean = 0, sq = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double raw = std::atanh(x.at(i, 1));  // undo the squash on the centred axis
      mean += raw;
      sq += raw * raw;
    }
    mean /= static_cast<double>(x.rows());
    const double sd = std::sqrt(sq / static_cast<double>(x.rows()) - mean * mean);
    EXPECT_NEAR(sd, g == 0 ? 0.04 : 0.2, 0.05 * (g == 0 ? 0.04 : 0.2));
  }
}

TEST(BgDigits, GroupsLabelsAndCorners) {
  const GroupedDataset ds = make_bgdigits({10000, 0.5, 4, 8, GroupTransform::kInvert});
  EXPECT_EQ(ds.dim(), 64u);
  EXPECT_NEAR(static_cast<double>(ds.count(0)), 5000.0, 1.0);
  std::array<std::size_t, 10> per_class{};
  for (std::size_t i = 0; i < ds.size(); ++i) {
    per_class[static_cast<std::size_t>((*ds.labels())[i])]++;
    const double corner = ds.samples().at(i, 0);
    if (ds.sensitive()[i] == 1) {
      EXPECT_GT(corner, 0.0);
    } else {
      EXPECT_LT(corner, 0.0);
    }
  }
  // multinomial 3 sigma around 1000 per class
  const double sigma = std::sqrt(10000 * 0.1 * 0.9);
  for (std::size_t c : per_class) EXPECT_NEAR(static_cast<double>(c), 1000.0, 3 * sigma);
  EXPECT_THROW(make_bgdigits({100, 0.5, 1, 3, GroupTransform::kInvert}), ConfigError);
}

TEST(BgDigits, ShadeDarkensGroupOne) {
  const GroupedDataset ds = make_bgdigits({400, 0.5, 4, 8, GroupTransform::kShade});
  double max0 = -1, max1 = -1;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      double& m = ds.sensitive()[i] == 0 ? max0 : max1;
      m = std::max(m, ds.samples().at(i, j));
    }
  }
  EXPECT_GT(max0, 0.4);
  EXPECT_LE(max1, 2.0 * kShadeFactor - 1.0 + 1e-12);
}

TEST(Minibatch, FilterCountAndErrors) {
  const GroupedDataset ds = make_gauss2d({300, 0.3, 1, 0.5, {0.04, 0.2}});
  Rng rng(1);
  for (int g = 0; g < 2; ++g) {
    const Batch b = group_minibatch(ds, g, 64, rng);
    EXPECT_EQ(b.x.rows(), 64u);
    for (int s : b.sensitive) EXPECT_EQ(s, g);
  }
  EXPECT_THROW(group_minibatch(ds, 2, 4, rng), ContractError);
  EXPECT_THROW(group_minibatch(ds, 0, 0, rng), ConfigError);
  Tensor x({3, 2}, 0.1);
  const GroupedDataset one = GroupedDataset::build(x, {0, 0, 0});
  EXPECT_THROW(group_minibatch(one, 1, 4, rng), DataError);
}

TEST(Minibatch, SelectionIsUniform) {
  const GroupedDataset ds = make_gauss2d({100, 0.5, 1, 0.5, {0.04, 0.2}});
  Rng rng(9);
  std::vector<std::size_t> hits(ds.size(), 0);
  // index rows by their exact coordinates
  std::map<std::pair<double, double>, std::size_t> row_of;
  for (std::size_t i = 0; i < ds.size(); ++i) row_of[{ds.samples().at(i, 0), ds.samples().at(i, 1)}] = i;
  const int draws = 10000;
  for (int k = 0; k < draws / 50; ++k) {
    const Batch b = group_minibatch(ds, 0, 50, rng);
    for (std::size_t r = 0; r < b.x.rows(); ++r) hits[row_of.at({b.x.at(r, 0), b.x.at(r, 1)})]++;
  }
  const double n0 = static_cast<double>(ds.count(0));
  const double expect = draws / n0;
  const double sd = std::sqrt(draws * (1.0 / n0) * (1.0 - 1.0 / n0));
  double chi2 = 0.0;
  for (std::size_t i : ds.group_indices(0)) {
    EXPECT_LT(std::abs(hits[i] - expect), 4 * sd);
    chi2 += (hits[i] - expect) * (hits[i] - expect) / expect;
  }
  for (std::size_t i : ds.group_indices(1)) EXPECT_EQ(hits[i], 0u);
  // chi-square with n0-1 dof: mean n0-1, sd sqrt(2(n0-1))
  EXPECT_LT(chi2, (n0 - 1) + 4 * std::sqrt(2 * (n0 - 1)));
}

TEST(GroupedDataset, BuildValidates) {
  EXPECT_THROW(GroupedDataset::build(Tensor({2, 2}, 1.5), {0, 1}), DataError);
  EXPECT_THROW(GroupedDataset::build(Tensor({2, 2}, 0.5), {0, 2}), DataError);
  EXPECT_THROW(GroupedDataset::build(Tensor({2, 2}, 0.5), {0}), DataError);
  EXPECT_THROW(GroupedDataset::build(Tensor({2, 2}, 0.5), {0, 1}, std::vector<int>{0, 3}, 3), DataError);
}

TEST(Noise, SeededStream) {
  NoiseSource a(5, 7), b(5, 7), c(5, 8);
  const Tensor x = a.sample(10);
  EXPECT_EQ(x, b.sample(10));
  EXPECT_FALSE(x == c.sample(10));
  EXPECT_EQ(x.shape(), (Shape{10, 5}));
}

IdxArray fixture_images(std::size_t n, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  IdxArray a;
  a.type_code = 0x08;
  a.dims = {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)};
  std::mt19937_64 rng(seed);
  a.payload.resize(n * rows * cols);
  for (auto& b : a.payload) b = static_cast<std::uint8_t>(rng() & 0xff);
  return a;
}

IdxArray fixture_labels(std::size_t n) {
  IdxArray a;
  a.dims = {static_cast<std::uint32_t>(n)};
  for (std::size_t i = 0; i < n; ++i) a.payload.push_back(static_cast<std::uint8_t>(i % 10));
  return a;
}

TEST(Idx, HeaderLayoutIsBigEndian) {
  const IdxArray a = fixture_images(2, 3, 4, 1);
  const auto bytes = serialize_idx(a);
  ASSERT_EQ(bytes.size(), 4u + 12u + 24u);
  EXPECT_EQ(bytes[0], 0);
  EXPECT_EQ(bytes[1], 0);
  EXPECT_EQ(bytes[2], 0x08);
  EXPECT_EQ(bytes[3], 3);
  EXPECT_EQ(bytes[7], 2);
  EXPECT_EQ(bytes[11], 3);
  EXPECT_EQ(bytes[15], 4);
  EXPECT_EQ(a.magic(), kIdxImagesMagic);
  EXPECT_EQ(fixture_labels(3).magic(), kIdxLabelsMagic);
}

TEST(Idx, RoundTripBitExact) {
  const fs::path dir = temp_dir("roundtrip");
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const IdxArray a = fixture_images(7 + seed, 5, 6, seed);
    const auto bytes = serialize_idx(a);
    const IdxArray b = parse_idx(bytes);
    EXPECT_EQ(b.dims, a.dims);
    EXPECT_EQ(b.payload, a.payload);
    EXPECT_EQ(serialize_idx(b), bytes);
    write_idx(dir / "a.idx", a);
    const IdxArray c = read_idx(dir / "a.idx");
    EXPECT_EQ(serialize_idx(c), bytes);
  }
}

TEST(Idx, ParseErrorsCarryOffsets) {
  auto bytes = serialize_idx(fixture_images(2, 2, 2, 1));
  auto bad_magic = bytes;
  bad_magic[0] = 1;
  try {
    parse_idx(bad_magic);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  try {
    parse_idx(truncated);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    EXPECT_GE(e.offset(), 16u);
  }
  auto short_header = bytes;
  short_header.resize(9);
  EXPECT_THROW(parse_idx(short_header), ParseError);
  auto trailing = bytes;
  trailing.push_back(0);
  try {
    parse_idx(trailing);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), bytes.size());
  }
}

TEST(Mnist, InversionAndGroups) {
  const fs::path dir = temp_dir("mnist");
  const IdxArray img = fixture_images(40, 4, 4, 3);
  write_idx(dir / "img", img);
  write_idx(dir / "lab", fixture_labels(40));

  const GroupedDataset none = load_mnist_idx(dir / "img", dir / "lab", 0.0, 1);
  EXPECT_EQ(none.count(1), 0u);
  EXPECT_EQ(none.dim(), 16u);
  EXPECT_EQ(none.size(), 40u);

  const GroupedDataset half = load_mnist_idx(dir / "img", dir / "lab", 0.5, 1);
  EXPECT_EQ(half.count(1), 20u);
  for (std::size_t i = 0; i < 40; ++i) {
    const double orig01 = img.payload[i * 16] / 255.0;
    const double now01 = (half.samples().at(i, 0) + 1.0) / 2.0;
    if (half.sensitive()[i] == 1) {
      EXPECT_NEAR(now01, 1.0 - orig01, 1e-12);
    } else {
      EXPECT_NEAR(now01, orig01, 1e-12);
    }
    EXPECT_EQ((*half.labels())[i], static_cast<int>(i % 10));
  }
  // swapped files are rejected by magic number
  EXPECT_THROW(load_mnist_idx(dir / "lab", dir / "img", 0.5, 1), ParseError);
}

TEST(Mnist, OfficialTrainSetWhenAvailable) {
  const char* root = std::getenv("REPFAIR_MNIST_DIR");
  if (root == nullptr) GTEST_SKIP() << "set REPFAIR_MNIST_DIR to run against the official files";
  const fs::path dir(root);
  const GroupedDataset ds =
      load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", 0.5, 0);
  EXPECT_EQ(ds.size(), 60000u);
  EXPECT_EQ(ds.dim(), 784u);
}

TEST(DatasetCsv, RoundTrip) {
  const fs::path dir = temp_dir("csv");
  const GroupedDataset ds = make_gauss2d({50, 0.4, 5, 0.5, {0.04, 0.2}});
  write_dataset_csv(ds, dir / "d.csv");
  const GroupedDataset back = read_dataset_csv(dir / "d.csv");
  EXPECT_EQ(back.samples(), ds.samples());
  EXPECT_EQ(back.sensitive(), ds.sensitive());
  std::ifstream in(dir / "d.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x0,x1,s");

  const GroupedDataset digits = make_bgdigits({20, 0.5, 1, 4, GroupTransform::kInvert});
  write_dataset_csv(digits, dir / "g.csv");
  const GroupedDataset g2 = read_dataset_csv(dir / "g.csv", 10);
  EXPECT_EQ(g2.samples(), digits.samples());
  EXPECT_EQ(g2.labels(), digits.labels());
}

}  // namespace
