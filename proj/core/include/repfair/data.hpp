#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "repfair/tensor.hpp"

namespace repfair {

using Rng = std::mt19937_64;

// Independent deterministic sub-seed for a numbered stream of one run.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Samples with a binary sensitive attribute and optional class labels.
//
// Construct through GroupedDataset::build(), which validates the invariants
// (range, attribute values, label bounds) and indexes both groups.
class GroupedDataset {
 public:
  static GroupedDataset build(Tensor samples, std::vector<int> sensitive,
                              std::optional<std::vector<int>> labels = std::nullopt,
                              std::size_t num_classes = 0);

  const Tensor& samples() const noexcept { return samples_; }
  const std::vector<int>& sensitive() const noexcept { return sensitive_; }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  bool has_labels() const noexcept { return labels_.has_value(); }

  std::size_t size() const noexcept { return sensitive_.size(); }
  std::size_t dim() const noexcept { return samples_.cols(); }
  // Fraction of samples with s = 0.
  double group_ratio() const noexcept;
  const std::vector<std::size_t>& group_indices(int group) const;
  std::size_t count(int group) const { return group_indices(group).size(); }

  // Rows of the given group as an [n x d] tensor.
  Tensor group_samples(int group) const;

 private:
  Tensor samples_;
  std::vector<int> sensitive_;
  std::optional<std::vector<int>> labels_;
  std::size_t num_classes_ = 0;
  std::array<std::vector<std::size_t>, 2> index_;
};

struct Batch {
  Tensor x;
  std::vector<int> sensitive;
  std::optional<std::vector<int>> labels;
};

// Uniform draw with replacement from {rows | s = group}. Throws DataError if
// the group is empty.
Batch group_minibatch(const GroupedDataset& ds, int group, std::size_t batch_size, Rng& rng);
// Uniform draw with replacement from the whole dataset.
Batch minibatch(const GroupedDataset& ds, std::size_t batch_size, Rng& rng);
Batch gather(const GroupedDataset& ds, const std::vector<std::size_t>& rows);

// Seeded standard-normal latent codes.
class NoiseSource {
 public:
  NoiseSource(std::size_t dim, std::uint64_t seed);
  Tensor sample(std::size_t batch);
  std::size_t dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Rng& rng() noexcept { return rng_; }

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Two isotropic Gaussians in the plane, group 0 at (-separation, 0) and
// group 1 at (+separation, 0), squashed into [-1, 1]^2 with tanh.
struct Gauss2dParams {
  std::size_t n_samples = 1024;
  double group_ratio = 0.5;
  std::uint64_t seed = 0;
  double separation = 0.5;
  std::array<double, 2> spreads{0.04, 0.2};
};

GroupedDataset make_gauss2d(const Gauss2dParams& p);

enum class GroupTransform {
  kInvert,  // group 1 is the photographic negative (light background)
  kShade,   // group 1 intensities scaled by kShadeFactor
};

inline constexpr double kShadeFactor = 0.4;

// Procedural side x side seven-segment digit glyphs with pixel jitter.
// Group 0 has a dark background; group 1 is transformed per `transform`.
struct BgDigitsParams {
  std::size_t n_samples = 2000;
  double group_ratio = 0.5;
  std::uint64_t seed = 0;
  std::size_t side = 8;
  GroupTransform transform = GroupTransform::kInvert;
};

GroupedDataset make_bgdigits(const BgDigitsParams& p);

// Raw IDX array: 0x00 0x00 <type> <ndims>, big-endian u32 extents, payload.
struct IdxArray {
  std::uint8_t type_code = 0x08;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::uint32_t magic() const noexcept {
    return (static_cast<std::uint32_t>(type_code) << 8) | static_cast<std::uint32_t>(dims.size());
  }
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

IdxArray parse_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_idx(const IdxArray& a);
IdxArray read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& a);

// MNIST-style image/label pair. Pixels are rescaled to [-1, 1]; a seeded
// invert_fraction of the images is inverted and forms group 1.
GroupedDataset load_mnist_idx(const std::filesystem::path& images,
                              const std::filesystem::path& labels,
                              double invert_fraction = 0.5, std::uint64_t seed = 0);

// CSV with header x0,...,x{d-1},s[,label]; values written with 17 digits.
void write_dataset_csv(const GroupedDataset& ds, const std::filesystem::path& path);
GroupedDataset read_dataset_csv(const std::filesystem::path& path, std::size_t num_classes = 0);

}  // namespace repfair
