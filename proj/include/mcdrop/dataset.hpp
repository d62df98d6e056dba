#pragma once

#include "mcdrop/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mcdrop {

enum class Provenance { synthetic_blobs, synthetic_textures, csv, idx };
std::string_view to_string(Provenance p);

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Tensor inputs;  // [N, example shape...]
  std::vector<int> labels;
  std::vector<std::string> class_names;
  Provenance provenance = Provenance::csv;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index classes() const { return static_cast<Index>(class_names.size()); }
  Shape example_shape() const;
  std::vector<Index> class_counts() const;
  Dataset subset(std::span<const Index> rows) const;
  /// Throws DatasetError unless N >= 1, labels lie in [0, C) and inputs are finite.
  void validate() const;
};

/// C isotropic unit-variance Gaussian clusters. Centers sit on a circle of
/// radius 4 (1 - overlap) in the first two coordinates, so overlap = 0 is
/// separable and overlap = 1 makes labels independent of inputs. Labels
/// cycle 0..C-1.
Dataset synth_blobs(Index n, Index classes, double overlap, Index dim, std::uint64_t seed);

/// Four procedural texture families on a size x size single-channel image:
/// horizontal stripes, vertical stripes, radial blob, checkerboard. Each
/// image gets a random contrast in [0.75, 1.25] plus N(0, noise^2) pixel noise.
Dataset synth_textures(Index n, double noise, std::uint64_t seed, Index size = 16);

/// Header row required. Every column except `label_column` is a float64
/// feature. When `classes` is unset the class count is max label + 1.
Dataset load_csv(const std::filesystem::path& path, std::string_view label_column = "label",
                 std::optional<Index> classes = std::nullopt);
/// Features flattened per row, written with shortest round-trip formatting.
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// IDX images (ubyte rescaled by 1/255, or float64) and ubyte labels.
/// Rank-3 image files load as [N, 1, H, W].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<Index> classes = std::nullopt);
/// Writes float64 images so a reload is exact.
void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels);

struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

struct Splits {
  Dataset train, val, test;
  std::vector<Index> train_rows, val_rows, test_rows;
};

/// Stratified, deterministic split. Each class is shuffled, its members are
/// spread evenly over one global ordering, and the ordering is cut at the
/// requested sizes; every prefix therefore holds each class within one
/// example of its proportional share.
Splits split(const Dataset& ds, const SplitSpec& spec);

}  // namespace mcdrop
