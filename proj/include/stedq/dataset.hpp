#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stedq/image.hpp"
#include "stedq/tensor.hpp"

namespace stedq {

struct LabeledImage {
  Image image;
  double score = 0.0;     // expert quality in [0,1]
  std::string source_id;  // stable identity across splits and augmentation
  std::filesystem::path file;  // backing PGM, empty for in-memory items
};

// ---- manifests -------------------------------------------------------------
//
// CSV, UTF-8, LF line endings, header `path,score`. Paths are relative to the
// manifest's directory. Scores are written with at least three decimals.

struct ManifestRow {
  std::string path;
  double score = 0.0;
};

/// Parses a manifest without touching the images. Errors name the 1-based line.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest);

/// Loads every row in manifest order. `expected_size`, when given, is enforced as width == height.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& manifest,
                                       std::optional<std::size_t> expected_size = std::nullopt);

/// Writes a manifest for items that already have backing files.
void write_manifest(std::span<const LabeledImage> items, const std::filesystem::path& manifest);

/// Writes each image as `<dir>/images/<source_id>.pgm` plus `<dir>/<manifest_name>`;
/// updates each item's `file`.
void write_dataset(std::vector<LabeledImage>& items, const std::filesystem::path& dir,
                   const std::string& manifest_name = "manifest.csv");

// ---- normalization -----------------------------------------------------------

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

/// Pixelwise mean and population standard deviation over all training pixels.
NormStats compute_norm_stats(std::span<const LabeledImage> train);

/// (x - mean) / std as a [1,1,h,w] tensor.
Tensor normalize(const Image& image, const NormStats& stats);
Image denormalize(const Tensor& tensor, const NormStats& stats);

/// Stacks normalized images selected by `indices` into [batch,1,h,w].
Tensor make_batch(std::span<const LabeledImage> items, std::span<const std::size_t> indices,
                  const NormStats& stats);
Tensor make_batch(std::span<const LabeledImage> items, const NormStats& stats);
std::vector<double> scores_of(std::span<const LabeledImage> items);

// ---- splitting ---------------------------------------------------------------

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Score decile in 0..9; a score of exactly 1.0 falls in decile 9.
std::size_t decile_of(double score);

struct SplitIndices {
  std::vector<std::size_t> train, validation, test;
};

/// Seeded shuffle, then per-decile allocation so each split keeps the label
/// distribution. Split sizes are round(N * fraction) for validation and test,
/// the rest for training. Needs at least 10 items.
SplitIndices stratified_split_indices(std::span<const double> scores, std::uint64_t seed,
                                      const SplitFractions& fractions = {});

struct DatasetSplit {
  std::vector<LabeledImage> train, validation, test;
  std::uint64_t seed = 0;
  SplitFractions fractions;
};

DatasetSplit stratified_split(const std::vector<LabeledImage>& data, std::uint64_t seed,
                              const SplitFractions& fractions = {});

// ---- augmentation ------------------------------------------------------------

enum class AugmentMode {
  kSingleCopy,    // one extra copy per image under a random non-identity symmetry
  kFullDihedral,  // all seven non-identity symmetries
};

/// Returns the originals followed by the transformed copies. `applied`, when given,
/// receives the transform used for each copy, in output order.
std::vector<LabeledImage> augment(const std::vector<LabeledImage>& train, std::uint64_t seed,
                                  AugmentMode mode = AugmentMode::kSingleCopy,
                                  std::vector<Dihedral>* applied = nullptr);

}  // namespace stedq
