#include "stedq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "stedq/text.hpp"

namespace stedq {

namespace fs = std::filesystem;

std::vector<ManifestRow> read_manifest(const fs::path& manifest) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw DataError("cannot read manifest " + manifest.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t line_no = 0;
  const std::string where = manifest.string();
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (trim(line) != "path,score")
        throw DataError(where + " line 1: expected header 'path,score', got '" + line + "'");
      continue;
    }
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2 || trim(fields[0]).empty())
      throw DataError(where + " line " + std::to_string(line_no) + ": malformed row '" + line + "'");
    ManifestRow row{std::string(trim(fields[0])), 0.0};
    try {
      row.score = parse_double(fields[1]);
    } catch (const std::invalid_argument&) {
      throw DataError(where + " line " + std::to_string(line_no) + ": score '" + fields[1] + "' is not a number");
    }
    if (!(row.score >= 0.0 && row.score <= 1.0))
      throw DataError(where + " line " + std::to_string(line_no) + ": score " + fields[1] + " outside [0,1]");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LabeledImage> load_dataset(const fs::path& manifest, std::optional<std::size_t> expected_size) {
  const auto rows = read_manifest(manifest);
  const fs::path base = manifest.parent_path();
  std::vector<LabeledImage> items(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const fs::path file = base / rows[i].path;
    const std::string row_label = manifest.string() + " line " + std::to_string(i + 2);
    if (!fs::exists(file)) throw DataError(row_label + ": missing image " + file.string());
    try {
      items[i].image = read_pgm(file);
    } catch (const DataError& e) {
      throw DataError(row_label + ": " + e.what());
    }
    if (expected_size && (items[i].image.width != *expected_size || items[i].image.height != *expected_size))
      throw DataError(row_label + ": image is " + std::to_string(items[i].image.width) + "x" +
                      std::to_string(items[i].image.height) + ", expected " + std::to_string(*expected_size));
    items[i].score = rows[i].score;
    items[i].source_id = fs::path(rows[i].path).stem().string();
    items[i].file = fs::absolute(file);
  }
  return items;
}

void write_manifest(std::span<const LabeledImage> items, const fs::path& manifest) {
  const fs::path base = fs::absolute(manifest).parent_path();
  if (!base.empty()) fs::create_directories(base);
  std::ostringstream out;
  out << "path,score\n";
  for (const auto& item : items) {
    if (item.file.empty()) throw DataError("item '" + item.source_id + "' has no backing file");
    out << fs::relative(fs::absolute(item.file), base).generic_string() << "," << format_fixed_min(item.score, 3)
        << "\n";
  }
  std::ofstream f(manifest, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write manifest " + manifest.string());
  f << out.str();
}

void write_dataset(std::vector<LabeledImage>& items, const fs::path& dir, const std::string& manifest_name) {
  fs::create_directories(dir / "images");
  for (auto& item : items) {
    item.file = fs::absolute(dir / "images" / (item.source_id + ".pgm"));
    write_pgm16(item.image, item.file);
  }
  write_manifest(items, dir / manifest_name);
}

NormStats compute_norm_stats(std::span<const LabeledImage> train) {
  if (train.empty()) throw DataError("cannot compute normalization statistics of an empty training set");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& item : train) {
    for (double v : item.image.pixels) sum += v;
    count += item.image.pixels.size();
  }
  if (count == 0) throw DataError("training images have no pixels");
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const auto& item : train)
    for (double v : item.image.pixels) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(count));
  if (!(sd > 0.0)) throw DataError("training pixels have zero variance; cannot normalize");
  return {mean, sd};
}

Tensor normalize(const Image& image, const NormStats& stats) {
  Tensor t({1, 1, image.height, image.width});
  for (std::size_t i = 0; i < image.pixels.size(); ++i) t[i] = (image.pixels[i] - stats.mean) / stats.std;
  return t;
}

Image denormalize(const Tensor& tensor, const NormStats& stats) {
  if (tensor.rank() != 4 || tensor.dim(0) != 1 || tensor.dim(1) != 1)
    throw ShapeError("denormalize expects [1,1,h,w], got " + to_string(tensor.shape()));
  Image img(tensor.dim(3), tensor.dim(2));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = tensor[i] * stats.std + stats.mean;
  return img;
}

Tensor make_batch(std::span<const LabeledImage> items, std::span<const std::size_t> indices, const NormStats& stats) {
  if (indices.empty()) throw DataError("empty batch");
  const auto& first = items[indices[0]].image;
  const std::size_t plane = first.width * first.height;
  Tensor batch({indices.size(), 1, first.height, first.width});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = items[indices[b]].image;
    if (img.width != first.width || img.height != first.height) throw DataError("batch images differ in size");
    for (std::size_t i = 0; i < plane; ++i) batch[b * plane + i] = (img.pixels[i] - stats.mean) / stats.std;
  }
  return batch;
}

Tensor make_batch(std::span<const LabeledImage> items, const NormStats& stats) {
  std::vector<std::size_t> all(items.size());
  std::iota(all.begin(), all.end(), 0);
  return make_batch(items, all, stats);
}

std::vector<double> scores_of(std::span<const LabeledImage> items) {
  std::vector<double> s;
  s.reserve(items.size());
  for (const auto& item : items) s.push_back(item.score);
  return s;
}

std::size_t decile_of(double score) {
  if (score >= 1.0) return 9;
  if (score <= 0.0) return 0;
  return std::min<std::size_t>(9, static_cast<std::size_t>(score * 10.0));
}

SplitIndices stratified_split_indices(std::span<const double> scores, std::uint64_t seed,
                                      const SplitFractions& fractions) {
  const std::size_t n = scores.size();
  if (n < 10) throw DataError("stratified split needs at least 10 items, got " + std::to_string(n));
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 ||
      std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::array<std::vector<std::size_t>, 10> by_decile;
  for (auto i : order) by_decile[decile_of(scores[i])].push_back(i);

  // Tie-break order among deciles with equal remainders.
  std::array<std::size_t, 10> tie_order;
  std::iota(tie_order.begin(), tie_order.end(), 0);
  std::shuffle(tie_order.begin(), tie_order.end(), rng);

  std::array<std::size_t, 10> taken{};  // items already assigned to val/test per decile
  auto allocate = [&](double fraction, const char* split_name) {
    const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    std::array<std::size_t, 10> quota{};
    std::array<double, 10> remainder{};
    std::size_t assigned = 0;
    for (std::size_t d = 0; d < 10; ++d) {
      const double ideal = static_cast<double>(by_decile[d].size()) * fraction;
      quota[d] = std::min(static_cast<std::size_t>(std::floor(ideal)), by_decile[d].size() - taken[d]);
      remainder[d] = ideal - static_cast<double>(quota[d]);
      assigned += quota[d];
    }
    std::array<std::size_t, 10> rank = tie_order;
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    while (assigned < total) {
      bool placed = false;
      for (auto d : rank) {
        if (assigned == total) break;
        if (taken[d] + quota[d] < by_decile[d].size() && remainder[d] > 0.0) {
          ++quota[d];
          remainder[d] = 0.0;
          ++assigned;
          placed = true;
        }
      }
      if (!placed) {
        // Any decile with spare items, in rank order.
        for (auto d : rank)
          if (assigned < total && taken[d] + quota[d] < by_decile[d].size()) {
            ++quota[d];
            ++assigned;
            placed = true;
          }
      }
      if (!placed) {
        std::size_t d = 0;
        while (d < 10 && by_decile[d].empty()) ++d;
        throw DataError("decile " + std::to_string(d) + " (scores " + format_double(d / 10.0) + "-" +
                        format_double((d + 1) / 10.0) + ") has too few items to fill the " + split_name + " split");
      }
    }
    while (assigned > total) {
      // Only possible when floor quotas overshoot through rounding of `total`; trim lowest remainders.
      for (auto it = rank.rbegin(); it != rank.rend() && assigned > total; ++it)
        if (quota[*it] > 0) {
          --quota[*it];
          --assigned;
        }
    }
    std::vector<std::size_t> picked;
    for (std::size_t d = 0; d < 10; ++d) {
      for (std::size_t k = 0; k < quota[d]; ++k) picked.push_back(by_decile[d][taken[d] + k]);
      taken[d] += quota[d];
    }
    return picked;
  };

  SplitIndices out;
  out.validation = allocate(fractions.validation, "validation");
  out.test = allocate(fractions.test, "test");
  for (std::size_t d = 0; d < 10; ++d)
    for (std::size_t k = taken[d]; k < by_decile[d].size(); ++k) out.train.push_back(by_decile[d][k]);

  // Present each split in shuffled order rather than grouped by decile.
  std::vector<std::size_t> position(n);
  for (std::size_t p = 0; p < n; ++p) position[order[p]] = p;
  for (auto* part : {&out.train, &out.validation, &out.test})
    std::sort(part->begin(), part->end(), [&](std::size_t a, std::size_t b) { return position[a] < position[b]; });

  if (out.train.empty() || out.validation.empty() || out.test.empty())
    throw DataError("split produced an empty partition; provide more items");
  return out;
}

DatasetSplit stratified_split(const std::vector<LabeledImage>& data, std::uint64_t seed,
                              const SplitFractions& fractions) {
  const auto scores = scores_of(data);
  const auto idx = stratified_split_indices(scores, seed, fractions);
  DatasetSplit split;
  split.seed = seed;
  split.fractions = fractions;
  for (auto i : idx.train) split.train.push_back(data[i]);
  for (auto i : idx.validation) split.validation.push_back(data[i]);
  for (auto i : idx.test) split.test.push_back(data[i]);
  return split;
}

std::vector<LabeledImage> augment(const std::vector<LabeledImage>& train, std::uint64_t seed, AugmentMode mode,
                                  std::vector<Dihedral>* applied) {
  std::vector<LabeledImage> out = train;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, 7);
  if (applied) applied->clear();
  auto add_copy = [&](const LabeledImage& item, Dihedral t) {
    LabeledImage copy;
    copy.image = apply(item.image, t);
    copy.score = item.score;
    copy.source_id = item.source_id + "~" + name(t);
    out.push_back(std::move(copy));
    if (applied) applied->push_back(t);
  };
  for (const auto& item : train) {
    if (item.image.width != item.image.height)
      throw DataError("cannot augment non-square image '" + item.source_id + "'");
    if (mode == AugmentMode::kSingleCopy) {
      add_copy(item, kAllDihedral[static_cast<std::size_t>(pick(rng))]);
    } else {
      for (std::size_t t = 1; t < kAllDihedral.size(); ++t) add_copy(item, kAllDihedral[t]);
    }
  }
  return out;
}

}  // namespace stedq
