#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace stedq {

/// Input data problems (bad manifests, unreadable images, invalid labels).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-channel raster, row-major, intensities in [0,1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  double pixel_size_nm = 20.0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Writes a binary 16-bit PGM (P5, maxval 65535, big-endian samples). Intensities are
/// clamped to [0,1] and rounded to the nearest 1/65535. Pixel size goes in a header comment.
void write_pgm16(const Image& image, const std::filesystem::path& path);
/// Reads binary PGM with any maxval; intensities are scaled by 1/maxval.
Image read_pgm(const std::filesystem::path& path);

/// Rounds intensities to the 16-bit grid used on disk.
void quantize16(Image& image);

/// The eight symmetries of the square.
enum class Dihedral : std::uint8_t {
  kIdentity,
  kRotate90,
  kRotate180,
  kRotate270,
  kFlipHorizontal,
  kFlipVertical,
  kTranspose,
  kAntiTranspose,
};

inline constexpr std::array<Dihedral, 8> kAllDihedral{
    Dihedral::kIdentity,       Dihedral::kRotate90,     Dihedral::kRotate180, Dihedral::kRotate270,
    Dihedral::kFlipHorizontal, Dihedral::kFlipVertical, Dihedral::kTranspose, Dihedral::kAntiTranspose};

const char* name(Dihedral t);
Dihedral inverse(Dihedral t);
/// Applies `t` to a square image; throws DataError for non-square input.
Image apply(const Image& image, Dihedral t);

}  // namespace stedq
