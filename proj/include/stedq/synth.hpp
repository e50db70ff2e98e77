#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stedq/dataset.hpp"

namespace stedq {

inline constexpr double kSnrSaturation = 5.0;

struct SynthConfig {
  std::size_t image_size = 64;
  std::size_t filaments_min = 3, filaments_max = 8;
  double psf_sigma_min = 1.0, psf_sigma_max = 3.0;  // pixels
  double photons_min = 2.0, photons_max = 2000.0;   // peak expected counts
  double background = 5.0;                          // expected counts per pixel
  std::uint64_t seed = 0;
  double w_snr = 0.5, w_res = 0.5;
  double pixel_size_nm = 20.0;
  // Requested label frequencies over [0,.2,.4,.6,.8,1]; empty means labels follow the
  // parameter draws (sigma uniform, photons log-uniform).
  std::vector<double> target_histogram;

  void validate() const;
  std::string to_text() const;
  static SynthConfig from_text(std::string_view text);
  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// The histogram used for skewed datasets: sparse below 0.2, mass in 0.4-0.8.
inline const std::vector<double> kSkewedHistogram{0.05, 0.15, 0.35, 0.35, 0.10};

/// Peak signal over Poisson noise std at the peak pixel.
double synth_snr(double photons, double background);
/// Photon budget giving `snr` at the given background (inverse of synth_snr).
double photons_for_snr(double snr, double background);
double synth_quality(const SynthConfig& config, double psf_sigma, double photons);

struct SynthParams {
  std::size_t filaments = 0;
  double psf_sigma = 0.0;
  double photons = 0.0;
  double quality = 0.0;
};

/// Per-image draws for `n` images; deterministic in config.seed.
std::vector<SynthParams> synth_draw_params(const SynthConfig& config, std::size_t n);
/// Renders one image from its parameters; `index` selects the image's random stream.
Image synth_render(const SynthConfig& config, const SynthParams& params, std::size_t index);
/// Draws and renders `n` labeled images, ids `synth_00000`... Runs in parallel.
std::vector<LabeledImage> synth_generate(const SynthConfig& config, std::size_t n);

}  // namespace stedq
