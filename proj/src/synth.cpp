#include "stedq/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <stdexcept>

#include "stedq/text.hpp"

namespace stedq {

namespace {

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::mt19937_64 stream_for(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double saturate(double snr) { return snr / (snr + kSnrSaturation); }

std::vector<double> gaussian_taps(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += taps[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& t : taps) t /= sum;
  return taps;
}

// Separable blur with zero boundary.
void blur(std::vector<double>& img, std::size_t n, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  std::vector<double> tmp(img.size(), 0.0);
  const int sn = static_cast<int>(n);
  for (int y = 0; y < sn; ++y)
    for (int x = 0; x < sn; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        if (x + k >= 0 && x + k < sn) acc += taps[k + radius] * img[y * n + x + k];
      tmp[y * n + x] = acc;
    }
  for (int y = 0; y < sn; ++y)
    for (int x = 0; x < sn; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        if (y + k >= 0 && y + k < sn) acc += taps[k + radius] * tmp[(y + k) * n + x];
      img[y * n + x] = acc;
    }
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("synth config: " + m); };
  if (image_size < 8) fail("image_size must be at least 8");
  if (filaments_min < 1 || filaments_min > filaments_max) fail("filament range must satisfy 1 <= min <= max");
  if (!(psf_sigma_min > 0 && psf_sigma_min < psf_sigma_max)) fail("psf sigma range must satisfy 0 < min < max");
  if (!(photons_min > 0 && photons_min < photons_max)) fail("photon range must satisfy 0 < min < max");
  if (!(background > 0)) fail("background must be positive");
  if (!(w_snr >= 0 && w_res >= 0) || std::abs(w_snr + w_res - 1.0) > 1e-12) fail("w_snr + w_res must equal 1");
  if (!(pixel_size_nm > 0)) fail("pixel_size_nm must be positive");
  if (!target_histogram.empty()) {
    if (target_histogram.size() != 5) fail("target_histogram needs 5 bins");
    double sum = 0.0;
    for (double h : target_histogram) {
      if (!(h >= 0)) fail("target_histogram entries must be non-negative");
      sum += h;
    }
    if (std::abs(sum - 1.0) > 1e-9) fail("target_histogram must sum to 1");
  }
}

std::string SynthConfig::to_text() const {
  KeyValueText kv;
  kv.set("image_size", std::to_string(image_size));
  kv.set("filaments_min", std::to_string(filaments_min));
  kv.set("filaments_max", std::to_string(filaments_max));
  kv.set("psf_sigma_min", format_double(psf_sigma_min));
  kv.set("psf_sigma_max", format_double(psf_sigma_max));
  kv.set("photons_min", format_double(photons_min));
  kv.set("photons_max", format_double(photons_max));
  kv.set("background", format_double(background));
  kv.set("seed", std::to_string(seed));
  kv.set("w_snr", format_double(w_snr));
  kv.set("w_res", format_double(w_res));
  kv.set("pixel_size_nm", format_double(pixel_size_nm));
  kv.set("target_histogram", join_doubles(target_histogram));
  return kv.str();
}

SynthConfig SynthConfig::from_text(std::string_view text) {
  const auto kv = KeyValueText::parse(text);
  SynthConfig c;
  auto num = [&](const char* key, double& field) {
    if (kv.has(key)) field = parse_double(kv.get(key));
  };
  auto count = [&](const char* key, auto& field) {
    if (kv.has(key)) field = static_cast<std::remove_reference_t<decltype(field)>>(parse_uint(kv.get(key)));
  };
  count("image_size", c.image_size);
  count("filaments_min", c.filaments_min);
  count("filaments_max", c.filaments_max);
  num("psf_sigma_min", c.psf_sigma_min);
  num("psf_sigma_max", c.psf_sigma_max);
  num("photons_min", c.photons_min);
  num("photons_max", c.photons_max);
  num("background", c.background);
  count("seed", c.seed);
  num("w_snr", c.w_snr);
  num("w_res", c.w_res);
  num("pixel_size_nm", c.pixel_size_nm);
  if (kv.has("target_histogram") && !trim(kv.get("target_histogram")).empty())
    for (const auto& part : split(kv.get("target_histogram"), ',')) c.target_histogram.push_back(parse_double(part));
  for (const auto& [key, value] : kv.entries()) {
    static const std::array<const char*, 13> known{"image_size", "filaments_min", "filaments_max", "psf_sigma_min",
                                                   "psf_sigma_max", "photons_min", "photons_max", "background",
                                                   "seed", "w_snr", "w_res", "pixel_size_nm", "target_histogram"};
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end())
      throw std::invalid_argument("synth config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

double synth_snr(double photons, double background) { return photons / std::sqrt(photons + background); }

double photons_for_snr(double snr, double background) {
  const double s2 = snr * snr;
  return 0.5 * (s2 + std::sqrt(s2 * s2 + 4.0 * s2 * background));
}

double synth_quality(const SynthConfig& c, double psf_sigma, double photons) {
  const double snr = std::isinf(photons) ? photons : synth_snr(photons, c.background);
  const double snr_term = std::isinf(snr) ? 1.0 : saturate(snr);
  const double res_term = 1.0 - (psf_sigma - c.psf_sigma_min) / (c.psf_sigma_max - c.psf_sigma_min);
  return std::clamp(c.w_snr * snr_term + c.w_res * res_term, 0.0, 1.0);
}

std::vector<SynthParams> synth_draw_params(const SynthConfig& c, std::size_t n) {
  c.validate();
  std::vector<SynthParams> out(n);
  std::mt19937_64 rng = stream_for(c.seed, 0, 0);
  std::uniform_int_distribution<std::size_t> filaments(c.filaments_min, c.filaments_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (c.target_histogram.empty()) {
    for (auto& p : out) {
      p.filaments = filaments(rng);
      p.psf_sigma = c.psf_sigma_min + unit(rng) * (c.psf_sigma_max - c.psf_sigma_min);
      p.photons = c.photons_min * std::pow(c.photons_max / c.photons_min, unit(rng));
      p.quality = synth_quality(c, p.psf_sigma, p.photons);
    }
    return out;
  }

  // Exact per-bin quotas (largest remainder), shuffled over the images.
  std::vector<std::size_t> bins;
  std::array<std::size_t, 5> quota{};
  std::array<double, 5> rem{};
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < 5; ++b) {
    const double ideal = c.target_histogram[b] * static_cast<double>(n);
    quota[b] = static_cast<std::size_t>(std::floor(ideal));
    rem[b] = ideal - static_cast<double>(quota[b]);
    assigned += quota[b];
  }
  std::array<std::size_t, 5> by_rem{0, 1, 2, 3, 4};
  std::stable_sort(by_rem.begin(), by_rem.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++quota[by_rem[k % 5]];
  for (std::size_t b = 0; b < 5; ++b) bins.insert(bins.end(), quota[b], b);
  std::shuffle(bins.begin(), bins.end(), rng);

  const double t_min = saturate(synth_snr(c.photons_min, c.background));
  const double t_max = saturate(synth_snr(c.photons_max, c.background));
  const double q_min = c.w_snr * t_min, q_max = c.w_snr * t_max + c.w_res;
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = out[i];
    p.filaments = filaments(rng);
    const double lo = std::max(0.2 * static_cast<double>(bins[i]), q_min);
    const double hi = std::min(0.2 * static_cast<double>(bins[i] + 1), q_max);
    if (!(lo < hi)) throw std::invalid_argument("synth config: histogram bin " + std::to_string(bins[i]) +
                                                " is outside the reachable quality range");
    // Keep clear of the bin edges so quantized labels stay in their bin.
    const double margin = std::min(1e-3, 0.25 * (hi - lo));
    const double q = lo + margin + unit(rng) * (hi - lo - 2 * margin);
    double r, t;
    if (c.w_res == 0.0) {
      r = unit(rng);
      t = q / c.w_snr;
    } else if (c.w_snr == 0.0) {
      r = q / c.w_res;
      t = t_min + unit(rng) * (t_max - t_min);
    } else {
      const double r_lo = std::max(0.0, (q - c.w_snr * t_max) / c.w_res);
      const double r_hi = std::min(1.0, (q - c.w_snr * t_min) / c.w_res);
      r = r_lo + unit(rng) * (r_hi - r_lo);
      t = std::clamp((q - c.w_res * r) / c.w_snr, t_min, t_max);
    }
    p.psf_sigma = c.psf_sigma_max - r * (c.psf_sigma_max - c.psf_sigma_min);
    const double snr = kSnrSaturation * t / (1.0 - t);
    p.photons = std::clamp(photons_for_snr(snr, c.background), c.photons_min, c.photons_max);
    p.quality = synth_quality(c, p.psf_sigma, p.photons);
  }
  return out;
}

Image synth_render(const SynthConfig& c, const SynthParams& p, std::size_t index) {
  auto rng = stream_for(c.seed, 1, index);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t n = c.image_size;
  const double size = static_cast<double>(n);
  std::vector<double> clean(n * n, 0.0);

  for (std::size_t f = 0; f < p.filaments; ++f) {
    const int segments = 2 + static_cast<int>(unit(rng) * 4.0);
    double x = unit(rng) * size, y = unit(rng) * size;
    double heading = unit(rng) * 2.0 * M_PI;
    for (int s = 0; s < segments; ++s) {
      heading += (unit(rng) - 0.5) * 1.2;
      const double len = (0.15 + 0.35 * unit(rng)) * size;
      const double nx = x + len * std::cos(heading), ny = y + len * std::sin(heading);
      const int steps = static_cast<int>(std::ceil(len * 4.0));
      for (int k = 0; k <= steps; ++k) {
        const double a = static_cast<double>(k) / steps;
        const long px = std::lround(std::floor(x + a * (nx - x))), py = std::lround(std::floor(y + a * (ny - y)));
        if (px >= 0 && py >= 0 && px < static_cast<long>(n) && py < static_cast<long>(n)) clean[py * n + px] = 1.0;
      }
      x = nx;
      y = ny;
    }
  }
  blur(clean, n, p.psf_sigma);
  const double peak = *std::max_element(clean.begin(), clean.end());
  if (peak > 0.0)
    for (auto& v : clean) v /= peak;

  Image img(n, n);
  img.pixel_size_nm = c.pixel_size_nm;
  double max_count = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    std::poisson_distribution<long> noise(p.photons * clean[i] + c.background);
    img.pixels[i] = static_cast<double>(noise(rng));
    max_count = std::max(max_count, img.pixels[i]);
  }
  if (max_count > 0.0)
    for (auto& v : img.pixels) v /= max_count;
  quantize16(img);
  return img;
}

std::vector<LabeledImage> synth_generate(const SynthConfig& c, std::size_t n) {
  const auto params = synth_draw_params(c, n);
  std::vector<LabeledImage> out(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    out[i].image = synth_render(c, params[i], i);
    out[i].score = params[i].quality;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05zu", i);
    out[i].source_id = id;
  }
  return out;
}

}  // namespace stedq
