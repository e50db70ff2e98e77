#include "stedq/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stedq/text.hpp"

namespace stedq {

namespace {

std::uint16_t to_sample(double v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
}

// Next whitespace-separated header token, collecting `# key=value` comments on the way.
std::string header_token(std::istream& in, double& pixel_size, const std::string& where) {
  std::string token;
  while (true) {
    const int c = in.get();
    if (c == EOF) throw DataError(where + ": truncated PGM header");
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      const auto t = trim(comment);
      if (t.rfind("pixel_size_nm=", 0) == 0) pixel_size = parse_double(t.substr(14));
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) return token;
      continue;
    }
    token += static_cast<char>(c);
  }
}

}  // namespace

void quantize16(Image& image) {
  for (auto& v : image.pixels) v = to_sample(v) / 65535.0;
}

void write_pgm16(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write image " + path.string());
  out << "P5\n# pixel_size_nm=" << format_double(image.pixel_size_nm) << "\n"
      << image.width << " " << image.height << "\n65535\n";
  std::vector<char> raw(image.pixels.size() * 2);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const std::uint16_t s = to_sample(image.pixels[i]);
    raw[2 * i] = static_cast<char>(s >> 8);
    raw[2 * i + 1] = static_cast<char>(s & 0xff);
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("failed writing image " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read image " + path.string());
  const std::string where = path.string();
  double pixel_size = 20.0;
  if (header_token(in, pixel_size, where) != "P5") throw DataError(where + ": not a binary PGM (P5)");
  std::size_t w, h, maxval;
  try {
    w = parse_uint(header_token(in, pixel_size, where));
    h = parse_uint(header_token(in, pixel_size, where));
    maxval = parse_uint(header_token(in, pixel_size, where));
  } catch (const std::invalid_argument& e) {
    throw DataError(where + ": bad PGM header: " + e.what());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw DataError(where + ": bad PGM dimensions or maxval");
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataError(where + ": truncated PGM pixel data");
  Image img(w, h);
  img.pixel_size_nm = pixel_size;
  for (std::size_t i = 0; i < w * h; ++i) {
    const unsigned v = bytes_per == 2 ? (raw[2 * i] << 8 | raw[2 * i + 1]) : raw[i];
    if (v > maxval) throw DataError(where + ": sample exceeds maxval");
    img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

const char* name(Dihedral t) {
  switch (t) {
    case Dihedral::kIdentity: return "identity";
    case Dihedral::kRotate90: return "rot90";
    case Dihedral::kRotate180: return "rot180";
    case Dihedral::kRotate270: return "rot270";
    case Dihedral::kFlipHorizontal: return "fliph";
    case Dihedral::kFlipVertical: return "flipv";
    case Dihedral::kTranspose: return "transpose";
    case Dihedral::kAntiTranspose: return "antitranspose";
  }
  return "?";
}

Dihedral inverse(Dihedral t) {
  if (t == Dihedral::kRotate90) return Dihedral::kRotate270;
  if (t == Dihedral::kRotate270) return Dihedral::kRotate90;
  return t;
}

Image apply(const Image& image, Dihedral t) {
  if (image.width != image.height)
    throw DataError("dihedral transforms need a square image, got " + std::to_string(image.width) + "x" +
                    std::to_string(image.height));
  const std::size_t n = image.width;
  Image out = image;
  // Destination (x, y) reads source (sx, sy).
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      std::size_t sx = x, sy = y;
      switch (t) {
        case Dihedral::kIdentity: break;
        case Dihedral::kRotate90: sx = y; sy = n - 1 - x; break;  // clockwise
        case Dihedral::kRotate180: sx = n - 1 - x; sy = n - 1 - y; break;
        case Dihedral::kRotate270: sx = n - 1 - y; sy = x; break;
        case Dihedral::kFlipHorizontal: sx = n - 1 - x; break;
        case Dihedral::kFlipVertical: sy = n - 1 - y; break;
        case Dihedral::kTranspose: sx = y; sy = x; break;
        case Dihedral::kAntiTranspose: sx = n - 1 - y; sy = n - 1 - x; break;
      }
      out.at(x, y) = image.at(sx, sy);
    }
  return out;
}

}  // namespace stedq
