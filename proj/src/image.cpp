#include "dreammem/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace dreammem {

Bytes encode_ppm(const RgbImage& image) {
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

bool looks_like_ppm(std::span<const std::uint8_t> data) {
  return data.size() >= 2 && data[0] == 'P' && data[1] == '6';
}

namespace {

// Reads one whitespace-delimited header integer, skipping '#' comments.
int read_header_int(std::span<const std::uint8_t> data, std::size_t& pos) {
  while (pos < data.size()) {
    if (data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
    } else if (std::isspace(data[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  long value = 0;
  std::size_t digits = 0;
  while (pos < data.size() && std::isdigit(data[pos])) {
    value = value * 10 + (data[pos] - '0');
    if (value > 1'000'000) throw ValidationError("undecodable image: PPM header value too large");
    ++pos;
    ++digits;
  }
  if (digits == 0) throw ValidationError("undecodable image: malformed PPM header");
  return static_cast<int>(value);
}

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> data) {
  if (!looks_like_ppm(data)) throw ValidationError("undecodable image: not a binary PPM");
  std::size_t pos = 2;
  RgbImage img;
  img.width = read_header_int(data, pos);
  img.height = read_header_int(data, pos);
  const int maxval = read_header_int(data, pos);
  if (img.width <= 0 || img.height <= 0) throw ValidationError("undecodable image: empty raster");
  if (maxval != 255) throw ValidationError("undecodable image: only maxval 255 is supported");
  if (pos >= data.size() || !std::isspace(data[pos]))
    throw ValidationError("undecodable image: malformed PPM header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  if (data.size() - pos < n) throw ValidationError("undecodable image: truncated PPM raster");
  img.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                    data.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

std::string image_extension(std::span<const std::uint8_t> data) {
  if (looks_like_ppm(data)) return "ppm";
  if (data.size() >= 8 && data[0] == 0x89 && data[1] == 'P' && data[2] == 'N' && data[3] == 'G')
    return "png";
  if (data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF) return "jpg";
  return "bin";
}

RgbImage render_value_noise(std::uint64_t key, const std::array<double, 3>& levels,
                            double amplitude, int width, int height) {
  if (width <= 0 || height <= 0) throw ValidationError("image dimensions must be positive");
  const int cell = std::max(4, std::min(width, height) / 8);
  const int gw = width / cell + 2;
  const int gh = height / cell + 2;

  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height * 3);

  std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
  for (int c = 0; c < 3; ++c) {
    for (int gy = 0; gy < gh; ++gy) {
      for (int gx = 0; gx < gw; ++gx) {
        const std::uint64_t counter =
            (static_cast<std::uint64_t>(c) << 48) | (static_cast<std::uint64_t>(gy) << 24) |
            static_cast<std::uint64_t>(gx);
        lattice[static_cast<std::size_t>(gy) * gw + gx] =
            2.0 * unit_double(counter_bits(key, counter)) - 1.0;
      }
    }
    for (int y = 0; y < height; ++y) {
      const int gy = y / cell;
      double ty = static_cast<double>(y % cell) / cell;
      ty = ty * ty * (3.0 - 2.0 * ty);
      for (int x = 0; x < width; ++x) {
        const int gx = x / cell;
        double tx = static_cast<double>(x % cell) / cell;
        tx = tx * tx * (3.0 - 2.0 * tx);
        const double v00 = lattice[static_cast<std::size_t>(gy) * gw + gx];
        const double v10 = lattice[static_cast<std::size_t>(gy) * gw + gx + 1];
        const double v01 = lattice[static_cast<std::size_t>(gy + 1) * gw + gx];
        const double v11 = lattice[static_cast<std::size_t>(gy + 1) * gw + gx + 1];
        const double top = v00 + (v10 - v00) * tx;
        const double bottom = v01 + (v11 - v01) * tx;
        const double noise = top + (bottom - top) * ty;
        const double value = std::clamp(std::round(levels[c] + amplitude * noise), 0.0, 255.0);
        img.pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c] =
            static_cast<std::uint8_t>(value);
      }
    }
  }
  return img;
}

}  // namespace dreammem
