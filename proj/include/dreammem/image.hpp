#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "dreammem/common.hpp"

namespace dreammem {

/// Interleaved 8-bit RGB raster.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  std::uint8_t at(int x, int y, int channel) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + channel];
  }
};

/// Binary PPM (P6, maxval 255).
Bytes encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::uint8_t> data);
bool looks_like_ppm(std::span<const std::uint8_t> data);

/// File extension guessed from magic bytes ("ppm", "png", "jpg", or "bin").
std::string image_extension(std::span<const std::uint8_t> data);

/// Smooth value-noise texture around a per-channel base level.
///
/// Each channel gets an independent lattice of uniform values in [-1, 1]
/// keyed by (key, channel, lattice point); pixels interpolate the lattice with
/// smoothstep weights and are set to clamp(round(level + amplitude * noise)).
/// The lattice spacing is max(4, min(width, height) / 8) pixels.
RgbImage render_value_noise(std::uint64_t key, const std::array<double, 3>& levels,
                            double amplitude, int width, int height);

}  // namespace dreammem
