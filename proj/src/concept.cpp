#include "dreammem/concept.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dreammem/common.hpp"

namespace dreammem {

namespace {

constexpr ConceptWord kSubjects[] = {
    {"dog", 0.62},   {"cat", 0.55},    {"man", 0.18},    {"woman", 0.24},  {"child", 0.71},
    {"baby", 0.93},  {"horse", 0.47},  {"bird", 0.36},   {"crowd", 0.08},  {"chef", 0.41},
    {"dancer", 0.84}, {"surfer", 0.77}, {"skier", 0.66}, {"clown", 0.97},
};

constexpr ConceptWord kActions[] = {
    {"running", 0.21},  {"sleeping", 0.05}, {"dancing", 0.88}, {"cooking", 0.33},
    {"jumping", 0.69},  {"swimming", 0.52}, {"laughing", 0.79}, {"reading", 0.12},
    {"singing", 0.74},  {"climbing", 0.58}, {"painting", 0.44}, {"juggling", 0.95},
    {"crying", 0.63},   {"skating", 0.27},
};

constexpr ConceptWord kPlaces[] = {
    {"park", 0.31},    {"beach", 0.73},   {"kitchen", 0.16}, {"street", 0.09},
    {"office", 0.02},  {"forest", 0.57},  {"stadium", 0.81}, {"garden", 0.45},
    {"river", 0.64},   {"classroom", 0.25}, {"bedroom", 0.38}, {"market", 0.90},
};

std::optional<double> lookup(std::string_view word) {
  for (auto table : {std::span<const ConceptWord>(kSubjects), std::span<const ConceptWord>(kActions),
                     std::span<const ConceptWord>(kPlaces)}) {
    for (const auto& w : table)
      if (w.word == word) return w.value;
  }
  return std::nullopt;
}

}  // namespace

std::span<const ConceptWord> concept_subjects() { return kSubjects; }
std::span<const ConceptWord> concept_actions() { return kActions; }
std::span<const ConceptWord> concept_places() { return kPlaces; }

std::optional<double> concept_score(std::string_view text) {
  double sum = 0.0;
  int hits = 0;
  for (const auto& token : word_tokens(text)) {
    if (auto v = lookup(token)) {
      sum += *v;
      ++hits;
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / hits;
}

std::array<double, 3> concept_levels(double value) {
  return {40.0 + 170.0 * value, 215.0 - 150.0 * value, 70.0 + 90.0 * value};
}

RgbImage render_genesis_frame(double latent, std::string_view video_id, int frame_index,
                              double noise, int width, int height) {
  const std::uint64_t key =
      counter_bits(stable_hash64(video_id), static_cast<std::uint64_t>(frame_index) + 1);
  double value = latent;
  if (noise > 0.0) {
    // Box-Muller on two counter draws distinct from the texture lattice.
    const double u1 = 1.0 - unit_double(counter_bits(key, ~0ULL));
    const double u2 = unit_double(counter_bits(key, ~1ULL));
    value += noise * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  value = std::clamp(value, 0.0, 1.0);
  return render_value_noise(key, concept_levels(value), kTextureAmplitude, width, height);
}

}  // namespace dreammem
