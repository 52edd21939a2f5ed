#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "dreammem/image.hpp"

namespace dreammem {

// Desk-scale stand-in for "what a video is about". Fixture captions are built
// from these words, the fixture's hidden latent is the mean value of the words
// a record mentions, and the stub synthesis backend and genesis frame renderer
// both turn that latent into the base colour of an image. The toy extractor can
// therefore recover the latent from either domain.

struct ConceptWord {
  std::string_view word;
  double value;  // in [0, 1]
};

std::span<const ConceptWord> concept_subjects();
std::span<const ConceptWord> concept_actions();
std::span<const ConceptWord> concept_places();

/// Mean lexicon value over every whole-word lexicon hit in `text`
/// (case-insensitive, repeated hits counted); nullopt when nothing matches.
std::optional<double> concept_score(std::string_view text);

/// Base RGB level for a concept value in [0, 1]. Affine in the value.
std::array<double, 3> concept_levels(double value);

/// Texture amplitude shared by stub images and fixture frames.
inline constexpr double kTextureAmplitude = 24.0;

/// One real-video frame of a fixture record.
///
/// The frame's concept value is clamp(latent + noise * N(0,1), 0, 1) where the
/// normal draw is keyed by (video_id, frame_index); the texture is keyed the
/// same way, so frames of one video share a concept but not a texture.
RgbImage render_genesis_frame(double latent, std::string_view video_id, int frame_index,
                              double noise, int width, int height);

}  // namespace dreammem
