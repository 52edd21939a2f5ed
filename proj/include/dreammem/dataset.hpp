#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dreammem/common.hpp"

namespace dreammem {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

/// Metadata for one video. `captions.front()` is the canonical caption.
struct VideoRecord {
  std::string id;
  std::vector<std::string> captions;
  std::vector<std::string> action_labels;
  std::optional<double> mem_score;  // absent for withheld test videos
  Split split = Split::train;
  int frame_count = 1;

  bool operator==(const VideoRecord&) const = default;
};

/// Throws ValidationError describing the first broken invariant.
void validate_record(const VideoRecord& record);

struct SplitManifest {
  std::vector<VideoRecord> records;
  std::string source_tag;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  std::size_t total() const { return train + val + test; }
  bool operator==(const SplitCounts&) const = default;
};

/// Parses line-delimited JSON records. Captions and labels are whitespace-
/// canonicalized; blank lines are skipped. Errors name the line number, and
/// the record id when one was parsed.
SplitManifest parse_manifest(std::string_view text, std::string source_tag);
SplitManifest load_manifest(const std::filesystem::path& path);

std::string serialize_record(const VideoRecord& record);
std::string serialize_manifest(const SplitManifest& manifest);
void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path);

SplitCounts split_counts(const SplitManifest& manifest);

/// Split sizes for n items: floor(ratio * n) each, then the leftover items go
/// one at a time to the largest fractional parts (ties: train, val, test).
SplitCounts apportion_splits(std::size_t n, const std::array<double, 3>& ratios);

/// Fixture manifest plus the hidden concept latent of every record.
struct Fixture {
  SplitManifest manifest;
  std::vector<double> latents;  // aligned with manifest.records
};

/// Deterministic desk-scale dataset. Captions and labels come from the
/// concept lexicon; latent = concept_score(labels + first caption) and
/// mem_score = 0.3 + 0.6 * latent (rounded to 6 decimals). Records are laid
/// out train, then val, then test.
Fixture make_fixture(std::uint64_t seed, std::size_t n, const std::array<double, 3>& ratios);

/// Sidecar file of (id, latent) lines written next to fixture manifests.
std::string serialize_latents(const Fixture& fixture);
std::vector<std::pair<std::string, double>> parse_latents(std::string_view text);

}  // namespace dreammem
