#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dreammem/bayesian_ridge.hpp"
#include "dreammem/dataset.hpp"
#include "dreammem/evaluation.hpp"
#include "dreammem/features.hpp"
#include "dreammem/head.hpp"
#include "dreammem/prompt_forge.hpp"
#include "dreammem/synthesis.hpp"
#include "json.hpp"

namespace dreammem {

enum class SeedPolicy { video_id, fixed };

struct SynthesisSettings {
  std::string backend = "stub";  // "stub" or an http:// URL
  ImageParams params;
  std::size_t max_in_flight = 4;
  SeedPolicy seed_policy = SeedPolicy::video_id;
  long timeout_ms = 120000;
  RetryPolicy retry;
  std::vector<std::string> fail_ids;  // test hook: these ids always time out
};

struct EmbeddingSettings {
  std::string backend = "toy";  // "toy" or an http:// URL
  std::string extractor_id;     // required for http backends
  std::size_t dim = 0;          // required for http backends
  std::size_t workers = 4;
  long timeout_ms = 60000;
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> frames_dir;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  Split eval_split = Split::val;
  std::string style_token{kDefaultStyleToken};
  ModifierTable modifiers = ModifierTable::defaults();
  SynthesisSettings synthesis;
  EmbeddingSettings embedding;
  TrainConfig train;
  BayesianRidgeOptions ridge;
  std::vector<RunSpec> runs;

  /// Hash input: every setting except output_dir, with sorted keys.
  std::string canonical;
};

/// Command-line values that take precedence over the config file.
struct ConfigOverrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend_url;
  std::optional<std::size_t> max_in_flight;
  std::optional<std::string> seed_policy;
};

/// Parses a JSON experiment config; unknown keys anywhere are errors.
/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                              const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const ConfigOverrides& overrides = {});

/// First 16 hex digits of sha256(config.canonical).
std::string config_hash(const ExperimentConfig& config);

/// Synthesis seed for a video under the configured policy.
std::uint64_t synthesis_seed(const ExperimentConfig& config, std::string_view video_id);

struct TerraformSummary {
  std::size_t prompts = 0;
  std::size_t images = 0;
  std::vector<FailureEntry> failures;
};

/// Staged experiment. Stages talk to each other only through files under
/// run_dir() = <output_dir>/<config hash>.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config);

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& run_dir() const { return run_dir_; }

  /// Prompts and surrogate images for every record; failures go to failures.jsonl.
  TerraformSummary terraform();
  /// Feature matrices of `domain` (both when nullopt) needed by the run list.
  std::vector<std::filesystem::path> extract(std::optional<Domain> domain = std::nullopt);
  void train();
  void predict();
  std::vector<RunResult> evaluate();
  /// Writes report/table.txt and report/distributions.json; returns the table.
  std::string report();

  std::filesystem::path feature_path(FeatureSource source) const;
  std::filesystem::path model_path(const RunSpec& run) const;
  std::filesystem::path predictions_path(const RunSpec& run) const;
  std::filesystem::path result_path(const RunSpec& run) const;

 private:
  SplitManifest load_records() const;
  EmbeddingMatrix load_features(FeatureSource source) const;
  void write_config_snapshot() const;

  ExperimentConfig config_;
  std::filesystem::path run_dir_;
};

std::unique_ptr<SynthesisBackend> make_synthesis_backend(const ExperimentConfig& config,
                                                         const SplitManifest& manifest);
std::unique_ptr<EmbeddingBackend> make_embedding_backend(const ExperimentConfig& config);

struct FixtureOptions {
  std::uint64_t seed = 7;
  std::size_t n = 32;
  std::array<double, 3> ratios{0.7, 0.15, 0.15};
  double noise = 0.0;  // latent noise on genesis frames
  int frame_size = 64;
};

/// Writes manifest.jsonl, latents.jsonl, frames/<id>/<index>.ppm (first,
/// middle and last frame) and a ready-to-run config.json into `dir`.
/// Returns the config path.
std::filesystem::path write_fixture(const std::filesystem::path& dir, const FixtureOptions& options);

/// Genesis frame file for a video; tries .ppm, .png, .jpg in that order.
std::filesystem::path frame_path(const std::filesystem::path& frames_dir, std::string_view video_id,
                                 int frame_index);

}  // namespace dreammem
