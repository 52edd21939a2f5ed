#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dreammem/common.hpp"
#include "dreammem/http.hpp"
#include "json.hpp"

namespace dreammem {

struct SynthesisRequest {
  std::string prompt;
  std::uint64_t seed = 0;
  int steps = 50;
  double guidance_scale = 7.5;
  int width = 512;
  int height = 512;

  bool operator==(const SynthesisRequest&) const = default;
};

void validate_request(const SynthesisRequest& request);

struct GeneratedImage {
  Bytes bytes;
  std::string model_id;
};

/// Text-to-image backend. Implementations must tolerate concurrent calls, or
/// report max_in_flight() == 1.
class SynthesisBackend {
 public:
  virtual ~SynthesisBackend() = default;
  virtual std::string backend_id() const = 0;
  /// Throws BackendTimeout (retryable) or BackendRejection.
  virtual GeneratedImage generate(const SynthesisRequest& request) = 0;
  /// 0 means no backend-imposed limit.
  virtual std::size_t max_in_flight() const { return 0; }
};

/// Deterministic stand-in for a diffusion model. See stub_generate.
class StubBackend final : public SynthesisBackend {
 public:
  std::string backend_id() const override { return "stub"; }
  GeneratedImage generate(const SynthesisRequest& request) override;
};

/// JSON over HTTP: {prompt, seed, steps, guidance_scale, width, height}
/// -> {image_base64, model_id} or {error}.
class HttpSynthesisBackend final : public SynthesisBackend {
 public:
  HttpSynthesisBackend(const std::string& url, std::chrono::milliseconds timeout);
  std::string backend_id() const override { return "http"; }
  GeneratedImage generate(const SynthesisRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

/// Wraps a backend and fails every request whose prompt is in `failing_prompts`.
class FaultInjectingBackend final : public SynthesisBackend {
 public:
  FaultInjectingBackend(std::shared_ptr<SynthesisBackend> inner,
                        std::set<std::string> failing_prompts);
  std::string backend_id() const override { return inner_->backend_id(); }
  GeneratedImage generate(const SynthesisRequest& request) override;
  std::size_t max_in_flight() const override { return inner_->max_in_flight(); }

 private:
  std::shared_ptr<SynthesisBackend> inner_;
  std::set<std::string> failing_prompts_;
};

/// Stub image: the state is counter_bits(stable_hash64(prompt), seed); the
/// base colour follows concept_score(prompt) (or a draw from the state when
/// the prompt names no lexicon word) and a value-noise texture keyed by the
/// state is laid over it. Returns binary PPM bytes.
Bytes stub_generate(std::string_view prompt, std::uint64_t seed, int width, int height);

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
};

/// Where surrogate images are written: <root>/images/<video id>.<ext>.
struct ImageStore {
  std::filesystem::path root;

  std::string relative_path(std::string_view video_id, std::string_view ext) const;
};

struct ImageRecord {
  std::string video_id;
  std::string image_bytes_digest;  // sha256 hex
  std::string storage_path;        // relative to the store root
  SynthesisRequest request;
  std::string backend_id;
  std::string model_id;

  bool operator==(const ImageRecord&) const = default;
};

nlohmann::ordered_json to_json(const ImageRecord& record);
ImageRecord image_record_from_json(const nlohmann::json& j);

/// Calls the backend with retries on BackendTimeout, persists the image and
/// records its digest. Rejections are rethrown immediately.
ImageRecord synthesize(std::string_view video_id, const SynthesisRequest& request,
                       SynthesisBackend& backend, const ImageStore& store,
                       const RetryPolicy& retry = {});

/// One line of the prompt manifest.
struct PromptLine {
  std::string id;
  std::string prompt;
  std::string modifier_id;
  std::uint64_t seed = 0;

  bool operator==(const PromptLine&) const = default;
};

std::string serialize_prompt_manifest(const std::vector<PromptLine>& lines);
std::vector<PromptLine> parse_prompt_manifest(std::string_view text);

struct FailureEntry {
  std::string video_id;
  std::string kind;  // "timeout", "rejection" or "error"
  std::string message;
  int attempts = 0;
};

struct BatchOutcome {
  std::vector<ImageRecord> records;  // successes, in input order
  std::vector<FailureEntry> failures;
};

struct ImageParams {
  int steps = 50;
  double guidance_scale = 7.5;
  int width = 512;
  int height = 512;
};

/// Synthesizes every prompt with up to `max_in_flight` concurrent calls.
/// Results never depend on the concurrency level.
BatchOutcome batch_synthesize(const std::vector<PromptLine>& prompts, const ImageParams& params,
                              SynthesisBackend& backend, const ImageStore& store,
                              std::size_t max_in_flight, const RetryPolicy& retry = {});

std::string serialize_failures(const std::vector<FailureEntry>& failures);

// Diffusion style fine-tune job handed to an external trainer.

inline constexpr std::size_t kReferenceStyleImages = 20;
inline constexpr std::size_t kReferenceRegularizationImages = 1500;
inline constexpr int kReferenceTrainSteps = 2200;

struct FinetuneJobSpec {
  std::vector<std::string> style_image_paths;
  std::vector<std::string> regularization_image_paths;
  int train_steps = kReferenceTrainSteps;
  std::string style_token;
  std::string base_checkpoint_id;
  std::vector<std::string> warnings;

  bool operator==(const FinetuneJobSpec&) const = default;
};

/// Validates inputs and attaches one warning per count that differs from the
/// reference recipe (20 style images, 1500 regularization images, 2200 steps).
FinetuneJobSpec plan_finetune(std::vector<std::string> style_paths,
                              std::vector<std::string> regularization_paths, int train_steps,
                              std::string style_token,
                              std::string base_checkpoint_id = "stable-diffusion-v1-5");

std::string serialize_finetune_spec(const FinetuneJobSpec& spec);
FinetuneJobSpec parse_finetune_spec(std::string_view text);

}  // namespace dreammem
