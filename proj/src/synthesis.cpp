#include "dreammem/synthesis.hpp"

#include <algorithm>
#include <atomic>
#include <optional>
#include <sstream>
#include <thread>
#include <variant>

#include "dreammem/concept.hpp"
#include "dreammem/image.hpp"

namespace dreammem {

using ojson = nlohmann::ordered_json;

void validate_request(const SynthesisRequest& r) {
  if (r.prompt.empty()) throw ValidationError("synthesis request has an empty prompt");
  if (r.steps < 1) throw ValidationError("synthesis steps must be >= 1");
  if (!(r.guidance_scale > 0.0)) throw ValidationError("guidance_scale must be positive");
  if (r.width <= 0 || r.height <= 0 || r.width % 8 != 0 || r.height % 8 != 0)
    throw ValidationError("image width and height must be positive multiples of 8");
}

Bytes stub_generate(std::string_view prompt, std::uint64_t seed, int width, int height) {
  const std::uint64_t key = counter_bits(stable_hash64(prompt), seed);
  const double value = concept_score(prompt).value_or(unit_double(counter_bits(key, ~2ULL)));
  return encode_ppm(render_value_noise(key, concept_levels(value), kTextureAmplitude, width, height));
}

GeneratedImage StubBackend::generate(const SynthesisRequest& request) {
  validate_request(request);
  return {stub_generate(request.prompt, request.seed, request.width, request.height), "stub"};
}

HttpSynthesisBackend::HttpSynthesisBackend(const std::string& url,
                                           std::chrono::milliseconds timeout)
    : endpoint_(parse_http_url(url)), timeout_(timeout) {}

GeneratedImage HttpSynthesisBackend::generate(const SynthesisRequest& request) {
  validate_request(request);
  ojson body;
  body["prompt"] = request.prompt;
  body["seed"] = request.seed;
  body["steps"] = request.steps;
  body["guidance_scale"] = request.guidance_scale;
  body["width"] = request.width;
  body["height"] = request.height;
  const std::string reply_text = post_json(endpoint_, body.dump(), timeout_);

  const auto reply = nlohmann::json::parse(reply_text, nullptr, false);
  if (!reply.is_object()) throw BackendRejection("synthesis backend returned non-JSON reply");
  if (reply.contains("error")) throw BackendRejection(reply["error"].dump());
  if (!reply.contains("image_base64") || !reply["image_base64"].is_string())
    throw BackendRejection("synthesis backend reply lacks image_base64");
  GeneratedImage out;
  try {
    out.bytes = base64_decode(reply["image_base64"].get<std::string>());
  } catch (const ValidationError& e) {
    throw BackendRejection(std::string("synthesis backend image: ") + e.what());
  }
  out.model_id = reply.value("model_id", std::string{});
  return out;
}

FaultInjectingBackend::FaultInjectingBackend(std::shared_ptr<SynthesisBackend> inner,
                                             std::set<std::string> failing_prompts)
    : inner_(std::move(inner)), failing_prompts_(std::move(failing_prompts)) {}

GeneratedImage FaultInjectingBackend::generate(const SynthesisRequest& request) {
  if (failing_prompts_.contains(request.prompt)) throw BackendTimeout("injected failure");
  return inner_->generate(request);
}

std::string ImageStore::relative_path(std::string_view video_id, std::string_view ext) const {
  if (video_id.empty() || video_id.front() == '.' ||
      video_id.find_first_of("/\\") != std::string_view::npos)
    throw ValidationError("video id is not usable as a file name: " + std::string(video_id));
  return "images/" + std::string(video_id) + "." + std::string(ext);
}

ojson to_json(const ImageRecord& r) {
  ojson req;
  req["prompt"] = r.request.prompt;
  req["seed"] = r.request.seed;
  req["steps"] = r.request.steps;
  req["guidance_scale"] = r.request.guidance_scale;
  req["width"] = r.request.width;
  req["height"] = r.request.height;
  ojson j;
  j["video_id"] = r.video_id;
  j["digest"] = r.image_bytes_digest;
  j["storage_path"] = r.storage_path;
  j["backend_id"] = r.backend_id;
  j["model_id"] = r.model_id;
  j["request"] = std::move(req);
  return j;
}

ImageRecord image_record_from_json(const nlohmann::json& j) {
  ImageRecord r;
  r.video_id = j.at("video_id").get<std::string>();
  r.image_bytes_digest = j.at("digest").get<std::string>();
  r.storage_path = j.at("storage_path").get<std::string>();
  r.backend_id = j.at("backend_id").get<std::string>();
  r.model_id = j.at("model_id").get<std::string>();
  const auto& q = j.at("request");
  r.request.prompt = q.at("prompt").get<std::string>();
  r.request.seed = q.at("seed").get<std::uint64_t>();
  r.request.steps = q.at("steps").get<int>();
  r.request.guidance_scale = q.at("guidance_scale").get<double>();
  r.request.width = q.at("width").get<int>();
  r.request.height = q.at("height").get<int>();
  return r;
}

namespace {

struct Attempted {
  GeneratedImage image;
  int attempts = 0;
};

// Exhausted retries rethrow the last BackendTimeout with the attempt count.
class RetriesExhausted : public BackendTimeout {
 public:
  RetriesExhausted(const std::string& what, int attempts)
      : BackendTimeout(what), attempts(attempts) {}
  int attempts;
};

Attempted generate_with_retry(const SynthesisRequest& request, SynthesisBackend& backend,
                              const RetryPolicy& retry) {
  const int max_attempts = std::max(1, retry.max_attempts);
  auto delay = std::chrono::duration<double, std::milli>(retry.base_delay);
  for (int attempt = 1;; ++attempt) {
    try {
      return {backend.generate(request), attempt};
    } catch (const BackendTimeout& e) {
      if (attempt >= max_attempts)
        throw RetriesExhausted("timed out after " + std::to_string(attempt) +
                                   " attempts: " + e.what(),
                               attempt);
      std::this_thread::sleep_for(delay);
      delay *= retry.factor;
    }
  }
}

ImageRecord persist(std::string_view video_id, const SynthesisRequest& request,
                    const SynthesisBackend& backend, GeneratedImage image,
                    const ImageStore& store) {
  ImageRecord rec;
  rec.video_id = std::string(video_id);
  rec.request = request;
  rec.backend_id = backend.backend_id();
  rec.model_id = std::move(image.model_id);
  rec.image_bytes_digest = sha256_hex(image.bytes);
  rec.storage_path = store.relative_path(video_id, image_extension(image.bytes));
  write_file(store.root / rec.storage_path, image.bytes);
  return rec;
}

}  // namespace

ImageRecord synthesize(std::string_view video_id, const SynthesisRequest& request,
                       SynthesisBackend& backend, const ImageStore& store,
                       const RetryPolicy& retry) {
  validate_request(request);
  store.relative_path(video_id, "ppm");
  return persist(video_id, request, backend, generate_with_retry(request, backend, retry).image,
                 store);
}

std::string serialize_prompt_manifest(const std::vector<PromptLine>& lines) {
  std::string out;
  for (const auto& l : lines) {
    ojson j;
    j["id"] = l.id;
    j["prompt"] = l.prompt;
    j["modifier_id"] = l.modifier_id;
    j["seed"] = l.seed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PromptLine> parse_prompt_manifest(std::string_view text) {
  std::vector<PromptLine> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (canonicalize_whitespace(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("prompt").get<std::string>(),
                     j.at("modifier_id").get<std::string>(), j.at("seed").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("prompt manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

BatchOutcome batch_synthesize(const std::vector<PromptLine>& prompts, const ImageParams& params,
                              SynthesisBackend& backend, const ImageStore& store,
                              std::size_t max_in_flight, const RetryPolicy& retry) {
  std::size_t workers = std::max<std::size_t>(1, max_in_flight);
  if (backend.max_in_flight() != 0) workers = std::min(workers, backend.max_in_flight());
  workers = std::min(workers, std::max<std::size_t>(1, prompts.size()));

  std::vector<std::variant<std::monostate, ImageRecord, FailureEntry>> slots(prompts.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      const PromptLine& p = prompts[i];
      SynthesisRequest req{p.prompt, p.seed, params.steps, params.guidance_scale, params.width,
                           params.height};
      try {
        slots[i] = synthesize(p.id, req, backend, store, retry);
      } catch (const RetriesExhausted& e) {
        slots[i] = FailureEntry{p.id, "timeout", e.what(), e.attempts};
      } catch (const BackendRejection& e) {
        slots[i] = FailureEntry{p.id, "rejection", e.what(), 1};
      } catch (const std::exception& e) {
        slots[i] = FailureEntry{p.id, "error", e.what(), 1};
      }
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  BatchOutcome out;
  for (auto& s : slots) {
    if (auto* r = std::get_if<ImageRecord>(&s)) out.records.push_back(std::move(*r));
    if (auto* f = std::get_if<FailureEntry>(&s)) out.failures.push_back(std::move(*f));
  }
  return out;
}

std::string serialize_failures(const std::vector<FailureEntry>& failures) {
  std::string out;
  for (const auto& f : failures) {
    ojson j;
    j["video_id"] = f.video_id;
    j["kind"] = f.kind;
    j["message"] = f.message;
    j["attempts"] = f.attempts;
    out += j.dump();
    out += '\n';
  }
  return out;
}

FinetuneJobSpec plan_finetune(std::vector<std::string> style_paths,
                              std::vector<std::string> regularization_paths, int train_steps,
                              std::string style_token, std::string base_checkpoint_id) {
  if (style_paths.empty()) throw ValidationError("fine-tune needs at least one style image");
  if (style_token.empty()) throw ValidationError("fine-tune style token must be nonempty");
  if (train_steps < 1) throw ValidationError("fine-tune train_steps must be >= 1");
  for (const auto* list : {&style_paths, &regularization_paths})
    for (const auto& p : *list)
      if (!std::filesystem::exists(p)) throw ValidationError("fine-tune image not found: " + p);

  FinetuneJobSpec spec;
  spec.style_image_paths = std::move(style_paths);
  spec.regularization_image_paths = std::move(regularization_paths);
  spec.train_steps = train_steps;
  spec.style_token = std::move(style_token);
  spec.base_checkpoint_id = std::move(base_checkpoint_id);

  auto deviates = [&](const char* what, std::size_t got, std::size_t expected) {
    if (got != expected)
      spec.warnings.push_back(std::string(what) + " count " + std::to_string(got) +
                              " differs from reference " + std::to_string(expected));
  };
  deviates("style image", spec.style_image_paths.size(), kReferenceStyleImages);
  deviates("regularization image", spec.regularization_image_paths.size(),
           kReferenceRegularizationImages);
  deviates("train step", static_cast<std::size_t>(spec.train_steps), kReferenceTrainSteps);
  return spec;
}

std::string serialize_finetune_spec(const FinetuneJobSpec& spec) {
  ojson j;
  j["base_checkpoint_id"] = spec.base_checkpoint_id;
  j["style_token"] = spec.style_token;
  j["train_steps"] = spec.train_steps;
  j["style_image_paths"] = spec.style_image_paths;
  j["regularization_image_paths"] = spec.regularization_image_paths;
  j["warnings"] = spec.warnings;
  return j.dump(2) + "\n";
}

FinetuneJobSpec parse_finetune_spec(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FinetuneJobSpec spec;
    spec.base_checkpoint_id = j.at("base_checkpoint_id").get<std::string>();
    spec.style_token = j.at("style_token").get<std::string>();
    spec.train_steps = j.at("train_steps").get<int>();
    spec.style_image_paths = j.at("style_image_paths").get<std::vector<std::string>>();
    spec.regularization_image_paths =
        j.at("regularization_image_paths").get<std::vector<std::string>>();
    spec.warnings = j.at("warnings").get<std::vector<std::string>>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("fine-tune spec: ") + e.what());
  }
}

}  // namespace dreammem
