#include "dreammem/runner.hpp"

#include <iostream>
#include <set>
#include <unordered_map>

#include "dreammem/concept.hpp"

namespace dreammem {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ValidationError("config: " + where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ValidationError("config: unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

SeedPolicy parse_seed_policy(std::string_view text) {
  if (text == "video-id") return SeedPolicy::video_id;
  if (text == "fixed") return SeedPolicy::fixed;
  throw ValidationError("config: seed_policy must be 'video-id' or 'fixed'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

ModifierTable parse_modifiers(const json& j) {
  check_keys(j, {"default", "entries"}, "modifiers");
  std::vector<ModifierEntry> entries;
  for (const auto& e : j.at("entries")) {
    check_keys(e, {"id", "triggers", "text"}, "modifiers.entries");
    entries.push_back({e.at("id").get<std::string>(),
                       e.value("triggers", std::vector<std::string>{}),
                       e.at("text").get<std::string>()});
  }
  return ModifierTable(std::move(entries), j.at("default").get<std::string>());
}

RunSpec parse_run(const json& j) {
  if (j.is_string()) return known_run(j.get<std::string>());
  check_keys(j, {"name", "model", "train_features", "test_features"}, "runs[]");
  RunSpec r{j.at("name").get<std::string>(), parse_model_kind(j.at("model").get<std::string>()),
            parse_feature_source(j.at("train_features").get<std::string>()),
            parse_feature_source(j.at("test_features").get<std::string>())};
  r.validate();
  return r;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir,
                              const ConfigOverrides& overrides) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: malformed JSON: ") + e.what());
  }
  check_keys(j, {"manifest", "frames_dir", "output_dir", "seed", "eval_split", "style_token",
                 "modifiers", "synthesis", "embedding", "train", "ridge", "runs"},
             "config");

  if (overrides.seed) j["seed"] = *overrides.seed;
  if (overrides.backend_url) j["synthesis"]["backend"] = *overrides.backend_url;
  if (overrides.max_in_flight) j["synthesis"]["max_in_flight"] = *overrides.max_in_flight;
  if (overrides.seed_policy) j["synthesis"]["seed_policy"] = *overrides.seed_policy;

  ExperimentConfig c;
  try {
    c.manifest = resolve(base_dir, j.at("manifest").get<std::string>());
    if (j.contains("frames_dir"))
      c.frames_dir = resolve(base_dir, j["frames_dir"].get<std::string>());
    c.output_dir = overrides.out_dir ? *overrides.out_dir
                                     : resolve(base_dir, j.value("output_dir", std::string("out")));
    read_opt(j, "seed", c.seed);
    if (j.contains("eval_split")) c.eval_split = parse_split(j["eval_split"].get<std::string>());
    read_opt(j, "style_token", c.style_token);
    validate_style_token(c.style_token);
    if (j.contains("modifiers")) c.modifiers = parse_modifiers(j["modifiers"]);

    if (j.contains("synthesis")) {
      const auto& s = j["synthesis"];
      check_keys(s, {"backend", "steps", "guidance_scale", "width", "height", "max_in_flight",
                     "seed_policy", "timeout_ms", "retry", "fail_ids"},
                 "synthesis");
      auto& out = c.synthesis;
      read_opt(s, "backend", out.backend);
      read_opt(s, "steps", out.params.steps);
      read_opt(s, "guidance_scale", out.params.guidance_scale);
      read_opt(s, "width", out.params.width);
      read_opt(s, "height", out.params.height);
      read_opt(s, "max_in_flight", out.max_in_flight);
      if (s.contains("seed_policy"))
        out.seed_policy = parse_seed_policy(s["seed_policy"].get<std::string>());
      read_opt(s, "timeout_ms", out.timeout_ms);
      if (s.contains("retry")) {
        const auto& r = s["retry"];
        check_keys(r, {"max_attempts", "base_delay_ms", "factor"}, "synthesis.retry");
        read_opt(r, "max_attempts", out.retry.max_attempts);
        if (r.contains("base_delay_ms"))
          out.retry.base_delay = std::chrono::milliseconds(r["base_delay_ms"].get<long>());
        read_opt(r, "factor", out.retry.factor);
      }
      read_opt(s, "fail_ids", out.fail_ids);
      validate_request({"probe", 0, out.params.steps, out.params.guidance_scale, out.params.width,
                        out.params.height});
      if (out.max_in_flight < 1) throw ValidationError("config: max_in_flight must be >= 1");
      if (out.backend != "stub") parse_http_url(out.backend);
    }

    if (j.contains("embedding")) {
      const auto& e = j["embedding"];
      check_keys(e, {"backend", "extractor_id", "dim", "workers", "timeout_ms"}, "embedding");
      auto& out = c.embedding;
      read_opt(e, "backend", out.backend);
      read_opt(e, "extractor_id", out.extractor_id);
      read_opt(e, "dim", out.dim);
      read_opt(e, "workers", out.workers);
      read_opt(e, "timeout_ms", out.timeout_ms);
      if (out.backend != "toy") {
        parse_http_url(out.backend);
        if (out.extractor_id.empty() || out.dim == 0)
          throw ValidationError("config: http embedding backends must declare extractor_id and dim");
      }
    }

    if (j.contains("train")) {
      const auto& t = j["train"];
      check_keys(t, {"epochs", "max_lr", "weight_decay", "batch_size", "hidden", "warmup_fraction",
                     "final_div"},
                 "train");
      read_opt(t, "epochs", c.train.epochs);
      read_opt(t, "max_lr", c.train.max_lr);
      read_opt(t, "weight_decay", c.train.weight_decay);
      read_opt(t, "batch_size", c.train.batch_size);
      read_opt(t, "hidden", c.train.hidden);
      read_opt(t, "warmup_fraction", c.train.warmup_fraction);
      read_opt(t, "final_div", c.train.final_div);
    }
    c.train.seed = c.seed;
    c.train.validate();
    if (c.train.hidden == 0) throw ValidationError("config: unsupported: train.hidden must be >= 1");

    if (j.contains("ridge")) {
      const auto& r = j["ridge"];
      check_keys(r, {"alpha_shape", "alpha_rate", "lambda_shape", "lambda_rate", "max_iter", "tol"},
                 "ridge");
      read_opt(r, "alpha_shape", c.ridge.alpha_shape);
      read_opt(r, "alpha_rate", c.ridge.alpha_rate);
      read_opt(r, "lambda_shape", c.ridge.lambda_shape);
      read_opt(r, "lambda_rate", c.ridge.lambda_rate);
      read_opt(r, "max_iter", c.ridge.max_iter);
      read_opt(r, "tol", c.ridge.tol);
    }

    std::set<std::string> names;
    for (const auto& r : j.at("runs")) {
      c.runs.push_back(parse_run(r));
      if (!names.insert(c.runs.back().run_name).second)
        throw ValidationError("config: duplicate run " + c.runs.back().run_name);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }

  if (!fs::exists(c.manifest)) throw ValidationError("config: manifest not found: " + c.manifest.string());
  if (c.frames_dir && !fs::is_directory(*c.frames_dir))
    throw ValidationError("config: frames_dir not found: " + c.frames_dir->string());

  json hashed = j;
  hashed.erase("output_dir");
  c.canonical = hashed.dump();
  return c;
}

ExperimentConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
  if (!fs::exists(path)) throw ValidationError("config not found: " + path.string());
  return parse_config(read_text_file(path), path.parent_path(), overrides);
}

std::string config_hash(const ExperimentConfig& config) {
  return sha256_hex(config.canonical).substr(0, 16);
}

std::uint64_t synthesis_seed(const ExperimentConfig& config, std::string_view video_id) {
  if (config.synthesis.seed_policy == SeedPolicy::fixed) return config.seed;
  return stable_hash64(video_id) & 0xFFFFFFFFULL;
}

std::unique_ptr<SynthesisBackend> make_synthesis_backend(const ExperimentConfig& config,
                                                         const SplitManifest& manifest) {
  std::shared_ptr<SynthesisBackend> base;
  if (config.synthesis.backend == "stub")
    base = std::make_shared<StubBackend>();
  else
    base = std::make_shared<HttpSynthesisBackend>(
        config.synthesis.backend, std::chrono::milliseconds(config.synthesis.timeout_ms));
  if (config.synthesis.fail_ids.empty()) return std::make_unique<FaultInjectingBackend>(base, std::set<std::string>{});

  std::set<std::string> failing;
  for (const auto& r : manifest.records) {
    if (std::find(config.synthesis.fail_ids.begin(), config.synthesis.fail_ids.end(), r.id) !=
        config.synthesis.fail_ids.end())
      failing.insert(build_prompt(r, config.modifiers, config.style_token).text);
  }
  return std::make_unique<FaultInjectingBackend>(base, std::move(failing));
}

std::unique_ptr<EmbeddingBackend> make_embedding_backend(const ExperimentConfig& config) {
  if (config.embedding.backend == "toy") return std::make_unique<ToyExtractor>();
  return std::make_unique<HttpEmbeddingBackend>(config.embedding.backend,
                                                config.embedding.extractor_id, config.embedding.dim,
                                                std::chrono::milliseconds(config.embedding.timeout_ms));
}

fs::path frame_path(const fs::path& frames_dir, std::string_view video_id, int frame_index) {
  const fs::path dir = frames_dir / std::string(video_id);
  for (const char* ext : {".ppm", ".png", ".jpg"}) {
    fs::path p = dir / (std::to_string(frame_index) + ext);
    if (fs::exists(p)) return p;
  }
  return dir / (std::to_string(frame_index) + ".ppm");
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(ExperimentConfig config)
    : config_(std::move(config)), run_dir_(config_.output_dir / config_hash(config_)) {}

void Pipeline::write_config_snapshot() const {
  write_text_file(run_dir_ / "config.json", json::parse(config_.canonical).dump(2) + "\n");
}

SplitManifest Pipeline::load_records() const { return load_manifest(config_.manifest); }

fs::path Pipeline::feature_path(FeatureSource source) const {
  return run_dir_ / "features" / (std::string(to_string(source)) + ".emb");
}

fs::path Pipeline::model_path(const RunSpec& run) const {
  return run_dir_ / "models" /
         (run.run_name + (run.model_kind == ModelKind::bayesian_ridge ? ".brr" : ".head"));
}

fs::path Pipeline::predictions_path(const RunSpec& run) const {
  return run_dir_ / "predictions" / (run.run_name + ".jsonl");
}

fs::path Pipeline::result_path(const RunSpec& run) const {
  return run_dir_ / "results" / (run.run_name + ".json");
}

TerraformSummary Pipeline::terraform() {
  write_config_snapshot();
  const SplitManifest manifest = load_records();
  TerraformSummary summary;

  std::vector<PromptLine> prompts;
  for (const auto& r : manifest.records) {
    try {
      const Prompt p = build_prompt(r, config_.modifiers, config_.style_token);
      prompts.push_back({r.id, p.text, p.parts.modifier_id, synthesis_seed(config_, r.id)});
    } catch (const ValidationError& e) {
      summary.failures.push_back({r.id, "prompt", e.what(), 0});
    }
  }
  write_text_file(run_dir_ / "prompts.jsonl", serialize_prompt_manifest(prompts));
  summary.prompts = prompts.size();

  auto backend = make_synthesis_backend(config_, manifest);
  const BatchOutcome outcome =
      batch_synthesize(prompts, config_.synthesis.params, *backend, ImageStore{run_dir_},
                       config_.synthesis.max_in_flight, config_.synthesis.retry);
  std::string lines;
  for (const auto& rec : outcome.records) lines += to_json(rec).dump() + "\n";
  write_text_file(run_dir_ / "images.jsonl", lines);
  summary.images = outcome.records.size();
  summary.failures.insert(summary.failures.end(), outcome.failures.begin(), outcome.failures.end());
  write_text_file(run_dir_ / "failures.jsonl", serialize_failures(summary.failures));
  return summary;
}

std::vector<fs::path> Pipeline::extract(std::optional<Domain> domain) {
  if (config_.runs.empty()) throw ValidationError("nothing to extract: the run list is empty");
  std::set<FeatureSource> needed;
  for (const auto& r : config_.runs) {
    for (FeatureSource s : {r.train_features, r.test_features})
      if (!domain || domain_of(s) == *domain) needed.insert(s);
  }
  if (needed.empty()) throw ValidationError("nothing to extract for the requested domain");

  write_config_snapshot();
  const SplitManifest manifest = load_records();
  const auto backend = make_embedding_backend(config_);

  std::vector<fs::path> written;
  for (FeatureSource source : needed) {
    std::vector<ExtractionItem> items;
    if (source == FeatureSource::dream_single) {
      const fs::path index = run_dir_ / "images.jsonl";
      if (!fs::exists(index))
        throw StageError("terraform", "missing " + index.string() + "; run stage 'terraform' first");
      std::unordered_map<std::string, std::string> stored;
      std::istringstream in(read_text_file(index));
      for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const ImageRecord rec = image_record_from_json(json::parse(line));
        stored[rec.video_id] = rec.storage_path;
      }
      for (const auto& r : manifest.records) {
        auto it = stored.find(r.id);
        if (it == stored.end())
          throw ValidationError("missing surrogate image for " + r.id +
                                "; rerun stage 'terraform' until it has no failures");
        items.push_back({r.id, {run_dir_ / it->second}});
      }
    } else {
      if (!config_.frames_dir)
        throw ValidationError("config: frames_dir is required for genesis features");
      for (const auto& r : manifest.records) {
        const FrameTriple f = select_frames(r.frame_count);
        ExtractionItem item{r.id, {}};
        if (source == FeatureSource::genesis_stacked) {
          for (int idx : {f.first, f.middle, f.last})
            item.frames.push_back(frame_path(*config_.frames_dir, r.id, idx));
        } else {
          item.frames.push_back(frame_path(*config_.frames_dir, r.id, f.middle));
        }
        items.push_back(std::move(item));
      }
    }
    const EmbeddingMatrix m = extract_matrix(items, *backend, config_.embedding.workers);
    save_matrix(m, feature_path(source));
    written.push_back(feature_path(source));
  }
  return written;
}

EmbeddingMatrix Pipeline::load_features(FeatureSource source) const {
  const fs::path p = feature_path(source);
  if (!fs::exists(p))
    throw StageError("extract", "missing " + p.string() + "; run stage 'extract' first");
  return load_matrix(p);
}

namespace {

// Rows of `m` for `ids`, in that order.
Eigen::MatrixXd gather(const EmbeddingMatrix& m, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < m.ids.size(); ++i) index.emplace(m.ids[i], static_cast<Eigen::Index>(i));
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), m.dim());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = index.find(ids[i]);
    if (it == index.end()) throw ValidationError("features lack item " + ids[i]);
    out.row(static_cast<Eigen::Index>(i)) = m.data.row(it->second);
  }
  return out;
}

}  // namespace

void Pipeline::train() {
  if (config_.runs.empty()) throw ValidationError("no runs configured");
  write_config_snapshot();
  const SplitManifest manifest = load_records();
  std::vector<std::string> ids;
  std::vector<double> targets;
  for (const auto& r : manifest.records) {
    if (r.split == Split::train && r.mem_score) {
      ids.push_back(r.id);
      targets.push_back(*r.mem_score);
    }
  }
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(targets.data(),
                                                              static_cast<Eigen::Index>(targets.size()));
  for (const auto& run : config_.runs) {
    const Eigen::MatrixXd X = gather(load_features(run.train_features), ids);
    if (run.model_kind == ModelKind::bayesian_ridge)
      save_bayesian_ridge(fit_bayesian_ridge(X, y, config_.ridge), model_path(run));
    else
      save_head(fit_head(X, y, config_.train), model_path(run));
  }
}

void Pipeline::predict() {
  if (config_.runs.empty()) throw ValidationError("no runs configured");
  write_config_snapshot();
  const SplitManifest manifest = load_records();
  std::vector<std::string> ids;
  for (const auto& r : manifest.records)
    if (r.split == config_.eval_split) ids.push_back(r.id);

  for (const auto& run : config_.runs) {
    const fs::path mp = model_path(run);
    if (!fs::exists(mp)) throw StageError("train", "missing " + mp.string() + "; run stage 'train' first");
    const Eigen::MatrixXd X = gather(load_features(run.test_features), ids);
    Eigen::VectorXd raw;
    if (run.model_kind == ModelKind::bayesian_ridge)
      raw = predict_bayesian_ridge(load_bayesian_ridge(mp), X).mean;
    else
      raw = predict_head(load_head(mp), X);
    std::vector<IdValue> preds;
    for (std::size_t i = 0; i < ids.size(); ++i)
      preds.emplace_back(ids[i], clamp_score(raw[static_cast<Eigen::Index>(i)]));
    write_text_file(predictions_path(run), serialize_predictions(preds));
  }
}

std::vector<RunResult> Pipeline::evaluate() {
  if (config_.runs.empty()) throw ValidationError("no runs configured");
  write_config_snapshot();
  const SplitManifest manifest = load_records();
  std::vector<std::pair<std::string, std::optional<double>>> truth;
  for (const auto& r : manifest.records)
    if (r.split == config_.eval_split) truth.emplace_back(r.id, r.mem_score);

  std::vector<RunResult> results;
  for (const auto& run : config_.runs) {
    const fs::path pp = predictions_path(run);
    if (!fs::exists(pp))
      throw StageError("predict", "missing " + pp.string() + "; run stage 'predict' first");
    RunResult res = evaluate_run(run, parse_predictions(read_text_file(pp)), truth);
    write_text_file(result_path(run), to_json(res).dump(2) + "\n");
    results.push_back(std::move(res));
  }
  return results;
}

std::string Pipeline::report() {
  if (config_.runs.empty()) throw ValidationError("no runs configured");
  write_config_snapshot();
  std::vector<RunResult> results;
  for (const auto& run : config_.runs) {
    const fs::path rp = result_path(run);
    if (!fs::exists(rp))
      throw StageError("evaluate", "missing " + rp.string() + "; run stage 'evaluate' first");
    results.push_back(run_result_from_json(json::parse(read_text_file(rp))));
  }
  const std::string table = emit_results_table(results);
  write_text_file(run_dir_ / "report" / "table.txt", table);
  write_text_file(run_dir_ / "report" / "distributions.json", distribution_report(results));
  return table;
}

// ---------------------------------------------------------------------------

fs::path write_fixture(const fs::path& dir, const FixtureOptions& options) {
  if (options.frame_size < 8 || options.frame_size % 8 != 0)
    throw ValidationError("fixture frame size must be a positive multiple of 8");
  const Fixture fx = make_fixture(options.seed, options.n, options.ratios);
  fs::create_directories(dir);
  save_manifest(fx.manifest, dir / "manifest.jsonl");
  write_text_file(dir / "latents.jsonl", serialize_latents(fx));
  fs::create_directories(dir / "frames");

  parallel_for(fx.manifest.records.size(), std::thread::hardware_concurrency(), [&](std::size_t i) {
    const VideoRecord& r = fx.manifest.records[i];
    const FrameTriple f = select_frames(r.frame_count);
    for (int idx : {f.first, f.middle, f.last}) {
      const RgbImage img = render_genesis_frame(fx.latents[i], r.id, idx, options.noise,
                                                options.frame_size, options.frame_size);
      write_file(dir / "frames" / r.id / (std::to_string(idx) + ".ppm"), encode_ppm(img));
    }
  });

  ojson cfg;
  cfg["manifest"] = "manifest.jsonl";
  cfg["frames_dir"] = "frames";
  cfg["output_dir"] = "out";
  cfg["seed"] = options.seed;
  cfg["eval_split"] = "test";
  cfg["style_token"] = std::string(kDefaultStyleToken);
  cfg["synthesis"] = {{"backend", "stub"},
                      {"width", options.frame_size},
                      {"height", options.frame_size},
                      {"max_in_flight", 4},
                      {"seed_policy", "video-id"}};
  cfg["embedding"] = {{"backend", "toy"}, {"workers", 4}};
  ojson runs = ojson::array();
  for (const auto& r : known_runs()) runs.push_back(r.run_name);
  cfg["runs"] = std::move(runs);
  const fs::path path = dir / "config.json";
  write_text_file(path, cfg.dump(2) + "\n");
  return path;
}

}  // namespace dreammem
