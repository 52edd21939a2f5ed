// Command-line front end for the staged memorability pipeline.

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "dreammem/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitPartial = 2;

dreammem::ConfigOverrides collect_overrides(const std::string& out_dir, const CLI::Option* seed_opt,
                                            std::uint64_t seed, const std::string& backend_url,
                                            const CLI::Option* mif_opt, std::size_t max_in_flight,
                                            const std::string& seed_policy) {
  dreammem::ConfigOverrides o;
  if (!out_dir.empty()) o.out_dir = out_dir;
  if (seed_opt->count() > 0) o.seed = seed;
  if (!backend_url.empty()) o.backend_url = backend_url;
  if (mif_opt->count() > 0) o.max_in_flight = max_in_flight;
  if (!seed_policy.empty()) o.seed_policy = seed_policy;
  return o;
}

std::vector<std::string> read_list(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(dreammem::read_text_file(path));
  for (std::string line; std::getline(in, line);) {
    line = dreammem::canonicalize_whitespace(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dreammem: surrogate-image memorability experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string backend_url;
  std::size_t max_in_flight = 0;
  std::string seed_policy;
  app.add_option("--config", config_path, "Experiment config (JSON)");
  app.add_option("--out-dir", out_dir, "Output directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed, "Experiment seed");
  app.add_option("--backend-url", backend_url, "Synthesis backend URL");
  auto* mif_opt = app.add_option("--max-in-flight", max_in_flight, "Concurrent synthesis requests");
  app.add_option("--seed-policy", seed_policy, "video-id or fixed")
      ->check(CLI::IsMember({"video-id", "fixed"}));

  auto* terraform = app.add_subcommand("terraform", "Build prompts and synthesize surrogate images");
  auto* extract = app.add_subcommand("extract", "Extract feature matrices");
  std::string domain;
  extract->add_option("--domain", domain, "genesis or dream (default: both)")
      ->check(CLI::IsMember({"genesis", "dream"}));
  auto* train = app.add_subcommand("train", "Fit one model per run");
  auto* predict = app.add_subcommand("predict", "Predict the evaluation split");
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions");
  auto* report = app.add_subcommand("report", "Render the results table and distributions");

  auto* fixture = app.add_subcommand("fixture", "Write a synthetic fixture experiment");
  std::string fixture_dir;
  dreammem::FixtureOptions fx;
  fixture->add_option("dir", fixture_dir, "Target directory")->required();
  fixture->add_option("-n,--records", fx.n, "Number of records");
  fixture->add_option("--noise", fx.noise, "Latent noise on genesis frames");
  fixture->add_option("--frame-size", fx.frame_size, "Frame and image edge in pixels");

  auto* plan = app.add_subcommand("plan-finetune", "Write a style fine-tune job spec");
  std::string style_list, reg_list, plan_out, token{dreammem::kDefaultStyleToken};
  int steps = dreammem::kReferenceTrainSteps;
  plan->add_option("--style-images", style_list, "File listing style image paths")->required();
  plan->add_option("--regularization-images", reg_list, "File listing regularization image paths")
      ->required();
  plan->add_option("--steps", steps, "Training steps");
  plan->add_option("--token", token, "Style token");
  plan->add_option("-o,--output", plan_out, "Spec output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fixture->parsed()) {
      if (seed_opt->count() > 0) fx.seed = seed;
      const auto path = dreammem::write_fixture(fixture_dir, fx);
      std::cout << path.string() << "\n";
      return kExitOk;
    }
    if (plan->parsed()) {
      const auto spec = dreammem::plan_finetune(read_list(style_list), read_list(reg_list), steps, token);
      dreammem::write_text_file(plan_out, dreammem::serialize_finetune_spec(spec));
      for (const auto& w : spec.warnings) std::cerr << "warning: " << w << "\n";
      return kExitOk;
    }

    if (config_path.empty()) throw dreammem::ValidationError("--config is required");
    dreammem::Pipeline pipeline(dreammem::load_config(
        config_path,
        collect_overrides(out_dir, seed_opt, seed, backend_url, mif_opt, max_in_flight, seed_policy)));

    if (terraform->parsed()) {
      const auto s = pipeline.terraform();
      std::cout << "prompts: " << s.prompts << "\nimages: " << s.images
                << "\nfailures: " << s.failures.size() << "\nrun dir: " << pipeline.run_dir().string()
                << "\n";
      for (const auto& f : s.failures)
        std::cerr << "failed " << f.video_id << " (" << f.kind << "): " << f.message << "\n";
      return s.failures.empty() ? kExitOk : kExitPartial;
    }
    if (extract->parsed()) {
      std::optional<dreammem::Domain> d;
      if (domain == "genesis") d = dreammem::Domain::genesis;
      if (domain == "dream") d = dreammem::Domain::dream;
      for (const auto& p : pipeline.extract(d)) std::cout << p.string() << "\n";
    } else if (train->parsed()) {
      pipeline.train();
    } else if (predict->parsed()) {
      pipeline.predict();
    } else if (evaluate->parsed()) {
      for (const auto& r : pipeline.evaluate())
        std::cout << r.spec.run_name << " " << r.spearman << "\n";
    } else if (report->parsed()) {
      std::cout << pipeline.report();
    }
    return kExitOk;
  } catch (const dreammem::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const dreammem::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
