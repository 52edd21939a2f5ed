#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dreammem/common.hpp"

#include "json.hpp"

namespace dreammem {

enum class ModelKind { bayesian_ridge, head };
enum class Domain { genesis, dream };

/// Where a run's feature rows come from.
enum class FeatureSource { genesis_stacked, genesis_middle, dream_single };

std::string_view to_string(ModelKind kind);
std::string_view to_string(FeatureSource source);
ModelKind parse_model_kind(std::string_view text);
FeatureSource parse_feature_source(std::string_view text);
Domain domain_of(FeatureSource source);

/// "Mem10k" for genesis data, "Dream" for surrogate images.
std::string_view domain_label(Domain domain);

/// One cell of the run matrix. The name reads "<trained on>_<model>_<tested on>".
struct RunSpec {
  std::string run_name;
  ModelKind model_kind = ModelKind::bayesian_ridge;
  FeatureSource train_features = FeatureSource::genesis_stacked;
  FeatureSource test_features = FeatureSource::genesis_stacked;

  Domain trained_on() const { return domain_of(train_features); }
  Domain tested_on() const { return domain_of(test_features); }
  /// "(trained on)_(tested on)", e.g. "Mem10k_Dream".
  std::string legend() const;
  /// "Genesis" or "Surrogate Dream".
  std::string_view approach() const;
  /// Throws ValidationError when the name disagrees with the domains.
  void validate() const;
};

/// The five submitted runs followed by two ridge runs used by the fixture harness.
const std::vector<RunSpec>& known_runs();
const RunSpec& known_run(std::string_view name);

/// Fractional ranking: ties share the mean of the 1-based positions they occupy.
std::vector<double> rank_average(std::span<const double> values);

/// Pearson correlation of fractional ranks. Throws ValidationError for
/// mismatched lengths, n < 2, or a constant vector (undefined correlation).
double spearman(std::span<const double> a, std::span<const double> b);

/// Adjusted Fisher-Pearson sample skewness G1.
double skewness(std::span<const double> values);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  std::size_t in_range() const;
  std::size_t total() const { return in_range() + underflow + overflow; }
};

/// Half-open bins [lo + i w, lo + (i+1) w) except the last, which is closed at hi.
Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

using IdValue = std::pair<std::string, double>;

inline constexpr std::size_t kReportBins = 20;

struct RunResult {
  RunSpec spec;
  double spearman = 0.0;
  std::size_t n_items = 0;
  Histogram histogram;
  double skewness = 0.0;
  std::vector<IdValue> predictions;
};

/// Scores predictions against ground truth matched by id; both sides must
/// cover the same ids and every ground-truth score must be present.
RunResult evaluate_run(const RunSpec& spec, const std::vector<IdValue>& predictions,
                       const std::vector<std::pair<std::string, std::optional<double>>>& ground_truth);

/// Approach / Run Name / Spearman, Genesis rows first, rows sorted by name
/// within a group, Spearman to 3 decimals.
std::string emit_results_table(const std::vector<RunResult>& results);

nlohmann::ordered_json to_json(const RunResult& result);
RunResult run_result_from_json(const nlohmann::json& j);

/// Per-run spearman, skewness and histogram arrays for external plotting.
std::string distribution_report(const std::vector<RunResult>& results);

std::string serialize_predictions(const std::vector<IdValue>& predictions);
std::vector<IdValue> parse_predictions(std::string_view text);

/// Reporting-time clamp of a memorability prediction to [0, 1].
double clamp_score(double raw);

}  // namespace dreammem
