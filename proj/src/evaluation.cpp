#include "dreammem/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "dreammem/common.hpp"

namespace dreammem {

using ojson = nlohmann::ordered_json;

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::bayesian_ridge ? "bayesian_ridge" : "head";
}

std::string_view to_string(FeatureSource source) {
  switch (source) {
    case FeatureSource::genesis_stacked: return "genesis_stacked";
    case FeatureSource::genesis_middle: return "genesis_middle";
    case FeatureSource::dream_single: return "dream_single";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "bayesian_ridge") return ModelKind::bayesian_ridge;
  if (text == "head") return ModelKind::head;
  throw ValidationError("unknown model kind '" + std::string(text) + "'");
}

FeatureSource parse_feature_source(std::string_view text) {
  if (text == "genesis_stacked") return FeatureSource::genesis_stacked;
  if (text == "genesis_middle") return FeatureSource::genesis_middle;
  if (text == "dream_single") return FeatureSource::dream_single;
  throw ValidationError("unknown feature source '" + std::string(text) + "'");
}

Domain domain_of(FeatureSource source) {
  return source == FeatureSource::dream_single ? Domain::dream : Domain::genesis;
}

std::string_view domain_label(Domain domain) {
  return domain == Domain::genesis ? "Mem10k" : "Dream";
}

std::string RunSpec::legend() const {
  return std::string(domain_label(trained_on())) + "_" + std::string(domain_label(tested_on()));
}

std::string_view RunSpec::approach() const {
  return trained_on() == Domain::genesis ? "Genesis" : "Surrogate Dream";
}

void RunSpec::validate() const {
  const std::string prefix = std::string(domain_label(trained_on())) + "_";
  const std::string suffix = "_" + std::string(domain_label(tested_on()));
  const bool ok = run_name.size() > prefix.size() + suffix.size() &&
                  run_name.compare(0, prefix.size(), prefix) == 0 &&
                  run_name.compare(run_name.size() - suffix.size(), suffix.size(), suffix) == 0;
  if (!ok)
    throw ValidationError("run name '" + run_name + "' must read " + prefix + "<model>" + suffix);
  if (run_name.find_first_of("/\\ ") != std::string::npos)
    throw ValidationError("run name '" + run_name + "' must not contain slashes or spaces");
}

const std::vector<RunSpec>& known_runs() {
  using enum FeatureSource;
  static const std::vector<RunSpec> runs = {
      {"Mem10k_DenseNet121_Dream", ModelKind::head, genesis_middle, dream_single},
      {"Mem10k_DenseNet121_Mem10k", ModelKind::head, genesis_middle, genesis_middle},
      {"Mem10k_CLIP_Ridge_Regression_Mem10k", ModelKind::bayesian_ridge, genesis_stacked,
       genesis_stacked},
      {"Dream_DenseNet121_Mem10k", ModelKind::head, dream_single, genesis_middle},
      {"Dream_DenseNet121_Dream", ModelKind::head, dream_single, dream_single},
      {"Dream_Ridge_Regression_Dream", ModelKind::bayesian_ridge, dream_single, dream_single},
      {"Mem10k_Ridge_Regression_Dream", ModelKind::bayesian_ridge, genesis_middle, dream_single},
  };
  return runs;
}

const RunSpec& known_run(std::string_view name) {
  for (const auto& r : known_runs())
    if (r.run_name == name) return r;
  throw ValidationError("unknown run '" + std::string(name) + "'");
}

std::vector<double> rank_average(std::span<const double> values) {
  const std::size_t n = values.size();
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("rank_average: non-finite value");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    // Positions i+1 .. j share their mean.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ValidationError("spearman: length mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  if (a.size() < 2) throw ValidationError("spearman: need at least 2 items");
  const auto ra = rank_average(a);
  const auto rb = rank_average(b);
  const double n = static_cast<double>(a.size());
  const double mean = 0.5 * (n + 1.0);  // mean of any fractional ranking
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw ValidationError("spearman: undefined correlation for a constant vector");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double skewness(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 3) throw ValidationError("skewness: need at least 3 values");
  const double nd = static_cast<double>(n);
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / nd;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= nd;
  m3 /= nd;
  if (m2 == 0.0) throw ValidationError("skewness: zero variance");
  return std::sqrt(nd * (nd - 1.0)) / (nd - 2.0) * m3 / std::pow(m2, 1.5);
}

std::size_t Histogram::in_range() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins < 1) throw ValidationError("histogram: need at least one bin");
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ValidationError("histogram: invalid range");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    if (std::isnan(v)) throw ValidationError("histogram: NaN value");
    if (v < lo) {
      ++h.underflow;
    } else if (v > hi) {
      ++h.overflow;
    } else {
      auto idx = static_cast<std::size_t>(std::floor((v - lo) / width));
      ++h.counts[std::min(idx, bins - 1)];
    }
  }
  return h;
}

RunResult evaluate_run(
    const RunSpec& spec, const std::vector<IdValue>& predictions,
    const std::vector<std::pair<std::string, std::optional<double>>>& ground_truth) {
  spec.validate();
  std::unordered_map<std::string, std::optional<double>> truth;
  for (const auto& [id, score] : ground_truth)
    if (!truth.emplace(id, score).second)
      throw ValidationError(spec.run_name + ": duplicate ground-truth id " + id);
  if (predictions.size() != truth.size())
    throw ValidationError(spec.run_name + ": " + std::to_string(predictions.size()) +
                          " predictions for " + std::to_string(truth.size()) +
                          " ground-truth items");

  std::vector<double> pred, gt;
  pred.reserve(predictions.size());
  gt.reserve(predictions.size());
  for (const auto& [id, p] : predictions) {
    auto it = truth.find(id);
    if (it == truth.end())
      throw ValidationError(spec.run_name + ": prediction for unknown id " + id);
    if (!it->second) throw ValidationError(spec.run_name + ": missing ground truth for " + id);
    pred.push_back(p);
    gt.push_back(*it->second);
    truth.erase(it);
  }

  RunResult r;
  r.spec = spec;
  r.n_items = pred.size();
  r.spearman = spearman(pred, gt);
  r.histogram = histogram(pred, kReportBins, 0.0, 1.0);
  r.skewness = skewness(pred);
  r.predictions = predictions;
  return r;
}

std::string emit_results_table(const std::vector<RunResult>& results) {
  std::vector<const RunResult*> rows;
  for (const auto& r : results) rows.push_back(&r);
  std::stable_sort(rows.begin(), rows.end(), [](const RunResult* a, const RunResult* b) {
    const int ga = a->spec.trained_on() == Domain::genesis ? 0 : 1;
    const int gb = b->spec.trained_on() == Domain::genesis ? 0 : 1;
    if (ga != gb) return ga < gb;
    return a->spec.run_name < b->spec.run_name;
  });

  std::size_t approach_w = std::string_view("Approach").size();
  std::size_t name_w = std::string_view("Run Name").size();
  for (const auto* r : rows) {
    approach_w = std::max(approach_w, r->spec.approach().size());
    name_w = std::max(name_w, r->spec.run_name.size());
  }
  auto pad = [](std::string_view s, std::size_t w) {
    std::string out(s);
    out.resize(std::max(w, s.size()), ' ');
    return out;
  };

  std::ostringstream out;
  out << pad("Approach", approach_w) << "  " << pad("Run Name", name_w) << "  Spearman\n";
  std::string_view current;
  for (const auto* r : rows) {
    const std::string_view group = r->spec.approach();
    char rho[32];
    std::snprintf(rho, sizeof rho, "%.3f", r->spearman);
    out << pad(group == current ? "" : group, approach_w) << "  " << pad(r->spec.run_name, name_w)
        << "  " << rho << "\n";
    current = group;
  }
  return out.str();
}

ojson to_json(const RunResult& r) {
  ojson j;
  j["run_name"] = r.spec.run_name;
  j["legend"] = r.spec.legend();
  j["approach"] = std::string(r.spec.approach());
  j["model_kind"] = std::string(to_string(r.spec.model_kind));
  j["train_features"] = std::string(to_string(r.spec.train_features));
  j["test_features"] = std::string(to_string(r.spec.test_features));
  j["spearman"] = r.spearman;
  j["n_items"] = r.n_items;
  j["skewness"] = r.skewness;
  j["histogram"] = {{"lo", r.histogram.lo},
                    {"hi", r.histogram.hi},
                    {"bins", r.histogram.counts.size()},
                    {"counts", r.histogram.counts},
                    {"underflow", r.histogram.underflow},
                    {"overflow", r.histogram.overflow}};
  ojson preds = ojson::array();
  for (const auto& [id, p] : r.predictions) preds.push_back({{"id", id}, {"prediction", p}});
  j["predictions"] = std::move(preds);
  return j;
}

RunResult run_result_from_json(const nlohmann::json& j) {
  try {
    RunResult r;
    r.spec.run_name = j.at("run_name").get<std::string>();
    r.spec.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
    r.spec.train_features = parse_feature_source(j.at("train_features").get<std::string>());
    r.spec.test_features = parse_feature_source(j.at("test_features").get<std::string>());
    r.spearman = j.at("spearman").get<double>();
    r.n_items = j.at("n_items").get<std::size_t>();
    r.skewness = j.at("skewness").get<double>();
    const auto& h = j.at("histogram");
    r.histogram.lo = h.at("lo").get<double>();
    r.histogram.hi = h.at("hi").get<double>();
    r.histogram.counts = h.at("counts").get<std::vector<std::size_t>>();
    r.histogram.underflow = h.at("underflow").get<std::size_t>();
    r.histogram.overflow = h.at("overflow").get<std::size_t>();
    for (const auto& p : j.at("predictions"))
      r.predictions.emplace_back(p.at("id").get<std::string>(), p.at("prediction").get<double>());
    r.spec.validate();
    if (r.histogram.total() != r.n_items)
      throw ValidationError(r.spec.run_name + ": histogram counts do not sum to n_items");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("run result: ") + e.what());
  }
}

std::string distribution_report(const std::vector<RunResult>& results) {
  std::vector<const RunResult*> rows;
  for (const auto& r : results) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(), [](const RunResult* a, const RunResult* b) {
    return a->spec.run_name < b->spec.run_name;
  });
  ojson runs = ojson::array();
  for (const auto* r : rows) {
    ojson j = to_json(*r);
    j.erase("predictions");
    runs.push_back(std::move(j));
  }
  ojson report;
  report["runs"] = std::move(runs);
  return report.dump(2) + "\n";
}

std::string serialize_predictions(const std::vector<IdValue>& predictions) {
  std::string out;
  for (const auto& [id, p] : predictions) {
    ojson j;
    j["id"] = id;
    j["prediction"] = p;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<IdValue> parse_predictions(std::string_view text) {
  std::vector<IdValue> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (canonicalize_whitespace(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.emplace_back(j.at("id").get<std::string>(), j.at("prediction").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

double clamp_score(double raw) { return std::clamp(raw, 0.0, 1.0); }

}  // namespace dreammem
