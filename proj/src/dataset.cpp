#include "dreammem/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dreammem/common.hpp"
#include "dreammem/concept.hpp"
#include "json.hpp"

namespace dreammem {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  throw ValidationError("unknown split '" + std::string(text) + "'");
}

void validate_record(const VideoRecord& r) {
  if (r.id.empty()) throw ValidationError("record has an empty id");
  if (r.captions.empty()) throw ValidationError("record " + r.id + ": no captions");
  for (const auto& c : r.captions)
    if (canonicalize_whitespace(c).empty())
      throw ValidationError("record " + r.id + ": empty caption");
  for (const auto& l : r.action_labels)
    if (canonicalize_whitespace(l).empty())
      throw ValidationError("record " + r.id + ": empty action label");
  if (r.mem_score && !(*r.mem_score >= 0.0 && *r.mem_score <= 1.0))
    throw ValidationError("record " + r.id + ": mem_score " + std::to_string(*r.mem_score) +
                          " outside [0,1]");
  if (r.frame_count < 1) throw ValidationError("record " + r.id + ": frame_count must be >= 1");
}

namespace {

std::vector<std::string> string_list(const ojson& j, const char* key) {
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ValidationError(std::string(key) + " must be an array");
  std::vector<std::string> out;
  for (const auto& v : arr) {
    if (!v.is_string()) throw ValidationError(std::string(key) + " must contain strings");
    out.push_back(canonicalize_whitespace(v.get<std::string>()));
  }
  return out;
}

VideoRecord record_from_json(const ojson& j) {
  static const std::unordered_set<std::string> kKeys = {"id",    "captions", "action_labels",
                                                        "mem_score", "split", "frame_count"};
  if (!j.is_object()) throw ValidationError("line is not a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kKeys.contains(key)) throw ValidationError("unknown key '" + key + "'");

  VideoRecord r;
  if (!j.contains("id") || !j["id"].is_string()) throw ValidationError("missing string 'id'");
  r.id = j["id"].get<std::string>();
  try {
    r.captions = string_list(j, "captions");
    r.action_labels = string_list(j, "action_labels");
    if (j.contains("mem_score") && !j["mem_score"].is_null()) {
      if (!j["mem_score"].is_number()) throw ValidationError("mem_score must be a number or null");
      r.mem_score = j["mem_score"].get<double>();
    }
    if (!j.at("split").is_string()) throw ValidationError("split must be a string");
    r.split = parse_split(j["split"].get<std::string>());
    if (!j.at("frame_count").is_number_integer())
      throw ValidationError("frame_count must be an integer");
    const auto fc = j["frame_count"].get<std::int64_t>();
    if (fc < 1 || fc > std::numeric_limits<int>::max())
      throw ValidationError("frame_count must be >= 1");
    r.frame_count = static_cast<int>(fc);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("record " + r.id + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("record " + r.id + ": " + e.what());
  }
  validate_record(r);
  return r;
}

}  // namespace

SplitManifest parse_manifest(std::string_view text, std::string source_tag) {
  SplitManifest m;
  m.source_tag = std::move(source_tag);
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (canonicalize_whitespace(line).empty()) continue;

    VideoRecord r;
    try {
      r = record_from_json(ojson::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(r.id).second)
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate id " + r.id);
    m.records.push_back(std::move(r));
  }
  return m;
}

SplitManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ValidationError("manifest not found: " + path.string());
  return parse_manifest(read_text_file(path), path.filename().string());
}

std::string serialize_record(const VideoRecord& r) {
  ojson j;
  j["id"] = r.id;
  j["captions"] = r.captions;
  j["action_labels"] = r.action_labels;
  j["mem_score"] = r.mem_score ? ojson(*r.mem_score) : ojson(nullptr);
  j["split"] = std::string(to_string(r.split));
  j["frame_count"] = r.frame_count;
  return j.dump();
}

std::string serialize_manifest(const SplitManifest& manifest) {
  std::string out;
  for (const auto& r : manifest.records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
  write_text_file(path, serialize_manifest(manifest));
}

SplitCounts split_counts(const SplitManifest& manifest) {
  SplitCounts c;
  for (const auto& r : manifest.records) {
    switch (r.split) {
      case Split::train: ++c.train; break;
      case Split::val: ++c.val; break;
      case Split::test: ++c.test; break;
    }
  }
  return c;
}

SplitCounts apportion_splits(std::size_t n, const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("split ratios must be >= 0");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(n);
    // Absorb representation error such as 0.7 * 10000 = 6999.999...
    const double fl = std::floor(exact + 1e-9);
    counts[i] = static_cast<std::size_t>(fl);
    frac[i] = std::max(0.0, exact - fl);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return {counts[0], counts[1], counts[2]};
}

namespace {

const ConceptWord& pick(std::span<const ConceptWord> table, std::uint64_t bits) {
  return table[bits % table.size()];
}

}  // namespace

Fixture make_fixture(std::uint64_t seed, std::size_t n, const std::array<double, 3>& ratios) {
  const SplitCounts counts = apportion_splits(n, ratios);
  std::uint64_t s = seed;
  const std::uint64_t key = splitmix64(s);

  static constexpr const char* kPrepositions[] = {"in the", "at the", "near the"};

  Fixture fx;
  fx.manifest.source_tag = "fixture:seed=" + std::to_string(seed) + ":n=" + std::to_string(n);
  fx.manifest.records.reserve(n);
  fx.latents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto draw = [&, k = std::uint64_t{0}]() mutable { return counter_bits(key, i * 32 + k++); };

    const auto& subject = pick(concept_subjects(), draw());
    const auto& action = pick(concept_actions(), draw());
    const auto& place = pick(concept_places(), draw());
    const char* prep = kPrepositions[draw() % 3];

    VideoRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "video_%05zu", i);
    r.id = id;

    std::ostringstream cap;
    cap << "a " << subject.word << " is " << action.word << ' ' << prep << ' ' << place.word;
    r.captions.push_back(cap.str());
    const std::uint64_t extra = draw() % 3;
    if (extra >= 1)
      r.captions.push_back("the " + std::string(subject.word) + " keeps " +
                           std::string(action.word) + " by the " + std::string(place.word));
    if (extra >= 2)
      r.captions.push_back("someone films a " + std::string(subject.word) + " " +
                           std::string(action.word));

    const double label_draw = unit_double(draw());
    if (label_draw >= 0.15) {
      r.action_labels.emplace_back(action.word);
      if (label_draw >= 0.7) {
        const auto& second = pick(concept_actions(), draw());
        if (second.word != action.word) r.action_labels.emplace_back(second.word);
      }
    }

    std::string concept_text;
    for (const auto& l : r.action_labels) concept_text += l + " ";
    concept_text += r.captions.front();
    const double latent = concept_score(concept_text).value();

    r.mem_score = std::round((0.3 + 0.6 * latent) * 1e6) / 1e6;
    r.frame_count = 24 + static_cast<int>(draw() % 157);
    r.split = i < counts.train                ? Split::train
              : i < counts.train + counts.val ? Split::val
                                              : Split::test;
    fx.manifest.records.push_back(std::move(r));
    fx.latents.push_back(latent);
  }
  return fx;
}

std::string serialize_latents(const Fixture& fixture) {
  std::string out;
  for (std::size_t i = 0; i < fixture.latents.size(); ++i) {
    ojson j;
    j["id"] = fixture.manifest.records[i].id;
    j["latent"] = fixture.latents[i];
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<std::pair<std::string, double>> parse_latents(std::string_view text) {
  std::vector<std::pair<std::string, double>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (canonicalize_whitespace(line).empty()) continue;
    try {
      const auto j = ojson::parse(line);
      out.emplace_back(j.at("id").get<std::string>(), j.at("latent").get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("latents line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dreammem
