#include <random>
#include <set>

#include "doctest.h"
#include "dreammem/dataset.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace dreammem;

namespace {

std::string line(const std::string& id, const std::string& score, const std::string& split = "train") {
  return R"({"id":")" + id + R"(","captions":["a dog runs"],"action_labels":["running"],"mem_score":)" +
         score + R"(,"split":")" + split + R"(","frame_count":10})";
}

bool throws_containing(auto&& fn, const std::string& needle) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("three valid lines parse into three records in order") {
  const std::string text = line("a", "0.5") + "\n" + line("b", "0.25", "val") + "\n" +
                           line("c", "null", "test") + "\n";
  const SplitManifest m = parse_manifest(text, "unit");
  REQUIRE(m.records.size() == 3);
  CHECK(m.records[0].id == "a");
  CHECK(m.records[1].split == Split::val);
  CHECK_FALSE(m.records[2].mem_score.has_value());
  CHECK(m.source_tag == "unit");
}

TEST_CASE("out-of-range score names the offending id") {
  const std::string text = line("ok", "0.5") + "\n" + line("bad_video", "1.3") + "\n";
  CHECK(throws_containing([&] { parse_manifest(text, "t"); }, "bad_video"));
  CHECK(throws_containing([&] { parse_manifest(text, "t"); }, "line 2"));
}

TEST_CASE("malformed and inconsistent manifests are rejected") {
  CHECK(throws_containing([] { parse_manifest(line("a", "0.5") + "\n{not json\n", "t"); }, "line 2"));
  CHECK(throws_containing([] { parse_manifest(line("a", "0.5") + "\n" + line("a", "0.1"), "t"); },
                          "duplicate id a"));
  CHECK(throws_containing(
      [] {
        parse_manifest(R"({"id":"x","captions":["c"],"action_labels":[],"mem_score":0.1,"split":"train","frame_count":1,"extra":1})",
                       "t");
      },
      "unknown key"));
  CHECK(throws_containing(
      [] {
        parse_manifest(R"({"id":"x","captions":["   "],"action_labels":[],"mem_score":0.1,"split":"train","frame_count":1})",
                       "t");
      },
      "empty caption"));
  CHECK(throws_containing(
      [] {
        parse_manifest(R"({"id":"x","captions":[],"action_labels":[],"mem_score":0.1,"split":"train","frame_count":1})",
                       "t");
      },
      "no captions"));
  CHECK(throws_containing(
      [] {
        parse_manifest(R"({"id":"x","captions":["c"],"action_labels":[],"mem_score":0.1,"split":"train","frame_count":0})",
                       "t");
      },
      "frame_count"));
  CHECK(throws_containing(
      [] {
        parse_manifest(R"({"id":"x","captions":["c"],"action_labels":[],"mem_score":0.1,"split":"holdout","frame_count":3})",
                       "t");
      },
      "unknown split"));
  CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.jsonl"), ValidationError);
}

TEST_CASE("captions are whitespace-canonicalized without case folding") {
  const SplitManifest m = parse_manifest(
      R"({"id":"x","captions":["  A   Dog\truns  "],"action_labels":["  Running "],"mem_score":0.1,"split":"train","frame_count":3})",
      "t");
  CHECK(m.records[0].captions[0] == "A Dog runs");
  CHECK(m.records[0].action_labels[0] == "Running");
}

TEST_CASE("Memento10k-shaped manifest yields the published split sizes") {
  SplitManifest m;
  for (int i = 0; i < 10000; ++i) {
    VideoRecord r;
    r.id = "v" + std::to_string(i);
    r.captions = {"a person walks"};
    r.split = i < 7000 ? Split::train : (i < 8500 ? Split::val : Split::test);
    if (r.split != Split::test) r.mem_score = 0.5;
    r.frame_count = 90;
    m.records.push_back(r);
  }
  const SplitManifest back = parse_manifest(serialize_manifest(m), "memento");
  CHECK(split_counts(back) == SplitCounts{7000, 1500, 1500});
}

TEST_CASE("split counts on small manifests") {
  CHECK(split_counts(SplitManifest{}) == SplitCounts{0, 0, 0});
  const std::string text = line("a", "0.1") + "\n" + line("b", "0.2") + "\n" + line("c", "0.3", "val");
  CHECK(split_counts(parse_manifest(text, "t")) == SplitCounts{2, 1, 0});
}

TEST_CASE("fixture of 32 at 0.7/0.15/0.15 splits 22/5/5") {
  // By hand: 22.4, 4.8, 4.8 -> floors 22, 4, 4; the two leftover records go to
  // the largest fractional parts (val and test).
  const Fixture fx = make_fixture(7, 32, {0.7, 0.15, 0.15});
  CHECK(split_counts(fx.manifest) == SplitCounts{22, 5, 5});
  CHECK(fx.latents.size() == 32);
}

TEST_CASE("fixture generation is pure and seed-sensitive") {
  CHECK(make_fixture(7, 0, {0.5, 0.25, 0.25}).manifest.records.empty());
  const auto a = serialize_manifest(make_fixture(7, 32, {0.7, 0.15, 0.15}).manifest);
  const auto b = serialize_manifest(make_fixture(7, 32, {0.7, 0.15, 0.15}).manifest);
  const auto c = serialize_manifest(make_fixture(8, 32, {0.7, 0.15, 0.15}).manifest);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("fixture records satisfy record invariants and latents round-trip") {
  const Fixture fx = make_fixture(11, 200, {0.6, 0.2, 0.2});
  std::set<std::string> ids;
  for (std::size_t i = 0; i < fx.manifest.records.size(); ++i) {
    const auto& r = fx.manifest.records[i];
    CHECK_NOTHROW(validate_record(r));
    CHECK(ids.insert(r.id).second);
    REQUIRE(r.mem_score.has_value());
    CHECK(*r.mem_score >= 0.0);
    CHECK(*r.mem_score <= 1.0);
    CHECK(fx.latents[i] >= 0.0);
    CHECK(fx.latents[i] <= 1.0);
  }
  const auto back = parse_latents(serialize_latents(fx));
  REQUIRE(back.size() == fx.latents.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].first == fx.manifest.records[i].id);
    CHECK(back[i].second == fx.latents[i]);
  }
}

TEST_CASE("save after load is byte-identical to canonical serialization") {
  oracle::TempDir tmp("dataset");
  const Fixture fx = make_fixture(3, 40, {0.7, 0.15, 0.15});
  const std::string canonical = serialize_manifest(fx.manifest);

  // Same content with sorted keys and padding instead of the canonical layout.
  std::string flat;
  for (const auto& r : fx.manifest.records) {
    nlohmann::json j = nlohmann::json::parse(serialize_record(r));
    flat += "  " + j.dump() + "  \n";
  }
  write_text_file(tmp.path() / "in.jsonl", flat);
  const SplitManifest loaded = load_manifest(tmp.path() / "in.jsonl");
  save_manifest(loaded, tmp.path() / "out.jsonl");
  CHECK(read_text_file(tmp.path() / "out.jsonl") == canonical);
  CHECK(loaded.records == fx.manifest.records);
}

TEST_CASE("split counts always sum to the record count") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = rng() % 300;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double a = u(rng), b = u(rng), c = u(rng);
    const double s = a + b + c;
    const std::array<double, 3> ratios{a / s, b / s, c / s};
    const SplitCounts want = apportion_splits(n, ratios);
    CHECK(want.total() == n);
    if (trial % 20 == 0) {
      const Fixture fx = make_fixture(trial, n, ratios);
      CHECK(split_counts(fx.manifest) == want);
      CHECK(split_counts(fx.manifest).total() == fx.manifest.records.size());
    }
  }
}
