#include <random>

#include "doctest.h"
#include "dreammem/features.hpp"
#include "dreammem/image.hpp"
#include "dreammem/synthesis.hpp"
#include "httplib.h"
#include "oracles.hpp"

using namespace dreammem;
using json = nlohmann::json;

namespace {

RgbImage solid(int w, int h, std::uint8_t v) {
  return {w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, v)};
}

// Histogram, mean and population std per channel, straight from the pixel grid.
std::vector<double> recompute_toy(const RgbImage& img) {
  std::vector<double> out(54, 0.0);
  const double n = static_cast<double>(img.width) * img.height;
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const int v = img.at(x, y, c);
        int bin = 0;
        while (bin < 15 && v >= (bin + 1) * 16) ++bin;
        out[c * 16 + bin] += 1.0 / n;
        mean += v / n;
      }
    double var = 0.0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) var += (img.at(x, y, c) - mean) * (img.at(x, y, c) - mean) / n;
    out[48 + c] = mean;
    out[51 + c] = std::sqrt(var);
  }
  return out;
}

EmbeddingMatrix random_matrix(std::size_t n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  EmbeddingMatrix m;
  m.extractor_id = "rand";
  m.data.resize(static_cast<Eigen::Index>(n), d);
  for (std::size_t i = 0; i < n; ++i) {
    m.ids.push_back("id_" + std::to_string(i));
    for (Eigen::Index j = 0; j < d; ++j)
      m.data(static_cast<Eigen::Index>(i), j) = static_cast<float>(g(rng));
  }
  return m;
}

}  // namespace

TEST_CASE("frame selection") {
  CHECK(select_frames(1) == FrameTriple{0, 0, 0});
  CHECK(select_frames(5) == FrameTriple{0, 2, 4});
  CHECK(select_frames(2) == FrameTriple{0, 0, 1});
  CHECK(middle_frame(1) == 0);
  CHECK(middle_frame(7) == 3);
  CHECK(middle_frame(10) == 4);
  CHECK_THROWS_AS(select_frames(0), ValidationError);
  for (int n = 1; n <= 500; ++n) {
    const FrameTriple f = select_frames(n);
    CHECK(0 <= f.first);
    CHECK(f.first <= f.middle);
    CHECK(f.middle <= f.last);
    CHECK(f.last <= n - 1);
    CHECK(f.middle == middle_frame(n));
  }
}

TEST_CASE("toy extractor on constant images") {
  const ToyExtractor toy;
  const auto black = toy.embed(encode_ppm(solid(8, 8, 0)));
  REQUIRE(black.size() == 54);
  for (int c = 0; c < 3; ++c) {
    CHECK(black[c * 16] == 1.0);
    CHECK(black[48 + c] == 0.0);
    CHECK(black[51 + c] == 0.0);
  }
  const auto white = toy.embed(encode_ppm(solid(8, 8, 255)));
  for (int c = 0; c < 3; ++c) {
    CHECK(white[c * 16 + 15] == 1.0);
    CHECK(white[48 + c] == 255.0);
  }
}

TEST_CASE("toy extractor matches an independent recomputation on a stub image") {
  const Bytes bytes = stub_generate("x", 1, 64, 64);
  const auto got = ToyExtractor().embed(bytes);
  const auto want = recompute_toy(decode_ppm(bytes));
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  for (int c = 0; c < 3; ++c) {
    double s = 0.0;
    for (int b = 0; b < 16; ++b) s += got[c * 16 + b];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  CHECK(ToyExtractor().embed(bytes) == got);
}

TEST_CASE("histogram blocks sum to one on many stub images") {
  const ToyExtractor toy;
  for (int seed = 0; seed < 50; ++seed) {
    const auto v = toy.embed(stub_generate("prompt " + std::to_string(seed), seed, 24, 40));
    for (int c = 0; c < 3; ++c) {
      double s = 0.0;
      for (int b = 0; b < 16; ++b) s += v[c * 16 + b];
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("stacking") {
  const std::vector<double> a{1}, b{2}, c{3};
  CHECK(stack(a, b, c) == std::vector<double>{1, 2, 3});
  const std::vector<double> v{0.5, -1, 2};
  CHECK(stack(v, v, v) == std::vector<double>{0.5, -1, 2, 0.5, -1, 2, 0.5, -1, 2});
  CHECK_THROWS_AS(stack(a, v, c), ValidationError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> f(4), m(4), l(4);
    for (int i = 0; i < 4; ++i) {
      f[i] = u(rng);
      m[i] = u(rng);
      l[i] = u(rng);
    }
    const auto s = stack(f, m, l);
    REQUIRE(s.size() == 12);
    CHECK(std::vector<double>(s.begin(), s.begin() + 4) == f);
    CHECK(std::vector<double>(s.begin() + 4, s.begin() + 8) == m);
    CHECK(std::vector<double>(s.begin() + 8, s.end()) == l);
  }
}

TEST_CASE("EMB1 round-trip and corruption") {
  const EmbeddingMatrix m = random_matrix(3, 5, 1);
  const Bytes bytes = encode_matrix(m);
  const EmbeddingMatrix back = decode_matrix(bytes);
  CHECK(back.ids == m.ids);
  CHECK(back.data == m.data);
  CHECK(back.extractor_id == "rand");
  CHECK(encode_matrix(back) == bytes);

  // Header layout: magic, n, d, stacked_from.
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "EMB1");
  CHECK(bytes[4] == 3);
  CHECK(bytes[8] == 5);
  CHECK(bytes[12] == 1);

  Bytes bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_matrix(bad), doctest::Contains("magic"), ValidationError);
  Bytes shorter(bytes.begin(), bytes.end() - 1);
  CHECK_THROWS_AS(decode_matrix(shorter), ValidationError);
  Bytes longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_matrix(longer), ValidationError);

  EmbeddingMatrix empty;
  empty.extractor_id = "rand";
  empty.data.resize(0, 7);
  const EmbeddingMatrix e2 = decode_matrix(encode_matrix(empty));
  CHECK(e2.data.rows() == 0);
  CHECK(e2.dim() == 7);
  CHECK(encode_matrix(e2) == encode_matrix(empty));
}

TEST_CASE("matrix invariants") {
  EmbeddingMatrix m = random_matrix(2, 4, 2);
  m.stacked_from = 3;
  CHECK_THROWS_AS(m.validate(), ValidationError);
  m = random_matrix(2, 4, 2);
  m.data(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(encode_matrix(m), ValidationError);
  m = random_matrix(2, 4, 2);
  m.ids.pop_back();
  CHECK_THROWS_AS(m.validate(), ValidationError);
}

TEST_CASE("extract_matrix stacks frames in order and is worker-independent") {
  oracle::TempDir tmp("features");
  std::vector<ExtractionItem> items;
  for (int i = 0; i < 12; ++i) {
    ExtractionItem it{"item" + std::to_string(i), {}};
    for (int f = 0; f < 3; ++f) {
      const auto p = tmp.path() / (std::to_string(i) + "_" + std::to_string(f) + ".ppm");
      write_file(p, stub_generate("frame " + std::to_string(i), f, 16, 16));
      it.frames.push_back(p);
    }
    items.push_back(it);
  }
  const ToyExtractor toy;
  const EmbeddingMatrix one = extract_matrix(items, toy, 1);
  const EmbeddingMatrix many = extract_matrix(items, toy, 6);
  CHECK(one.dim() == 162);
  CHECK(one.stacked_from == 3);
  CHECK(encode_matrix(one) == encode_matrix(many));
  const auto middle = toy.embed(read_file(items[4].frames[1]));
  for (int j = 0; j < 54; ++j) CHECK(one.data(4, 54 + j) == middle[j]);

  items[5].frames[2] = tmp.path() / "missing.ppm";
  CHECK_THROWS_WITH_AS(extract_matrix(items, toy, 4), doctest::Contains("item5"), ValidationError);
}

TEST_CASE("http embedding wire protocol and declared dimension") {
  httplib::Server server;
  server.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
    const json j = json::parse(req.body);
    const Bytes img = base64_decode(j["image_base64"].get<std::string>());
    if (img.size() < 20) {
      res.status = 422;
      res.set_content(json{{"error", "image too small"}}.dump(), "application/json");
      return;
    }
    const auto v = ToyExtractor().embed(img);
    res.set_content(json{{"vector", std::vector<double>(v.begin(), v.begin() + 4)}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string url = "http://127.0.0.1:" + std::to_string(port) + "/embed";

  const Bytes img = stub_generate("a dog", 1, 16, 16);
  HttpEmbeddingBackend ok(url, "remote-4", 4, std::chrono::milliseconds(5000));
  const auto v = extract(img, ok);
  const auto want = ToyExtractor().embed(img);
  CHECK(v == std::vector<double>(want.begin(), want.begin() + 4));

  HttpEmbeddingBackend wrong(url, "remote-8", 8, std::chrono::milliseconds(5000));
  CHECK_THROWS_WITH_AS(extract(img, wrong), doctest::Contains("dimension"), ValidationError);
  CHECK_THROWS_WITH_AS(extract(Bytes{1, 2, 3}, ok), doctest::Contains("image too small"), BackendRejection);

  server.stop();
  t.join();
}
