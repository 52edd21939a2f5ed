#include "dreammem/features.hpp"

#include <cmath>
#include <unordered_map>

#include "json.hpp"

namespace dreammem {

namespace {
constexpr std::string_view kMatrixMagic = "EMB1";
}

FrameTriple select_frames(int frame_count) {
  if (frame_count < 1) throw ValidationError("frame_count must be >= 1");
  return {0, (frame_count - 1) / 2, frame_count - 1};
}

int middle_frame(int frame_count) { return select_frames(frame_count).middle; }

Eigen::Index EmbeddingMatrix::row_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return static_cast<Eigen::Index>(i);
  throw ValidationError("id " + id + " not present in embedding matrix (" + extractor_id + ")");
}

void EmbeddingMatrix::validate() const {
  if (static_cast<std::size_t>(data.rows()) != ids.size())
    throw ValidationError("embedding matrix row count does not match id count");
  if (data.cols() <= 0) throw ValidationError("embedding dimension must be positive");
  if (stacked_from != 1 && stacked_from != 3)
    throw ValidationError("stacked_from must be 1 or 3");
  if (stacked_from == 3 && data.cols() % 3 != 0)
    throw ValidationError("stacked embedding dimension must be divisible by 3");
  if (!data.allFinite()) throw ValidationError("embedding matrix has non-finite entries");
}

std::vector<double> toy_features(const RgbImage& image) {
  constexpr std::size_t kBins = ToyExtractor::kBins;
  std::vector<double> out(ToyExtractor::kDim, 0.0);
  const double npix = static_cast<double>(image.width) * image.height;
  for (int c = 0; c < 3; ++c) {
    std::array<std::size_t, kBins> counts{};
    double sum = 0.0;
    for (std::size_t p = 0; p < image.pixels.size() / 3; ++p) {
      const std::uint8_t v = image.pixels[p * 3 + c];
      ++counts[v * kBins / 256];
      sum += v;
    }
    const double mean = sum / npix;
    double sq = 0.0;
    for (std::size_t p = 0; p < image.pixels.size() / 3; ++p) {
      const double d = image.pixels[p * 3 + c] - mean;
      sq += d * d;
    }
    for (std::size_t b = 0; b < kBins; ++b) out[c * kBins + b] = counts[b] / npix;
    out[3 * kBins + c] = mean;
    out[3 * kBins + 3 + c] = std::sqrt(sq / npix);
  }
  return out;
}

std::vector<double> ToyExtractor::embed(std::span<const std::uint8_t> image) const {
  return toy_features(decode_ppm(image));
}

HttpEmbeddingBackend::HttpEmbeddingBackend(const std::string& url, std::string extractor_id,
                                           std::size_t dim, std::chrono::milliseconds timeout)
    : endpoint_(parse_http_url(url)),
      extractor_id_(std::move(extractor_id)),
      dim_(dim),
      timeout_(timeout) {
  if (dim_ == 0) throw ValidationError("embedding backend must declare a positive dimension");
}

std::vector<double> HttpEmbeddingBackend::embed(std::span<const std::uint8_t> image) const {
  nlohmann::json body;
  body["image_base64"] = base64_encode(image);
  const auto reply = nlohmann::json::parse(post_json(endpoint_, body.dump(), timeout_), nullptr,
                                           false);
  if (!reply.is_object()) throw BackendRejection("embedding backend returned non-JSON reply");
  if (reply.contains("error")) throw BackendRejection(reply["error"].dump());
  if (!reply.contains("vector") || !reply["vector"].is_array())
    throw BackendRejection("embedding backend reply lacks vector");
  std::vector<double> v;
  v.reserve(reply["vector"].size());
  for (const auto& x : reply["vector"]) {
    if (!x.is_number()) throw BackendRejection("embedding vector has a non-numeric entry");
    v.push_back(x.get<double>());
  }
  return v;
}

std::vector<double> extract(std::span<const std::uint8_t> image, const EmbeddingBackend& backend) {
  auto v = backend.embed(image);
  if (v.size() != backend.dim())
    throw ValidationError("extractor " + backend.extractor_id() + " returned dimension " +
                          std::to_string(v.size()) + ", declared " +
                          std::to_string(backend.dim()));
  for (double x : v)
    if (!std::isfinite(x))
      throw ValidationError("extractor " + backend.extractor_id() + " returned a non-finite value");
  return v;
}

std::vector<double> stack(std::span<const double> first, std::span<const double> middle,
                          std::span<const double> last) {
  if (first.size() != middle.size() || first.size() != last.size())
    throw ValidationError("cannot stack vectors of different dimensions");
  std::vector<double> out;
  out.reserve(3 * first.size());
  out.insert(out.end(), first.begin(), first.end());
  out.insert(out.end(), middle.begin(), middle.end());
  out.insert(out.end(), last.begin(), last.end());
  return out;
}

EmbeddingMatrix extract_matrix(const std::vector<ExtractionItem>& items,
                               const EmbeddingBackend& backend, std::size_t workers) {
  int frames_per_item = items.empty() ? 1 : static_cast<int>(items.front().frames.size());
  if (frames_per_item != 1 && frames_per_item != 3)
    throw ValidationError("items must carry 1 or 3 frames");
  for (const auto& it : items)
    if (static_cast<int>(it.frames.size()) != frames_per_item)
      throw ValidationError("item " + it.id + " has a different frame count from the others");

  const auto d = static_cast<Eigen::Index>(backend.dim());
  EmbeddingMatrix m;
  m.extractor_id = backend.extractor_id();
  m.stacked_from = frames_per_item;
  m.data.resize(static_cast<Eigen::Index>(items.size()), d * frames_per_item);
  for (const auto& it : items) m.ids.push_back(it.id);

  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& item = items[i];
    std::vector<double> row;
    for (const auto& frame : item.frames) {
      if (!std::filesystem::exists(frame))
        throw ValidationError("missing image for " + item.id + ": " + frame.string());
      const Bytes bytes = read_file(frame);
      std::vector<double> v;
      try {
        v = extract(bytes, backend);
      } catch (const ValidationError& e) {
        throw ValidationError(item.id + " (" + frame.string() + "): " + e.what());
      }
      row.insert(row.end(), v.begin(), v.end());
    }
    m.data.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  });
  return m;
}

Bytes encode_matrix(const EmbeddingMatrix& m) {
  m.validate();
  ByteWriter w;
  w.put_bytes(kMatrixMagic);
  w.put_u32(static_cast<std::uint32_t>(m.data.rows()));
  w.put_u32(static_cast<std::uint32_t>(m.data.cols()));
  w.put_u8(static_cast<std::uint8_t>(m.stacked_from));
  w.put_string(m.extractor_id);
  for (const auto& id : m.ids) w.put_string(id);
  for (Eigen::Index i = 0; i < m.data.rows(); ++i)
    for (Eigen::Index j = 0; j < m.data.cols(); ++j) w.put_f32(static_cast<float>(m.data(i, j)));
  return w.bytes();
}

EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> data) {
  ByteReader r(data, "EMB1");
  if (r.get_bytes(4) != kMatrixMagic) throw ValidationError("EMB1: magic mismatch");
  const std::uint32_t n = r.get_u32();
  const std::uint32_t d = r.get_u32();
  EmbeddingMatrix m;
  m.stacked_from = r.get_u8();
  m.extractor_id = r.get_string();
  for (std::uint32_t i = 0; i < n; ++i) {
    if (r.remaining() < 4) throw ValidationError("EMB1: id count is smaller than row count");
    m.ids.push_back(r.get_string());
  }
  const std::uint64_t payload = std::uint64_t{n} * d * 4;
  if (r.remaining() < payload) throw ValidationError("EMB1: truncated payload");
  if (r.remaining() > payload) throw ValidationError("EMB1: trailing bytes after payload");
  m.data.resize(n, d);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < d; ++j) m.data(i, j) = r.get_f32();
  m.validate();
  return m;
}

void save_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  write_file(path, encode_matrix(matrix));
}

EmbeddingMatrix load_matrix(const std::filesystem::path& path) {
  try {
    return decode_matrix(read_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

}  // namespace dreammem
