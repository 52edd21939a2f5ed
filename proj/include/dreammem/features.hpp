#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dreammem/common.hpp"
#include "dreammem/http.hpp"
#include "dreammem/image.hpp"

namespace dreammem {

struct FrameTriple {
  int first = 0;
  int middle = 0;
  int last = 0;

  bool operator==(const FrameTriple&) const = default;
};

/// (0, floor((n-1)/2), n-1). Throws ValidationError for n < 1.
FrameTriple select_frames(int frame_count);
/// Lower middle for even counts.
int middle_frame(int frame_count);

/// Per-item feature vectors, one row per id.
///
/// Stored as 32-bit floats on disk; held and computed as doubles.
struct EmbeddingMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd data;  // ids.size() x dim
  std::string extractor_id;
  int stacked_from = 1;  // frames per row: 1 or 3

  Eigen::Index dim() const { return data.cols(); }
  /// Row index of `id`; throws ValidationError if absent.
  Eigen::Index row_of(const std::string& id) const;
  void validate() const;
};

/// Image in, fixed-length vector out.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string extractor_id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(std::span<const std::uint8_t> image) const = 0;
};

/// Per-channel 16-bin normalized histograms (R, G, B), then per-channel means,
/// then per-channel population standard deviations: 54 values. PPM input only.
class ToyExtractor final : public EmbeddingBackend {
 public:
  static constexpr std::size_t kBins = 16;
  static constexpr std::size_t kDim = 3 * kBins + 6;

  std::string extractor_id() const override { return "toy-hist16"; }
  std::size_t dim() const override { return kDim; }
  std::vector<double> embed(std::span<const std::uint8_t> image) const override;
};

std::vector<double> toy_features(const RgbImage& image);

/// POSTs {image_base64} and expects {vector: [...]} or {error}.
class HttpEmbeddingBackend final : public EmbeddingBackend {
 public:
  HttpEmbeddingBackend(const std::string& url, std::string extractor_id, std::size_t dim,
                       std::chrono::milliseconds timeout);
  std::string extractor_id() const override { return extractor_id_; }
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(std::span<const std::uint8_t> image) const override;

 private:
  HttpEndpoint endpoint_;
  std::string extractor_id_;
  std::size_t dim_;
  std::chrono::milliseconds timeout_;
};

/// Runs the backend and checks the declared dimension and finiteness.
std::vector<double> extract(std::span<const std::uint8_t> image, const EmbeddingBackend& backend);

/// Concatenation in (first, middle, last) order.
std::vector<double> stack(std::span<const double> first, std::span<const double> middle,
                          std::span<const double> last);

/// One matrix row: the frames (1, or 3 to be stacked) of one item.
struct ExtractionItem {
  std::string id;
  std::vector<std::filesystem::path> frames;
};

/// Extracts every item with up to `workers` threads; rows follow input order.
EmbeddingMatrix extract_matrix(const std::vector<ExtractionItem>& items,
                               const EmbeddingBackend& backend, std::size_t workers);

/// EMB1: "EMB1", u32 n, u32 d, u8 stacked_from, u32-prefixed extractor id,
/// n u32-prefixed ids, n*d f32; all little-endian.
Bytes encode_matrix(const EmbeddingMatrix& matrix);
EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> data);
void save_matrix(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix load_matrix(const std::filesystem::path& path);

}  // namespace dreammem
