#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <thread>
#include <string>
#include <string_view>
#include <vector>

namespace dreammem {

using Bytes = std::vector<std::uint8_t>;

/// Bad input: malformed files, broken invariants, bad configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage was run before the stage that produces its inputs.
class StageError : public std::runtime_error {
 public:
  StageError(std::string missing_stage, const std::string& what)
      : std::runtime_error(what), missing_stage_(std::move(missing_stage)) {}
  const std::string& missing_stage() const noexcept { return missing_stage_; }

 private:
  std::string missing_stage_;
};

std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

/// 64-bit FNV-1a followed by a splitmix64 finalizer. Stable across platforms.
std::uint64_t stable_hash64(std::string_view text);

/// splitmix64 mixing step; advances `state`.
std::uint64_t splitmix64(std::uint64_t& state);

/// Stateless mix of a key and a counter into 64 uniform bits.
std::uint64_t counter_bits(std::uint64_t key, std::uint64_t counter);

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);

/// Trim both ends and collapse internal whitespace runs to one space.
std::string canonicalize_whitespace(std::string_view text);

/// ASCII lowercase alphanumeric tokens of `text`.
std::vector<std::string> word_tokens(std::string_view text);

Bytes read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Little-endian binary helpers shared by the EMB1 / BRR1 / HEAD formats.
class ByteWriter {
 public:
  void put_bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(u);
  }
  void put_f64(double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(u);
  }
  void put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }
  const Bytes& bytes() const { return buf_; }

 private:
  Bytes buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t get_u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_++]} << (8 * i);
    return v;
  }
  float get_f32() {
    std::uint32_t u = get_u32();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  double get_f64() {
    std::uint64_t u = get_u64();
    double v;
    std::memcpy(&v, &u, 8);
    return v;
  }
  std::string get_string() { return get_bytes(get_u32()); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ValidationError(context_ + ": truncated payload");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string context_;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// thrown by any call is rethrown after all threads finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::size_t next = 0;
  std::exception_ptr error;
  auto take = [&]() -> std::size_t {
    std::lock_guard lock(mu);
    return error ? n : next++;
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = take(); i < n; i = take()) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace dreammem
