#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace inspectlab {

using Bytes = std::vector<std::uint8_t>;

/// Little-endian append-only serializer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(std::string_view s);  // u32 length prefix
  void raw(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  void floats(std::span<const float> values);  // u64 count prefix

  const Bytes& bytes() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::span<const std::uint8_t> raw(std::size_t n);
  std::vector<float> floats();

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const;
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Self-describing file: a 5-byte magic followed by tagged sections
/// {tag[4], u64 length, payload}. Readers skip tags they do not know.
class Container {
 public:
  explicit Container(std::string magic) : magic_(std::move(magic)) {}

  const std::string& magic() const { return magic_; }
  void put(std::string_view tag, Bytes payload);
  const Bytes* find(std::string_view tag) const;
  const Bytes& get(std::string_view tag) const;  // throws format error when absent
  const std::vector<std::pair<std::string, Bytes>>& sections() const { return sections_; }

  Bytes encode() const;
  static Container decode(std::span<const std::uint8_t> bytes, std::string_view expected_magic);

  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path, std::string_view expected_magic);

 private:
  std::string magic_;
  std::vector<std::pair<std::string, Bytes>> sections_;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace inspectlab
