#include "inspectlab/core/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "inspectlab/core/error.hpp"

namespace inspectlab {

static_assert(std::endian::native == std::endian::little, "serializers assume a little-endian host");

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.insert(out_.end(), s.begin(), s.end());
}

void ByteWriter::floats(std::span<const float> values) {
  u64(values.size());
  const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
  out_.insert(out_.end(), p, p + values.size_bytes());
}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) fail(ErrorKind::format, "truncated binary stream");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
  const auto n = u32();
  auto s = raw(n);
  return std::string(s.begin(), s.end());
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::vector<float> ByteReader::floats() {
  const auto n = u64();
  if (n > remaining() / sizeof(float)) fail(ErrorKind::format, "float array exceeds stream");
  std::vector<float> v(n);
  auto s = raw(n * sizeof(float));
  std::memcpy(v.data(), s.data(), s.size());
  return v;
}

void Container::put(std::string_view tag, Bytes payload) {
  require(tag.size() == 4, "container tags are four bytes");
  for (auto& [t, p] : sections_) {
    if (t == tag) {
      p = std::move(payload);
      return;
    }
  }
  sections_.emplace_back(std::string(tag), std::move(payload));
}

const Bytes* Container::find(std::string_view tag) const {
  for (const auto& [t, p] : sections_)
    if (t == tag) return &p;
  return nullptr;
}

const Bytes& Container::get(std::string_view tag) const {
  const auto* p = find(tag);
  if (!p) fail(ErrorKind::format, magic_ + " container has no '" + std::string(tag) + "' section");
  return *p;
}

Bytes Container::encode() const {
  ByteWriter w;
  w.raw(std::span(reinterpret_cast<const std::uint8_t*>(magic_.data()), magic_.size()));
  for (const auto& [tag, payload] : sections_) {
    w.raw(std::span(reinterpret_cast<const std::uint8_t*>(tag.data()), 4));
    w.u64(payload.size());
    w.raw(payload);
  }
  return w.take();
}

Container Container::decode(std::span<const std::uint8_t> bytes, std::string_view expected_magic) {
  if (bytes.size() < expected_magic.size() ||
      std::memcmp(bytes.data(), expected_magic.data(), expected_magic.size()) != 0) {
    fail(ErrorKind::format, "bad magic: expected " + std::string(expected_magic));
  }
  Container c{std::string(expected_magic)};
  ByteReader r(bytes.subspan(expected_magic.size()));
  while (!r.done()) {
    auto tag = r.raw(4);
    const auto len = r.u64();
    if (len > r.remaining()) fail(ErrorKind::format, "section length exceeds file");
    auto payload = r.raw(len);
    c.sections_.emplace_back(std::string(tag.begin(), tag.end()), Bytes(payload.begin(), payload.end()));
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const { write_file(path, encode()); }

Container Container::load(const std::filesystem::path& path, std::string_view expected_magic) {
  return decode(read_file(path), expected_magic);
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::io, "cannot open: " + path.string());
  return Bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::io, "cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorKind::io, "write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  auto b = read_file(path);
  return std::string(b.begin(), b.end());
}

}  // namespace inspectlab
