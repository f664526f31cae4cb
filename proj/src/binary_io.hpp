#pragma once

// Little-endian primitives shared by the binary file formats.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clean::detail {

class ByteWriter {
 public:
  void bytes(std::string_view raw) { buf_.insert(buf_.end(), raw.begin(), raw.end()); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void f32s(std::span<const float> values);

  const std::vector<char>& data() const { return buf_; }
  void write_to(const std::filesystem::path& path) const;

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}

  std::size_t remaining() const { return buf_.size() - pos_; }
  bool bytes(std::size_t n, std::string& out);
  bool u32(std::uint32_t& v);
  bool u64(std::uint64_t& v);
  bool f32(float& v);
  bool f64(double& v);
  bool f32s(std::span<float> out);

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);

}  // namespace clean::detail
