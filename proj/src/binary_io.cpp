#include "binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "clean/error.hpp"

namespace clean::detail {

namespace {

template <typename U>
void put_le(std::vector<char>& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }
void ByteWriter::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f32s(std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const char*>(values.data());
    buf_.insert(buf_.end(), p, p + values.size_bytes());
  } else {
    for (float v : values) f32(v);
  }
}

void ByteWriter::write_to(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open for writing: " + path.string());
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

bool ByteReader::bytes(std::size_t n, std::string& out) {
  if (remaining() < n) return false;
  out.assign(buf_.data() + pos_, n);
  pos_ += n;
  return true;
}

bool ByteReader::u32(std::uint32_t& v) {
  if (remaining() < 4) return false;
  v = get_le<std::uint32_t>(buf_.data() + pos_);
  pos_ += 4;
  return true;
}

bool ByteReader::u64(std::uint64_t& v) {
  if (remaining() < 8) return false;
  v = get_le<std::uint64_t>(buf_.data() + pos_);
  pos_ += 8;
  return true;
}

bool ByteReader::f32(float& v) {
  std::uint32_t bits = 0;
  if (!u32(bits)) return false;
  v = std::bit_cast<float>(bits);
  return true;
}

bool ByteReader::f64(double& v) {
  std::uint64_t bits = 0;
  if (!u64(bits)) return false;
  v = std::bit_cast<double>(bits);
  return true;
}

bool ByteReader::f32s(std::span<float> out) {
  if (remaining() / sizeof(float) < out.size()) return false;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  } else {
    for (float& v : out) f32(v);
  }
  return true;
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorKind::Io, "cannot open: " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<char> data(size);
  in.seekg(0);
  in.read(data.data(), static_cast<std::streamsize>(size));
  if (!in) throw Error(ErrorKind::Io, "read failed: " + path.string());
  return data;
}

}  // namespace clean::detail
