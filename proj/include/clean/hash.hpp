#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace clean {

// 64-bit FNV-1a; used for n-gram bucketing and cache keys.
class Fnv1a {
 public:
  Fnv1a& update(std::string_view data) {
    for (unsigned char c : data) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  std::uint64_t digest() const { return state_; }
  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[15 - i] = kDigits[(state_ >> (4 * i)) & 0xF];
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view data) { return Fnv1a{}.update(data).digest(); }

}  // namespace clean
