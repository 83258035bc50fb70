#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>

namespace srlprobe {

/// 64-bit FNV-1a. Used for corpus fingerprints and stage-input hashes, so the
/// value must be stable across builds and platforms.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) noexcept {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) noexcept { update(s.data(), s.size()); }
  template <typename T>
  void update_pod(const T& v) noexcept {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    update(buf, sizeof(T));
  }
  template <typename T>
  void update_span(std::span<const T> v) noexcept {
    for (const auto& x : v) update_pod(x);
  }
  std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  Fnv1a h;
  h.update(s);
  return h.digest();
}

}  // namespace srlprobe
