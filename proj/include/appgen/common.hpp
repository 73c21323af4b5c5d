#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace appgen {

/// Error carrying a short machine-parsable tag (e.g. "invalid-spec",
/// "parse-error") next to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string tag, const std::string& message)
      : std::runtime_error(message), tag_(std::move(tag)) {}

  const std::string& tag() const noexcept { return tag_; }

 private:
  std::string tag_;
};

/// 64-bit FNV-1a. Stable across platforms, used for config hashes,
/// checkpoint checksums and seed derivation.
constexpr std::uint64_t fnv1a(std::string_view bytes,
                              std::uint64_t hash = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stage-specific sub-seed derived from the global seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  return splitmix64(seed ^ fnv1a(stage));
}

std::string hex64(std::uint64_t value);

}  // namespace appgen
