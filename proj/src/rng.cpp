#include "tigflow/rng.hpp"

namespace tigflow {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t a,
                          std::uint64_t b) noexcept {
  // FNV-1a over the stream name
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  std::uint64_t s = splitmix64(root ^ h);
  s = splitmix64(s ^ splitmix64(a + 0x632BE59BD9B4E019ULL));
  s = splitmix64(s ^ splitmix64(b + 0x8CB92BA72F3D8DD7ULL));
  return s;
}

}  // namespace tigflow
