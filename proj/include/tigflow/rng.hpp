#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tigflow {

// Seeded generator. Every random draw in the library goes through one of these,
// obtained from a root seed by naming the stream ("prior", "sde", "batch",
// "init", ...) plus optional integer indices.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

[[nodiscard]] std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Derives a sub-seed from (root, name, a, b). Distinct names or indices give
// statistically independent streams; identical arguments give identical seeds.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                        std::uint64_t a = 0, std::uint64_t b = 0) noexcept;

[[nodiscard]] inline Rng stream(std::uint64_t root, std::string_view name, std::uint64_t a = 0,
                                std::uint64_t b = 0) {
  return Rng(derive_seed(root, name, a, b));
}

}  // namespace tigflow
