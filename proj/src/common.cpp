#include "glosslm/common.hpp"

namespace glosslm {

std::uint64_t Rng::next_below(std::uint64_t n) {
  // Lemire multiply-shift with rejection for exact uniformity.
  if (n == 0) throw DomainError("next_below: n must be positive");
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto lo = static_cast<std::uint64_t>(m);
  if (lo < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (lo < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      lo = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e) != nullptr ||
      dynamic_cast<const ConfigError*>(&e) != nullptr ||
      dynamic_cast<const ParseError*>(&e) != nullptr ||
      dynamic_cast<const ValidationError*>(&e) != nullptr ||
      dynamic_cast<const SizeError*>(&e) != nullptr ||
      dynamic_cast<const DomainError*>(&e) != nullptr ||
      dynamic_cast<const ShapeError*>(&e) != nullptr ||
      dynamic_cast<const IndexError*>(&e) != nullptr ||
      dynamic_cast<const ConflictError*>(&e) != nullptr)
    return 2;
  return 1;
}

}  // namespace glosslm
