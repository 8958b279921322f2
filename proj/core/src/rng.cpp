#include "repdecay/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace repdecay {

double Rng::exponential(double rate) noexcept {
  return -std::log(uniform_pos()) / rate;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) noexcept {
  std::uint64_t x = next_u64();
  __uint128_t m = static_cast<__uint128_t>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<__uint128_t>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean >= 0.0) || mean >= 700.0) {
    throw std::invalid_argument("poisson: mean must lie in [0, 700)");
  }
  if (mean == 0.0) return 0;
  const double u = uniform();
  double term = std::exp(-mean);
  double cdf = term;
  std::uint64_t k = 0;
  while (u >= cdf) {
    ++k;
    term *= mean / static_cast<double>(k);
    const double next = cdf + term;
    if (next == cdf) break;  // remaining tail below double resolution
    cdf = next;
  }
  return k;
}

void sample_subset(std::uint32_t n, std::uint32_t k, Rng& rng, std::vector<std::uint32_t>& out) {
  if (k > n) throw std::invalid_argument("sample_subset: k exceeds n");
  out.clear();
  for (std::uint32_t j = n - k; j < n; ++j) {
    const auto t = static_cast<std::uint32_t>(rng.uniform_index(static_cast<std::uint64_t>(j) + 1));
    const bool taken = std::find(out.begin(), out.end(), t) != out.end();
    out.push_back(taken ? j : t);
  }
}

}  // namespace repdecay
