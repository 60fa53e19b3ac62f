#include "nnn/rng.hpp"

#include <cmath>
#include <numbers>

namespace nnn {

// splitmix64 finalizer
std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double CounterRng::normal() {
  // Box-Muller; one draw per call keeps the counter arithmetic simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::pair<double, double> CounterRng::normal_pair() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * uniform();
  return {r * std::cos(a), r * std::sin(a)};
}

}  // namespace nnn
