#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace cytoarch {

namespace detail {

// Best & Fisher (1979) rejection sampler for the von Mises distribution
// centred at 0. Returns an angle in (-pi, pi].
template <class Rng>
double sample_von_mises(Rng& rng, double kappa) {
  constexpr double pi = std::numbers::pi;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (kappa < 1e-8) return pi - 2.0 * pi * unif(rng);
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  while (true) {
    const double u1 = unif(rng);
    const double z = std::cos(pi * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u2 = unif(rng);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double u3 = unif(rng);
      const double theta = std::acos(std::clamp(f, -1.0, 1.0));
      return u3 > 0.5 ? theta : -theta;
    }
  }
}

inline double wrap_axial_deg(double deg) {
  double a = std::fmod(deg, 180.0);
  if (a <= -90.0) a += 180.0;
  if (a > 90.0) a -= 180.0;
  return a;
}

}  // namespace detail

template <class Rng>
double sample_axial_angle(Rng& rng, double mean_deg, double concentration) {
  const double doubled = detail::sample_von_mises(rng, concentration);
  return detail::wrap_axial_deg(mean_deg + doubled * 90.0 / std::numbers::pi);
}

}  // namespace cytoarch
