#pragma once

#include <span>

namespace fpce {

// Orthonormal probabilists' Hermite polynomial He_n(x)/sqrt(n!), evaluated
// with the normalized three-term recurrence
//   psi_{n+1}(x) = (x psi_n(x) - sqrt(n) psi_{n-1}(x)) / sqrt(n+1),
// which is stable for the degrees used here. These are orthonormal under the
// standard normal weight: E[psi_m(Z) psi_n(Z)] = delta_mn for Z ~ N(0,1).
//
// Throws std::invalid_argument for degree < 0.
double hermite_orthonormal(int degree, double x);

// Fills out[0..max_degree] with psi_0(x) .. psi_max_degree(x).
// out.size() must be max_degree + 1.
void hermite_all(int max_degree, double x, std::span<double> out);

}  // namespace fpce
