#include "fpce/basis/hermite.hpp"

#include <cmath>
#include <stdexcept>

namespace fpce {

double hermite_orthonormal(int degree, double x) {
  if (degree < 0) throw std::invalid_argument("hermite_orthonormal: degree < 0");
  double prev = 1.0;  // psi_0
  if (degree == 0) return prev;
  double cur = x;  // psi_1
  for (int n = 1; n < degree; ++n) {
    double next = (x * cur - std::sqrt(double(n)) * prev) / std::sqrt(double(n + 1));
    prev = cur;
    cur = next;
  }
  return cur;
}

void hermite_all(int max_degree, double x, std::span<double> out) {
  if (max_degree < 0) throw std::invalid_argument("hermite_all: degree < 0");
  if (out.size() != static_cast<std::size_t>(max_degree) + 1)
    throw std::invalid_argument("hermite_all: output span has wrong size");
  out[0] = 1.0;
  if (max_degree == 0) return;
  out[1] = x;
  for (int n = 1; n < max_degree; ++n)
    out[n + 1] = (x * out[n] - std::sqrt(double(n)) * out[n - 1]) / std::sqrt(double(n + 1));
}

}  // namespace fpce
