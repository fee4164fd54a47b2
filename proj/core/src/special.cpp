#include "fpce/math/special.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fpce {

double digamma(double x) {
  if (x <= 0.0 && x == std::floor(x))
    throw std::invalid_argument("digamma: nonpositive integer argument");
  double result = 0.0;
  // Shift into the asymptotic region.
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  // Asymptotic series with Bernoulli coefficients.
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
                    inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 -
                    inv2 * (691.0 / 32760.0))))));
  return result;
}

double trigamma(double x) {
  if (x <= 0.0 && x == std::floor(x))
    throw std::invalid_argument("trigamma: nonpositive integer argument");
  double result = 0.0;
  while (x < 10.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  result += inv * (1.0 + 0.5 * inv +
                   inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 -
                           inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0))))));
  return result;
}

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {
// Continued fraction for the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  const double eps = std::numeric_limits<double>::epsilon();
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 10.0 * eps) break;
  }
  return h;
}
}  // namespace

double inc_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0)
    throw std::invalid_argument("inc_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0))
    return front * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(a, b)) *
                   beta_cf(b, a, 1.0 - x) / b;
}

double inc_beta_inv(double a, double b, double p) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  double x = 0.5;
  // Bisection with Newton polish once bracketed tightly enough.
  for (int it = 0; it < 200; ++it) {
    double f = inc_beta(a, b, x) - p;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    double pdf = std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
                          log_beta(a, b));
    double step = (pdf > 0.0) ? f / pdf : 0.0;
    double xn = x - step;
    if (!(xn > lo && xn < hi)) xn = 0.5 * (lo + hi);
    if (std::fabs(xn - x) < 1e-15 * (1.0 + std::fabs(x))) return xn;
    x = xn;
  }
  return x;
}

}  // namespace fpce
