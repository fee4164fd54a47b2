#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace fpce {

enum class MarginalKind { beta, uniform, truncated_normal, empirical };

const char* marginal_kind_name(MarginalKind k);
MarginalKind marginal_kind_from_name(const std::string& name);

// One-dimensional marginal distribution with CDF, quantile and density.
//
// Parametric kinds are fitted by maximum likelihood (closed form for the
// uniform, Newton iteration with damping for beta and truncated normal).
// The empirical kind interpolates the sorted sample linearly at Hazen
// plotting positions (i - 1/2)/N, which clamps the CDF to
// [1/(2N), 1 - 1/(2N)] on the sample range.
class MarginalModel {
 public:
  static MarginalModel beta(double a, double b);
  static MarginalModel uniform(double lo, double hi);
  static MarginalModel truncated_normal(double mu, double sigma, double lo, double hi);
  static MarginalModel empirical(std::span<const double> samples);

  // Throws ConfigError for unusable samples (fewer than 2 points, values
  // outside the kind's support, zero spread) and NumericalError when the
  // likelihood iteration fails.
  static MarginalModel fit(std::span<const double> samples, MarginalKind kind);

  MarginalKind kind() const { return kind_; }

  double cdf(double x) const;
  // Inverse CDF; u outside [0,1] throws, u == 0 or 1 returns the support edge.
  double quantile(double u) const;
  double pdf(double x) const;

  double support_lower() const { return lo_; }
  double support_upper() const { return hi_; }

  // Parametric parameters (meaning depends on kind): beta (a,b),
  // uniform (lo,hi), truncated_normal (mu,sigma).
  double param0() const { return p0_; }
  double param1() const { return p1_; }

  nlohmann::json to_json() const;
  static MarginalModel from_json(const nlohmann::json& j);

 private:
  MarginalModel() = default;

  MarginalKind kind_ = MarginalKind::uniform;
  double p0_ = 0.0, p1_ = 1.0;
  double lo_ = 0.0, hi_ = 1.0;
  std::vector<double> sorted_;   // empirical only
  std::vector<double> positions_;
};

}  // namespace fpce
