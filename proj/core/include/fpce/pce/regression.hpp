#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include "fpce/basis/design.hpp"
#include "fpce/basis/multi_index.hpp"

namespace fpce {

enum class Penalty { none, ridge, lasso };

const char* penalty_name(Penalty p);
Penalty penalty_from_name(const std::string& name);

struct FitOptions {
  Penalty penalty = Penalty::none;
  double lambda = 0.0;
  double tol = 1e-8;      // lasso: max coefficient change per sweep
  int max_sweeps = 10000;  // lasso sweep budget
};

struct FitDiagnostics {
  double residual_rms = 0.0;
  double condition = 0.0;     // diag-ratio estimate from column-pivoted QR
  int nonzero_count = 0;      // retained coefficients (s0)
  int sweeps = 0;             // lasso sweeps actually used
  bool underdetermined = false;  // sample count below the 2P rule of thumb
};

struct MomentSummary {
  double mean = 0.0;
  double variance = 0.0;
};

// Variance-based sensitivities obtained by partitioning the coefficients:
// first_order[i] sums h_alpha^2 over indices supported on coordinate i only,
// total[i] over all indices with alpha_i > 0, both divided by the variance.
struct SobolReport {
  Eigen::VectorXd first_order;
  Eigen::VectorXd total;
};

// Polynomial chaos surrogate in latent space: coefficients h_alpha over an
// orthonormal Hermite total-degree basis. Because the basis is orthonormal
// under N(0, I), the mean is h_0 and the variance is the sum of the squared
// remaining coefficients.
class PceSurrogate {
 public:
  PceSurrogate(MultiIndexSet set, Eigen::VectorXd coefficients,
               FitDiagnostics diagnostics = {});

  const MultiIndexSet& basis() const { return set_; }
  const Eigen::VectorXd& coefficients() const { return coeffs_; }
  const FitDiagnostics& diagnostics() const { return diag_; }

  double predict(const Eigen::Ref<const Eigen::VectorXd>& z) const;
  Eigen::VectorXd predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& samples) const;

  MomentSummary moments() const;

  // Throws NumericalError when the surrogate variance is zero (constant
  // surrogate has no variance to attribute).
  SobolReport sobol() const;

  // Round-trips bit-exactly: coefficients are serialized as hex-floats.
  nlohmann::json to_json() const;
  static PceSurrogate from_json(const nlohmann::json& j);

 private:
  MultiIndexSet set_;
  Eigen::VectorXd coeffs_;
  FitDiagnostics diag_;
};

// Least-squares fit of basis coefficients from a precomputed design matrix.
//
//   none : rank-revealing QR; throws NumericalError if rank < P.
//   ridge: closed-form normal equations; the constant column is excluded
//          from the penalty so the mean estimate stays unbiased.
//   lasso: cyclic coordinate descent on standardized columns (constant
//          column unpenalized), soft-thresholding at lambda under the
//          (1/2N)*RSS + lambda*l1 objective; converged when the largest
//          coefficient change in a sweep drops below options.tol.
//
// Negative lambda and dimension mismatches throw std::invalid_argument.
PceSurrogate fit_pce(const Eigen::Ref<const Eigen::MatrixXd>& design,
                     const Eigen::Ref<const Eigen::VectorXd>& y,
                     const MultiIndexSet& set, const FitOptions& options);

// Same solver applied to many targets (columns of Y) sharing one design
// factorization / standardization. Returns P x T coefficient matrix.
Eigen::MatrixXd fit_pce_multi(const Eigen::Ref<const Eigen::MatrixXd>& design,
                              const Eigen::Ref<const Eigen::MatrixXd>& Y,
                              const FitOptions& options,
                              FitDiagnostics* diagnostics = nullptr);

MomentSummary moments_from_coefficients(const Eigen::Ref<const Eigen::VectorXd>& h);

}  // namespace fpce
