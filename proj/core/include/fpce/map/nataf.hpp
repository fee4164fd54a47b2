#pragma once

#include <memory>
#include <vector>

#include "fpce/map/marginal.hpp"
#include "fpce/map/transport_map.hpp"
#include "fpce/math/rng.hpp"

namespace fpce {

// Projects a symmetric matrix onto the nearest correlation matrix:
// eigenvalues clipped from below, then the diagonal renormalized to one.
Eigen::MatrixXd nearest_correlation(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                    double eig_floor = 1e-8);

// Gaussian-copula (Nataf) transport. The normalizing direction is
//   S(xi)_i : s_i = Phi^{-1}(F_i(xi_i)),  z = L0^{-1} s,
// and the generative direction inverts both steps,
//   T(z)_i = F_i^{-1}(Phi((L0 z)_i)),
// where R0 = L0 L0^T is the latent correlation. Dependence beyond the
// Gaussian copula family is not representable; that limitation is the point
// of comparison with the trained flows.
class NatafModel : public TransportMap {
 public:
  NatafModel(std::vector<MarginalModel> marginals,
             Eigen::MatrixXd correlation);

  // Fits marginals of the requested kinds column by column, computes the
  // normal-scores correlation of the data and projects it to the nearest
  // correlation matrix before factorizing.
  static NatafModel fit(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                        const std::vector<MarginalKind>& kinds);

  int dimension() const override { return int(marginals_.size()); }
  MapEval forward_eval(const Eigen::Ref<const Eigen::VectorXd>& z) const override;
  // Throws NumericalError when a coordinate sits on or outside the marginal
  // support boundary (its CDF value reaches 0 or 1 exactly).
  MapEval inverse_eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const override;

  bool has_analytic_jacobian() const override { return true; }
  Eigen::MatrixXd forward_jacobian(
      const Eigen::Ref<const Eigen::VectorXd>& z) const override;

  // log of the model density at xi (copula density times marginal densities).
  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& xi) const;

  Eigen::MatrixXd sample(int n, std::uint64_t seed) const;

  const Eigen::MatrixXd& correlation() const { return R0_; }
  const Eigen::MatrixXd& cholesky() const { return L0_; }
  const std::vector<MarginalModel>& marginals() const { return marginals_; }

  nlohmann::json to_json() const;
  static NatafModel from_json(const nlohmann::json& j);

 private:
  std::vector<MarginalModel> marginals_;
  Eigen::MatrixXd R0_, L0_;
  double log_det_L0_ = 0.0;
};

}  // namespace fpce
