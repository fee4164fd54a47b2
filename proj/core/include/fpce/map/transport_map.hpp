#pragma once

#include <Eigen/Dense>
#include <stdexcept>

namespace fpce {

struct MapEval {
  Eigen::VectorXd point;
  double log_det = 0.0;  // log |det J| of the direction evaluated
};

// Invertible transport between latent standard-normal space (z) and the
// physical input space (xi). forward is the generative direction T: z -> xi,
// inverse the normalizing direction S = T^{-1}: xi -> z.
class TransportMap {
 public:
  virtual ~TransportMap() = default;

  virtual int dimension() const = 0;

  virtual MapEval forward_eval(const Eigen::Ref<const Eigen::VectorXd>& z) const = 0;
  virtual MapEval inverse_eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const = 0;

  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    return forward_eval(z).point;
  }
  Eigen::VectorXd inverse(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
    return inverse_eval(xi).point;
  }

  // Forward map applied to each row; subclasses with a batched fast path
  // override this.
  virtual Eigen::MatrixXd forward_points(const Eigen::MatrixXd& z) const {
    Eigen::MatrixXd out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      out.row(i) = forward(z.row(i).transpose()).transpose();
    return out;
  }

  // Row-major Jacobian dxi_i/dz_j of the forward direction at z, when the map
  // can supply it in closed form; callers fall back to finite differences
  // otherwise.
  virtual bool has_analytic_jacobian() const { return false; }
  virtual Eigen::MatrixXd forward_jacobian(
      const Eigen::Ref<const Eigen::VectorXd>&) const {
    throw std::logic_error("TransportMap: no analytic Jacobian available");
  }
};

}  // namespace fpce
