#include "fpce/basis/design.hpp"

#include <cmath>
#include <stdexcept>

#include "fpce/basis/hermite.hpp"

namespace fpce {

namespace {
// One-dimensional values psi_d(z_m) for d = 0..p, m = 0..dim-1, stored as
// table(d, m). Shared by eval_basis and assemble_design.
void fill_table(const MultiIndexSet& set, const double* z, Eigen::MatrixXd& table) {
  const int p = set.max_degree();
  const int dim = set.dimension();
  for (int m = 0; m < dim; ++m) {
    table(0, m) = 1.0;
    if (p == 0) continue;
    table(1, m) = z[m];
    for (int n = 1; n < p; ++n)
      table(n + 1, m) = (z[m] * table(n, m) - std::sqrt(double(n)) * table(n - 1, m)) /
                        std::sqrt(double(n + 1));
  }
}
}  // namespace

Eigen::VectorXd eval_basis(const MultiIndexSet& set,
                           const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (z.size() != set.dimension())
    throw std::invalid_argument("eval_basis: point dimension mismatch");
  if (!z.allFinite())
    throw std::invalid_argument("eval_basis: non-finite input point");
  Eigen::MatrixXd table(set.max_degree() + 1, set.dimension());
  fill_table(set, z.data(), table);
  Eigen::VectorXd row(set.size());
  for (std::size_t k = 0; k < set.size(); ++k) {
    const MultiIndex& alpha = set[k];
    double v = 1.0;
    for (int m = 0; m < set.dimension(); ++m) v *= table(alpha[m], m);
    row[k] = v;
  }
  return row;
}

Eigen::MatrixXd assemble_design(const MultiIndexSet& set,
                                const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  if (samples.cols() != set.dimension())
    throw std::invalid_argument("assemble_design: sample dimension mismatch");
  if (!samples.allFinite())
    throw std::invalid_argument("assemble_design: non-finite sample values");
  const Eigen::Index n = samples.rows();
  Eigen::MatrixXd design(n, set.size());
  Eigen::MatrixXd table(set.max_degree() + 1, set.dimension());
  Eigen::VectorXd point(set.dimension());
  for (Eigen::Index i = 0; i < n; ++i) {
    point = samples.row(i).transpose();
    fill_table(set, point.data(), table);
    for (std::size_t k = 0; k < set.size(); ++k) {
      const MultiIndex& alpha = set[k];
      double v = 1.0;
      for (int m = 0; m < set.dimension(); ++m) v *= table(alpha[m], m);
      design(i, k) = v;
    }
  }
  return design;
}

}  // namespace fpce
