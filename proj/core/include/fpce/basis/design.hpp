#pragma once

#include <Eigen/Dense>

#include "fpce/basis/multi_index.hpp"

namespace fpce {

// Row of tensor-product Hermite basis values
//   psi_alpha(z) = prod_m psi_{alpha_m}(z_m)
// for every alpha in the set, in set order (first entry is the constant 1).
Eigen::VectorXd eval_basis(const MultiIndexSet& set,
                           const Eigen::Ref<const Eigen::VectorXd>& z);

// Design matrix with one row per sample (samples is N x dim). The first
// column is identically one. Throws std::invalid_argument on dimension
// mismatch or non-finite input, so downstream solvers can rely on a finite
// matrix.
Eigen::MatrixXd assemble_design(const MultiIndexSet& set,
                                const Eigen::Ref<const Eigen::MatrixXd>& samples);

}  // namespace fpce
