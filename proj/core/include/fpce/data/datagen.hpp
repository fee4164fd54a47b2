#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fpce/map/marginal.hpp"
#include "fpce/metrics/metrics.hpp"

namespace fpce {

// Ground-truth input distribution for the synthetic benchmarks. Two kinds:
//
//   gaussian_copula: z ~ N(0, R), xi_i = F_i^{-1}(Phi(z_i)) with parametric
//     marginals; the joint density is the Gaussian-copula density times the
//     marginal densities, so it is known exactly.
//
//   trunc_gmm: mixture of axis-aligned normals (shared diagonal covariance)
//     truncated to a box, sampled by rejection; the density carries the
//     exact truncation normalizer, computed once from componentwise normal
//     CDF products per mode.
struct SyntheticSpec {
  std::string kind;  // "gaussian_copula" or "trunc_gmm"
  int count = 0;
  std::uint64_t seed = 0;

  // gaussian_copula
  Eigen::MatrixXd correlation;
  std::vector<MarginalModel> marginals;

  // trunc_gmm
  Eigen::MatrixXd means;      // one row per mode
  Eigen::VectorXd weights;    // positive, summing to one
  Eigen::VectorXd variances;  // per-axis, shared by all modes
  Eigen::VectorXd box_low, box_high;

  int dim() const;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// The two shipped benchmark input distributions: a Gaussian copula over
// Beta(2,5), Uniform(0.2,0.8) and TruncNormal(0.5,0.1) marginals, and an
// equal-weight two-mode normal mixture truncated to the unit cube.
SyntheticSpec copula_benchmark_spec(int count = 100000, std::uint64_t seed = 0);
SyntheticSpec gmm_benchmark_spec(int count = 30000, std::uint64_t seed = 0);

struct GeneratedData {
  Eigen::MatrixXd samples;       // count x dim, drawn with spec.seed
  double acceptance_rate = 1.0;  // rejection kinds only; 1 otherwise
  // Exact density plus a sampler for fresh draws at any seed; log_pdf is
  // finite on the support and -infinity outside.
  DensityModel density;
};

GeneratedData generate(const SyntheticSpec& spec);

}  // namespace fpce
