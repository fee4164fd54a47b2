#pragma once

#include <Eigen/Dense>
#include <functional>

#include "fpce/flow/model.hpp"
#include "fpce/map/transport_map.hpp"
#include "fpce/pce/regression.hpp"
#include <json.hpp>

namespace fpce {

// Ensemble summary of a scalar output over time.
struct TrajectoryStats {
  Eigen::VectorXd time;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  long count = 0;

  nlohmann::json to_json() const;
  static TrajectoryStats from_json(const nlohmann::json& j);
};

// Column-wise mean/sd (population) of an ensemble; rows are realizations,
// columns match the time grid.
TrajectoryStats trajectory_stats(const Eigen::VectorXd& time,
                                 const Eigen::MatrixXd& ensemble);

// Relative L2 errors of the mean and sd trajectories, and their combination
// sqrt(mean_err^2 + sd_err^2). Grids must match exactly; zero reference
// norms raise NumericalError.
double mean_rel_error(const TrajectoryStats& ref, const TrajectoryStats& est);
double sd_rel_error(const TrajectoryStats& ref, const TrajectoryStats& est);
double nirmse(const TrajectoryStats& ref, const TrajectoryStats& est);

// A density we can both evaluate and sample; synthetic generators provide
// exact versions of these.
struct DensityModel {
  std::function<double(const Eigen::VectorXd&)> log_pdf;
  std::function<Eigen::MatrixXd(int n, std::uint64_t seed)> sample;
};

struct KlEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long n = 0;
  bool infinite = false;  // model assigned zero density to a data sample

  nlohmann::json to_json() const;
};

// Monte-Carlo estimate of KL(truth || model) using n draws from the truth.
KlEstimate forward_kl(const DensityModel& truth,
                      const std::function<double(const Eigen::VectorXd&)>&
                          model_log_pdf,
                      int n, std::uint64_t seed);

// Sliced 2-Wasserstein distance between two sample sets of equal dimension:
// sqrt of the mean over seeded unit-sphere projections of the exact 1-D
// squared W2 between the projected empirical laws. Handles unequal sample
// counts by integrating the piecewise-constant quantile functions.
double sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                 int n_projections = 128, std::uint64_t seed = 0);

// Map smoothness index sqrt( E_z ||J_T(z)||_F^2 / M ) under z ~ N(0, I).
// Uses the map's analytic Jacobian when available, otherwise batched central
// finite differences.
double msi(const TransportMap& map, int n = 10000, std::uint64_t seed = 0,
           double fd_step = 1e-5);

// Measurable factors of the surrogate error decomposition.
struct ErrorBudget {
  double w2_estimate = 0.0;  // data vs model samples
  double msi = 0.0;
  int s0 = 0;                // nonzero surrogate coefficients (any output)
  int basis_size = 0;
  long n_samples = 0;
  int degree = 0;

  nlohmann::json to_json() const;
};

ErrorBudget error_budget(const FlowModel& model, const PceSurrogate& surrogate,
                         const Eigen::MatrixXd& data, int w2_projections = 128,
                         int msi_samples = 10000, std::uint64_t seed = 0);

}  // namespace fpce
