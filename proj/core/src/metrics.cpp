#include "fpce/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fpce/errors.hpp"
#include "fpce/io/serialize.hpp"
#include "fpce/math/rng.hpp"

namespace fpce {

namespace {

void require_grids_match(const TrajectoryStats& ref,
                         const TrajectoryStats& est) {
  if (ref.time.size() != est.time.size() ||
      (ref.time.size() > 0 && !(ref.time.array() == est.time.array()).all()))
    throw ConfigError("trajectory stats: time grids do not match");
}

// exact squared W2 between two sorted 1-D empirical distributions: integral
// of the squared difference of their piecewise-constant quantile functions
double w2_sq_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t na = a.size(), nb = b.size();
  std::size_t ia = 0, ib = 0;
  double t = 0.0, total = 0.0;
  while (ia < na && ib < nb) {
    double ta = double(ia + 1) / double(na);
    double tb = double(ib + 1) / double(nb);
    double tn = std::min(ta, tb);
    double d = a[ia] - b[ib];
    total += (tn - t) * d * d;
    t = tn;
    if (ta <= tn) ++ia;
    if (tb <= tn) ++ib;
  }
  return total;
}

}  // namespace

nlohmann::json TrajectoryStats::to_json() const {
  return {{"time", vector_to_json(time)},
          {"mean", vector_to_json(mean)},
          {"sd", vector_to_json(sd)},
          {"count", count}};
}

TrajectoryStats TrajectoryStats::from_json(const nlohmann::json& j) {
  TrajectoryStats s;
  s.time = vector_from_json(j.at("time"));
  s.mean = vector_from_json(j.at("mean"));
  s.sd = vector_from_json(j.at("sd"));
  s.count = j.at("count").get<long>();
  return s;
}

TrajectoryStats trajectory_stats(const Eigen::VectorXd& time,
                                 const Eigen::MatrixXd& ensemble) {
  if (ensemble.cols() != time.size())
    throw ConfigError("trajectory_stats: ensemble columns must match grid");
  if (ensemble.rows() < 1)
    throw ConfigError("trajectory_stats: empty ensemble");
  TrajectoryStats s;
  s.time = time;
  s.count = ensemble.rows();
  s.mean = ensemble.colwise().mean();
  s.sd = ((ensemble.rowwise() - s.mean.transpose())
              .array()
              .square()
              .colwise()
              .mean())
             .sqrt();
  return s;
}

double mean_rel_error(const TrajectoryStats& ref, const TrajectoryStats& est) {
  require_grids_match(ref, est);
  double denom = ref.mean.norm();
  if (!(denom > 0.0))
    throw NumericalError("nirmse: reference mean trajectory has zero norm");
  return (ref.mean - est.mean).norm() / denom;
}

double sd_rel_error(const TrajectoryStats& ref, const TrajectoryStats& est) {
  require_grids_match(ref, est);
  double denom = ref.sd.norm();
  if (!(denom > 0.0))
    throw NumericalError("nirmse: reference sd trajectory has zero norm");
  return (ref.sd - est.sd).norm() / denom;
}

double nirmse(const TrajectoryStats& ref, const TrajectoryStats& est) {
  double em = mean_rel_error(ref, est);
  double es = sd_rel_error(ref, est);
  return std::sqrt(em * em + es * es);
}

nlohmann::json KlEstimate::to_json() const {
  return {{"value", value},
          {"std_error", std_error},
          {"n", n},
          {"infinite", infinite}};
}

KlEstimate forward_kl(const DensityModel& truth,
                      const std::function<double(const Eigen::VectorXd&)>&
                          model_log_pdf,
                      int n, std::uint64_t seed) {
  if (n < 2) throw ConfigError("forward_kl: need at least two samples");
  Eigen::MatrixXd x = truth.sample(n, seed);
  KlEstimate est;
  est.n = n;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xi = x.row(i).transpose();
    double term = truth.log_pdf(xi) - model_log_pdf(xi);
    if (!std::isfinite(term)) {
      est.infinite = true;
      est.value = std::numeric_limits<double>::infinity();
      return est;
    }
    sum += term;
    sum_sq += term * term;
  }
  est.value = sum / n;
  double var = std::max(0.0, sum_sq / n - est.value * est.value);
  est.std_error = std::sqrt(var / n);
  return est;
}

double sliced_w2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                 int n_projections, std::uint64_t seed) {
  if (a.rows() < 1 || b.rows() < 1)
    throw ConfigError("sliced_w2: empty sample set");
  if (a.cols() != b.cols())
    throw ConfigError("sliced_w2: dimension mismatch");
  if (n_projections < 1) throw ConfigError("sliced_w2: need projections");

  const int dim = int(a.cols());
  Rng rng(seed);
  std::vector<double> pa(a.rows()), pb(b.rows());
  double total = 0.0;
  for (int proj = 0; proj < n_projections; ++proj) {
    Eigen::VectorXd dir(dim);
    do {
      for (int j = 0; j < dim; ++j) dir[j] = rng.gaussian();
    } while (dir.norm() == 0.0);
    dir /= dir.norm();

    for (Eigen::Index i = 0; i < a.rows(); ++i) pa[i] = a.row(i).dot(dir);
    for (Eigen::Index i = 0; i < b.rows(); ++i) pb[i] = b.row(i).dot(dir);
    std::sort(pa.begin(), pa.end());
    std::sort(pb.begin(), pb.end());
    total += w2_sq_sorted(pa, pb);
  }
  return std::sqrt(total / n_projections);
}

double msi(const TransportMap& map, int n, std::uint64_t seed,
           double fd_step) {
  if (n < 1) throw ConfigError("msi: need samples");
  const int dim = map.dimension();
  Rng rng(seed);
  Eigen::MatrixXd z(n, dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim; ++j) z(i, j) = rng.gaussian();

  Eigen::VectorXd frob_sq = Eigen::VectorXd::Zero(n);
  if (map.has_analytic_jacobian()) {
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd jac = map.forward_jacobian(z.row(i).transpose());
      frob_sq[i] = jac.squaredNorm();
    }
  } else {
    for (int j = 0; j < dim; ++j) {
      Eigen::MatrixXd zp = z, zm = z;
      zp.col(j).array() += fd_step;
      zm.col(j).array() -= fd_step;
      Eigen::MatrixXd col =
          (map.forward_points(zp) - map.forward_points(zm)) / (2.0 * fd_step);
      frob_sq += col.array().square().rowwise().sum().matrix();
    }
  }
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(frob_sq[i])) {
      std::ostringstream msg;
      msg << "msi: non-finite Jacobian at z = [";
      for (int j = 0; j < dim; ++j)
        msg << (j ? ", " : "") << z(i, j);
      msg << "]";
      throw NumericalError(msg.str());
    }
  return std::sqrt(frob_sq.mean() / dim);
}

nlohmann::json ErrorBudget::to_json() const {
  return {{"w2_estimate", w2_estimate}, {"msi", msi},
          {"s0", s0},                   {"basis_size", basis_size},
          {"n_samples", n_samples},     {"degree", degree}};
}

ErrorBudget error_budget(const FlowModel& model, const PceSurrogate& surrogate,
                         const Eigen::MatrixXd& data, int w2_projections,
                         int msi_samples, std::uint64_t seed) {
  ErrorBudget budget;
  Eigen::MatrixXd synth = model.sample(int(data.rows()), seed);
  budget.w2_estimate = sliced_w2(data, synth, w2_projections, seed);
  budget.msi = fpce::msi(model, msi_samples, seed);
  budget.basis_size = int(surrogate.basis().size());
  budget.n_samples = data.rows();
  for (int k = 0; k < budget.basis_size; ++k)
    if (surrogate.coefficients()[k] != 0.0) ++budget.s0;
  budget.degree = surrogate.basis().max_degree();
  return budget;
}

}  // namespace fpce
