#include "fpce/pce/regression.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fpce/errors.hpp"
#include "fpce/io/serialize.hpp"

namespace fpce {

const char* penalty_name(Penalty p) {
  switch (p) {
    case Penalty::none: return "none";
    case Penalty::ridge: return "ridge";
    case Penalty::lasso: return "lasso";
  }
  return "none";
}

Penalty penalty_from_name(const std::string& name) {
  if (name == "none") return Penalty::none;
  if (name == "ridge") return Penalty::ridge;
  if (name == "lasso") return Penalty::lasso;
  throw ConfigError("unknown penalty '" + name + "'");
}

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

int count_nonzero(const Eigen::Ref<const Eigen::VectorXd>& h) {
  int n = 0;
  for (Eigen::Index i = 0; i < h.size(); ++i)
    if (h[i] != 0.0) ++n;
  return n;
}

struct LassoWork {
  Eigen::MatrixXd Xs;        // standardized penalized columns
  Eigen::VectorXd mean, std; // per penalized column
  std::vector<int> active;   // columns with nonzero spread
};

LassoWork standardize(const Eigen::Ref<const Eigen::MatrixXd>& design) {
  const Eigen::Index n = design.rows(), p = design.cols();
  LassoWork w;
  w.Xs.resize(n, p - 1);
  w.mean.resize(p - 1);
  w.std.resize(p - 1);
  for (Eigen::Index j = 1; j < p; ++j) {
    double m = design.col(j).mean();
    double s = std::sqrt(design.col(j).squaredNorm() / double(n) - m * m);
    w.mean[j - 1] = m;
    w.std[j - 1] = s;
    if (s > 1e-12) {
      w.Xs.col(j - 1) = (design.col(j).array() - m) / s;
      w.active.push_back(int(j - 1));
    } else {
      w.Xs.col(j - 1).setZero();
    }
  }
  return w;
}

// Coordinate descent in standardized coordinates; beta is warm-started and
// updated in place. Returns the number of sweeps used.
int lasso_cd(const LassoWork& w, const Eigen::Ref<const Eigen::VectorXd>& yc,
             double lambda, double tol, int max_sweeps, Eigen::VectorXd& beta) {
  const double n = double(w.Xs.rows());
  Eigen::VectorXd r = yc - w.Xs * beta;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j : w.active) {
      double bj = beta[j];
      double rho = w.Xs.col(j).dot(r) / n + bj;
      double bn = soft_threshold(rho, lambda);
      double delta = bn - bj;
      if (delta != 0.0) {
        r.noalias() -= w.Xs.col(j) * delta;
        beta[j] = bn;
        max_change = std::max(max_change, std::fabs(delta));
      }
    }
    if (max_change < tol) {
      ++sweep;
      break;
    }
  }
  return sweep;
}

void check_inputs(const Eigen::Ref<const Eigen::MatrixXd>& design,
                  Eigen::Index targets_rows, const FitOptions& options) {
  if (design.rows() != targets_rows)
    throw std::invalid_argument("fit_pce: design rows and target length differ");
  if (design.rows() < 1) throw std::invalid_argument("fit_pce: empty design");
  if (options.lambda < 0.0)
    throw std::invalid_argument("fit_pce: negative lambda rejected");
  if (!design.allFinite())
    throw std::invalid_argument("fit_pce: non-finite design entries");
}

}  // namespace

Eigen::MatrixXd fit_pce_multi(const Eigen::Ref<const Eigen::MatrixXd>& design,
                              const Eigen::Ref<const Eigen::MatrixXd>& Y,
                              const FitOptions& options,
                              FitDiagnostics* diagnostics) {
  check_inputs(design, Y.rows(), options);
  if (!Y.allFinite())
    throw std::invalid_argument("fit_pce: non-finite target values");
  const Eigen::Index n = design.rows(), p = design.cols(), t = Y.cols();
  Eigen::MatrixXd H(p, t);
  FitDiagnostics diag;
  diag.underdetermined = (n < 2 * p);

  switch (options.penalty) {
    case Penalty::none: {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
      const auto& R = qr.matrixR();
      Eigen::Index rank = qr.rank();
      if (rank < p)
        throw NumericalError("fit_pce: design matrix is rank deficient (rank " +
                             std::to_string(rank) + " of " + std::to_string(p) +
                             " columns, " + std::to_string(n) + " samples)");
      diag.condition = std::fabs(R(0, 0)) / std::fabs(R(p - 1, p - 1));
      H = qr.solve(Y);
      break;
    }
    case Penalty::ridge: {
      Eigen::MatrixXd G = design.transpose() * design;
      double scaled = double(n) * options.lambda;
      for (Eigen::Index j = 1; j < p; ++j) G(j, j) += scaled;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
      if (ldlt.info() != Eigen::Success)
        throw NumericalError("fit_pce: ridge normal equations not solvable");
      H = ldlt.solve(design.transpose() * Y);
      Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
      diag.condition = std::sqrt(d.maxCoeff() / std::max(d.minCoeff(), 1e-300));
      break;
    }
    case Penalty::lasso: {
      LassoWork w = standardize(design);
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(p - 1);
      for (Eigen::Index k = 0; k < t; ++k) {
        double ymean = Y.col(k).mean();
        Eigen::VectorXd yc = Y.col(k).array() - ymean;
        int sweeps = lasso_cd(w, yc, options.lambda, options.tol,
                              options.max_sweeps, beta);
        diag.sweeps = std::max(diag.sweeps, sweeps);
        double h0 = ymean;
        for (Eigen::Index j = 0; j < p - 1; ++j) {
          double hj = (w.std[j] > 1e-12) ? beta[j] / w.std[j] : 0.0;
          H(j + 1, k) = hj;
          h0 -= hj * w.mean[j];
        }
        H(0, k) = h0;
      }
      // Condition of the standardized Gram diagonal is 1 by construction;
      // report the raw-column norm spread instead.
      double lo = 1e300, hi = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        double nn = design.col(j).norm();
        lo = std::min(lo, nn);
        hi = std::max(hi, nn);
      }
      diag.condition = (lo > 0.0) ? hi / lo : 0.0;
      break;
    }
  }

  double rss = (design * H - Y).squaredNorm();
  diag.residual_rms = std::sqrt(rss / double(n * t));
  int nnz = 0;
  for (Eigen::Index k = 0; k < t; ++k)
    nnz = std::max(nnz, count_nonzero(H.col(k)));
  diag.nonzero_count = nnz;
  if (diagnostics) *diagnostics = diag;
  return H;
}

PceSurrogate fit_pce(const Eigen::Ref<const Eigen::MatrixXd>& design,
                     const Eigen::Ref<const Eigen::VectorXd>& y,
                     const MultiIndexSet& set, const FitOptions& options) {
  if (design.cols() != static_cast<Eigen::Index>(set.size()))
    throw std::invalid_argument("fit_pce: design columns and basis size differ");
  FitDiagnostics diag;
  Eigen::MatrixXd H = fit_pce_multi(design, y, options, &diag);
  return PceSurrogate(set, H.col(0), diag);
}

PceSurrogate::PceSurrogate(MultiIndexSet set, Eigen::VectorXd coefficients,
                           FitDiagnostics diagnostics)
    : set_(std::move(set)), coeffs_(std::move(coefficients)), diag_(diagnostics) {
  if (coeffs_.size() != static_cast<Eigen::Index>(set_.size()))
    throw std::invalid_argument("PceSurrogate: coefficient count mismatch");
}

double PceSurrogate::predict(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  return eval_basis(set_, z).dot(coeffs_);
}

Eigen::VectorXd PceSurrogate::predict_batch(
    const Eigen::Ref<const Eigen::MatrixXd>& samples) const {
  return assemble_design(set_, samples) * coeffs_;
}

MomentSummary moments_from_coefficients(const Eigen::Ref<const Eigen::VectorXd>& h) {
  MomentSummary m;
  m.mean = h[0];
  m.variance = h.tail(h.size() - 1).squaredNorm();
  return m;
}

MomentSummary PceSurrogate::moments() const {
  return moments_from_coefficients(coeffs_);
}

SobolReport PceSurrogate::sobol() const {
  const int dim = set_.dimension();
  double var = moments().variance;
  if (var <= 0.0)
    throw NumericalError("sobol: surrogate variance is zero, indices undefined");
  SobolReport rep;
  rep.first_order = Eigen::VectorXd::Zero(dim);
  rep.total = Eigen::VectorXd::Zero(dim);
  for (std::size_t k = 1; k < set_.size(); ++k) {
    const MultiIndex& alpha = set_[k];
    double h2 = coeffs_[k] * coeffs_[k];
    int support = 0, last = -1;
    for (int m = 0; m < dim; ++m)
      if (alpha[m] > 0) {
        ++support;
        last = m;
        rep.total[m] += h2;
      }
    if (support == 1) rep.first_order[last] += h2;
  }
  rep.first_order /= var;
  rep.total /= var;
  return rep;
}

nlohmann::json PceSurrogate::to_json() const {
  nlohmann::json j;
  j["schema"] = "fpce-surrogate-v1";
  j["dimension"] = set_.dimension();
  j["degree"] = set_.max_degree();
  j["basis_size"] = set_.size();
  j["coefficients"] = vector_to_json(coeffs_);
  j["diagnostics"] = {{"residual_rms", diag_.residual_rms},
                      {"condition", diag_.condition},
                      {"nonzero_count", diag_.nonzero_count},
                      {"sweeps", diag_.sweeps},
                      {"underdetermined", diag_.underdetermined}};
  return j;
}

PceSurrogate PceSurrogate::from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "fpce-surrogate-v1")
    throw ConfigError("surrogate JSON: unknown schema");
  int dim = j.at("dimension").get<int>();
  int degree = j.at("degree").get<int>();
  std::size_t size = j.at("basis_size").get<std::size_t>();
  MultiIndexSet set =
      MultiIndexSet::total_degree(dim, degree, std::max<std::size_t>(size, 10000));
  if (set.size() != size)
    throw ConfigError("surrogate JSON: basis size mismatch");
  Eigen::VectorXd h = vector_from_json(j.at("coefficients"));
  FitDiagnostics d;
  if (j.contains("diagnostics")) {
    const auto& dj = j["diagnostics"];
    d.residual_rms = dj.value("residual_rms", 0.0);
    d.condition = dj.value("condition", 0.0);
    d.nonzero_count = dj.value("nonzero_count", 0);
    d.sweeps = dj.value("sweeps", 0);
    d.underdetermined = dj.value("underdetermined", false);
  }
  return PceSurrogate(std::move(set), std::move(h), d);
}

}  // namespace fpce
