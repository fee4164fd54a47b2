#include "fpce/map/nataf.hpp"

#include <cmath>
#include <stdexcept>

#include "fpce/errors.hpp"
#include "fpce/io/serialize.hpp"
#include "fpce/math/normal.hpp"

namespace fpce {

Eigen::MatrixXd nearest_correlation(const Eigen::Ref<const Eigen::MatrixXd>& A,
                                    double eig_floor) {
  if (A.rows() != A.cols())
    throw std::invalid_argument("nearest_correlation: matrix not square");
  Eigen::MatrixXd S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(eig_floor);
  Eigen::MatrixXd B =
      es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  Eigen::VectorXd d = B.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd R = d.asDiagonal() * B * d.asDiagonal();
  R = 0.5 * (R + R.transpose());
  R.diagonal().setOnes();
  return R;
}

NatafModel::NatafModel(std::vector<MarginalModel> marginals,
                       Eigen::MatrixXd correlation)
    : marginals_(std::move(marginals)), R0_(std::move(correlation)) {
  const int m = int(marginals_.size());
  if (m < 1) throw ConfigError("NatafModel: needs at least one marginal");
  if (R0_.rows() != m || R0_.cols() != m)
    throw ConfigError("NatafModel: correlation size does not match marginals");
  if (!R0_.isApprox(R0_.transpose(), 1e-12))
    throw ConfigError("NatafModel: correlation matrix not symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(R0_);
  if (llt.info() != Eigen::Success) {
    // project and retry before giving up
    R0_ = nearest_correlation(R0_);
    llt.compute(R0_);
    if (llt.info() != Eigen::Success)
      throw NumericalError("NatafModel: correlation matrix not positive definite");
  }
  L0_ = llt.matrixL();
  log_det_L0_ = L0_.diagonal().array().log().sum();
}

NatafModel NatafModel::fit(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                           const std::vector<MarginalKind>& kinds) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index m = samples.cols();
  if (m < 1 || std::size_t(m) != kinds.size())
    throw ConfigError("NatafModel::fit: kinds list does not match data width");
  if (n < 2) throw ConfigError("NatafModel::fit: need at least 2 samples");
  if (!samples.allFinite())
    throw ConfigError("NatafModel::fit: non-finite sample values");

  std::vector<MarginalModel> marginals;
  marginals.reserve(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    std::vector<double> col(samples.col(j).data(),
                            samples.col(j).data() + n);
    marginals.push_back(MarginalModel::fit(col, kinds[j]));
  }

  // Normal scores: clamp CDF values away from {0,1} with the Hazen-style
  // bound so parametric marginals cannot produce infinite scores at support
  // edges.
  const double eps = 0.5 / double(n);
  Eigen::MatrixXd scores(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      double u = marginals[j].cdf(samples(i, j));
      scores(i, j) = norm_quantile(std::clamp(u, eps, 1.0 - eps));
    }

  Eigen::RowVectorXd mean = scores.colwise().mean();
  scores.rowwise() -= mean;
  Eigen::MatrixXd cov = scores.transpose() * scores / double(n - 1);
  Eigen::VectorXd sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd corr = sd.asDiagonal() * cov * sd.asDiagonal();
  return NatafModel(std::move(marginals), nearest_correlation(corr));
}

MapEval NatafModel::forward_eval(
    const Eigen::Ref<const Eigen::VectorXd>& z) const {
  const int m = dimension();
  if (z.size() != m)
    throw std::invalid_argument("NatafModel::forward: dimension mismatch");
  Eigen::VectorXd w = L0_ * z;
  MapEval out;
  out.point.resize(m);
  out.log_det = log_det_L0_;
  for (int i = 0; i < m; ++i) {
    double u = norm_cdf(w[i]);
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    double xi = marginals_[i].quantile(u);
    // keep strictly inside the support
    double lo = marginals_[i].support_lower(), hi = marginals_[i].support_upper();
    xi = std::clamp(xi, std::nextafter(lo, hi), std::nextafter(hi, lo));
    out.point[i] = xi;
    double f = marginals_[i].pdf(xi);
    out.log_det += norm_logpdf(w[i]) - std::log(std::max(f, 1e-300));
  }
  return out;
}

MapEval NatafModel::inverse_eval(
    const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  const int m = dimension();
  if (xi.size() != m)
    throw std::invalid_argument("NatafModel::inverse: dimension mismatch");
  Eigen::VectorXd s(m);
  MapEval out;
  out.log_det = -log_det_L0_;
  for (int i = 0; i < m; ++i) {
    double u = marginals_[i].cdf(xi[i]);
    if (u <= 0.0 || u >= 1.0)
      throw NumericalError(
          "NatafModel::inverse: coordinate " + std::to_string(i) +
          " lies on or outside the marginal support boundary");
    s[i] = norm_quantile(u);
    double f = marginals_[i].pdf(xi[i]);
    out.log_det += std::log(std::max(f, 1e-300)) - norm_logpdf(s[i]);
  }
  out.point = L0_.triangularView<Eigen::Lower>().solve(s);
  return out;
}

Eigen::MatrixXd NatafModel::forward_jacobian(
    const Eigen::Ref<const Eigen::VectorXd>& z) const {
  const int m = dimension();
  MapEval ev = forward_eval(z);
  Eigen::VectorXd w = L0_ * z;
  Eigen::MatrixXd J(m, m);
  for (int i = 0; i < m; ++i) {
    double f = std::max(marginals_[i].pdf(ev.point[i]), 1e-300);
    double scale = norm_pdf(w[i]) / f;
    J.row(i) = scale * L0_.row(i);
  }
  return J;
}

double NatafModel::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  // density of the Gaussian copula times the marginal densities
  const int m = dimension();
  Eigen::VectorXd s(m);
  double marg = 0.0;
  for (int i = 0; i < m; ++i) {
    double u = marginals_[i].cdf(xi[i]);
    if (u <= 0.0 || u >= 1.0) return -std::numeric_limits<double>::infinity();
    s[i] = norm_quantile(u);
    double f = marginals_[i].pdf(xi[i]);
    if (f <= 0.0) return -std::numeric_limits<double>::infinity();
    marg += std::log(f);
  }
  Eigen::VectorXd t = L0_.triangularView<Eigen::Lower>().solve(s);
  double quad = -0.5 * t.squaredNorm() - log_det_L0_;
  double indep = -0.5 * s.squaredNorm();
  return marg + quad - indep;
}

Eigen::MatrixXd NatafModel::sample(int n, std::uint64_t seed) const {
  const int m = dimension();
  Rng rng(seed);
  Eigen::MatrixXd out(n, m);
  Eigen::VectorXd z(m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) z[j] = rng.gaussian();
    out.row(i) = forward_eval(z).point.transpose();
  }
  return out;
}

nlohmann::json NatafModel::to_json() const {
  nlohmann::json j;
  j["schema"] = "fpce-copula-v1";
  j["dimension"] = dimension();
  j["correlation"] = matrix_to_json(R0_);
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : marginals_) ms.push_back(m.to_json());
  j["marginals"] = std::move(ms);
  return j;
}

NatafModel NatafModel::from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "fpce-copula-v1")
    throw ConfigError("copula JSON: unknown schema");
  std::vector<MarginalModel> marginals;
  for (const auto& mj : j.at("marginals"))
    marginals.push_back(MarginalModel::from_json(mj));
  Eigen::MatrixXd R0 = matrix_from_json(j.at("correlation"));
  return NatafModel(std::move(marginals), std::move(R0));
}

}  // namespace fpce
