#include "fpce/data/datagen.hpp"

#include <cmath>
#include <limits>

#include "fpce/errors.hpp"
#include "fpce/io/serialize.hpp"
#include "fpce/math/normal.hpp"
#include "fpce/math/rng.hpp"

namespace fpce {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void validate_copula(const SyntheticSpec& spec) {
  const Eigen::Index d = spec.correlation.rows();
  if (d < 1 || spec.correlation.cols() != d)
    throw ConfigError("datagen: correlation matrix must be square");
  if (spec.marginals.size() != static_cast<std::size_t>(d))
    throw ConfigError("datagen: need one marginal per correlation row");
  if ((spec.correlation - spec.correlation.transpose()).cwiseAbs().maxCoeff() >
      1e-12)
    throw ConfigError("datagen: correlation matrix must be symmetric");
  for (Eigen::Index i = 0; i < d; ++i)
    if (std::abs(spec.correlation(i, i) - 1.0) > 1e-12)
      throw ConfigError("datagen: correlation diagonal must be one");
}

void validate_gmm(const SyntheticSpec& spec) {
  const Eigen::Index modes = spec.means.rows();
  const Eigen::Index d = spec.means.cols();
  if (modes < 1 || d < 1)
    throw ConfigError("datagen: mixture needs at least one mode and one axis");
  if (spec.weights.size() != modes)
    throw ConfigError("datagen: one weight per mode required");
  if ((spec.weights.array() <= 0.0).any())
    throw ConfigError("datagen: mixture weights must be positive");
  if (std::abs(spec.weights.sum() - 1.0) > 1e-9)
    throw ConfigError("datagen: mixture weights must sum to one");
  if (spec.variances.size() != d || (spec.variances.array() <= 0.0).any())
    throw ConfigError("datagen: per-axis variances must be positive");
  if (spec.box_low.size() != d || spec.box_high.size() != d)
    throw ConfigError("datagen: box bounds must match the dimension");
  if ((spec.box_low.array() >= spec.box_high.array()).any())
    throw ConfigError("datagen: box bounds must be ordered");
}

GeneratedData generate_copula(const SyntheticSpec& spec) {
  validate_copula(spec);
  const int d = spec.dim();

  Eigen::LLT<Eigen::MatrixXd> llt(spec.correlation);
  if (llt.info() != Eigen::Success)
    throw ConfigError("datagen: correlation matrix is not positive definite");
  const Eigen::MatrixXd chol = llt.matrixL();
  const Eigen::MatrixXd inv =
      llt.solve(Eigen::MatrixXd::Identity(d, d));
  const double log_det = 2.0 * chol.diagonal().array().log().sum();
  const std::vector<MarginalModel> marginals = spec.marginals;

  auto draw = [chol, marginals, d](int n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd out(n, d);
    Eigen::VectorXd z(d);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < d; ++k) z[k] = rng.gaussian();
      const Eigen::VectorXd corr = chol * z;
      for (int k = 0; k < d; ++k)
        out(i, k) = marginals[static_cast<std::size_t>(k)].quantile(
            norm_cdf(corr[k]));
    }
    return out;
  };

  auto log_pdf = [inv, log_det, marginals, d](const Eigen::VectorXd& x) {
    if (x.size() != d)
      throw ConfigError("datagen: log_pdf point has wrong dimension");
    Eigen::VectorXd w(d);
    double marg = 0.0;
    for (int k = 0; k < d; ++k) {
      const MarginalModel& mk = marginals[static_cast<std::size_t>(k)];
      if (x[k] < mk.support_lower() || x[k] > mk.support_upper())
        return kNegInf;
      const double density = mk.pdf(x[k]);
      if (!(density > 0.0)) return kNegInf;
      marg += std::log(density);
      w[k] = norm_quantile(mk.cdf(x[k]));
      if (!std::isfinite(w[k])) return kNegInf;
    }
    const double quad = w.dot(inv * w) - w.squaredNorm();
    return -0.5 * quad - 0.5 * log_det + marg;
  };

  GeneratedData data;
  data.samples = draw(spec.count, spec.seed);
  data.acceptance_rate = 1.0;
  data.density.log_pdf = log_pdf;
  data.density.sample = draw;
  return data;
}

GeneratedData generate_gmm(const SyntheticSpec& spec) {
  validate_gmm(spec);
  const int modes = static_cast<int>(spec.means.rows());
  const int d = spec.dim();
  const Eigen::VectorXd sigma = spec.variances.cwiseSqrt();

  // Probability mass each mode leaves inside the box; the truncation
  // normalizer of the mixture is the weighted sum.
  Eigen::VectorXd mass(modes);
  for (int k = 0; k < modes; ++k) {
    double m = 1.0;
    for (int a = 0; a < d; ++a) {
      const double lo = (spec.box_low[a] - spec.means(k, a)) / sigma[a];
      const double hi = (spec.box_high[a] - spec.means(k, a)) / sigma[a];
      m *= norm_cdf(hi) - norm_cdf(lo);
    }
    mass[k] = m;
  }
  const double normalizer = spec.weights.dot(mass);
  if (!(normalizer > 0.0))
    throw ConfigError("datagen: the box captures no probability mass");

  const Eigen::MatrixXd means = spec.means;
  const Eigen::VectorXd weights = spec.weights;
  const Eigen::VectorXd lo = spec.box_low, hi = spec.box_high;

  auto draw = [=](int n, std::uint64_t seed, long* proposals) {
    Rng rng(seed);
    Eigen::MatrixXd out(n, d);
    long tried = 0;
    for (int i = 0; i < n; ++i) {
      for (;;) {
        ++tried;
        if (tried > 1000L * (n + 1))
          throw NumericalError("datagen: rejection sampler starved");
        double u = rng.uniform();
        int mode = 0;
        double acc = weights[0];
        while (mode + 1 < modes && u >= acc) acc += weights[++mode];
        bool inside = true;
        for (int a = 0; a < d; ++a) {
          out(i, a) = means(mode, a) + sigma[a] * rng.gaussian();
          if (out(i, a) < lo[a] || out(i, a) > hi[a]) inside = false;
        }
        if (inside) break;
      }
    }
    if (proposals != nullptr) *proposals = tried;
    return out;
  };

  const double log_normalizer = std::log(normalizer);
  auto log_pdf = [=](const Eigen::VectorXd& x) {
    if (x.size() != d)
      throw ConfigError("datagen: log_pdf point has wrong dimension");
    if ((x.array() < lo.array()).any() || (x.array() > hi.array()).any())
      return kNegInf;
    double top = kNegInf;
    Eigen::VectorXd terms(modes);
    for (int k = 0; k < modes; ++k) {
      double t = std::log(weights[k]);
      for (int a = 0; a < d; ++a)
        t += norm_logpdf((x[a] - means(k, a)) / sigma[a]) -
             std::log(sigma[a]);
      terms[k] = t;
      top = std::max(top, t);
    }
    if (!std::isfinite(top)) return kNegInf;
    return top + std::log((terms.array() - top).exp().sum()) - log_normalizer;
  };

  GeneratedData data;
  long proposals = 0;
  data.samples = draw(spec.count, spec.seed, &proposals);
  data.acceptance_rate =
      proposals > 0 ? static_cast<double>(spec.count) / proposals : 1.0;
  data.density.log_pdf = log_pdf;
  data.density.sample = [draw](int n, std::uint64_t seed) {
    return draw(n, seed, nullptr);
  };
  return data;
}

}  // namespace

int SyntheticSpec::dim() const {
  if (kind == "gaussian_copula") return static_cast<int>(correlation.rows());
  if (kind == "trunc_gmm") return static_cast<int>(means.cols());
  throw ConfigError("datagen: unknown kind '" + kind + "'");
}

GeneratedData generate(const SyntheticSpec& spec) {
  if (spec.count < 1) throw ConfigError("datagen: count must be positive");
  if (spec.kind == "gaussian_copula") return generate_copula(spec);
  if (spec.kind == "trunc_gmm") return generate_gmm(spec);
  throw ConfigError("datagen: unknown kind '" + spec.kind + "'");
}

nlohmann::json SyntheticSpec::to_json() const {
  nlohmann::json j{{"kind", kind}, {"count", count}, {"seed", seed}};
  if (kind == "gaussian_copula") {
    j["correlation"] = matrix_to_json(correlation);
    nlohmann::json m = nlohmann::json::array();
    for (const MarginalModel& mk : marginals) m.push_back(mk.to_json());
    j["marginals"] = m;
  } else if (kind == "trunc_gmm") {
    j["means"] = matrix_to_json(means);
    j["weights"] = vector_to_json(weights);
    j["variances"] = vector_to_json(variances);
    j["box_low"] = vector_to_json(box_low);
    j["box_high"] = vector_to_json(box_high);
  } else {
    throw ConfigError("datagen: unknown kind '" + kind + "'");
  }
  return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec spec;
  spec.kind = j.at("kind").get<std::string>();
  spec.count = j.at("count").get<int>();
  spec.seed = j.value("seed", std::uint64_t{0});
  if (spec.kind == "gaussian_copula") {
    spec.correlation = matrix_from_json(j.at("correlation"));
    for (const auto& m : j.at("marginals"))
      spec.marginals.push_back(MarginalModel::from_json(m));
  } else if (spec.kind == "trunc_gmm") {
    spec.means = matrix_from_json(j.at("means"));
    spec.weights = vector_from_json(j.at("weights"));
    spec.variances = vector_from_json(j.at("variances"));
    spec.box_low = vector_from_json(j.at("box_low"));
    spec.box_high = vector_from_json(j.at("box_high"));
  } else {
    throw ConfigError("datagen: unknown kind '" + spec.kind + "'");
  }
  return spec;
}

SyntheticSpec copula_benchmark_spec(int count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = "gaussian_copula";
  spec.count = count;
  spec.seed = seed;
  spec.correlation = Eigen::MatrixXd(3, 3);
  spec.correlation << 1.0, 0.5, 0.2, 0.5, 1.0, 0.3, 0.2, 0.3, 1.0;
  spec.marginals = {MarginalModel::beta(2.0, 5.0),
                    MarginalModel::uniform(0.2, 0.8),
                    MarginalModel::truncated_normal(0.5, 0.1, 0.0, 1.0)};
  return spec;
}

SyntheticSpec gmm_benchmark_spec(int count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.kind = "trunc_gmm";
  spec.count = count;
  spec.seed = seed;
  spec.means = Eigen::MatrixXd(2, 3);
  spec.means << 0.25, 0.30, 0.35, 0.75, 0.70, 0.65;
  spec.weights = Eigen::VectorXd::Constant(2, 0.5);
  spec.variances = Eigen::VectorXd::Constant(3, 0.02);
  spec.box_low = Eigen::VectorXd::Zero(3);
  spec.box_high = Eigen::VectorXd::Ones(3);
  return spec;
}

}  // namespace fpce
