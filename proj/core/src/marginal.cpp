#include "fpce/map/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fpce/errors.hpp"
#include "fpce/io/serialize.hpp"
#include "fpce/math/normal.hpp"
#include "fpce/math/special.hpp"

namespace fpce {

const char* marginal_kind_name(MarginalKind k) {
  switch (k) {
    case MarginalKind::beta: return "beta";
    case MarginalKind::uniform: return "uniform";
    case MarginalKind::truncated_normal: return "truncated_normal";
    case MarginalKind::empirical: return "empirical";
  }
  return "empirical";
}

MarginalKind marginal_kind_from_name(const std::string& name) {
  if (name == "beta") return MarginalKind::beta;
  if (name == "uniform") return MarginalKind::uniform;
  if (name == "truncated_normal") return MarginalKind::truncated_normal;
  if (name == "empirical") return MarginalKind::empirical;
  throw ConfigError("unknown marginal kind '" + name + "'");
}

MarginalModel MarginalModel::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw ConfigError("beta marginal: parameters must be positive");
  MarginalModel m;
  m.kind_ = MarginalKind::beta;
  m.p0_ = a;
  m.p1_ = b;
  m.lo_ = 0.0;
  m.hi_ = 1.0;
  return m;
}

MarginalModel MarginalModel::uniform(double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("uniform marginal: needs hi > lo");
  MarginalModel m;
  m.kind_ = MarginalKind::uniform;
  m.p0_ = lo;
  m.p1_ = hi;
  m.lo_ = lo;
  m.hi_ = hi;
  return m;
}

MarginalModel MarginalModel::truncated_normal(double mu, double sigma, double lo,
                                              double hi) {
  if (!(sigma > 0.0)) throw ConfigError("truncated_normal: sigma must be positive");
  if (!(hi > lo)) throw ConfigError("truncated_normal: needs hi > lo");
  MarginalModel m;
  m.kind_ = MarginalKind::truncated_normal;
  m.p0_ = mu;
  m.p1_ = sigma;
  m.lo_ = lo;
  m.hi_ = hi;
  return m;
}

MarginalModel MarginalModel::empirical(std::span<const double> samples) {
  if (samples.size() < 2)
    throw ConfigError("empirical marginal: need at least 2 samples");
  MarginalModel m;
  m.kind_ = MarginalKind::empirical;
  m.sorted_.assign(samples.begin(), samples.end());
  for (double v : m.sorted_)
    if (!std::isfinite(v))
      throw ConfigError("empirical marginal: non-finite sample");
  std::sort(m.sorted_.begin(), m.sorted_.end());
  const std::size_t n = m.sorted_.size();
  if (m.sorted_.front() == m.sorted_.back())
    throw ConfigError("empirical marginal: zero sample spread");
  m.positions_.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    m.positions_[i] = (double(i) + 0.5) / double(n);
  m.lo_ = m.sorted_.front();
  m.hi_ = m.sorted_.back();
  return m;
}

namespace {

void check_samples(std::span<const double> s, double lo, double hi,
                   const char* kind) {
  if (s.size() < 2)
    throw ConfigError(std::string(kind) + " fit: need at least 2 samples");
  for (double v : s) {
    if (!std::isfinite(v)) throw ConfigError(std::string(kind) + " fit: non-finite sample");
    if (v < lo || v > hi)
      throw ConfigError(std::string(kind) + " fit: sample outside support");
  }
}

// Beta MLE: Newton on the digamma stationarity conditions, method-of-moments
// start, damped to keep (a,b) positive.
std::pair<double, double> fit_beta_ml(std::span<const double> s) {
  double mlogx = 0.0, mlog1mx = 0.0, mean = 0.0, sq = 0.0;
  const double n = double(s.size());
  const double eps = 1e-12;
  for (double v : s) {
    double x = std::clamp(v, eps, 1.0 - eps);
    mlogx += std::log(x);
    mlog1mx += std::log1p(-x);
    mean += x;
    sq += x * x;
  }
  mlogx /= n;
  mlog1mx /= n;
  mean /= n;
  double var = std::max(sq / n - mean * mean, 1e-12);
  double common = mean * (1.0 - mean) / var - 1.0;
  double a = std::max(mean * common, 1e-2);
  double b = std::max((1.0 - mean) * common, 1e-2);

  for (int it = 0; it < 100; ++it) {
    double psiab = digamma(a + b);
    double ga = mlogx - (digamma(a) - psiab);
    double gb = mlog1mx - (digamma(b) - psiab);
    double tab = trigamma(a + b);
    // Hessian of the log-likelihood (per sample)
    double haa = -(trigamma(a) - tab);
    double hbb = -(trigamma(b) - tab);
    double hab = tab;
    double det = haa * hbb - hab * hab;
    if (std::fabs(det) < 1e-300) break;
    double da = -(hbb * ga - hab * gb) / det;
    double db = -(haa * gb - hab * ga) / det;
    double step = 1.0;
    while ((a + step * da <= 0.0 || b + step * db <= 0.0) && step > 1e-8)
      step *= 0.5;
    a += step * da;
    b += step * db;
    if (std::fabs(step * da) + std::fabs(step * db) < 1e-10 * (a + b)) break;
  }
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw NumericalError("beta fit: likelihood iteration failed");
  return {a, b};
}

// Truncated normal MLE on [lo,hi]: analytic gradient, finite-difference
// Hessian, damped Newton from the sample moments.
std::pair<double, double> fit_truncnorm_ml(std::span<const double> s, double lo,
                                           double hi) {
  const double n = double(s.size());
  double mean = 0.0, sq = 0.0;
  for (double v : s) {
    mean += v;
    sq += v * v;
  }
  mean /= n;
  double sd = std::sqrt(std::max(sq / n - mean * mean, 1e-12));

  auto grad = [&](double mu, double sigma, double& gmu, double& gsigma) {
    double alpha = (lo - mu) / sigma, beta = (hi - mu) / sigma;
    double Z = norm_cdf(beta) - norm_cdf(alpha);
    Z = std::max(Z, 1e-300);
    double pa = norm_pdf(alpha), pb = norm_pdf(beta);
    double sum1 = 0.0, sum2 = 0.0;
    for (double v : s) {
      sum1 += (v - mu);
      sum2 += (v - mu) * (v - mu);
    }
    gmu = sum1 / (sigma * sigma) - n * (pa - pb) / (sigma * Z);
    gsigma = -n / sigma + sum2 / (sigma * sigma * sigma) -
             n * (alpha * pa - beta * pb) / (sigma * Z);
  };

  double mu = mean, sigma = sd;
  for (int it = 0; it < 200; ++it) {
    double gm, gs;
    grad(mu, sigma, gm, gs);
    const double h = 1e-6 * (1.0 + std::fabs(mu) + sigma);
    double gm1, gs1, gm2, gs2;
    grad(mu + h, sigma, gm1, gs1);
    grad(mu, sigma + h, gm2, gs2);
    double haa = (gm1 - gm) / h, hab = (gm2 - gm) / h;
    double hba = (gs1 - gs) / h, hbb = (gs2 - gs) / h;
    double det = haa * hbb - hab * hba;
    double dmu, dsigma;
    if (std::fabs(det) > 1e-300) {
      dmu = -(hbb * gm - hab * gs) / det;
      dsigma = -(haa * gs - hba * gm) / det;
    } else {
      dmu = gm * 1e-3;
      dsigma = gs * 1e-3;
    }
    double step = 1.0;
    while (sigma + step * dsigma <= 1e-6 && step > 1e-10) step *= 0.5;
    mu += step * dmu;
    sigma += step * dsigma;
    if (std::fabs(step * dmu) + std::fabs(step * dsigma) <
        1e-12 * (1.0 + std::fabs(mu) + sigma))
      break;
  }
  if (!std::isfinite(mu) || !(sigma > 0.0))
    throw NumericalError("truncated_normal fit: likelihood iteration failed");
  return {mu, sigma};
}

}  // namespace

MarginalModel MarginalModel::fit(std::span<const double> samples, MarginalKind kind) {
  switch (kind) {
    case MarginalKind::beta: {
      check_samples(samples, 0.0, 1.0, "beta");
      auto [a, b] = fit_beta_ml(samples);
      return beta(a, b);
    }
    case MarginalKind::uniform: {
      check_samples(samples, -std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity(), "uniform");
      auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
      if (!(*mx > *mn)) throw ConfigError("uniform fit: zero sample spread");
      return uniform(*mn, *mx);
    }
    case MarginalKind::truncated_normal: {
      check_samples(samples, 0.0, 1.0, "truncated_normal");
      auto [mu, sigma] = fit_truncnorm_ml(samples, 0.0, 1.0);
      return truncated_normal(mu, sigma, 0.0, 1.0);
    }
    case MarginalKind::empirical:
      return empirical(samples);
  }
  throw ConfigError("marginal fit: unknown kind");
}

double MarginalModel::cdf(double x) const {
  switch (kind_) {
    case MarginalKind::beta:
      return inc_beta(p0_, p1_, std::clamp(x, 0.0, 1.0));
    case MarginalKind::uniform:
      if (x <= p0_) return 0.0;
      if (x >= p1_) return 1.0;
      return (x - p0_) / (p1_ - p0_);
    case MarginalKind::truncated_normal: {
      if (x <= lo_) return 0.0;
      if (x >= hi_) return 1.0;
      double za = (lo_ - p0_) / p1_, zb = (hi_ - p0_) / p1_;
      double Z = norm_cdf(zb) - norm_cdf(za);
      return (norm_cdf((x - p0_) / p1_) - norm_cdf(za)) / Z;
    }
    case MarginalKind::empirical: {
      const auto& xs = sorted_;
      const auto& ps = positions_;
      if (x <= xs.front()) return ps.front();
      if (x >= xs.back()) return ps.back();
      auto it = std::upper_bound(xs.begin(), xs.end(), x);
      std::size_t j = std::size_t(it - xs.begin()) - 1;
      // skip over tied sample values
      while (j + 1 < xs.size() && xs[j + 1] == xs[j]) ++j;
      if (j + 1 == xs.size()) return ps.back();
      double t = (x - xs[j]) / (xs[j + 1] - xs[j]);
      return ps[j] + t * (ps[j + 1] - ps[j]);
    }
  }
  return 0.0;
}

double MarginalModel::quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0))
    throw std::invalid_argument("marginal quantile: u outside [0,1]");
  switch (kind_) {
    case MarginalKind::beta:
      return inc_beta_inv(p0_, p1_, u);
    case MarginalKind::uniform:
      return p0_ + u * (p1_ - p0_);
    case MarginalKind::truncated_normal: {
      if (u <= 0.0) return lo_;
      if (u >= 1.0) return hi_;
      double za = (lo_ - p0_) / p1_, zb = (hi_ - p0_) / p1_;
      double Fa = norm_cdf(za), Fb = norm_cdf(zb);
      double v = Fa + u * (Fb - Fa);
      v = std::clamp(v, std::numeric_limits<double>::min(),
                     1.0 - std::numeric_limits<double>::epsilon() / 2);
      return std::clamp(p0_ + p1_ * norm_quantile(v), lo_, hi_);
    }
    case MarginalKind::empirical: {
      const auto& xs = sorted_;
      const auto& ps = positions_;
      if (u <= ps.front()) return xs.front();
      if (u >= ps.back()) return xs.back();
      auto it = std::upper_bound(ps.begin(), ps.end(), u);
      std::size_t j = std::size_t(it - ps.begin()) - 1;
      double t = (u - ps[j]) / (ps[j + 1] - ps[j]);
      return xs[j] + t * (xs[j + 1] - xs[j]);
    }
  }
  return 0.0;
}

double MarginalModel::pdf(double x) const {
  switch (kind_) {
    case MarginalKind::beta: {
      if (x <= 0.0 || x >= 1.0) return 0.0;
      return std::exp((p0_ - 1.0) * std::log(x) + (p1_ - 1.0) * std::log1p(-x) -
                      log_beta(p0_, p1_));
    }
    case MarginalKind::uniform:
      return (x >= p0_ && x <= p1_) ? 1.0 / (p1_ - p0_) : 0.0;
    case MarginalKind::truncated_normal: {
      if (x < lo_ || x > hi_) return 0.0;
      double za = (lo_ - p0_) / p1_, zb = (hi_ - p0_) / p1_;
      double Z = norm_cdf(zb) - norm_cdf(za);
      return norm_pdf((x - p0_) / p1_) / (p1_ * Z);
    }
    case MarginalKind::empirical: {
      const auto& xs = sorted_;
      const auto& ps = positions_;
      if (x < xs.front() || x > xs.back()) return 0.0;
      auto it = std::upper_bound(xs.begin(), xs.end(), x);
      std::size_t j = (it == xs.begin()) ? 0 : std::size_t(it - xs.begin()) - 1;
      while (j + 1 < xs.size() && xs[j + 1] == xs[j]) ++j;
      if (j + 1 == xs.size()) j = xs.size() - 2;
      double dx = xs[j + 1] - xs[j];
      if (dx <= 0.0) return 0.0;
      return (ps[j + 1] - ps[j]) / dx;
    }
  }
  return 0.0;
}

nlohmann::json MarginalModel::to_json() const {
  nlohmann::json j;
  j["kind"] = marginal_kind_name(kind_);
  if (kind_ == MarginalKind::empirical) {
    nlohmann::json vals = nlohmann::json::array();
    for (double v : sorted_) vals.push_back(hexfloat(v));
    j["sorted_samples"] = std::move(vals);
  } else {
    j["param0"] = hexfloat(p0_);
    j["param1"] = hexfloat(p1_);
    j["lower"] = hexfloat(lo_);
    j["upper"] = hexfloat(hi_);
  }
  return j;
}

MarginalModel MarginalModel::from_json(const nlohmann::json& j) {
  // Hand-written configs use plain numbers; persisted models use hexfloat.
  auto num = [](const nlohmann::json& e) {
    return e.is_string() ? parse_hexfloat(e.get<std::string>())
                         : e.get<double>();
  };
  MarginalKind kind = marginal_kind_from_name(j.at("kind").get<std::string>());
  if (kind == MarginalKind::empirical) {
    std::vector<double> vals;
    for (const auto& e : j.at("sorted_samples")) vals.push_back(num(e));
    return empirical(vals);
  }
  double p0 = num(j.at("param0"));
  double p1 = num(j.at("param1"));
  double lo = num(j.at("lower"));
  double hi = num(j.at("upper"));
  switch (kind) {
    case MarginalKind::beta: return beta(p0, p1);
    case MarginalKind::uniform: return uniform(p0, p1);
    case MarginalKind::truncated_normal: return truncated_normal(p0, p1, lo, hi);
    default: break;
  }
  throw ConfigError("marginal from_json: unknown kind");
}

}  // namespace fpce
