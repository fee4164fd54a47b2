#include "fpce/sim/swing.hpp"

#include <cmath>
#include <sstream>

#include "fpce/errors.hpp"
#include "fpce/io/serialize.hpp"

namespace fpce {

namespace {

constexpr double kDivergeAngle = 10.0 * M_PI;

void check_symmetric(const Eigen::MatrixXd& m, int n, const char* what,
                     std::size_t stage) {
  if (m.rows() != n || m.cols() != n) {
    std::ostringstream os;
    os << "SwingSystem: " << what << " of stage " << stage << " must be " << n
       << "x" << n;
    throw ConfigError(os.str());
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    std::ostringstream os;
    os << "SwingSystem: " << what << " of stage " << stage
       << " is not symmetric";
    throw ConfigError(os.str());
  }
}

}  // namespace

SwingSystem::SwingSystem(Eigen::VectorXd inertia, Eigen::VectorXd damping,
                         Eigen::VectorXd emf,
                         std::vector<AdmittanceStage> stages,
                         std::vector<SwingEvent> events,
                         Eigen::VectorXd base_power,
                         std::vector<InjectionRange> ranges, double step,
                         double horizon, int output_generator)
    : inertia_(std::move(inertia)),
      damping_(std::move(damping)),
      emf_(std::move(emf)),
      base_power_(std::move(base_power)),
      stages_(std::move(stages)),
      events_(std::move(events)),
      ranges_(std::move(ranges)),
      step_(step),
      horizon_(horizon),
      output_generator_(output_generator) {
  const int n = n_gen();
  if (n < 1) throw ConfigError("SwingSystem: need at least one generator");
  if (damping_.size() != n || emf_.size() != n || base_power_.size() != n)
    throw ConfigError(
        "SwingSystem: inertia, damping, emf and base_power must have equal "
        "length");
  if ((inertia_.array() <= 0.0).any())
    throw ConfigError("SwingSystem: inertia constants must be positive");
  if ((damping_.array() < 0.0).any())
    throw ConfigError("SwingSystem: damping must be nonnegative");
  if ((emf_.array() <= 0.0).any())
    throw ConfigError("SwingSystem: EMF magnitudes must be positive");
  if (stages_.empty())
    throw ConfigError("SwingSystem: at least one admittance stage required");
  if (!(step_ > 0.0)) throw ConfigError("SwingSystem: step must be positive");
  if (!(horizon_ >= step_))
    throw ConfigError("SwingSystem: horizon must cover at least one step");
  if (output_generator_ < 0 || output_generator_ >= n)
    throw ConfigError("SwingSystem: output generator index out of range");

  for (std::size_t s = 0; s < stages_.size(); ++s) {
    check_symmetric(stages_[s].conductance, n, "conductance", s);
    check_symmetric(stages_[s].susceptance, n, "susceptance", s);
    const Eigen::MatrixXd outer = emf_ * emf_.transpose();
    coupling_g_.push_back(outer.cwiseProduct(stages_[s].conductance));
    coupling_b_.push_back(outer.cwiseProduct(stages_[s].susceptance));
  }

  double prev = 0.0;
  for (const SwingEvent& e : events_) {
    if (e.admittance < 0 || e.admittance >= static_cast<int>(stages_.size()))
      throw ConfigError("SwingSystem: event admittance index out of range");
    if (!(e.time > prev))
      throw ConfigError(
          "SwingSystem: event times must be strictly increasing and positive");
    if (!(e.time < horizon_))
      throw ConfigError("SwingSystem: event times must lie inside the horizon");
    prev = e.time;
  }

  std::vector<bool> seen(n, false);
  for (const InjectionRange& r : ranges_) {
    if (r.generator < 0 || r.generator >= n)
      throw ConfigError("SwingSystem: injection range generator out of range");
    if (seen[r.generator])
      throw ConfigError(
          "SwingSystem: a generator may carry at most one injection range");
    seen[r.generator] = true;
    if (!(r.low < r.high))
      throw ConfigError(
          "SwingSystem: injection range must satisfy low < high");
  }
}

Eigen::VectorXd SwingSystem::inject(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                    bool* clamped) const {
  if (xi.size() != input_dim())
    throw ConfigError("SwingSystem::inject: expected " +
                      std::to_string(input_dim()) + " inputs, got " +
                      std::to_string(xi.size()));
  if (clamped != nullptr) *clamped = false;
  Eigen::VectorXd p_m = base_power_;
  for (std::size_t k = 0; k < ranges_.size(); ++k) {
    double u = xi[static_cast<Eigen::Index>(k)];
    if (u < 0.0 || u > 1.0) {
      u = std::min(1.0, std::max(0.0, u));
      if (clamped != nullptr) *clamped = true;
    }
    const InjectionRange& r = ranges_[k];
    p_m[r.generator] = r.low + u * (r.high - r.low);
  }
  return p_m;
}

Eigen::VectorXd SwingSystem::electrical_power(
    const Eigen::Ref<const Eigen::VectorXd>& delta, int stage) const {
  const int n = n_gen();
  if (delta.size() != n)
    throw ConfigError("SwingSystem::electrical_power: angle size mismatch");
  if (stage < 0 || stage >= static_cast<int>(stages_.size()))
    throw ConfigError("SwingSystem::electrical_power: stage out of range");
  const Eigen::MatrixXd& a = coupling_g_[stage];
  const Eigen::MatrixXd& b = coupling_b_[stage];
  Eigen::VectorXd pe(n);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = delta[i] - delta[j];
      acc += a(i, j) * std::cos(d) + b(i, j) * std::sin(d);
    }
    pe[i] = acc;
  }
  return pe;
}

Eigen::VectorXd SwingSystem::equilibrium(
    const Eigen::Ref<const Eigen::VectorXd>& p_m) const {
  const int n = n_gen();
  if (p_m.size() != n)
    throw ConfigError("SwingSystem::equilibrium: power vector size mismatch");
  const double m_total = inertia_.sum();

  auto mismatch = [&](const Eigen::VectorXd& d) -> Eigen::VectorXd {
    const Eigen::VectorXd acc = p_m - electrical_power(d, 0);
    return acc - inertia_ * (acc.sum() / m_total);
  };

  Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = mismatch(delta);
  const Eigen::MatrixXd& a = coupling_g_[0];
  const Eigen::MatrixXd& b = coupling_b_[0];

  for (int it = 0; it < 50 && r.lpNorm<Eigen::Infinity>() >= 1e-10; ++it) {
    // dP_e,i/d delta_k, then the frame projection applied to its columns.
    Eigen::MatrixXd dpe = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d = delta[i] - delta[j];
        const double g = -a(i, j) * std::sin(d) + b(i, j) * std::cos(d);
        dpe(i, i) += g;
        dpe(i, j) = -g;
      }
    }
    Eigen::MatrixXd dr = -dpe;
    dr.noalias() += (inertia_ / m_total) * dpe.colwise().sum();
    if (n == 1) break;  // r is identically zero for a single machine

    // The last angle stays fixed during iteration; the frame is re-pinned
    // after convergence.
    const Eigen::VectorXd step =
        dr.topLeftCorner(n - 1, n - 1).partialPivLu().solve(-r.head(n - 1));
    if (!step.allFinite()) break;
    double t = 1.0;
    for (int half = 0; half < 8; ++half) {
      Eigen::VectorXd trial = delta;
      trial.head(n - 1) += t * step;
      Eigen::VectorXd rt = mismatch(trial);
      if (rt.lpNorm<Eigen::Infinity>() <= r.lpNorm<Eigen::Infinity>() ||
          half == 7) {
        delta = trial;
        r = rt;
        break;
      }
      t *= 0.5;
    }
  }

  if (!(r.lpNorm<Eigen::Infinity>() < 1e-10)) {
    std::ostringstream os;
    os << "SwingSystem::equilibrium: infeasible operating point (residual "
       << r.lpNorm<Eigen::Infinity>() << " after 50 iterations)";
    throw NumericalError(os.str());
  }
  delta.array() -= inertia_.dot(delta) / m_total;
  return delta;
}

SimTrajectory SwingSystem::integrate(
    const Eigen::Ref<const Eigen::VectorXd>& delta0,
    const Eigen::Ref<const Eigen::VectorXd>& omega0,
    const Eigen::Ref<const Eigen::VectorXd>& p_m, double h) const {
  const int n = n_gen();
  if (delta0.size() != n || omega0.size() != n || p_m.size() != n)
    throw ConfigError("SwingSystem::integrate: state size mismatch");
  if (h <= 0.0) h = step_;

  // Map each event onto its step index; switches are exact, not interpolated.
  std::vector<std::pair<long long, int>> schedule;
  for (const SwingEvent& e : events_) {
    const long long k = std::llround(e.time / h);
    if (std::abs(static_cast<double>(k) * h - e.time) > 1e-9) {
      std::ostringstream os;
      os << "SwingSystem::integrate: event at t=" << e.time
         << " does not lie on the step grid h=" << h;
      throw ConfigError(os.str());
    }
    schedule.emplace_back(k, e.admittance);
  }

  const long long steps = static_cast<long long>(std::floor(horizon_ / h + 1e-9));
  SimTrajectory out;
  out.time.resize(steps + 1);
  out.delta.resize(steps + 1, n);
  out.omega.resize(steps + 1, n);

  Eigen::VectorXd d = delta0, w = omega0;
  Eigen::VectorXd kd1(n), kw1(n), kd2(n), kw2(n), kd3(n), kw3(n), kd4(n),
      kw4(n), dt(n), wt(n);
  int stage = 0;
  std::size_t next_event = 0;

  auto rhs = [&](const Eigen::VectorXd& dd, const Eigen::VectorXd& ww,
                 Eigen::VectorXd& od, Eigen::VectorXd& ow) {
    od = ww;
    ow = (p_m - electrical_power(dd, stage) - damping_.cwiseProduct(ww))
             .cwiseQuotient(inertia_);
  };

  out.time[0] = 0.0;
  out.delta.row(0) = d.transpose();
  out.omega.row(0) = w.transpose();

  for (long long k = 0; k < steps; ++k) {
    while (next_event < schedule.size() && schedule[next_event].first <= k) {
      stage = schedule[next_event].second;
      ++next_event;
    }
    rhs(d, w, kd1, kw1);
    dt = d + 0.5 * h * kd1;
    wt = w + 0.5 * h * kw1;
    rhs(dt, wt, kd2, kw2);
    dt = d + 0.5 * h * kd2;
    wt = w + 0.5 * h * kw2;
    rhs(dt, wt, kd3, kw3);
    dt = d + h * kd3;
    wt = w + h * kw3;
    rhs(dt, wt, kd4, kw4);
    Eigen::VectorXd dn = d + (h / 6.0) * (kd1 + 2.0 * kd2 + 2.0 * kd3 + kd4);
    Eigen::VectorXd wn = w + (h / 6.0) * (kw1 + 2.0 * kw2 + 2.0 * kw3 + kw4);

    if (!dn.allFinite() || !wn.allFinite() ||
        dn.cwiseAbs().maxCoeff() > kDivergeAngle) {
      out.unstable = true;
      for (long long j = k + 1; j <= steps; ++j) {
        out.time[j] = static_cast<double>(j) * h;
        out.delta.row(j) = d.transpose();
        out.omega.row(j) = w.transpose();
      }
      return out;
    }
    d = dn;
    w = wn;
    out.time[k + 1] = static_cast<double>(k + 1) * h;
    out.delta.row(k + 1) = d.transpose();
    out.omega.row(k + 1) = w.transpose();
  }
  return out;
}

SimOutput SwingSystem::simulate(const Eigen::Ref<const Eigen::VectorXd>& xi,
                                double h) const {
  bool clamped = false;
  const Eigen::VectorXd p_m = inject(xi, &clamped);
  const Eigen::VectorXd delta0 = equilibrium(p_m);
  const SimTrajectory traj =
      integrate(delta0, Eigen::VectorXd::Zero(n_gen()), p_m, h);

  SimOutput out;
  out.time = traj.time;
  out.unstable = traj.unstable;
  out.input_clamped = clamped;
  const double m_total = inertia_.sum();
  out.y = traj.delta.col(output_generator_) -
          (traj.delta * inertia_) / m_total;
  return out;
}

BatchResult SwingSystem::batch_simulate(
    const Eigen::Ref<const Eigen::MatrixXd>& samples, double h) const {
  if (samples.cols() != input_dim())
    throw ConfigError("SwingSystem::batch_simulate: sample dimension must be " +
                      std::to_string(input_dim()));
  BatchResult result;
  result.outputs.resize(static_cast<std::size_t>(samples.rows()));
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    try {
      result.outputs[static_cast<std::size_t>(i)] =
          simulate(samples.row(i).transpose(), h);
    } catch (const NumericalError&) {
      result.failed.push_back(static_cast<int>(i));
    }
  }
  return result;
}

nlohmann::json SimOutput::to_json() const {
  return {{"time", vector_to_json(time)},
          {"y", vector_to_json(y)},
          {"unstable", unstable},
          {"input_clamped", input_clamped}};
}

SimOutput SimOutput::from_json(const nlohmann::json& j) {
  SimOutput out;
  out.time = vector_from_json(j.at("time"));
  out.y = vector_from_json(j.at("y"));
  out.unstable = j.at("unstable").get<bool>();
  out.input_clamped = j.value("input_clamped", false);
  return out;
}

nlohmann::json SwingSystem::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const AdmittanceStage& s : stages_)
    stages.push_back({{"conductance", matrix_to_json(s.conductance)},
                      {"susceptance", matrix_to_json(s.susceptance)}});
  nlohmann::json events = nlohmann::json::array();
  for (const SwingEvent& e : events_)
    events.push_back({{"time", e.time}, {"admittance", e.admittance}});
  nlohmann::json ranges = nlohmann::json::array();
  for (const InjectionRange& r : ranges_)
    ranges.push_back(
        {{"generator", r.generator}, {"low", r.low}, {"high", r.high}});
  return {{"format", "fpce-swing-v1"},
          {"inertia", vector_to_json(inertia_)},
          {"damping", vector_to_json(damping_)},
          {"emf", vector_to_json(emf_)},
          {"admittance", stages},
          {"events", events},
          {"base_power", vector_to_json(base_power_)},
          {"ranges", ranges},
          {"step", step_},
          {"horizon", horizon_},
          {"output_generator", output_generator_}};
}

SwingSystem SwingSystem::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "fpce-swing-v1")
    throw ConfigError("SwingSystem::from_json: unrecognized format");
  std::vector<AdmittanceStage> stages;
  for (const auto& s : j.at("admittance"))
    stages.push_back({matrix_from_json(s.at("conductance")),
                      matrix_from_json(s.at("susceptance"))});
  std::vector<SwingEvent> events;
  for (const auto& e : j.at("events"))
    events.push_back({e.at("time").get<double>(), e.at("admittance").get<int>()});
  std::vector<InjectionRange> ranges;
  for (const auto& r : j.at("ranges"))
    ranges.push_back({r.at("generator").get<int>(), r.at("low").get<double>(),
                      r.at("high").get<double>()});
  return SwingSystem(vector_from_json(j.at("inertia")),
                     vector_from_json(j.at("damping")),
                     vector_from_json(j.at("emf")), std::move(stages),
                     std::move(events), vector_from_json(j.at("base_power")),
                     std::move(ranges), j.value("step", 0.005),
                     j.value("horizon", 10.0), j.value("output_generator", 0));
}

void SwingSystem::save(const std::filesystem::path& path) const {
  atomic_write_json(path, to_json());
}

SwingSystem SwingSystem::load(const std::filesystem::path& path) {
  return from_json(load_json(path));
}

}  // namespace fpce
