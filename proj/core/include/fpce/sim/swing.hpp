#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fpce {

// Network admittance for one operating stage, split into real and imaginary
// parts (Y = G + jB). Both matrices are n_gen x n_gen and symmetric; the
// network is Kron-reduced to the generator internal nodes.
struct AdmittanceStage {
  Eigen::MatrixXd conductance;
  Eigen::MatrixXd susceptance;
};

// From `time` seconds onward the network uses stage `admittance` (an index
// into the stage list). Stage 0 is always the pre-event network.
struct SwingEvent {
  double time = 0.0;
  int admittance = 0;
};

// Mechanical-power modulation of one generator by one input coordinate:
// P_m = low + xi_k * (high - low), where k is this entry's position in the
// range list. Generators without a range keep their base power.
struct InjectionRange {
  int generator = 0;
  double low = 0.0;
  double high = 1.0;
};

// Monitored output of one run: y(t) is the rotor angle of the configured
// generator relative to the inertia-weighted mean angle. When a trajectory
// diverges (any |delta_i| > 10*pi or a non-finite state), `unstable` is set
// and the remaining grid points repeat the last valid value, so the grid
// length is always floor(horizon/h)+1 and every stored value is finite.
struct SimOutput {
  Eigen::VectorXd time;
  Eigen::VectorXd y;
  bool unstable = false;
  bool input_clamped = false;

  nlohmann::json to_json() const;
  static SimOutput from_json(const nlohmann::json& j);
};

// Full state history; simulate() reduces this to a SimOutput, diagnostics and
// conservation checks read the raw angles and speeds.
struct SimTrajectory {
  Eigen::VectorXd time;
  Eigen::MatrixXd delta;  // (steps+1) x n_gen
  Eigen::MatrixXd omega;
  bool unstable = false;
};

struct BatchResult {
  std::vector<SimOutput> outputs;  // aligned with input rows
  std::vector<int> failed;  // rows whose equilibrium solve did not converge
  bool ok() const { return failed.empty(); }
};

// Classical multi-machine swing model
//   d delta_i / dt = omega_i
//   M_i d omega_i / dt = P_m,i - P_e,i(delta) - D_i omega_i
// with P_e,i = sum_j |E_i||E_j| (G_ij cos(delta_i - delta_j)
//                                + B_ij sin(delta_i - delta_j)).
// Immutable after construction; all operations are pure, so identical inputs
// give bitwise identical outputs.
class SwingSystem {
 public:
  SwingSystem(Eigen::VectorXd inertia, Eigen::VectorXd damping,
              Eigen::VectorXd emf, std::vector<AdmittanceStage> stages,
              std::vector<SwingEvent> events, Eigen::VectorXd base_power,
              std::vector<InjectionRange> ranges, double step = 0.005,
              double horizon = 10.0, int output_generator = 0);

  int n_gen() const { return static_cast<int>(inertia_.size()); }
  int input_dim() const { return static_cast<int>(ranges_.size()); }
  double step() const { return step_; }
  double horizon() const { return horizon_; }
  int output_generator() const { return output_generator_; }
  const Eigen::VectorXd& inertia() const { return inertia_; }
  const Eigen::VectorXd& damping() const { return damping_; }
  const Eigen::VectorXd& emf() const { return emf_; }
  const Eigen::VectorXd& base_power() const { return base_power_; }
  const std::vector<AdmittanceStage>& stages() const { return stages_; }
  const std::vector<SwingEvent>& events() const { return events_; }
  const std::vector<InjectionRange>& ranges() const { return ranges_; }

  // Mechanical powers from a unit-cube input vector (size input_dim).
  // Coordinates outside [0,1] are clamped; *clamped reports whether any were.
  Eigen::VectorXd inject(const Eigen::Ref<const Eigen::VectorXd>& xi,
                         bool* clamped = nullptr) const;

  // Electrical power under the given admittance stage.
  Eigen::VectorXd electrical_power(const Eigen::Ref<const Eigen::VectorXd>& delta,
                                   int stage = 0) const;

  // Pre-event steady state of the relative dynamics: Newton solve of
  //   r_i = (P_m,i - P_e,i) - (M_i / M_T) * sum_j (P_m,j - P_e,j) = 0
  // with the inertia-weighted mean angle pinned to zero (M_T = sum M_i).
  // The second term removes the common acceleration absorbed by the mean
  // frame, so a solution exists even when injections and losses do not
  // balance exactly; with damping proportional to inertia the returned state
  // is an exact fixed point of the mean-relative motion. Throws
  // NumericalError after 50 iterations without reaching |r|_inf < 1e-10.
  Eigen::VectorXd equilibrium(const Eigen::Ref<const Eigen::VectorXd>& p_m) const;

  // Classic fourth-order Runge-Kutta from an arbitrary state at fixed step h
  // (h <= 0 means the configured step). Event times must lie on the step
  // grid; the admittance switch takes effect exactly at its grid point.
  SimTrajectory integrate(const Eigen::Ref<const Eigen::VectorXd>& delta0,
                          const Eigen::Ref<const Eigen::VectorXd>& omega0,
                          const Eigen::Ref<const Eigen::VectorXd>& p_m,
                          double h = 0.0) const;

  // inject -> equilibrium -> integrate from rest -> project the monitored
  // relative angle.
  SimOutput simulate(const Eigen::Ref<const Eigen::VectorXd>& xi,
                     double h = 0.0) const;

  // One simulate() per row. Rows whose equilibrium fails are reported in
  // BatchResult::failed and left as empty outputs; nothing throws.
  BatchResult batch_simulate(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                             double h = 0.0) const;

  nlohmann::json to_json() const;
  static SwingSystem from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static SwingSystem load(const std::filesystem::path& path);

 private:
  Eigen::VectorXd inertia_, damping_, emf_, base_power_;
  std::vector<AdmittanceStage> stages_;
  std::vector<SwingEvent> events_;
  std::vector<InjectionRange> ranges_;
  double step_;
  double horizon_;
  int output_generator_;
  // Cached |E_i||E_j| G_ij and |E_i||E_j| B_ij per stage.
  std::vector<Eigen::MatrixXd> coupling_g_, coupling_b_;
};

}  // namespace fpce
