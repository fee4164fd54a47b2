#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fpce/data/datagen.hpp"
#include "fpce/flow/train.hpp"
#include "fpce/map/transport_map.hpp"
#include "fpce/metrics/metrics.hpp"
#include "fpce/pce/regression.hpp"
#include "fpce/sim/swing.hpp"

namespace fpce {

// Vector-valued chaos surrogate: one coefficient vector per time grid point,
// all fitted jointly from a single latent design matrix. Because the basis
// is orthonormal under the latent measure, each timestep's mean is its first
// coefficient and its variance the sum of the squared rest, so trajectory
// statistics come out in closed form.
struct TrajectorySurrogate {
  MultiIndexSet basis;
  Eigen::MatrixXd coeffs;  // P x T
  Eigen::VectorXd time;    // T fit-grid times
  FitDiagnostics diagnostics;

  int dimension() const { return basis.dimension(); }

  // Surrogate trajectory for one latent point (length T).
  Eigen::VectorXd predict(const Eigen::Ref<const Eigen::VectorXd>& z) const;
  // One row per latent sample.
  Eigen::MatrixXd predict_batch(const Eigen::Ref<const Eigen::MatrixXd>& z) const;

  // Per-timestep mean/sd from the coefficients alone (count is left 0).
  TrajectoryStats closed_form_stats() const;

  // Coefficients that are exactly zero nowhere in a row: number of basis
  // functions used by at least one timestep.
  int active_terms() const;

  nlohmann::json to_json() const;
  static TrajectorySurrogate from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static TrajectorySurrogate load(const std::filesystem::path& path);
};

// Everything one experiment needs, serializable to a single JSON file. The
// dataset is either an inline synthetic spec (SyntheticSpec JSON) or
// {"csv": "path"} pointing at a sample matrix. All randomness is funneled
// through the three named seeds.
struct ExperimentConfig {
  nlohmann::json dataset;
  std::string mapper = "flow";  // "flow" or "copula"
  FlowConfig flow;
  // Per-coordinate marginal kinds for the copula mapper; empty means
  // empirical everywhere.
  std::vector<MarginalKind> copula_marginals;

  int degree = 4;
  FitOptions fit;
  int n_design = 2000;   // N_s latent regression samples
  int mc_size = 5000;    // Monte-Carlo reference size
  int eval_samples = 20000;
  int w2_projections = 128;
  int msi_samples = 10000;
  int kl_samples = 20000;
  int fit_points = 200;  // trajectory downsampling target for fitting/metrics

  std::string simulator;  // swing config path
  double sim_step = 0.0;  // 0 keeps the simulator config's step

  std::uint64_t seed_data = 11;
  std::uint64_t seed_train = 101;
  std::uint64_t seed_eval = 7001;

  std::filesystem::path out_dir = "out";

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// Stable stream separation: every internal draw uses the appropriate named
// seed combined with a fixed tag, so stages can rerun independently without
// sharing or reusing streams.
std::uint64_t derive_seed(std::uint64_t base, const std::string& tag);

namespace pipeline {

// The dataset rows; synthetic specs are generated in memory with their exact
// density attached, CSV datasets are loaded (no density).
Eigen::MatrixXd input_data(const ExperimentConfig& cfg,
                           DensityModel* density = nullptr);

// A trained or fitted transport map plus its density, loaded from the
// mapper artifact in cfg.out_dir. Shared ownership because log_pdf closes
// over the same object.
struct Mapper {
  std::shared_ptr<TransportMap> map;
  std::function<double(const Eigen::VectorXd&)> log_pdf;
  std::string kind;
};
Mapper load_mapper(const ExperimentConfig& cfg);

// Stages. Each persists its artifacts under cfg.out_dir and returns a small
// machine-readable summary. Later stages load what earlier stages wrote and
// throw ConfigError with the missing stage's name when run out of order.
nlohmann::json gen_data(const ExperimentConfig& cfg);      // data.csv, dataset.json
nlohmann::json train_flow(const ExperimentConfig& cfg);    // flow.json, train_log.json
nlohmann::json fit_copula(const ExperimentConfig& cfg);    // nataf.json
nlohmann::json build_pce(const ExperimentConfig& cfg);     // design_*.csv, surrogate.json, pce_report.json
TrajectoryStats mc_reference(const ExperimentConfig& cfg); // mc_ref_<hash>.json, cached
nlohmann::json evaluate(const ExperimentConfig& cfg,
                        const TrajectoryStats* reference = nullptr);  // metrics.json, report.csv

// End-to-end composites: data -> mapper -> design -> fit -> moments, with
// every artifact persisted. The returned summary aggregates the stage
// summaries.
nlohmann::json run_flow_pce(const ExperimentConfig& cfg);
nlohmann::json run_copula_pce(const ExperimentConfig& cfg);

// Trains nsf/maf/nice under shared seeds and budget on the same dataset and
// reports {arch, msi, nirmse, ...} rows; per-arch artifacts live under
// out_dir/arch_<name>. Row order is fixed: nsf, maf, nice.
nlohmann::json arch_compare(const ExperimentConfig& cfg);

// Sweeps the spline bin count of an NSF mapper and emits a
// (bins, msi, nirmse) table for smoothness/accuracy trade-off plots.
nlohmann::json bins_sweep(const ExperimentConfig& cfg,
                          const std::vector<int>& bins);

// Collects report rows from a list of metrics.json files into one table.
nlohmann::json report(const std::vector<std::filesystem::path>& metrics_files);

}  // namespace pipeline

}  // namespace fpce
