#include "fpce/pipeline/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "fpce/basis/design.hpp"
#include "fpce/errors.hpp"
#include "fpce/flow/model.hpp"
#include "fpce/io/serialize.hpp"
#include "fpce/map/nataf.hpp"
#include "fpce/math/rng.hpp"

namespace fpce {

namespace {

Eigen::MatrixXd gaussian_matrix(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd out(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out(i, j) = rng.gaussian();
  return out;
}

// Indices of an evenly strided subgrid that always keeps both endpoints.
std::vector<int> fit_indices(int full, int target) {
  if (target < 2) throw ConfigError("pipeline: fit_points must be at least 2");
  const int stride = std::max(1, (full - 1) / target);
  std::vector<int> idx;
  for (int k = 0; k < full; k += stride) idx.push_back(k);
  if (idx.back() != full - 1) idx.push_back(full - 1);
  return idx;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Re-throws stage failures with the stage name attached, keeping the type
// (and with it the CLI exit code).
template <typename Fn>
nlohmann::json run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + name + ": " + e.what());
  } catch (const PartialBatchError& e) {
    throw PartialBatchError("stage " + name + ": " + e.what(), e.failed_count,
                            e.total_count);
  } catch (const NumericalError& e) {
    throw NumericalError("stage " + name + ": " + e.what());
  }
}

nlohmann::json resolved_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.contains("csv")) return cfg.dataset;
  SyntheticSpec spec = SyntheticSpec::from_json(cfg.dataset);
  spec.seed = cfg.seed_data;
  return spec.to_json();
}

SwingSystem load_simulator(const ExperimentConfig& cfg) {
  if (cfg.simulator.empty())
    throw ConfigError("pipeline: no simulator config path set");
  return SwingSystem::load(cfg.simulator);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the tag
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return base ^ h;
}

Eigen::VectorXd TrajectorySurrogate::predict(
    const Eigen::Ref<const Eigen::VectorXd>& z) const {
  return coeffs.transpose() * eval_basis(basis, z);
}

Eigen::MatrixXd TrajectorySurrogate::predict_batch(
    const Eigen::Ref<const Eigen::MatrixXd>& z) const {
  return assemble_design(basis, z) * coeffs;
}

TrajectoryStats TrajectorySurrogate::closed_form_stats() const {
  TrajectoryStats stats;
  stats.time = time;
  stats.mean = coeffs.row(0).transpose();
  const Eigen::Index t_count = coeffs.cols();
  stats.sd.resize(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t)
    stats.sd[t] = coeffs.col(t).tail(coeffs.rows() - 1).norm();
  stats.count = 0;
  return stats;
}

int TrajectorySurrogate::active_terms() const {
  int active = 0;
  for (Eigen::Index k = 0; k < coeffs.rows(); ++k)
    if ((coeffs.row(k).array() != 0.0).any()) ++active;
  return active;
}

nlohmann::json TrajectorySurrogate::to_json() const {
  return {{"format", "fpce-surrogate-v1"},
          {"dimension", basis.dimension()},
          {"degree", basis.max_degree()},
          {"coefficients", matrix_to_json(coeffs)},
          {"time", vector_to_json(time)},
          {"diagnostics",
           {{"residual_rms", diagnostics.residual_rms},
            {"condition", diagnostics.condition},
            {"nonzero_count", diagnostics.nonzero_count},
            {"sweeps", diagnostics.sweeps},
            {"underdetermined", diagnostics.underdetermined}}}};
}

TrajectorySurrogate TrajectorySurrogate::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "fpce-surrogate-v1")
    throw ConfigError("TrajectorySurrogate: unrecognized format");
  MultiIndexSet set = MultiIndexSet::total_degree(
      j.at("dimension").get<int>(), j.at("degree").get<int>());
  Eigen::MatrixXd coeffs = matrix_from_json(j.at("coefficients"));
  if (coeffs.rows() != static_cast<Eigen::Index>(set.size()))
    throw ConfigError("TrajectorySurrogate: coefficient rows do not match basis");
  FitDiagnostics diag;
  const nlohmann::json& d = j.at("diagnostics");
  diag.residual_rms = d.at("residual_rms").get<double>();
  diag.condition = d.at("condition").get<double>();
  diag.nonzero_count = d.at("nonzero_count").get<int>();
  diag.sweeps = d.at("sweeps").get<int>();
  diag.underdetermined = d.at("underdetermined").get<bool>();
  return TrajectorySurrogate{std::move(set), std::move(coeffs),
                             vector_from_json(j.at("time")), diag};
}

void TrajectorySurrogate::save(const std::filesystem::path& path) const {
  atomic_write_json(path, to_json());
}

TrajectorySurrogate TrajectorySurrogate::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw ConfigError("TrajectorySurrogate: no surrogate at " + path.string() +
                      " (run the build-pce stage first)");
  return from_json(load_json(path));
}

nlohmann::json ExperimentConfig::to_json() const {
  std::vector<std::string> kinds;
  for (MarginalKind k : copula_marginals)
    kinds.emplace_back(marginal_kind_name(k));
  return {{"dataset", dataset},
          {"mapper", mapper},
          {"flow", flow.to_json()},
          {"copula_marginals", kinds},
          {"degree", degree},
          {"penalty", penalty_name(fit.penalty)},
          {"lambda", fit.lambda},
          {"lasso_tol", fit.tol},
          {"lasso_max_sweeps", fit.max_sweeps},
          {"n_design", n_design},
          {"mc_size", mc_size},
          {"eval_samples", eval_samples},
          {"w2_projections", w2_projections},
          {"msi_samples", msi_samples},
          {"kl_samples", kl_samples},
          {"fit_points", fit_points},
          {"simulator", simulator},
          {"sim_step", sim_step},
          {"seed_data", seed_data},
          {"seed_train", seed_train},
          {"seed_eval", seed_eval},
          {"out_dir", out_dir.string()}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.dataset = j.at("dataset");
  cfg.mapper = j.value("mapper", std::string("flow"));
  if (cfg.mapper != "flow" && cfg.mapper != "copula")
    throw ConfigError("ExperimentConfig: mapper must be 'flow' or 'copula'");
  if (j.contains("flow")) cfg.flow = FlowConfig::from_json(j.at("flow"));
  for (const auto& name : j.value("copula_marginals", std::vector<std::string>{}))
    cfg.copula_marginals.push_back(marginal_kind_from_name(name));
  cfg.degree = j.value("degree", 4);
  cfg.fit.penalty = penalty_from_name(j.value("penalty", std::string("lasso")));
  cfg.fit.lambda = j.value("lambda", 1e-3);
  cfg.fit.tol = j.value("lasso_tol", 1e-8);
  cfg.fit.max_sweeps = j.value("lasso_max_sweeps", 10000);
  cfg.n_design = j.value("n_design", 2000);
  cfg.mc_size = j.value("mc_size", 5000);
  cfg.eval_samples = j.value("eval_samples", 20000);
  cfg.w2_projections = j.value("w2_projections", 128);
  cfg.msi_samples = j.value("msi_samples", 10000);
  cfg.kl_samples = j.value("kl_samples", 20000);
  cfg.fit_points = j.value("fit_points", 200);
  cfg.simulator = j.value("simulator", std::string());
  cfg.sim_step = j.value("sim_step", 0.0);
  cfg.seed_data = j.value("seed_data", std::uint64_t{11});
  cfg.seed_train = j.value("seed_train", std::uint64_t{101});
  cfg.seed_eval = j.value("seed_eval", std::uint64_t{7001});
  cfg.out_dir = j.value("out_dir", std::string("out"));
  if (cfg.degree < 0) throw ConfigError("ExperimentConfig: degree must be >= 0");
  if (cfg.n_design < 1)
    throw ConfigError("ExperimentConfig: n_design must be positive");
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  return from_json(load_json(path));
}

namespace pipeline {

Eigen::MatrixXd input_data(const ExperimentConfig& cfg, DensityModel* density) {
  if (density != nullptr) *density = DensityModel{};
  if (cfg.dataset.contains("csv")) {
    const std::string path = cfg.dataset.at("csv").get<std::string>();
    if (!std::filesystem::exists(path))
      throw ConfigError("pipeline: dataset CSV not found: " + path);
    return read_csv(path);
  }
  SyntheticSpec spec = SyntheticSpec::from_json(resolved_dataset(cfg));
  GeneratedData gen = generate(spec);
  if (density != nullptr) *density = gen.density;
  return gen.samples;
}

Mapper load_mapper(const ExperimentConfig& cfg) {
  Mapper mapper;
  mapper.kind = cfg.mapper;
  if (cfg.mapper == "flow") {
    const auto path = cfg.out_dir / "flow.json";
    if (!std::filesystem::exists(path))
      throw ConfigError("pipeline: no flow checkpoint at " + path.string() +
                        " (run the train-flow stage first)");
    auto model = std::make_shared<FlowModel>(FlowModel::load(path));
    mapper.log_pdf = [model](const Eigen::VectorXd& x) {
      return model->log_prob(x);
    };
    mapper.map = model;
  } else if (cfg.mapper == "copula") {
    const auto path = cfg.out_dir / "nataf.json";
    if (!std::filesystem::exists(path))
      throw ConfigError("pipeline: no copula model at " + path.string() +
                        " (run the fit-copula stage first)");
    auto model = std::make_shared<NatafModel>(NatafModel::from_json(load_json(path)));
    mapper.log_pdf = [model](const Eigen::VectorXd& x) {
      return model->log_pdf(x);
    };
    mapper.map = model;
  } else {
    throw ConfigError("pipeline: unknown mapper '" + cfg.mapper + "'");
  }
  return mapper;
}

nlohmann::json gen_data(const ExperimentConfig& cfg) {
  return run_stage("gen-data", [&] {
    std::filesystem::create_directories(cfg.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    nlohmann::json summary{{"stage", "gen-data"}};
    Eigen::MatrixXd samples;
    if (cfg.dataset.contains("csv")) {
      samples = input_data(cfg);
    } else {
      SyntheticSpec spec = SyntheticSpec::from_json(resolved_dataset(cfg));
      GeneratedData gen = generate(spec);
      samples = std::move(gen.samples);
      summary["acceptance_rate"] = gen.acceptance_rate;
    }
    write_csv(cfg.out_dir / "data.csv", samples);
    atomic_write_json(cfg.out_dir / "dataset.json", resolved_dataset(cfg));
    summary["rows"] = samples.rows();
    summary["cols"] = samples.cols();
    summary["seconds"] = seconds_since(t0);
    return summary;
  });
}

nlohmann::json train_flow(const ExperimentConfig& cfg) {
  return run_stage("train-flow", [&] {
    std::filesystem::create_directories(cfg.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::MatrixXd data = input_data(cfg);
    FlowConfig flow_cfg = cfg.flow;
    flow_cfg.seed = cfg.seed_train;
    FlowModel model = build_flow(flow_cfg, static_cast<int>(data.cols()));
    TrainResult result = fpce::train_flow(model, data, flow_cfg);
    model.save(cfg.out_dir / "flow.json");
    nlohmann::json log{{"config", flow_cfg.to_json()},
                       {"train_nll", result.train_nll},
                       {"val_nll", result.val_nll},
                       {"best_epoch", result.best_epoch},
                       {"best_monitor", result.best_monitor},
                       {"epochs_run", result.epochs_run}};
    atomic_write_json(cfg.out_dir / "train_log.json", log);
    log["stage"] = "train-flow";
    log["seconds"] = seconds_since(t0);
    return log;
  });
}

nlohmann::json fit_copula(const ExperimentConfig& cfg) {
  return run_stage("fit-copula", [&] {
    std::filesystem::create_directories(cfg.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::MatrixXd data = input_data(cfg);
    std::vector<MarginalKind> kinds = cfg.copula_marginals;
    if (kinds.empty())
      kinds.assign(static_cast<std::size_t>(data.cols()),
                   MarginalKind::empirical);
    if (kinds.size() != static_cast<std::size_t>(data.cols()))
      throw ConfigError("fit_copula: one marginal kind per column required");
    NatafModel model = NatafModel::fit(data, kinds);
    atomic_write_json(cfg.out_dir / "nataf.json", model.to_json());
    std::vector<std::string> names;
    for (MarginalKind k : kinds) names.emplace_back(marginal_kind_name(k));
    return nlohmann::json{{"stage", "fit-copula"},
                          {"marginals", names},
                          {"correlation", matrix_to_json(model.correlation())},
                          {"seconds", seconds_since(t0)}};
  });
}

nlohmann::json build_pce(const ExperimentConfig& cfg) {
  return run_stage("build-pce", [&] {
    std::filesystem::create_directories(cfg.out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    Mapper mapper = load_mapper(cfg);
    const int dim = mapper.map->dimension();
    SwingSystem sys = load_simulator(cfg);
    if (sys.input_dim() != dim)
      throw ConfigError("build_pce: simulator expects " +
                        std::to_string(sys.input_dim()) +
                        " inputs but the mapper produces " +
                        std::to_string(dim));

    // Latent design, pushed through the map, then simulated.
    const Eigen::MatrixXd z =
        gaussian_matrix(cfg.n_design, dim, derive_seed(cfg.seed_train, "design"));
    const Eigen::MatrixXd xi = mapper.map->forward_points(z);
    BatchResult batch = sys.batch_simulate(xi, cfg.sim_step);

    std::vector<int> unstable;
    std::vector<char> ok(static_cast<std::size_t>(cfg.n_design), 1);
    for (int i : batch.failed) ok[static_cast<std::size_t>(i)] = 0;
    int clamped = 0;
    for (int i = 0; i < cfg.n_design; ++i) {
      if (!ok[static_cast<std::size_t>(i)]) continue;
      const SimOutput& out = batch.outputs[static_cast<std::size_t>(i)];
      if (out.unstable) {
        unstable.push_back(i);
        ok[static_cast<std::size_t>(i)] = 0;
      }
      if (out.input_clamped) ++clamped;
    }
    int n_ok = 0;
    for (char c : ok) n_ok += c;
    if (n_ok == 0)
      throw NumericalError("build_pce: every design simulation failed");

    // Shared downsampled fit grid.
    int first_ok = 0;
    while (!ok[static_cast<std::size_t>(first_ok)]) ++first_ok;
    const Eigen::VectorXd& full_time =
        batch.outputs[static_cast<std::size_t>(first_ok)].time;
    const std::vector<int> grid =
        fit_indices(static_cast<int>(full_time.size()), cfg.fit_points);
    const int t_fit = static_cast<int>(grid.size());
    Eigen::VectorXd fit_time(t_fit);
    for (int t = 0; t < t_fit; ++t) fit_time[t] = full_time[grid[t]];

    Eigen::MatrixXd z_ok(n_ok, dim), xi_ok(n_ok, dim), y(n_ok, t_fit);
    int row = 0;
    for (int i = 0; i < cfg.n_design; ++i) {
      if (!ok[static_cast<std::size_t>(i)]) continue;
      z_ok.row(row) = z.row(i);
      xi_ok.row(row) = xi.row(i);
      const Eigen::VectorXd& yi = batch.outputs[static_cast<std::size_t>(i)].y;
      for (int t = 0; t < t_fit; ++t) y(row, t) = yi[grid[t]];
      ++row;
    }

    const MultiIndexSet basis = MultiIndexSet::total_degree(dim, cfg.degree);
    const Eigen::MatrixXd design = assemble_design(basis, z_ok);
    std::vector<std::string> warnings;
    if (n_ok < 2 * static_cast<int>(basis.size()))
      warnings.push_back("N_s below the 2P rule of thumb (" +
                         std::to_string(n_ok) + " < " +
                         std::to_string(2 * basis.size()) + ")");

    FitDiagnostics diag;
    Eigen::MatrixXd coeffs = fit_pce_multi(design, y, cfg.fit, &diag);
    TrajectorySurrogate surrogate{basis, std::move(coeffs), fit_time, diag};
    surrogate.save(cfg.out_dir / "surrogate.json");

    write_csv(cfg.out_dir / "design_z.csv", z_ok);
    write_csv(cfg.out_dir / "design_xi.csv", xi_ok);
    write_csv(cfg.out_dir / "design_y.csv", y);
    write_csv(cfg.out_dir / "fit_grid.csv", fit_time);

    const TrajectoryStats moments = surrogate.closed_form_stats();
    nlohmann::json report{{"stage", "build-pce"},
                          {"mapper", cfg.mapper},
                          {"n_design", cfg.n_design},
                          {"n_used", n_ok},
                          {"failed_equilibria", batch.failed},
                          {"unstable", unstable},
                          {"clamped_inputs", clamped},
                          {"basis_size", basis.size()},
                          {"degree", cfg.degree},
                          {"penalty", penalty_name(cfg.fit.penalty)},
                          {"lambda", cfg.fit.lambda},
                          {"warnings", warnings},
                          {"active_terms", surrogate.active_terms()},
                          {"residual_rms", diag.residual_rms},
                          {"lasso_sweeps", diag.sweeps},
                          {"mean_final", moments.mean[t_fit - 1]},
                          {"sd_final", moments.sd[t_fit - 1]},
                          {"seconds", seconds_since(t0)}};
    atomic_write_json(cfg.out_dir / "pce_report.json", report);
    return report;
  });
}

TrajectoryStats mc_reference(const ExperimentConfig& cfg) {
  nlohmann::json summary = run_stage("mc-ref", [&]() -> nlohmann::json {
    std::filesystem::create_directories(cfg.out_dir);
    if (cfg.mc_size < 2)
      throw ConfigError(
          "mc_reference: need at least two samples (std undefined)");
    const nlohmann::json key{{"simulator", load_simulator(cfg).to_json()},
                             {"dataset", resolved_dataset(cfg)},
                             {"mc_size", cfg.mc_size},
                             {"sim_step", cfg.sim_step},
                             {"fit_points", cfg.fit_points}};
    const auto cache =
        cfg.out_dir / ("mc_ref_" + hex64(json_hash(key)) + ".json");
    if (std::filesystem::exists(cache))
      return {{"cache", cache.string()}, {"hit", true}};

    const Eigen::MatrixXd data = input_data(cfg);
    if (data.rows() < cfg.mc_size)
      throw ConfigError("mc_reference: dataset has " +
                        std::to_string(data.rows()) + " rows, need " +
                        std::to_string(cfg.mc_size));
    SwingSystem sys = load_simulator(cfg);
    BatchResult batch =
        sys.batch_simulate(data.topRows(cfg.mc_size), cfg.sim_step);

    std::vector<int> bad = batch.failed;
    for (int i = 0; i < cfg.mc_size; ++i) {
      const SimOutput& out = batch.outputs[static_cast<std::size_t>(i)];
      if (out.y.size() > 0 && out.unstable) bad.push_back(i);
    }
    if (!bad.empty()) {
      std::sort(bad.begin(), bad.end());
      atomic_write_json(cfg.out_dir / "mc_ref_failures.json",
                        {{"indices", bad}, {"total", cfg.mc_size}});
      throw PartialBatchError("mc_reference: " + std::to_string(bad.size()) +
                                  " of " + std::to_string(cfg.mc_size) +
                                  " simulations failed (see mc_ref_failures.json)",
                              static_cast<int>(bad.size()), cfg.mc_size);
    }

    const Eigen::VectorXd& full_time = batch.outputs[0].time;
    const std::vector<int> grid =
        fit_indices(static_cast<int>(full_time.size()), cfg.fit_points);
    const int t_fit = static_cast<int>(grid.size());
    Eigen::VectorXd time(t_fit);
    for (int t = 0; t < t_fit; ++t) time[t] = full_time[grid[t]];
    Eigen::MatrixXd ensemble(cfg.mc_size, t_fit);
    for (int i = 0; i < cfg.mc_size; ++i)
      for (int t = 0; t < t_fit; ++t)
        ensemble(i, t) = batch.outputs[static_cast<std::size_t>(i)].y[grid[t]];

    TrajectoryStats stats = trajectory_stats(time, ensemble);
    atomic_write_json(cache, stats.to_json());
    return {{"cache", cache.string()}, {"hit", false}};
  });
  return TrajectoryStats::from_json(
      load_json(summary.at("cache").get<std::string>()));
}

nlohmann::json evaluate(const ExperimentConfig& cfg,
                        const TrajectoryStats* reference) {
  return run_stage("evaluate", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    TrajectorySurrogate surrogate =
        TrajectorySurrogate::load(cfg.out_dir / "surrogate.json");
    const TrajectoryStats ref =
        reference != nullptr ? *reference : mc_reference(cfg);

    // Closed-form surrogate statistics against the reference.
    const TrajectoryStats sur = surrogate.closed_form_stats();
    const double nirmse_value = nirmse(ref, sur);
    const double mean_error = mean_rel_error(ref, sur);
    const double sd_error = sd_rel_error(ref, sur);

    // Sampling cross-check of the closed form.
    const Eigen::MatrixXd z_eval =
        gaussian_matrix(cfg.eval_samples, surrogate.dimension(),
                        derive_seed(cfg.seed_eval, "surrogate-eval"));
    const TrajectoryStats sampled =
        trajectory_stats(sur.time, surrogate.predict_batch(z_eval));
    const double cross_mean =
        (sampled.mean - sur.mean).cwiseAbs().maxCoeff();
    const double cross_sd = (sampled.sd - sur.sd).cwiseAbs().maxCoeff();

    // Input-space fidelity of the mapper.
    DensityModel truth;
    const Eigen::MatrixXd data = input_data(cfg, &truth);
    Mapper mapper = load_mapper(cfg);
    const int n_w2 =
        static_cast<int>(std::min<Eigen::Index>(cfg.eval_samples, data.rows()));
    const Eigen::MatrixXd model_points = mapper.map->forward_points(
        gaussian_matrix(n_w2, mapper.map->dimension(),
                        derive_seed(cfg.seed_eval, "w2-draw")));
    const double w2 =
        sliced_w2(data.topRows(n_w2), model_points, cfg.w2_projections,
                  derive_seed(cfg.seed_eval, "w2-projections"));
    const double msi_value = msi(*mapper.map, cfg.msi_samples,
                                 derive_seed(cfg.seed_eval, "msi"));

    nlohmann::json kl = nullptr;
    if (truth.log_pdf) {
      const KlEstimate est = forward_kl(truth, mapper.log_pdf, cfg.kl_samples,
                                        derive_seed(cfg.seed_eval, "kl"));
      kl = est.to_json();
    }

    nlohmann::json pce_report = nullptr;
    int n_used = 0;
    if (std::filesystem::exists(cfg.out_dir / "pce_report.json")) {
      pce_report = load_json(cfg.out_dir / "pce_report.json");
      n_used = pce_report.value("n_used", 0);
    }

    nlohmann::json metrics{
        {"stage", "evaluate"},
        {"mapper", cfg.mapper},
        {"nirmse", nirmse_value},
        {"mean_error", mean_error},
        {"sd_error", sd_error},
        {"wasserstein", w2},
        {"msi", msi_value},
        {"kl", kl},
        {"cross_check",
         {{"mean_abs", cross_mean},
          {"sd_abs", cross_sd},
          {"eval_samples", cfg.eval_samples}}},
        {"budget",
         {{"w2_estimate", w2},
          {"msi", msi_value},
          {"s0", surrogate.active_terms()},
          {"basis_size", surrogate.basis.size()},
          {"n_samples", n_used},
          {"degree", surrogate.basis.max_degree()}}},
        {"reference_size", ref.count},
        {"seconds", seconds_since(t0)}};
    if (!pce_report.is_null() && pce_report.contains("warnings"))
      metrics["warnings"] = pce_report.at("warnings");
    atomic_write_json(cfg.out_dir / "metrics.json", metrics);

    std::ostringstream csv;
    csv << "Method,Wasserstein dist.,Mean error,Std. dev. error,NIRMSE\n";
    csv.precision(17);
    csv << cfg.mapper << "," << w2 << "," << mean_error << "," << sd_error
        << "," << nirmse_value << "\n";
    atomic_write(cfg.out_dir / "report.csv", csv.str());
    return metrics;
  });
}

nlohmann::json run_flow_pce(const ExperimentConfig& cfg) {
  if (cfg.mapper != "flow")
    throw ConfigError("run_flow_pce: config mapper must be 'flow'");
  nlohmann::json summary{{"pipeline", "flow-pce"}};
  summary["gen_data"] = gen_data(cfg);
  summary["train_flow"] = train_flow(cfg);
  summary["build_pce"] = build_pce(cfg);
  atomic_write_json(cfg.out_dir / "run_summary.json", summary);
  atomic_write_json(cfg.out_dir / "config.json", cfg.to_json());
  return summary;
}

nlohmann::json run_copula_pce(const ExperimentConfig& cfg) {
  if (cfg.mapper != "copula")
    throw ConfigError("run_copula_pce: config mapper must be 'copula'");
  nlohmann::json summary{{"pipeline", "copula-pce"}};
  summary["gen_data"] = gen_data(cfg);
  summary["fit_copula"] = fit_copula(cfg);
  summary["build_pce"] = build_pce(cfg);
  atomic_write_json(cfg.out_dir / "run_summary.json", summary);
  atomic_write_json(cfg.out_dir / "config.json", cfg.to_json());
  return summary;
}

nlohmann::json arch_compare(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  const TrajectoryStats ref = mc_reference(cfg);
  nlohmann::json rows = nlohmann::json::array();
  for (const std::string arch : {"nsf", "maf", "nice"}) {
    ExperimentConfig sub = cfg;
    sub.mapper = "flow";
    sub.flow.arch = arch;
    sub.out_dir = cfg.out_dir / ("arch_" + arch);
    nlohmann::json row{{"arch", arch}};
    try {
      run_flow_pce(sub);
      const nlohmann::json metrics = evaluate(sub, &ref);
      row["msi"] = metrics.at("msi");
      row["nirmse"] = metrics.at("nirmse");
      row["wasserstein"] = metrics.at("wasserstein");
      row["val_nll"] =
          load_json(sub.out_dir / "train_log.json").at("best_monitor");
    } catch (const std::exception& e) {
      row["error"] = e.what();  // keep the other architectures going
    }
    rows.push_back(row);
  }
  nlohmann::json table{{"rows", rows}};
  atomic_write_json(cfg.out_dir / "arch_compare.json", table);
  std::ostringstream csv;
  csv << "arch,msi,nirmse,wasserstein,val_nll\n";
  csv.precision(17);
  for (const auto& row : rows) {
    if (row.contains("error")) continue;
    csv << row.at("arch").get<std::string>() << ","
        << row.at("msi").get<double>() << "," << row.at("nirmse").get<double>()
        << "," << row.at("wasserstein").get<double>() << ",";
    if (row.at("val_nll").is_number()) csv << row.at("val_nll").get<double>();
    csv << "\n";
  }
  atomic_write(cfg.out_dir / "arch_compare.csv", csv.str());
  return table;
}

nlohmann::json bins_sweep(const ExperimentConfig& cfg,
                          const std::vector<int>& bins) {
  if (bins.empty()) throw ConfigError("bins_sweep: empty bin list");
  std::filesystem::create_directories(cfg.out_dir);
  const TrajectoryStats ref = mc_reference(cfg);
  nlohmann::json rows = nlohmann::json::array();
  for (int b : bins) {
    ExperimentConfig sub = cfg;
    sub.mapper = "flow";
    sub.flow.arch = "nsf";
    sub.flow.bins = b;
    sub.out_dir = cfg.out_dir / ("bins_" + std::to_string(b));
    run_flow_pce(sub);
    const nlohmann::json metrics = evaluate(sub, &ref);
    rows.push_back({{"bins", b},
                    {"msi", metrics.at("msi")},
                    {"nirmse", metrics.at("nirmse")}});
  }
  nlohmann::json table{{"rows", rows}};
  atomic_write_json(cfg.out_dir / "bins_sweep.json", table);
  std::ostringstream csv;
  csv << "bins,msi,nirmse\n";
  csv.precision(17);
  for (const auto& row : rows)
    csv << row.at("bins").get<int>() << "," << row.at("msi").get<double>()
        << "," << row.at("nirmse").get<double>() << "\n";
  atomic_write(cfg.out_dir / "bins_sweep.csv", csv.str());
  return table;
}

nlohmann::json report(const std::vector<std::filesystem::path>& metrics_files) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& path : metrics_files) {
    if (!std::filesystem::exists(path))
      throw ConfigError("report: no metrics file at " + path.string());
    const nlohmann::json m = load_json(path);
    rows.push_back({{"source", path.string()},
                    {"method", m.value("mapper", std::string("?"))},
                    {"wasserstein", m.value("wasserstein", 0.0)},
                    {"mean_error", m.value("mean_error", 0.0)},
                    {"sd_error", m.value("sd_error", 0.0)},
                    {"nirmse", m.value("nirmse", 0.0)}});
  }
  return nlohmann::json{{"rows", rows}};
}

}  // namespace pipeline

}  // namespace fpce
