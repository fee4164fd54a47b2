#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpce/flow/model.hpp"

namespace fpce {

// Architectures: "nice" (additive couplings plus a trainable elementwise
// affine), "maf" (masked autoregressive affine blocks with alternating
// coordinate order), "nsf" (rational-quadratic spline couplings).
struct FlowConfig {
  std::string arch = "nsf";
  int layers = 5;
  std::vector<int> hidden = {64, 64};
  int bins = 8;            // spline couplings only
  double tail_bound = 4.0; // spline couplings only
  int epochs = 200;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double val_fraction = 0.1;
  int patience = 20;
  std::uint64_t seed = 0;
  bool whiten = true;

  nlohmann::json to_json() const;
  static FlowConfig from_json(const nlohmann::json& j);
};

struct TrainResult {
  std::vector<double> train_nll;  // per epoch, mean over batches
  std::vector<double> val_nll;
  int best_epoch = -1;            // epoch whose parameters were kept
  double best_monitor = 0.0;      // nll that triggered the last improvement
  int epochs_run = 0;
};

// Freshly initialized model: every trainable block starts as the identity.
FlowModel build_flow(const FlowConfig& cfg, int dim);

// Mean negative log-likelihood of rows of data under the model.
double flow_nll(const FlowModel& model, const Eigen::MatrixXd& data);

// Maximum-likelihood training with Adam, a validation split, and early
// stopping that restores the best parameters seen. Throws NumericalError if
// the loss turns non-finite.
TrainResult train_flow(FlowModel& model, const Eigen::MatrixXd& data,
                       const FlowConfig& cfg);

}  // namespace fpce
