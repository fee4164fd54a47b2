#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "fpce/ad/tape.hpp"
#include "fpce/math/rng.hpp"
#include <json.hpp>

namespace fpce {

// Multilayer perceptron stored as a flat parameter list W1,b1,...,Wk,bk with
// tanh between layers and a linear output. Weights are (out x in) and applied
// as X * W^T; masks (for autoregressive conditioners) match the W shapes.
struct MlpShape {
  int in = 0;
  int out = 0;
  std::vector<int> hidden;
};

std::vector<Eigen::MatrixXd> mlp_init(const MlpShape& shape, Rng& rng);
Eigen::MatrixXd mlp_eval(const std::vector<Eigen::MatrixXd>& params,
                         const Eigen::MatrixXd& x,
                         const std::vector<Eigen::MatrixXd>* masks = nullptr);
int mlp_eval_tape(Tape& tape, const std::vector<int>& ids, int x,
                  const std::vector<Eigen::MatrixXd>* masks = nullptr);

// Even/odd split used by the coupling layers: parity 0 passes even
// coordinates through, parity 1 passes odd ones.
void coupling_split(int dim, int parity, std::vector<int>& keep,
                    std::vector<int>& change);

// Binary masks enforcing the autoregressive structure of a masked
// conditioner with 2*dim outputs (scale block then shift block). Coordinate
// degrees run 1..dim in natural order, or reversed when `reversed` is set;
// outputs may only read strictly lower degrees.
std::vector<Eigen::MatrixXd> made_masks(int dim, const std::vector<int>& hidden,
                                        bool reversed);

// One invertible block. forward_batch maps latent-side variables toward the
// data side (rows are samples) and adds each sample's log|det J| to log_det.
// inverse_tape builds the reverse direction on an autodiff tape so training
// can differentiate data -> latent; it returns the output node and folds the
// reverse-direction log-determinant into *log_det_node (N x 1, -1 when
// nothing has been accumulated yet).
class FlowLayer {
 public:
  virtual ~FlowLayer() = default;
  virtual std::string kind() const = 0;
  virtual Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& u,
                                        Eigen::VectorXd* log_det) const = 0;
  virtual int inverse_tape(Tape& tape, int v, int* log_det_node) const = 0;
  virtual bool trainable() const { return true; }
  virtual std::vector<Eigen::MatrixXd>& params() = 0;
  virtual const std::vector<Eigen::MatrixXd>& params() const = 0;
  // Creates tape leaves for the parameters; gradients are requested only
  // when train is set and the layer is trainable.
  void stage(Tape& tape, bool train);
  // Tape ids from the most recent stage() call, one per parameter matrix.
  const std::vector<int>& staged() const { return staged_; }
  virtual nlohmann::json to_json() const = 0;
  static std::unique_ptr<FlowLayer> from_json(const nlohmann::json& j);

 protected:
  std::vector<int> staged_;
};

// Elementwise affine v = u .* exp(s) + t. Doubles as the trainable scale
// block and, frozen, as the data whitening transform.
class AffineLayer : public FlowLayer {
 public:
  AffineLayer(int dim, bool trainable);
  std::string kind() const override { return "affine"; }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& u,
                                Eigen::VectorXd* log_det) const override;
  int inverse_tape(Tape& tape, int v, int* log_det_node) const override;
  bool trainable() const override { return trainable_; }
  std::vector<Eigen::MatrixXd>& params() override { return params_; }
  const std::vector<Eigen::MatrixXd>& params() const override { return params_; }
  nlohmann::json to_json() const override;

  // mean/scale setters for whitening (log_scale = log sigma, shift = mean)
  void set_moments(const Eigen::VectorXd& mean, const Eigen::VectorXd& sigma);

 private:
  int dim_;
  bool trainable_;
  std::vector<Eigen::MatrixXd> params_;  // {log_scale 1xM, shift 1xM}
};

// v_keep = u_keep, v_change = u_change + c(u_keep).
class AdditiveCoupling : public FlowLayer {
 public:
  AdditiveCoupling(int dim, int parity, const std::vector<int>& hidden,
                   Rng& rng);
  AdditiveCoupling(int dim, int parity, const std::vector<int>& hidden,
                   std::vector<Eigen::MatrixXd> params);
  std::string kind() const override { return "additive"; }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& u,
                                Eigen::VectorXd* log_det) const override;
  int inverse_tape(Tape& tape, int v, int* log_det_node) const override;
  std::vector<Eigen::MatrixXd>& params() override { return params_; }
  const std::vector<Eigen::MatrixXd>& params() const override { return params_; }
  nlohmann::json to_json() const override;

 private:
  int dim_, parity_;
  std::vector<int> hidden_;
  std::vector<int> keep_, change_, unsplit_;
  std::vector<Eigen::MatrixXd> params_;
};

// Monotone rational-quadratic spline coupling with identity tails outside
// [-bound, bound]. The conditioner emits 3*bins - 1 raw values per changed
// coordinate: bin widths, bin heights, interior knot derivatives.
class SplineCoupling : public FlowLayer {
 public:
  SplineCoupling(int dim, int parity, const std::vector<int>& hidden, int bins,
                 double bound, Rng& rng);
  SplineCoupling(int dim, int parity, const std::vector<int>& hidden, int bins,
                 double bound, std::vector<Eigen::MatrixXd> params);
  std::string kind() const override { return "spline"; }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& u,
                                Eigen::VectorXd* log_det) const override;
  int inverse_tape(Tape& tape, int v, int* log_det_node) const override;
  std::vector<Eigen::MatrixXd>& params() override { return params_; }
  const std::vector<Eigen::MatrixXd>& params() const override { return params_; }
  nlohmann::json to_json() const override;

  int bins() const { return bins_; }
  double bound() const { return bound_; }

 private:
  int dim_, parity_, bins_;
  double bound_;
  std::vector<int> hidden_;
  std::vector<int> keep_, change_, unsplit_;
  std::vector<Eigen::MatrixXd> params_;
};

// Masked autoregressive affine block: v_i = u_i * exp(s_i(u_<i)) + t_i(u_<i)
// with the conditioner realized as one masked network. The data -> latent
// direction is a coordinate-by-coordinate solve done as dim masked passes.
class AutoregressiveAffine : public FlowLayer {
 public:
  AutoregressiveAffine(int dim, bool reversed, const std::vector<int>& hidden,
                       Rng& rng);
  AutoregressiveAffine(int dim, bool reversed, const std::vector<int>& hidden,
                       std::vector<Eigen::MatrixXd> params);
  std::string kind() const override { return "autoregressive"; }
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& u,
                                Eigen::VectorXd* log_det) const override;
  int inverse_tape(Tape& tape, int v, int* log_det_node) const override;
  std::vector<Eigen::MatrixXd>& params() override { return params_; }
  const std::vector<Eigen::MatrixXd>& params() const override { return params_; }
  nlohmann::json to_json() const override;

 private:
  int dim_;
  bool reversed_;
  std::vector<int> hidden_;
  std::vector<Eigen::MatrixXd> masks_;
  std::vector<Eigen::MatrixXd> params_;
};

// Scalar rational-quadratic spline pieces shared by the coupling layer and
// its tests. knots_x/knots_y have bins+1 entries, derivs has bins+1 with the
// boundary slopes pinned to 1.
struct SplineWorkspace {
  Eigen::VectorXd knots_x, knots_y, derivs;
};

// Turns raw conditioner outputs for one coordinate of one sample into knot
// positions and derivatives.
void spline_params(const Eigen::VectorXd& raw, int bins, double bound,
                   SplineWorkspace& ws);
// Forward evaluation x -> y with dy/dx; identity outside the interval.
double spline_forward(const SplineWorkspace& ws, double x, double* deriv);

inline constexpr double kSplineMinWidth = 1e-3;
inline constexpr double kSplineMinHeight = 1e-3;
inline constexpr double kSplineMinDeriv = 1e-3;

}  // namespace fpce
