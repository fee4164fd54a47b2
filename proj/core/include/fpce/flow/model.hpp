#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include "fpce/flow/layers.hpp"
#include "fpce/map/transport_map.hpp"

namespace fpce {

// An invertible map built from a stack of flow layers. The latent -> data
// direction composes the layers' forward passes; the data -> latent
// direction used for likelihoods and training is built on an autodiff tape.
class FlowModel : public TransportMap {
 public:
  FlowModel(int dim, std::vector<std::unique_ptr<FlowLayer>> layers);
  FlowModel(FlowModel&&) = default;
  FlowModel& operator=(FlowModel&&) = default;

  int dimension() const override { return dim_; }
  MapEval forward_eval(const Eigen::Ref<const Eigen::VectorXd>& z) const override;
  MapEval inverse_eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const override;

  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& z,
                                Eigen::VectorXd* log_det = nullptr) const;
  Eigen::MatrixXd inverse_batch(const Eigen::MatrixXd& xi,
                                Eigen::VectorXd* log_det = nullptr) const;
  Eigen::MatrixXd forward_points(const Eigen::MatrixXd& z) const override {
    return forward_batch(z);
  }

  // Builds data -> latent on the tape. v is an N x dim node; the returned id
  // is the latent batch and *log_det_node the per-sample log|det dS/dv|.
  // train controls whether parameter leaves request gradients.
  int build_inverse(Tape& tape, int v, bool train, int* log_det_node) const;

  double log_prob(const Eigen::VectorXd& xi) const;
  Eigen::VectorXd log_prob_batch(const Eigen::MatrixXd& xi) const;

  // Standard normal draws pushed through the map; latent_out, when given,
  // receives the matching z batch.
  Eigen::MatrixXd sample(int n, std::uint64_t seed,
                         Eigen::MatrixXd* latent_out = nullptr) const;

  std::vector<FlowLayer*> layers();
  std::vector<FlowLayer*> trainable_layers();
  // The frozen affine at the data end used for whitening, if present.
  AffineLayer* whitening_layer();

  nlohmann::json to_json() const;
  static FlowModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static FlowModel load(const std::filesystem::path& path);

 private:
  int dim_ = 0;
  std::vector<std::unique_ptr<FlowLayer>> layers_;
};

}  // namespace fpce
