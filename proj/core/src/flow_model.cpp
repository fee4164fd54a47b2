#include "fpce/flow/model.hpp"

#include <cmath>
#include <stdexcept>

#include "fpce/io/serialize.hpp"
#include "fpce/math/normal.hpp"

namespace fpce {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr const char* kFormat = "fpce-flow-v1";
}  // namespace

FlowModel::FlowModel(int dim, std::vector<std::unique_ptr<FlowLayer>> layers)
    : dim_(dim), layers_(std::move(layers)) {
  if (dim < 1) throw std::invalid_argument("FlowModel: dimension < 1");
}

Eigen::MatrixXd FlowModel::forward_batch(const Eigen::MatrixXd& z,
                                         Eigen::VectorXd* log_det) const {
  if (z.cols() != dim_)
    throw std::invalid_argument("FlowModel: batch has wrong dimension");
  if (log_det) log_det->setZero(z.rows());
  Eigen::MatrixXd v = z;
  for (const auto& layer : layers_) v = layer->forward_batch(v, log_det);
  return v;
}

int FlowModel::build_inverse(Tape& tape, int v, bool train,
                             int* log_det_node) const {
  *log_det_node = -1;
  int u = v;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    (*it)->stage(tape, train);
    u = (*it)->inverse_tape(tape, u, log_det_node);
  }
  if (*log_det_node < 0)
    *log_det_node =
        tape.leaf(Eigen::MatrixXd::Zero(tape.value(v).rows(), 1));
  return u;
}

Eigen::MatrixXd FlowModel::inverse_batch(const Eigen::MatrixXd& xi,
                                         Eigen::VectorXd* log_det) const {
  if (xi.cols() != dim_)
    throw std::invalid_argument("FlowModel: batch has wrong dimension");
  Tape tape;
  int ld = -1;
  int u = build_inverse(tape, tape.leaf(xi), false, &ld);
  if (log_det) *log_det = tape.value(ld).col(0);
  return tape.value(u);
}

MapEval FlowModel::forward_eval(const Eigen::Ref<const Eigen::VectorXd>& z) const {
  Eigen::VectorXd ld(1);
  Eigen::MatrixXd v = forward_batch(z.transpose(), &ld);
  return {v.row(0).transpose(), ld[0]};
}

MapEval FlowModel::inverse_eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  Eigen::VectorXd ld(1);
  Eigen::MatrixXd u = inverse_batch(xi.transpose(), &ld);
  return {u.row(0).transpose(), ld[0]};
}

Eigen::VectorXd FlowModel::log_prob_batch(const Eigen::MatrixXd& xi) const {
  Eigen::VectorXd ld;
  Eigen::MatrixXd u = inverse_batch(xi, &ld);
  return ld.array() - 0.5 * u.array().square().rowwise().sum() -
         0.5 * dim_ * kLog2Pi;
}

double FlowModel::log_prob(const Eigen::VectorXd& xi) const {
  return log_prob_batch(xi.transpose())[0];
}

Eigen::MatrixXd FlowModel::sample(int n, std::uint64_t seed,
                                  Eigen::MatrixXd* latent_out) const {
  Rng rng(seed);
  Eigen::MatrixXd z(n, dim_);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < dim_; ++j) z(i, j) = rng.gaussian();
  if (latent_out) *latent_out = z;
  return forward_batch(z);
}

std::vector<FlowLayer*> FlowModel::layers() {
  std::vector<FlowLayer*> out;
  for (auto& l : layers_) out.push_back(l.get());
  return out;
}

std::vector<FlowLayer*> FlowModel::trainable_layers() {
  std::vector<FlowLayer*> out;
  for (auto& l : layers_)
    if (l->trainable()) out.push_back(l.get());
  return out;
}

AffineLayer* FlowModel::whitening_layer() {
  if (layers_.empty()) return nullptr;
  auto* affine = dynamic_cast<AffineLayer*>(layers_.back().get());
  return (affine && !affine->trainable()) ? affine : nullptr;
}

nlohmann::json FlowModel::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layers_) layers.push_back(l->to_json());
  return {{"format", kFormat}, {"dim", dim_}, {"layers", layers}};
}

FlowModel FlowModel::from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != kFormat)
    throw std::invalid_argument("FlowModel: unrecognized checkpoint format");
  std::vector<std::unique_ptr<FlowLayer>> layers;
  for (const auto& lj : j.at("layers"))
    layers.push_back(FlowLayer::from_json(lj));
  return FlowModel(j.at("dim").get<int>(), std::move(layers));
}

void FlowModel::save(const std::filesystem::path& path) const {
  atomic_write_json(path, to_json());
}

FlowModel FlowModel::load(const std::filesystem::path& path) {
  return from_json(load_json(path));
}

}  // namespace fpce
