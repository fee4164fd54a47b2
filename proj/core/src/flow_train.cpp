#include "fpce/flow/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fpce/errors.hpp"

namespace fpce {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct Adam {
  double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<std::vector<Eigen::MatrixXd>> m, v;

  Adam(double lr, const std::vector<FlowLayer*>& layers) : lr(lr) {
    for (auto* layer : layers) {
      std::vector<Eigen::MatrixXd> zm, zv;
      for (const auto& p : layer->params()) {
        zm.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
        zv.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      }
      m.push_back(std::move(zm));
      v.push_back(std::move(zv));
    }
  }

  void update(std::vector<FlowLayer*>& layers, const Tape& tape) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, double(step));
    const double c2 = 1.0 - std::pow(beta2, double(step));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto& params = layers[l]->params();
      const auto& ids = layers[l]->staged();
      for (std::size_t p = 0; p < params.size(); ++p) {
        const Eigen::MatrixXd& g = tape.grad(ids[p]);
        m[l][p] = beta1 * m[l][p] + (1.0 - beta1) * g;
        v[l][p] = beta2 * v[l][p] + (1.0 - beta2) * g.cwiseProduct(g);
        params[p].array() -=
            lr * (m[l][p].array() / c1) /
            ((v[l][p].array() / c2).sqrt() + eps);
      }
    }
  }
};

std::vector<std::vector<Eigen::MatrixXd>> snapshot(
    const std::vector<FlowLayer*>& layers) {
  std::vector<std::vector<Eigen::MatrixXd>> out;
  for (auto* l : layers) out.push_back(l->params());
  return out;
}

void restore(std::vector<FlowLayer*>& layers,
             const std::vector<std::vector<Eigen::MatrixXd>>& snap) {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i]->params() = snap[i];
}

}  // namespace

nlohmann::json FlowConfig::to_json() const {
  return {{"arch", arch},
          {"layers", layers},
          {"hidden", hidden},
          {"bins", bins},
          {"tail_bound", tail_bound},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"val_fraction", val_fraction},
          {"patience", patience},
          {"seed", seed},
          {"whiten", whiten}};
}

FlowConfig FlowConfig::from_json(const nlohmann::json& j) {
  FlowConfig cfg;
  cfg.arch = j.value("arch", cfg.arch);
  cfg.layers = j.value("layers", cfg.layers);
  cfg.hidden = j.value("hidden", cfg.hidden);
  cfg.bins = j.value("bins", cfg.bins);
  cfg.tail_bound = j.value("tail_bound", cfg.tail_bound);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.val_fraction = j.value("val_fraction", cfg.val_fraction);
  cfg.patience = j.value("patience", cfg.patience);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.whiten = j.value("whiten", cfg.whiten);
  return cfg;
}

FlowModel build_flow(const FlowConfig& cfg, int dim) {
  if (dim < 1) throw ConfigError("flow: need dimension >= 1");
  if (cfg.layers < 1) throw ConfigError("flow: need at least one layer");
  // In one dimension an even-parity coupling would transform nothing, so
  // every coupling takes parity 1 and conditions on the constant feature.
  auto parity = [dim](int l) { return dim == 1 ? 1 : l % 2; };
  Rng rng(cfg.seed);
  std::vector<std::unique_ptr<FlowLayer>> layers;
  if (cfg.arch == "nice") {
    layers.push_back(std::make_unique<AffineLayer>(dim, true));
    for (int l = 0; l < cfg.layers; ++l)
      layers.push_back(
          std::make_unique<AdditiveCoupling>(dim, parity(l), cfg.hidden, rng));
  } else if (cfg.arch == "maf") {
    for (int l = 0; l < cfg.layers; ++l)
      layers.push_back(std::make_unique<AutoregressiveAffine>(
          dim, l % 2 == 1, cfg.hidden, rng));
  } else if (cfg.arch == "nsf") {
    for (int l = 0; l < cfg.layers; ++l)
      layers.push_back(std::make_unique<SplineCoupling>(
          dim, parity(l), cfg.hidden, cfg.bins, cfg.tail_bound, rng));
  } else {
    throw ConfigError("flow: unknown architecture '" + cfg.arch + "'");
  }
  layers.push_back(std::make_unique<AffineLayer>(dim, false));  // whitening
  return FlowModel(dim, std::move(layers));
}

double flow_nll(const FlowModel& model, const Eigen::MatrixXd& data) {
  return -model.log_prob_batch(data).mean();
}

TrainResult train_flow(FlowModel& model, const Eigen::MatrixXd& data,
                       const FlowConfig& cfg) {
  const int n = int(data.rows());
  const int dim = model.dimension();
  if (data.cols() != dim) throw ConfigError("train_flow: dimension mismatch");
  if (n < 2) throw ConfigError("train_flow: need at least two samples");
  if (cfg.batch_size < 1) throw ConfigError("train_flow: bad batch size");

  Rng rng(cfg.seed);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto shuffle = [&](std::vector<int>& idx) {
    for (int i = int(idx.size()) - 1; i > 0; --i) {
      int j = std::min(int(rng.uniform() * (i + 1)), i);
      std::swap(idx[i], idx[j]);
    }
  };
  shuffle(order);

  int n_val = std::clamp(int(std::lround(cfg.val_fraction * n)), 0, n / 2);
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());

  auto gather = [&](const std::vector<int>& idx) {
    Eigen::MatrixXd out(idx.size(), dim);
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = data.row(idx[i]);
    return out;
  };
  Eigen::MatrixXd val = gather(val_idx);

  if (cfg.whiten) {
    Eigen::MatrixXd tr = gather(train_idx);
    Eigen::VectorXd mean = tr.colwise().mean();
    Eigen::VectorXd sd =
        ((tr.rowwise() - mean.transpose()).array().square().colwise().sum() /
         double(tr.rows()))
            .sqrt();
    if (!(sd.minCoeff() > 0.0))
      throw NumericalError("train_flow: a data column is constant");
    AffineLayer* w = model.whitening_layer();
    if (!w) throw NumericalError("train_flow: model has no whitening layer");
    w->set_moments(mean, sd);
  }

  TrainResult result;
  auto trainable = model.trainable_layers();
  Adam adam(cfg.learning_rate, trainable);
  auto best = snapshot(trainable);
  double best_monitor = std::numeric_limits<double>::infinity();
  int wait = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(train_idx);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size();
         start += std::size_t(cfg.batch_size)) {
      std::size_t stop =
          std::min(train_idx.size(), start + std::size_t(cfg.batch_size));
      std::vector<int> batch_idx(train_idx.begin() + start,
                                 train_idx.begin() + stop);
      Eigen::MatrixXd batch = gather(batch_idx);

      Tape tape;
      int ld = -1;
      int u = model.build_inverse(tape, tape.leaf(batch), true, &ld);
      int half = tape.scale(tape.rowsum(tape.mul(u, u)), 0.5);
      int loss = tape.add_scalar(tape.mean_all(tape.sub(half, ld)),
                                 0.5 * dim * kLog2Pi);
      double value = tape.scalar_value(loss);
      if (!std::isfinite(value))
        throw NumericalError("train_flow: non-finite loss at epoch " +
                             std::to_string(epoch));
      tape.backward(loss);
      adam.update(trainable, tape);
      loss_sum += value * double(batch_idx.size());
    }
    result.train_nll.push_back(loss_sum / double(train_idx.size()));

    double monitor = result.train_nll.back();
    if (n_val > 0) {
      result.val_nll.push_back(flow_nll(model, val));
      monitor = result.val_nll.back();
    }
    if (!std::isfinite(monitor))
      throw NumericalError("train_flow: non-finite validation loss at epoch " +
                           std::to_string(epoch));
    result.epochs_run = epoch + 1;

    if (monitor < best_monitor) {
      best_monitor = monitor;
      best = snapshot(trainable);
      result.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= cfg.patience) {
      break;
    }
  }

  if (result.best_epoch >= 0) restore(trainable, best);
  result.best_monitor = best_monitor;
  return result;
}

}  // namespace fpce
