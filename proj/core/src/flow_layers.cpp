#include "fpce/flow/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fpce/io/serialize.hpp"

namespace fpce {

namespace {

// softplus offset making a zero conditioner output land exactly on slope 1
double deriv_offset() {
  static const double c = std::log(std::expm1(1.0 - kSplineMinDeriv));
  return c;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void accumulate(Tape& tape, int* acc, int contrib) {
  *acc = (*acc < 0) ? contrib : tape.add(*acc, contrib);
}

nlohmann::json params_to_json(const std::vector<Eigen::MatrixXd>& params) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : params) out.push_back(matrix_to_json(p));
  return out;
}

std::vector<Eigen::MatrixXd> params_from_json(const nlohmann::json& j) {
  std::vector<Eigen::MatrixXd> out;
  for (const auto& item : j) out.push_back(matrix_from_json(item));
  return out;
}

std::vector<int> ints_from_json(const nlohmann::json& j) {
  return j.get<std::vector<int>>();
}

}  // namespace

std::vector<Eigen::MatrixXd> mlp_init(const MlpShape& shape, Rng& rng) {
  std::vector<int> widths;
  widths.push_back(shape.in);
  for (int h : shape.hidden) widths.push_back(h);
  widths.push_back(shape.out);

  std::vector<Eigen::MatrixXd> params;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    int fan_in = widths[l], fan_out = widths[l + 1];
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(fan_out, fan_in);
    bool last = (l + 2 == widths.size());
    if (!last) {
      double limit = std::sqrt(6.0 / double(fan_in + fan_out));
      for (int r = 0; r < fan_out; ++r)
        for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-limit, limit);
    }
    params.push_back(std::move(w));
    params.push_back(Eigen::MatrixXd::Zero(1, fan_out));
  }
  return params;
}

Eigen::MatrixXd mlp_eval(const std::vector<Eigen::MatrixXd>& params,
                         const Eigen::MatrixXd& x,
                         const std::vector<Eigen::MatrixXd>* masks) {
  Eigen::MatrixXd h = x;
  const std::size_t n_layers = params.size() / 2;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Eigen::MatrixXd& w = params[2 * l];
    const Eigen::MatrixXd& b = params[2 * l + 1];
    Eigen::MatrixXd wm = masks ? w.cwiseProduct((*masks)[l]) : w;
    h = (h * wm.transpose()).rowwise() + b.row(0);
    if (l + 1 < n_layers) h = h.array().tanh();
  }
  return h;
}

int mlp_eval_tape(Tape& tape, const std::vector<int>& ids, int x,
                  const std::vector<Eigen::MatrixXd>* masks) {
  int h = x;
  const std::size_t n_layers = ids.size() / 2;
  for (std::size_t l = 0; l < n_layers; ++l) {
    int lin = masks ? tape.masked_matmul_nt(h, ids[2 * l], (*masks)[l])
                    : tape.matmul_nt(h, ids[2 * l]);
    h = tape.add_rowvec(lin, ids[2 * l + 1]);
    if (l + 1 < n_layers) h = tape.tanh(h);
  }
  return h;
}

void coupling_split(int dim, int parity, std::vector<int>& keep,
                    std::vector<int>& change) {
  keep.clear();
  change.clear();
  for (int i = 0; i < dim; ++i)
    ((i % 2 == parity % 2) ? keep : change).push_back(i);
}

std::vector<Eigen::MatrixXd> made_masks(int dim,
                                        const std::vector<int>& hidden,
                                        bool reversed) {
  auto coord_degree = [&](int i) { return reversed ? dim - i : i + 1; };
  const int cycle = std::max(dim - 1, 1);
  auto hidden_degree = [&](int unit) { return 1 + unit % cycle; };

  std::vector<Eigen::MatrixXd> masks;
  int prev = dim;
  bool prev_is_input = true;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(hidden[l], prev);
    for (int r = 0; r < hidden[l]; ++r)
      for (int c = 0; c < prev; ++c) {
        int dc = prev_is_input ? coord_degree(c) : hidden_degree(c);
        if (hidden_degree(r) >= dc) m(r, c) = 1.0;
      }
    masks.push_back(std::move(m));
    prev = hidden[l];
    prev_is_input = false;
  }
  // output block: scale rows then shift rows, strict inequality
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * dim, prev);
  for (int r = 0; r < 2 * dim; ++r)
    for (int c = 0; c < prev; ++c)
      if (coord_degree(r % dim) > hidden_degree(c)) m(r, c) = 1.0;
  masks.push_back(std::move(m));
  return masks;
}

void FlowLayer::stage(Tape& tape, bool train) {
  staged_.clear();
  for (const auto& p : params())
    staged_.push_back(tape.leaf(p, train && trainable()));
}

// ---------------------------------------------------------------- affine

AffineLayer::AffineLayer(int dim, bool trainable)
    : dim_(dim), trainable_(trainable) {
  params_ = {Eigen::MatrixXd::Zero(1, dim), Eigen::MatrixXd::Zero(1, dim)};
}

void AffineLayer::set_moments(const Eigen::VectorXd& mean,
                              const Eigen::VectorXd& sigma) {
  for (int i = 0; i < dim_; ++i) {
    if (!(sigma[i] > 0.0))
      throw std::invalid_argument("AffineLayer: nonpositive scale");
    params_[0](0, i) = std::log(sigma[i]);
    params_[1](0, i) = mean[i];
  }
}

Eigen::MatrixXd AffineLayer::forward_batch(const Eigen::MatrixXd& u,
                                           Eigen::VectorXd* log_det) const {
  Eigen::ArrayXd scale = params_[0].row(0).array().exp();
  Eigen::MatrixXd v =
      (u.array().rowwise() * scale.transpose()).rowwise() +
      params_[1].row(0).array();
  if (log_det) log_det->array() += params_[0].sum();
  return v;
}

int AffineLayer::inverse_tape(Tape& tape, int v, int* log_det_node) const {
  int ls = staged_[0], shift = staged_[1];
  int centered = tape.add_rowvec(v, tape.neg(shift));
  int u = tape.mul_rowvec(centered, tape.exp(tape.neg(ls)));
  const Eigen::Index n = tape.value(v).rows();
  int ones = tape.leaf(Eigen::MatrixXd::Ones(n, 1));
  accumulate(tape, log_det_node,
             tape.mul_rowvec(ones, tape.neg(tape.sum_all(ls))));
  return u;
}

nlohmann::json AffineLayer::to_json() const {
  return {{"kind", kind()},
          {"dim", dim_},
          {"trainable", trainable_},
          {"params", params_to_json(params_)}};
}

// ------------------------------------------------------------- additive

namespace {
std::vector<int> unsplit_map(const std::vector<int>& keep,
                             const std::vector<int>& change, int dim) {
  std::vector<int> map(dim);
  for (std::size_t i = 0; i < keep.size(); ++i) map[keep[i]] = int(i);
  for (std::size_t i = 0; i < change.size(); ++i)
    map[change[i]] = int(keep.size() + i);
  return map;
}
}  // namespace

AdditiveCoupling::AdditiveCoupling(int dim, int parity,
                                   const std::vector<int>& hidden, Rng& rng)
    : dim_(dim), parity_(parity), hidden_(hidden) {
  coupling_split(dim, parity, keep_, change_);
  unsplit_ = unsplit_map(keep_, change_, dim);
  // dim 1 leaves no pass-through side; the conditioner then runs on a
  // constant zero feature so its biases still parameterize the shift.
  params_ = mlp_init(
      {std::max<int>(1, int(keep_.size())), int(change_.size()), hidden}, rng);
}

AdditiveCoupling::AdditiveCoupling(int dim, int parity,
                                   const std::vector<int>& hidden,
                                   std::vector<Eigen::MatrixXd> params)
    : dim_(dim), parity_(parity), hidden_(hidden), params_(std::move(params)) {
  coupling_split(dim, parity, keep_, change_);
  unsplit_ = unsplit_map(keep_, change_, dim);
}

Eigen::MatrixXd AdditiveCoupling::forward_batch(const Eigen::MatrixXd& u,
                                                Eigen::VectorXd*) const {
  Eigen::MatrixXd ua =
      Eigen::MatrixXd::Zero(u.rows(), std::max<int>(1, int(keep_.size())));
  for (std::size_t i = 0; i < keep_.size(); ++i) ua.col(i) = u.col(keep_[i]);
  Eigen::MatrixXd shift = mlp_eval(params_, ua);
  Eigen::MatrixXd v = u;
  for (std::size_t i = 0; i < change_.size(); ++i)
    v.col(change_[i]) += shift.col(i);
  return v;
}

int AdditiveCoupling::inverse_tape(Tape& tape, int v, int*) const {
  int va = keep_.empty() ? tape.scale(tape.gather_cols(v, {0}), 0.0)
                         : tape.gather_cols(v, keep_);
  int vb = tape.gather_cols(v, change_);
  int shift = mlp_eval_tape(tape, staged_, va);
  int ub = tape.sub(vb, shift);
  if (keep_.empty()) return ub;
  return tape.gather_cols(tape.hcat(va, ub), unsplit_);
}

nlohmann::json AdditiveCoupling::to_json() const {
  return {{"kind", kind()},     {"dim", dim_},
          {"parity", parity_},  {"hidden", hidden_},
          {"params", params_to_json(params_)}};
}

// --------------------------------------------------------------- spline

void spline_params(const Eigen::VectorXd& raw, int bins, double bound,
                   SplineWorkspace& ws) {
  const int k = bins;
  ws.knots_x.resize(k + 1);
  ws.knots_y.resize(k + 1);
  ws.derivs.resize(k + 1);

  auto fill_knots = [&](int offset, double min_frac, Eigen::VectorXd& knots) {
    double mx = raw.segment(offset, k).maxCoeff();
    Eigen::ArrayXd e = (raw.segment(offset, k).array() - mx).exp();
    Eigen::ArrayXd frac = min_frac + (1.0 - k * min_frac) * e / e.sum();
    knots[0] = -bound;
    double acc = -bound;
    for (int i = 0; i < k; ++i) {
      acc += 2.0 * bound * frac[i];
      knots[i + 1] = acc;
    }
    knots[k] = bound;  // pin the endpoint against cumsum roundoff
  };
  fill_knots(0, kSplineMinWidth, ws.knots_x);
  fill_knots(k, kSplineMinHeight, ws.knots_y);

  ws.derivs[0] = ws.derivs[k] = 1.0;
  for (int i = 1; i < k; ++i)
    ws.derivs[i] =
        kSplineMinDeriv + softplus(raw[2 * k + i - 1] + deriv_offset());
}

double spline_forward(const SplineWorkspace& ws, double x, double* deriv) {
  const int k = int(ws.knots_x.size()) - 1;
  const double bound = ws.knots_x[k];
  if (x < -bound || x > bound) {
    if (deriv) *deriv = 1.0;
    return x;
  }
  const double* begin = ws.knots_x.data();
  int bin = int(std::upper_bound(begin, begin + k + 1, x) - begin) - 1;
  bin = std::clamp(bin, 0, k - 1);

  double w = ws.knots_x[bin + 1] - ws.knots_x[bin];
  double dy = ws.knots_y[bin + 1] - ws.knots_y[bin];
  double s = dy / w;
  double d0 = ws.derivs[bin], d1 = ws.derivs[bin + 1];
  double th = (x - ws.knots_x[bin]) / w;
  double om = 1.0 - th;
  double den = s + (d1 + d0 - 2.0 * s) * th * om;
  double y = ws.knots_y[bin] + dy * (s * th * th + d0 * th * om) / den;
  if (deriv)
    *deriv = s * s * (d1 * th * th + 2.0 * s * th * om + d0 * om * om) /
             (den * den);
  return y;
}

SplineCoupling::SplineCoupling(int dim, int parity,
                               const std::vector<int>& hidden, int bins,
                               double bound, Rng& rng)
    : dim_(dim), parity_(parity), bins_(bins), bound_(bound), hidden_(hidden) {
  if (bins < 2) throw std::invalid_argument("SplineCoupling: need >= 2 bins");
  coupling_split(dim, parity, keep_, change_);
  unsplit_ = unsplit_map(keep_, change_, dim);
  params_ = mlp_init({std::max<int>(1, int(keep_.size())),
                      int(change_.size()) * (3 * bins - 1), hidden},
                     rng);
}

SplineCoupling::SplineCoupling(int dim, int parity,
                               const std::vector<int>& hidden, int bins,
                               double bound,
                               std::vector<Eigen::MatrixXd> params)
    : dim_(dim), parity_(parity), bins_(bins), bound_(bound), hidden_(hidden),
      params_(std::move(params)) {
  coupling_split(dim, parity, keep_, change_);
  unsplit_ = unsplit_map(keep_, change_, dim);
}

Eigen::MatrixXd SplineCoupling::forward_batch(const Eigen::MatrixXd& u,
                                              Eigen::VectorXd* log_det) const {
  Eigen::MatrixXd ua =
      Eigen::MatrixXd::Zero(u.rows(), std::max<int>(1, int(keep_.size())));
  for (std::size_t i = 0; i < keep_.size(); ++i) ua.col(i) = u.col(keep_[i]);
  Eigen::MatrixXd cond = mlp_eval(params_, ua);

  Eigen::MatrixXd v = u;
  SplineWorkspace ws;
  const int per = 3 * bins_ - 1;
  for (Eigen::Index n = 0; n < u.rows(); ++n)
    for (std::size_t j = 0; j < change_.size(); ++j) {
      spline_params(cond.row(n).segment(Eigen::Index(j) * per, per), bins_,
                    bound_, ws);
      double deriv = 1.0;
      v(n, change_[j]) = spline_forward(ws, u(n, change_[j]), &deriv);
      if (log_det) (*log_det)[n] += std::log(deriv);
    }
  return v;
}

int SplineCoupling::inverse_tape(Tape& tape, int v, int* log_det_node) const {
  const Eigen::Index n = tape.value(v).rows();
  const int k = bins_;
  const int per = 3 * k - 1;
  int va = keep_.empty() ? tape.scale(tape.gather_cols(v, {0}), 0.0)
                         : tape.gather_cols(v, keep_);
  int cond = mlp_eval_tape(tape, staged_, va);
  int ones = tape.leaf(Eigen::MatrixXd::Ones(n, 1));
  int neg_b = tape.leaf(Eigen::MatrixXd::Constant(n, 1, -bound_));

  auto knots_of = [&](int raw, double min_frac) {
    Eigen::VectorXd rowmax = tape.value(raw).rowwise().maxCoeff();
    int shifted = tape.sub_colvec(raw, tape.leaf(rowmax));
    int e = tape.exp(shifted);
    int sm = tape.div_colvec(e, tape.rowsum(e));
    int frac = tape.add_scalar(tape.scale(sm, 1.0 - k * min_frac), min_frac);
    int widths = tape.scale(frac, 2.0 * bound_);
    int upper = tape.add_scalar(tape.cumsum_cols(widths), -bound_);
    return std::pair<int, int>(tape.hcat(neg_b, upper), widths);
  };

  std::vector<int> out_cols, ld_terms;
  for (std::size_t j = 0; j < change_.size(); ++j) {
    int off = int(j) * per;
    auto [xknots, w] = knots_of(tape.slice_cols(cond, off, k), kSplineMinWidth);
    auto [yknots, h] =
        knots_of(tape.slice_cols(cond, off + k, k), kSplineMinHeight);
    int dmid = tape.add_scalar(
        tape.softplus(
            tape.add_scalar(tape.slice_cols(cond, off + 2 * k, k - 1),
                            deriv_offset())),
        kSplineMinDeriv);
    int dknots = tape.hcat(tape.hcat(ones, dmid), ones);

    int y_in = tape.gather_cols(v, {change_[j]});
    // elements outside [-bound, bound] pass through the identity tails;
    // their lanes run the spline math at 0 so nothing turns into NaN
    const Eigen::MatrixXd& yv = tape.value(y_in);
    Eigen::MatrixXd inside(n, 1);
    for (Eigen::Index r = 0; r < n; ++r)
      inside(r, 0) = (std::fabs(yv(r, 0)) <= bound_) ? 1.0 : 0.0;
    int y_m = tape.mul_mask(y_in, inside);

    const Eigen::MatrixXd& yk_vals = tape.value(yknots);
    const Eigen::MatrixXd& ym_vals = tape.value(y_m);
    std::vector<int> bin(n), bin1(n);
    for (Eigen::Index r = 0; r < n; ++r) {
      int b = 0;
      while (b + 1 < k && yk_vals(r, b + 1) <= ym_vals(r, 0)) ++b;
      bin[r] = b;
      bin1[r] = b + 1;
    }

    int yk = tape.take_per_row(yknots, bin);
    int xk = tape.take_per_row(xknots, bin);
    int dy = tape.take_per_row(h, bin);
    int wk = tape.take_per_row(w, bin);
    int d0 = tape.take_per_row(dknots, bin);
    int d1 = tape.take_per_row(dknots, bin1);

    int yhat = tape.sub(y_m, yk);
    int s = tape.div(dy, wk);
    int wsum = tape.sub(tape.add(d1, d0), tape.scale(s, 2.0));
    int a = tape.add(tape.mul(dy, tape.sub(s, d0)), tape.mul(yhat, wsum));
    int bq = tape.sub(tape.mul(dy, d0), tape.mul(yhat, wsum));
    int c = tape.neg(tape.mul(s, yhat));
    int disc = tape.sub(tape.mul(bq, bq), tape.scale(tape.mul(a, c), 4.0));
    int theta = tape.div(tape.scale(c, 2.0),
                         tape.neg(tape.add(bq, tape.sqrt(disc))));
    int x = tape.add(xk, tape.mul(theta, wk));

    int om = tape.add_scalar(tape.neg(theta), 1.0);
    int num = tape.add(
        tape.add(tape.mul(d1, tape.mul(theta, theta)),
                 tape.scale(tape.mul(s, tape.mul(theta, om)), 2.0)),
        tape.mul(d0, tape.mul(om, om)));
    int den = tape.add(s, tape.mul(wsum, tape.mul(theta, om)));
    int deriv = tape.div(tape.mul(tape.mul(s, s), num), tape.mul(den, den));

    Eigen::MatrixXd outside = 1.0 - inside.array();
    out_cols.push_back(tape.add(tape.mul_mask(x, inside),
                                tape.mul_mask(y_in, outside)));
    ld_terms.push_back(tape.neg(tape.mul_mask(tape.log(deriv), inside)));
  }

  int ub = out_cols[0];
  for (std::size_t j = 1; j < out_cols.size(); ++j)
    ub = tape.hcat(ub, out_cols[j]);
  int ld = ld_terms[0];
  for (std::size_t j = 1; j < ld_terms.size(); ++j)
    ld = tape.add(ld, ld_terms[j]);
  accumulate(tape, log_det_node, ld);
  if (keep_.empty()) return ub;
  return tape.gather_cols(tape.hcat(va, ub), unsplit_);
}

nlohmann::json SplineCoupling::to_json() const {
  return {{"kind", kind()},    {"dim", dim_},
          {"parity", parity_}, {"hidden", hidden_},
          {"bins", bins_},     {"bound", hexfloat(bound_)},
          {"params", params_to_json(params_)}};
}

// ------------------------------------------------------- autoregressive

AutoregressiveAffine::AutoregressiveAffine(int dim, bool reversed,
                                           const std::vector<int>& hidden,
                                           Rng& rng)
    : dim_(dim), reversed_(reversed), hidden_(hidden),
      masks_(made_masks(dim, hidden, reversed)) {
  params_ = mlp_init({dim, 2 * dim, hidden}, rng);
}

AutoregressiveAffine::AutoregressiveAffine(int dim, bool reversed,
                                           const std::vector<int>& hidden,
                                           std::vector<Eigen::MatrixXd> params)
    : dim_(dim), reversed_(reversed), hidden_(hidden),
      masks_(made_masks(dim, hidden, reversed)), params_(std::move(params)) {}

Eigen::MatrixXd AutoregressiveAffine::forward_batch(
    const Eigen::MatrixXd& u, Eigen::VectorXd* log_det) const {
  Eigen::MatrixXd out = mlp_eval(params_, u, &masks_);
  Eigen::MatrixXd s = out.leftCols(dim_);
  Eigen::MatrixXd t = out.rightCols(dim_);
  if (log_det) log_det->array() += s.rowwise().sum().array();
  return u.array() * s.array().exp() + t.array();
}

int AutoregressiveAffine::inverse_tape(Tape& tape, int v,
                                       int* log_det_node) const {
  // coordinate-by-coordinate solve: pass p settles coordinate of degree p,
  // so dim passes reach the exact fixed point for every batch element
  int u = v;
  int s = -1;
  for (int pass = 0; pass < dim_; ++pass) {
    int out = mlp_eval_tape(tape, staged_, u, &masks_);
    s = tape.slice_cols(out, 0, dim_);
    int t = tape.slice_cols(out, dim_, dim_);
    u = tape.mul(tape.sub(v, t), tape.exp(tape.neg(s)));
  }
  accumulate(tape, log_det_node, tape.neg(tape.rowsum(s)));
  return u;
}

nlohmann::json AutoregressiveAffine::to_json() const {
  return {{"kind", kind()},
          {"dim", dim_},
          {"reversed", reversed_},
          {"hidden", hidden_},
          {"params", params_to_json(params_)}};
}

// ----------------------------------------------------------------- json

std::unique_ptr<FlowLayer> FlowLayer::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  auto params = params_from_json(j.at("params"));
  const int dim = j.at("dim").get<int>();
  if (kind == "affine") {
    auto layer =
        std::make_unique<AffineLayer>(dim, j.at("trainable").get<bool>());
    layer->params() = std::move(params);
    return layer;
  }
  if (kind == "additive")
    return std::make_unique<AdditiveCoupling>(
        dim, j.at("parity").get<int>(), ints_from_json(j.at("hidden")),
        std::move(params));
  if (kind == "spline")
    return std::make_unique<SplineCoupling>(
        dim, j.at("parity").get<int>(), ints_from_json(j.at("hidden")),
        j.at("bins").get<int>(),
        parse_hexfloat(j.at("bound").get<std::string>()), std::move(params));
  if (kind == "autoregressive")
    return std::make_unique<AutoregressiveAffine>(
        dim, j.at("reversed").get<bool>(), ints_from_json(j.at("hidden")),
        std::move(params));
  throw std::invalid_argument("FlowLayer: unknown kind '" + kind + "'");
}

}  // namespace fpce
