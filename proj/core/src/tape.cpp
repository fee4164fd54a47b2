#include "fpce/ad/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fpce {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("Tape: " + msg);
}

double softplus_scalar(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

void Tape::check_id(int id, const char* who) const {
  require(id >= 0 && id < int(nodes_.size()),
          std::string(who) + ": bad node id");
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::leaf(const Eigen::MatrixXd& value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.needs_grad = requires_grad;
  n.value = value;
  return push(std::move(n));
}

int Tape::scalar_leaf(double value, bool requires_grad) {
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = value;
  return leaf(m, requires_grad);
}

int Tape::unary(Op op, int a) {
  check_id(a, "unary");
  Node n;
  n.op = op;
  n.a = a;
  n.needs_grad = nodes_[a].needs_grad;
  return push(std::move(n));
}

int Tape::binary(Op op, int a, int b) {
  check_id(a, "binary");
  check_id(b, "binary");
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  int id = binary(Op::add, a, b);
  const auto& A = nodes_[a].value;
  const auto& B = nodes_[b].value;
  require(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  nodes_[id].value = A + B;
  return id;
}

int Tape::sub(int a, int b) {
  int id = binary(Op::sub, a, b);
  const auto& A = nodes_[a].value;
  const auto& B = nodes_[b].value;
  require(A.rows() == B.rows() && A.cols() == B.cols(), "sub: shape mismatch");
  nodes_[id].value = A - B;
  return id;
}

int Tape::mul(int a, int b) {
  int id = binary(Op::mul, a, b);
  const auto& A = nodes_[a].value;
  const auto& B = nodes_[b].value;
  require(A.rows() == B.rows() && A.cols() == B.cols(), "mul: shape mismatch");
  nodes_[id].value = A.cwiseProduct(B);
  return id;
}

int Tape::div(int a, int b) {
  int id = binary(Op::div, a, b);
  const auto& A = nodes_[a].value;
  const auto& B = nodes_[b].value;
  require(A.rows() == B.rows() && A.cols() == B.cols(), "div: shape mismatch");
  nodes_[id].value = A.cwiseQuotient(B);
  return id;
}

int Tape::neg(int a) {
  int id = unary(Op::neg, a);
  nodes_[id].value = -nodes_[a].value;
  return id;
}

int Tape::scale(int a, double c) {
  int id = unary(Op::scale, a);
  nodes_[id].c = c;
  nodes_[id].value = c * nodes_[a].value;
  return id;
}

int Tape::add_scalar(int a, double c) {
  int id = unary(Op::add_scalar, a);
  nodes_[id].c = c;
  nodes_[id].value = nodes_[a].value.array() + c;
  return id;
}

int Tape::matmul_nt(int x, int w) {
  int id = binary(Op::matmul_nt, x, w);
  const auto& X = nodes_[x].value;
  const auto& W = nodes_[w].value;
  require(X.cols() == W.cols(), "matmul_nt: inner dimension mismatch");
  nodes_[id].value = X * W.transpose();
  return id;
}

int Tape::masked_matmul_nt(int x, int w, const Eigen::MatrixXd& mask) {
  int id = binary(Op::masked_matmul, x, w);
  const auto& X = nodes_[x].value;
  const auto& W = nodes_[w].value;
  require(X.cols() == W.cols(), "masked_matmul: inner dimension mismatch");
  require(mask.rows() == W.rows() && mask.cols() == W.cols(),
          "masked_matmul: mask shape mismatch");
  nodes_[id].aux = mask;
  nodes_[id].value = X * W.cwiseProduct(mask).transpose();
  return id;
}

int Tape::add_rowvec(int x, int b) {
  int id = binary(Op::add_rowvec, x, b);
  const auto& X = nodes_[x].value;
  const auto& B = nodes_[b].value;
  require(B.rows() == 1 && B.cols() == X.cols(), "add_rowvec: want 1 x cols");
  nodes_[id].value = X.rowwise() + B.row(0);
  return id;
}

int Tape::mul_rowvec(int x, int b) {
  int id = binary(Op::mul_rowvec, x, b);
  const auto& X = nodes_[x].value;
  const auto& B = nodes_[b].value;
  require(B.rows() == 1 && B.cols() == X.cols(), "mul_rowvec: want 1 x cols");
  nodes_[id].value = X.array().rowwise() * B.row(0).array();
  return id;
}

int Tape::sub_colvec(int x, int c) {
  int id = binary(Op::sub_colvec, x, c);
  const auto& X = nodes_[x].value;
  const auto& C = nodes_[c].value;
  require(C.cols() == 1 && C.rows() == X.rows(), "sub_colvec: want rows x 1");
  nodes_[id].value = X.colwise() - C.col(0);
  return id;
}

int Tape::div_colvec(int x, int c) {
  int id = binary(Op::div_colvec, x, c);
  const auto& X = nodes_[x].value;
  const auto& C = nodes_[c].value;
  require(C.cols() == 1 && C.rows() == X.rows(), "div_colvec: want rows x 1");
  nodes_[id].value = X.array().colwise() / C.col(0).array();
  return id;
}

int Tape::tanh(int a) {
  int id = unary(Op::tanh_op, a);
  nodes_[id].value = nodes_[a].value.array().tanh();
  return id;
}

int Tape::exp(int a) {
  int id = unary(Op::exp_op, a);
  nodes_[id].value = nodes_[a].value.array().exp();
  return id;
}

int Tape::log(int a) {
  int id = unary(Op::log_op, a);
  nodes_[id].value = nodes_[a].value.array().log();
  return id;
}

int Tape::sqrt(int a) {
  int id = unary(Op::sqrt_op, a);
  nodes_[id].value = nodes_[a].value.array().sqrt();
  return id;
}

int Tape::softplus(int a) {
  int id = unary(Op::softplus, a);
  nodes_[id].value = nodes_[a].value.unaryExpr(&softplus_scalar);
  return id;
}

int Tape::rowsum(int a) {
  int id = unary(Op::rowsum, a);
  nodes_[id].value = nodes_[a].value.rowwise().sum();
  return id;
}

int Tape::sum_all(int a) {
  int id = unary(Op::sum_all, a);
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = nodes_[a].value.sum();
  nodes_[id].value = m;
  return id;
}

int Tape::mean_all(int a) {
  int id = unary(Op::mean_all, a);
  Eigen::MatrixXd m(1, 1);
  m(0, 0) = nodes_[a].value.mean();
  nodes_[id].value = m;
  return id;
}

int Tape::cumsum_cols(int a) {
  int id = unary(Op::cumsum_cols, a);
  Eigen::MatrixXd v = nodes_[a].value;
  for (int j = 1; j < v.cols(); ++j) v.col(j) += v.col(j - 1);
  nodes_[id].value = std::move(v);
  return id;
}

int Tape::slice_cols(int a, int j0, int k) {
  int id = unary(Op::slice_cols, a);
  const auto& A = nodes_[a].value;
  require(j0 >= 0 && k >= 1 && j0 + k <= A.cols(), "slice_cols: bad range");
  nodes_[id].j0 = j0;
  nodes_[id].k = k;
  nodes_[id].value = A.middleCols(j0, k);
  return id;
}

int Tape::hcat(int a, int b) {
  int id = binary(Op::hcat, a, b);
  const auto& A = nodes_[a].value;
  const auto& B = nodes_[b].value;
  require(A.rows() == B.rows(), "hcat: row mismatch");
  Eigen::MatrixXd v(A.rows(), A.cols() + B.cols());
  v << A, B;
  nodes_[id].value = std::move(v);
  return id;
}

int Tape::gather_cols(int a, const std::vector<int>& idx) {
  int id = unary(Op::gather_cols, a);
  const auto& A = nodes_[a].value;
  Eigen::MatrixXd v(A.rows(), Eigen::Index(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    require(idx[j] >= 0 && idx[j] < A.cols(), "gather_cols: index range");
    v.col(Eigen::Index(j)) = A.col(idx[j]);
  }
  nodes_[id].idx = idx;
  nodes_[id].value = std::move(v);
  return id;
}

int Tape::take_per_row(int a, const std::vector<int>& idx) {
  int id = unary(Op::take_per_row, a);
  const auto& A = nodes_[a].value;
  require(Eigen::Index(idx.size()) == A.rows(), "take_per_row: one index per row");
  Eigen::MatrixXd v(A.rows(), 1);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    require(idx[i] >= 0 && idx[i] < A.cols(), "take_per_row: index range");
    v(i, 0) = A(i, idx[i]);
  }
  nodes_[id].idx = idx;
  nodes_[id].value = std::move(v);
  return id;
}

int Tape::mul_mask(int a, const Eigen::MatrixXd& mask) {
  int id = unary(Op::mul_mask, a);
  const auto& A = nodes_[a].value;
  require(mask.rows() == A.rows() && mask.cols() == A.cols(),
          "mul_mask: shape mismatch");
  nodes_[id].aux = mask;
  nodes_[id].value = A.cwiseProduct(mask);
  return id;
}

void Tape::backward(int root) {
  check_id(root, "backward");
  require(nodes_[root].value.rows() == 1 && nodes_[root].value.cols() == 1,
          "backward: root must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[root].grad = Eigen::MatrixXd::Ones(1, 1);

  auto ensure = [&](int id) -> Eigen::MatrixXd& {
    Node& n = nodes_[id];
    if (n.grad.size() == 0)
      n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  };
  auto wants = [&](int id) { return id >= 0 && nodes_[id].needs_grad; };

  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Eigen::MatrixXd& g = n.grad;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add:
        if (wants(n.a)) ensure(n.a) += g;
        if (wants(n.b)) ensure(n.b) += g;
        break;
      case Op::sub:
        if (wants(n.a)) ensure(n.a) += g;
        if (wants(n.b)) ensure(n.b) -= g;
        break;
      case Op::mul:
        if (wants(n.a)) ensure(n.a) += g.cwiseProduct(nodes_[n.b].value);
        if (wants(n.b)) ensure(n.b) += g.cwiseProduct(nodes_[n.a].value);
        break;
      case Op::div:
        if (wants(n.a)) ensure(n.a) += g.cwiseQuotient(nodes_[n.b].value);
        if (wants(n.b))
          ensure(n.b) -= g.cwiseProduct(n.value).cwiseQuotient(nodes_[n.b].value);
        break;
      case Op::neg:
        if (wants(n.a)) ensure(n.a) -= g;
        break;
      case Op::scale:
        if (wants(n.a)) ensure(n.a) += n.c * g;
        break;
      case Op::add_scalar:
        if (wants(n.a)) ensure(n.a) += g;
        break;
      case Op::matmul_nt:
        if (wants(n.a)) ensure(n.a) += g * nodes_[n.b].value;
        if (wants(n.b)) ensure(n.b) += g.transpose() * nodes_[n.a].value;
        break;
      case Op::masked_matmul:
        if (wants(n.a)) ensure(n.a) += g * nodes_[n.b].value.cwiseProduct(n.aux);
        if (wants(n.b))
          ensure(n.b) += (g.transpose() * nodes_[n.a].value).cwiseProduct(n.aux);
        break;
      case Op::add_rowvec:
        if (wants(n.a)) ensure(n.a) += g;
        if (wants(n.b)) ensure(n.b).row(0) += g.colwise().sum();
        break;
      case Op::mul_rowvec:
        if (wants(n.a))
          ensure(n.a).array() += g.array().rowwise() * nodes_[n.b].value.row(0).array();
        if (wants(n.b))
          ensure(n.b).row(0) += g.cwiseProduct(nodes_[n.a].value).colwise().sum();
        break;
      case Op::sub_colvec:
        if (wants(n.a)) ensure(n.a) += g;
        if (wants(n.b)) ensure(n.b).col(0) -= g.rowwise().sum();
        break;
      case Op::div_colvec:
        if (wants(n.a))
          ensure(n.a).array() += g.array().colwise() / nodes_[n.b].value.col(0).array();
        if (wants(n.b))
          ensure(n.b).col(0) -=
              (g.cwiseProduct(n.value).rowwise().sum().array() /
               nodes_[n.b].value.col(0).array())
                  .matrix();
        break;
      case Op::tanh_op:
        if (wants(n.a))
          ensure(n.a).array() += g.array() * (1.0 - n.value.array().square());
        break;
      case Op::exp_op:
        if (wants(n.a)) ensure(n.a) += g.cwiseProduct(n.value);
        break;
      case Op::log_op:
        if (wants(n.a)) ensure(n.a) += g.cwiseQuotient(nodes_[n.a].value);
        break;
      case Op::sqrt_op:
        if (wants(n.a)) ensure(n.a) += 0.5 * g.cwiseQuotient(n.value);
        break;
      case Op::softplus:
        if (wants(n.a))
          ensure(n.a) += g.cwiseProduct(nodes_[n.a].value.unaryExpr(&sigmoid_scalar));
        break;
      case Op::rowsum:
        if (wants(n.a))
          ensure(n.a).array().colwise() += g.col(0).array();
        break;
      case Op::sum_all:
        if (wants(n.a)) ensure(n.a).array() += g(0, 0);
        break;
      case Op::mean_all:
        if (wants(n.a))
          ensure(n.a).array() += g(0, 0) / double(nodes_[n.a].value.size());
        break;
      case Op::cumsum_cols:
        if (wants(n.a)) {
          Eigen::MatrixXd suf = g;
          for (int j = int(suf.cols()) - 2; j >= 0; --j)
            suf.col(j) += suf.col(j + 1);
          ensure(n.a) += suf;
        }
        break;
      case Op::slice_cols:
        if (wants(n.a)) ensure(n.a).middleCols(n.j0, n.k) += g;
        break;
      case Op::hcat:
        if (wants(n.a))
          ensure(n.a) += g.leftCols(nodes_[n.a].value.cols());
        if (wants(n.b))
          ensure(n.b) += g.rightCols(nodes_[n.b].value.cols());
        break;
      case Op::gather_cols:
        if (wants(n.a)) {
          Eigen::MatrixXd& ga = ensure(n.a);
          for (std::size_t j = 0; j < n.idx.size(); ++j)
            ga.col(n.idx[j]) += g.col(Eigen::Index(j));
        }
        break;
      case Op::take_per_row:
        if (wants(n.a)) {
          Eigen::MatrixXd& ga = ensure(n.a);
          for (Eigen::Index r = 0; r < g.rows(); ++r)
            ga(r, n.idx[r]) += g(r, 0);
        }
        break;
      case Op::mul_mask:
        if (wants(n.a)) ensure(n.a) += g.cwiseProduct(n.aux);
        break;
    }
  }
  for (auto& n : nodes_)
    if (n.needs_grad && n.grad.size() == 0)
      n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
}

}  // namespace fpce
