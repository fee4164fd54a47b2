#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fpce {

// Reverse-mode autodiff over matrix-valued expressions. Nodes hold whole
// Eigen matrices so a network evaluation stays a short op list of GEMM-sized
// operations instead of one node per scalar. A Tape is built fresh for every
// training step: insert leaves (constants or parameters), compose ops, call
// backward() on a 1x1 result, then read gradients off the parameter leaves.
//
// Shape conventions follow the rest of the library: data batches are rows
// (N x K), weight matrices are (out x in) and applied as X * W^T, biases are
// row vectors broadcast down the batch.
class Tape {
 public:
  enum class Op {
    leaf,
    add,            // a + b, same shape
    sub,            // a - b
    mul,            // a .* b
    div,            // a ./ b
    neg,            // -a
    scale,          // c * a          (c constant)
    add_scalar,     // a + c          (c constant)
    matmul_nt,      // X * W^T        (X: N x I, W: O x I)
    masked_matmul,  // X * (W .* M)^T (M constant mask, shape of W)
    add_rowvec,     // X + 1 * b      (b: 1 x K)
    mul_rowvec,     // X .* (1 * b)
    sub_colvec,     // X - c * 1^T    (c: N x 1)
    div_colvec,     // X ./ (c * 1^T)
    tanh_op,
    exp_op,
    log_op,
    sqrt_op,
    softplus,       // log(1 + e^x), stable
    rowsum,         // N x K -> N x 1
    sum_all,        // -> 1 x 1
    mean_all,       // -> 1 x 1
    cumsum_cols,    // prefix sums along each row
    slice_cols,     // X(:, j0 : j0+k-1)
    hcat,           // [a b]
    gather_cols,    // X(:, idx), idx may repeat
    take_per_row,   // out(n) = X(n, idx[n])
    mul_mask        // X .* M (M constant, shape of X)
  };

  // Leaves. Parameters are just leaves that request a gradient.
  int leaf(const Eigen::MatrixXd& value, bool requires_grad = false);
  int scalar_leaf(double value, bool requires_grad = false);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int neg(int a);
  int scale(int a, double c);
  int add_scalar(int a, double c);
  int matmul_nt(int x, int w);
  int masked_matmul_nt(int x, int w, const Eigen::MatrixXd& mask);
  int add_rowvec(int x, int b);
  int mul_rowvec(int x, int b);
  int sub_colvec(int x, int c);
  int div_colvec(int x, int c);
  int tanh(int a);
  int exp(int a);
  int log(int a);
  int sqrt(int a);
  int softplus(int a);
  int rowsum(int a);
  int sum_all(int a);
  int mean_all(int a);
  int cumsum_cols(int a);
  int slice_cols(int a, int j0, int k);
  int hcat(int a, int b);
  int gather_cols(int a, const std::vector<int>& idx);
  int take_per_row(int a, const std::vector<int>& idx);
  int mul_mask(int a, const Eigen::MatrixXd& mask);

  const Eigen::MatrixXd& value(int id) const { return nodes_[id].value; }
  double scalar_value(int id) const { return nodes_[id].value(0, 0); }
  // Only meaningful after backward(); zero matrix for untouched nodes.
  const Eigen::MatrixXd& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].needs_grad; }

  // Accumulates d(root)/d(leaf) into every gradient-requesting node.
  // root must be 1x1.
  void backward(int root);

  int size() const { return int(nodes_.size()); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Op op = Op::leaf;
    int a = -1;
    int b = -1;
    bool needs_grad = false;
    double c = 0.0;                // scale / add_scalar constant
    int j0 = 0, k = 0;             // slice_cols bounds
    Eigen::MatrixXd aux;           // mask for masked ops
    std::vector<int> idx;          // gather / take indices
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
  };

  int push(Node n);
  int unary(Op op, int a);
  int binary(Op op, int a, int b);
  void check_id(int id, const char* who) const;

  std::vector<Node> nodes_;
};

}  // namespace fpce
