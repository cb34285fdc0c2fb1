#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <vector>

namespace vecmap::ad {

// Reverse-mode tape over dense matrices. Leaves persist across tapes (model
// parameters); everything else lives as long as the tape that produced it.
struct Node {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Eigen::MatrixXd::Zero(value.rows(), value.cols());
  }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Eigen::MatrixXd value, bool requires_grad = true);

class Tape {
 public:
  Tape() = default;
  // A disabled tape records nothing; forward passes over differentiable
  // leaves then run without gradient bookkeeping.
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}

  Var constant(Eigen::MatrixXd value);

  Var matmul(const Var& a, const Var& b);     // a * b
  Var matmul_nt(const Var& a, const Var& b);  // a * b^T
  Var add(const Var& a, const Var& b);
  Var sub(const Var& a, const Var& b);
  Var add_scaled(const Var& a, const Var& b, double s);  // a + s*b
  Var add_rowvec(const Var& a, const Var& row);          // broadcast 1xC over rows
  Var cmul(const Var& a, const Var& b);
  Var scale(const Var& a, double s);
  Var relu(const Var& a);
  Var softmax_rows(const Var& a);
  Var layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
  Var cols(const Var& a, int start, int n);
  Var concat_cols(const std::vector<Var>& parts);
  // (n*group) x d  ->  n x (group*d), row blocks flattened left to right.
  Var regroup_rows(const Var& a, int group);
  // n x (group*d)  ->  (n*group) x d, inverse of regroup_rows.
  Var split_rows(const Var& a, int group);

  // 3x3 same-padding convolution over a channels x (h*w) grid, cell index
  // r*w + c. weight: c_out x (c_in*9), bias: c_out x 1.
  Var conv3x3(const Var& input, const Var& weight, const Var& bias, int h, int w);

  // Bilinear read of a d x (h*w) grid at continuous (row, col) positions,
  // clamped to the border. Positions carry no gradient.
  Var bilinear_gather(const Var& grid, const Eigen::MatrixX2d& positions, int h, int w);

  // sum_r weight(r) * sum_c |pred - target|  (1x1)
  Var weighted_l1(const Var& pred, const Eigen::MatrixXd& target,
                  const Eigen::VectorXd& row_weights);
  // mean over rows of -log softmax(logits)[target]  (1x1)
  Var cross_entropy_rows(const Var& logits, const std::vector<int>& targets);

  void backward(const Var& loss);

 private:
  Var node(Eigen::MatrixXd value, bool requires_grad);
  std::vector<std::function<void()>> ops_;
  bool grad_enabled_ = true;
};

Var linear(Tape& t, const Var& x, const Var& w, const Var& b);

}  // namespace vecmap::ad
