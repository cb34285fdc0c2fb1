#include "vecmap/autodiff.hpp"

#include <cmath>

#include "vecmap/geometry.hpp"

namespace vecmap::ad {

Var make_leaf(Eigen::MatrixXd value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return n;
}

Var Tape::constant(Eigen::MatrixXd value) { return make_leaf(std::move(value), false); }

Var Tape::node(Eigen::MatrixXd value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && grad_enabled_;
  // Allocate up front so backward closures can read out->grad unconditionally.
  if (n->requires_grad) n->ensure_grad();
  return n;
}

Var Tape::matmul(const Var& a, const Var& b) {
  Var out = node(a->value * b->value, a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad.noalias() += out->grad * b->value.transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad.noalias() += a->value.transpose() * out->grad;
      }
    });
  return out;
}

Var Tape::matmul_nt(const Var& a, const Var& b) {
  Var out = node(a->value * b->value.transpose(), a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad.noalias() += out->grad * b->value;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad.noalias() += out->grad.transpose() * a->value;
      }
    });
  return out;
}

Var Tape::add(const Var& a, const Var& b) {
  Var out = node(a->value + b->value, a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad += out->grad;
      }
    });
  return out;
}

Var Tape::sub(const Var& a, const Var& b) {
  Var out = node(a->value - b->value, a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad -= out->grad;
      }
    });
  return out;
}

Var Tape::add_scaled(const Var& a, const Var& b, double s) {
  Var out = node(a->value + s * b->value, a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, b, s, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad += s * out->grad;
      }
    });
  return out;
}

Var Tape::add_rowvec(const Var& a, const Var& row) {
  Eigen::MatrixXd v = a->value;
  v.rowwise() += row->value.row(0);
  Var out = node(std::move(v), a->requires_grad || row->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, row, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad;
      }
      if (row->requires_grad) {
        row->ensure_grad();
        row->grad.row(0) += out->grad.colwise().sum();
      }
    });
  return out;
}

Var Tape::cmul(const Var& a, const Var& b) {
  Var out = node(a->value.cwiseProduct(b->value), a->requires_grad || b->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, b, out] {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad += out->grad.cwiseProduct(b->value);
      }
      if (b->requires_grad) {
        b->ensure_grad();
        b->grad += out->grad.cwiseProduct(a->value);
      }
    });
  return out;
}

Var Tape::scale(const Var& a, double s) {
  Var out = node(s * a->value, a->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, s, out] {
      a->ensure_grad();
      a->grad += s * out->grad;
    });
  return out;
}

Var Tape::relu(const Var& a) {
  Var out = node(a->value.cwiseMax(0.0), a->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, out] {
      a->ensure_grad();
      a->grad += (a->value.array() > 0.0).cast<double>().matrix().cwiseProduct(out->grad);
    });
  return out;
}

Var Tape::softmax_rows(const Var& a) {
  Eigen::MatrixXd y(a->value.rows(), a->value.cols());
  for (Eigen::Index r = 0; r < a->value.rows(); ++r) {
    const double m = a->value.row(r).maxCoeff();
    Eigen::ArrayXd e = (a->value.row(r).array() - m).exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  Var out = node(std::move(y), a->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, out] {
      a->ensure_grad();
      for (Eigen::Index r = 0; r < out->value.rows(); ++r) {
        const double dot = out->grad.row(r).dot(out->value.row(r));
        a->grad.row(r) +=
            (out->grad.row(r).array() - dot).matrix().cwiseProduct(out->value.row(r));
      }
    });
  return out;
}

Var Tape::layernorm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index rows = x->value.rows(), cols = x->value.cols();
  auto xhat = std::make_shared<Eigen::MatrixXd>(rows, cols);
  auto inv_std = std::make_shared<Eigen::VectorXd>(rows);
  Eigen::MatrixXd y(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mu = x->value.row(r).mean();
    const double var = (x->value.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    xhat->row(r) = ((x->value.row(r).array() - mu) * is).matrix();
    y.row(r) = xhat->row(r).cwiseProduct(gamma->value.row(0)) + beta->value.row(0);
  }
  Var out = node(std::move(y),
                 x->requires_grad || gamma->requires_grad || beta->requires_grad);
  if (out->requires_grad)
    ops_.push_back([x, gamma, beta, out, xhat, inv_std] {
      if (gamma->requires_grad) {
        gamma->ensure_grad();
        gamma->grad.row(0) += out->grad.cwiseProduct(*xhat).colwise().sum();
      }
      if (beta->requires_grad) {
        beta->ensure_grad();
        beta->grad.row(0) += out->grad.colwise().sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        for (Eigen::Index r = 0; r < out->value.rows(); ++r) {
          const Eigen::RowVectorXd dxhat =
              out->grad.row(r).cwiseProduct(gamma->value.row(0));
          const double m1 = dxhat.mean();
          const double m2 = dxhat.cwiseProduct(xhat->row(r)).mean();
          x->grad.row(r) += (*inv_std)(r) *
                            (dxhat.array() - m1 - xhat->row(r).array() * m2).matrix();
        }
      }
    });
  return out;
}

Var Tape::cols(const Var& a, int start, int n) {
  Var out = node(a->value.middleCols(start, n), a->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, start, n, out] {
      a->ensure_grad();
      a->grad.middleCols(start, n) += out->grad;
    });
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    cols += p->value.cols();
    rg = rg || p->requires_grad;
  }
  Eigen::MatrixXd v(parts.front()->value.rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p->value.cols()) = p->value;
    at += p->value.cols();
  }
  Var out = node(std::move(v), rg);
  if (out->requires_grad)
    ops_.push_back([parts, out] {
      Eigen::Index at = 0;
      for (const auto& p : parts) {
        if (p->requires_grad) {
          p->ensure_grad();
          p->grad += out->grad.middleCols(at, p->value.cols());
        }
        at += p->value.cols();
      }
    });
  return out;
}

Var Tape::regroup_rows(const Var& a, int group) {
  const Eigen::Index rows = a->value.rows() / group;
  const Eigen::Index d = a->value.cols();
  if (rows * group != a->value.rows()) throw Error("regroup_rows shape mismatch");
  Eigen::MatrixXd v(rows, group * d);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (int g = 0; g < group; ++g) v.block(i, g * d, 1, d) = a->value.row(i * group + g);
  Var out = node(std::move(v), a->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, group, d, rows, out] {
      a->ensure_grad();
      for (Eigen::Index i = 0; i < rows; ++i)
        for (int g = 0; g < group; ++g)
          a->grad.row(i * group + g) += out->grad.block(i, g * d, 1, d);
    });
  return out;
}

Var Tape::split_rows(const Var& a, int group) {
  const Eigen::Index rows = a->value.rows();
  const Eigen::Index d = a->value.cols() / group;
  if (d * group != a->value.cols()) throw Error("split_rows shape mismatch");
  Eigen::MatrixXd v(rows * group, d);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (int g = 0; g < group; ++g) v.row(i * group + g) = a->value.block(i, g * d, 1, d);
  Var out = node(std::move(v), a->requires_grad);
  if (out->requires_grad)
    ops_.push_back([a, group, d, rows, out] {
      a->ensure_grad();
      for (Eigen::Index i = 0; i < rows; ++i)
        for (int g = 0; g < group; ++g)
          a->grad.block(i, g * d, 1, d) += out->grad.row(i * group + g);
    });
  return out;
}

namespace {

// col(ci*9 + k, cell) = input(ci, neighbor k of cell), zero padded.
Eigen::MatrixXd im2col3x3(const Eigen::MatrixXd& input, int h, int w) {
  const Eigen::Index cin = input.rows();
  Eigen::MatrixXd col = Eigen::MatrixXd::Zero(cin * 9, h * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int cell = r * w + c;
      int k = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc, ++k) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const int src = rr * w + cc;
          for (Eigen::Index ci = 0; ci < cin; ++ci) col(ci * 9 + k, cell) = input(ci, src);
        }
      }
    }
  }
  return col;
}

void col2im3x3(const Eigen::MatrixXd& dcol, int h, int w, Eigen::MatrixXd& dinput) {
  const Eigen::Index cin = dinput.rows();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int cell = r * w + c;
      int k = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc, ++k) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          const int src = rr * w + cc;
          for (Eigen::Index ci = 0; ci < cin; ++ci) dinput(ci, src) += dcol(ci * 9 + k, cell);
        }
      }
    }
  }
}

}  // namespace

Var Tape::conv3x3(const Var& input, const Var& weight, const Var& bias, int h, int w) {
  if (input->value.cols() != static_cast<Eigen::Index>(h) * w)
    throw Error("conv3x3 grid shape mismatch");
  auto col = std::make_shared<Eigen::MatrixXd>(im2col3x3(input->value, h, w));
  Eigen::MatrixXd v = weight->value * (*col);
  v.colwise() += bias->value.col(0);
  Var out = node(std::move(v), input->requires_grad || weight->requires_grad ||
                                   bias->requires_grad);
  if (out->requires_grad)
    ops_.push_back([input, weight, bias, out, col, h, w] {
      if (weight->requires_grad) {
        weight->ensure_grad();
        weight->grad.noalias() += out->grad * col->transpose();
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        bias->grad.col(0) += out->grad.rowwise().sum();
      }
      if (input->requires_grad) {
        input->ensure_grad();
        const Eigen::MatrixXd dcol = weight->value.transpose() * out->grad;
        col2im3x3(dcol, h, w, input->grad);
      }
    });
  return out;
}

Var Tape::bilinear_gather(const Var& grid, const Eigen::MatrixX2d& positions, int h, int w) {
  const Eigen::Index p_count = positions.rows();
  const Eigen::Index d = grid->value.rows();
  auto idx = std::make_shared<Eigen::Matrix<int, Eigen::Dynamic, 4>>(p_count, 4);
  auto wts = std::make_shared<Eigen::Matrix<double, Eigen::Dynamic, 4>>(p_count, 4);
  Eigen::MatrixXd v(p_count, d);
  for (Eigen::Index p = 0; p < p_count; ++p) {
    const double rr = std::clamp(positions(p, 0), 0.0, static_cast<double>(h - 1));
    const double cc = std::clamp(positions(p, 1), 0.0, static_cast<double>(w - 1));
    const int r0 = std::min(static_cast<int>(std::floor(rr)), h - 1);
    const int c0 = std::min(static_cast<int>(std::floor(cc)), w - 1);
    const int r1 = std::min(r0 + 1, h - 1);
    const int c1 = std::min(c0 + 1, w - 1);
    const double fr = rr - r0;
    const double fc = cc - c0;
    (*idx)(p, 0) = r0 * w + c0;
    (*idx)(p, 1) = r0 * w + c1;
    (*idx)(p, 2) = r1 * w + c0;
    (*idx)(p, 3) = r1 * w + c1;
    (*wts)(p, 0) = (1 - fr) * (1 - fc);
    (*wts)(p, 1) = (1 - fr) * fc;
    (*wts)(p, 2) = fr * (1 - fc);
    (*wts)(p, 3) = fr * fc;
    v.row(p).setZero();
    for (int k = 0; k < 4; ++k)
      v.row(p) += (*wts)(p, k) * grid->value.col((*idx)(p, k)).transpose();
  }
  Var out = node(std::move(v), grid->requires_grad);
  if (out->requires_grad)
    ops_.push_back([grid, out, idx, wts] {
      grid->ensure_grad();
      for (Eigen::Index p = 0; p < out->value.rows(); ++p)
        for (int k = 0; k < 4; ++k)
          grid->grad.col((*idx)(p, k)) += (*wts)(p, k) * out->grad.row(p).transpose();
    });
  return out;
}

Var Tape::weighted_l1(const Var& pred, const Eigen::MatrixXd& target,
                      const Eigen::VectorXd& row_weights) {
  const Eigen::MatrixXd diff = pred->value - target;
  double total = 0.0;
  for (Eigen::Index r = 0; r < diff.rows(); ++r)
    total += row_weights(r) * diff.row(r).cwiseAbs().sum();
  Var out = node(Eigen::MatrixXd::Constant(1, 1, total), pred->requires_grad);
  if (out->requires_grad) {
    auto sign = std::make_shared<Eigen::MatrixXd>(
        diff.unaryExpr([](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }));
    auto wts = std::make_shared<Eigen::VectorXd>(row_weights);
    ops_.push_back([pred, out, sign, wts] {
      pred->ensure_grad();
      const double g = out->grad(0, 0);
      for (Eigen::Index r = 0; r < sign->rows(); ++r)
        pred->grad.row(r) += g * (*wts)(r) * sign->row(r);
    });
  }
  return out;
}

Var Tape::cross_entropy_rows(const Var& logits, const std::vector<int>& targets) {
  const Eigen::Index rows = logits->value.rows();
  if (static_cast<Eigen::Index>(targets.size()) != rows)
    throw Error("cross entropy target count mismatch");
  auto probs = std::make_shared<Eigen::MatrixXd>(rows, logits->value.cols());
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double m = logits->value.row(r).maxCoeff();
    Eigen::ArrayXd e = (logits->value.row(r).array() - m).exp();
    probs->row(r) = (e / e.sum()).matrix();
    total -= std::log(std::max((*probs)(r, targets[static_cast<std::size_t>(r)]), 1e-300));
  }
  total /= static_cast<double>(rows);
  Var out = node(Eigen::MatrixXd::Constant(1, 1, total), logits->requires_grad);
  if (out->requires_grad) {
    auto tg = std::make_shared<std::vector<int>>(targets);
    ops_.push_back([logits, out, probs, tg] {
      logits->ensure_grad();
      const double g = out->grad(0, 0) / static_cast<double>(probs->rows());
      for (Eigen::Index r = 0; r < probs->rows(); ++r) {
        logits->grad.row(r) += g * probs->row(r);
        logits->grad(r, (*tg)[static_cast<std::size_t>(r)]) -= g;
      }
    });
  }
  return out;
}

void Tape::backward(const Var& loss) {
  if (loss->value.rows() != 1 || loss->value.cols() != 1)
    throw Error("backward expects a scalar loss");
  loss->ensure_grad();
  loss->grad(0, 0) = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

Var linear(Tape& t, const Var& x, const Var& w, const Var& b) {
  return t.add_rowvec(t.matmul(x, w), b);
}

}  // namespace vecmap::ad
