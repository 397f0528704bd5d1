#pragma once

#include <functional>
#include <span>
#include <vector>

#include "vlafp/common.hpp"
#include "vlafp/matrix.hpp"

namespace vlafp {

/// Half-open row range [offset, offset + length) of a packed matrix.
struct RowSpan {
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Which key rows a contiguous group of query rows may attend to. A list of
/// blocks is a block-diagonal attention mask.
struct AttentionBlock {
  RowSpan queries;
  RowSpan keys;
};

template <typename T>
struct SupConResult {
  T loss = 0;
  Matrix<T> grad;  // dL/dz, same shape as z
};

/// Supervised contrastive loss summed over anchors:
///   L = sum_a -1/|P(a)| sum_{p in P(a)} log( exp(z_a.z_p/tau) / sum_{k != a} exp(z_a.z_k/tau) )
/// Rows of z are fingerprints; positives[a] lists the positive rows of anchor a.
template <typename T>
SupConResult<T> supcon_loss(const Matrix<T>& z, const std::vector<std::vector<std::size_t>>& positives, T tau) {
  const auto n = static_cast<std::size_t>(z.rows());
  require(tau > 0, "supcon: tau must be positive");
  require(positives.size() == n, "supcon: one positive set per batch row required");
  require(n >= 2, "supcon: need at least two batch items");
  const Matrix<T> sim = (z * z.transpose()) / tau;
  Matrix<T> g = Matrix<T>::Zero(z.rows(), z.rows());
  SupConResult<T> out;
  for (std::size_t a = 0; a < n; ++a) {
    const auto& pos = positives[a];
    require(!pos.empty(), "supcon: anchor " + std::to_string(a) + " has no positives");
    const auto ai = static_cast<Eigen::Index>(a);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      if (k != a) mx = std::max(mx, sim(ai, static_cast<Eigen::Index>(k)));
    T denom = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != a) denom += std::exp(sim(ai, static_cast<Eigen::Index>(k)) - mx);
    const T lse = mx + std::log(denom);
    const T inv = T(1) / static_cast<T>(pos.size());
    T pos_mean = 0;
    for (std::size_t p : pos) {
      require(p < n && p != a, "supcon: invalid positive index");
      pos_mean += sim(ai, static_cast<Eigen::Index>(p));
    }
    out.loss += lse - pos_mean * inv;
    for (std::size_t k = 0; k < n; ++k)
      if (k != a) g(ai, static_cast<Eigen::Index>(k)) = std::exp(sim(ai, static_cast<Eigen::Index>(k)) - lse);
    for (std::size_t p : pos) g(ai, static_cast<Eigen::Index>(p)) -= inv;
  }
  out.grad = ((g + g.transpose()) * z) / tau;
  return out;
}

namespace ad {

using Id = std::size_t;

/// Records matrix operations for reverse-mode differentiation. Values are
/// kept until the tape is destroyed; gradients are allocated on first use.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Id)>;

  Id constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }
  Id variable(Matrix<T> value) { return push(std::move(value), true, nullptr); }

  Id push(Matrix<T> value, bool needs_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix<T>(), needs_grad, std::move(backward)});
    return nodes_.size() - 1;
  }

  const Matrix<T>& value(Id id) const { return nodes_[id].value; }
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() root w.r.t. node `id` (zeros if unreached).
  Matrix<T> grad(Id id) const {
    const auto& n = nodes_[id];
    if (n.grad.size() == 0) return Matrix<T>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  const Matrix<T>& upstream(Id id) const { return nodes_[id].grad; }

  template <typename Expr>
  void accumulate(Id id, const Expr& delta) {
    auto& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(n.value.rows(), n.value.cols());
    n.grad += delta;
  }

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates backwards.
  void backward(Id root) {
    require(nodes_[root].value.size() == 1, "backward: root must be a scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[root].grad = Matrix<T>::Ones(1, 1);
    for (Id i = root + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool needs_grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

template <typename T>
bool any_grad(const Tape<T>& t, std::initializer_list<Id> ids) {
  for (Id id : ids)
    if (t.needs_grad(id)) return true;
  return false;
}

template <typename T>
Id matmul(Tape<T>& t, Id a, Id b) {
  require(t.value(a).cols() == t.value(b).rows(), "matmul: shape mismatch");
  Matrix<T> v = t.value(a) * t.value(b);
  return t.push(std::move(v), any_grad(t, {a, b}), [a, b](Tape<T>& tp, Id self) {
    const auto& g = tp.upstream(self);
    if (tp.needs_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.needs_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

template <typename T>
Id add(Tape<T>& t, Id a, Id b) {
  require(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(), "add: shape mismatch");
  Matrix<T> v = t.value(a) + t.value(b);
  return t.push(std::move(v), any_grad(t, {a, b}), [a, b](Tape<T>& tp, Id self) {
    tp.accumulate(a, tp.upstream(self));
    tp.accumulate(b, tp.upstream(self));
  });
}

/// a + bias, bias broadcast over rows.
template <typename T>
Id add_row(Tape<T>& t, Id a, Id bias) {
  require(t.value(bias).rows() == 1 && t.value(bias).cols() == t.value(a).cols(), "add_row: shape mismatch");
  Matrix<T> v = t.value(a).rowwise() + t.value(bias).row(0);
  return t.push(std::move(v), any_grad(t, {a, bias}), [a, bias](Tape<T>& tp, Id self) {
    tp.accumulate(a, tp.upstream(self));
    if (tp.needs_grad(bias)) tp.accumulate(bias, tp.upstream(self).colwise().sum());
  });
}

template <typename T>
Id hadamard(Tape<T>& t, Id a, Id b) {
  Matrix<T> v = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(v), any_grad(t, {a, b}), [a, b](Tape<T>& tp, Id self) {
    const auto& g = tp.upstream(self);
    if (tp.needs_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.needs_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

/// x * sigmoid(x)
template <typename T>
Id silu(Tape<T>& t, Id a) {
  const Matrix<T>& x = t.value(a);
  Matrix<T> v = x.unaryExpr([](T u) { return u / (T(1) + std::exp(-u)); });
  return t.push(std::move(v), t.needs_grad(a), [a](Tape<T>& tp, Id self) {
    const Matrix<T> d = tp.value(a).unaryExpr([](T u) {
      const T s = T(1) / (T(1) + std::exp(-u));
      return s * (T(1) + u * (T(1) - s));
    });
    tp.accumulate(a, tp.upstream(self).cwiseProduct(d));
  });
}

/// Row-wise x / sqrt(mean(x^2) + eps) * gain.
template <typename T>
Id rms_norm(Tape<T>& t, Id x, Id gain, T eps) {
  const Matrix<T>& xv = t.value(x);
  require(t.value(gain).rows() == 1 && t.value(gain).cols() == xv.cols(), "rms_norm: gain shape mismatch");
  const auto d = static_cast<T>(xv.cols());
  Matrix<T> inv_rms(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) inv_rms(r, 0) = T(1) / std::sqrt(xv.row(r).squaredNorm() / d + eps);
  Matrix<T> unit = xv.array().colwise() * inv_rms.col(0).array();
  Matrix<T> v = unit.array().rowwise() * t.value(gain).row(0).array();
  return t.push(std::move(v), any_grad(t, {x, gain}),
                [x, gain, unit = std::move(unit), inv_rms = std::move(inv_rms), d](Tape<T>& tp, Id self) {
                  const auto& g = tp.upstream(self);
                  if (tp.needs_grad(gain)) tp.accumulate(gain, g.cwiseProduct(unit).colwise().sum());
                  if (tp.needs_grad(x)) {
                    const Matrix<T> du = g.array().rowwise() * tp.value(gain).row(0).array();
                    const Matrix<T> proj = du.cwiseProduct(unit).rowwise().sum() / d;
                    Matrix<T> dx = du - (unit.array().colwise() * proj.col(0).array()).matrix();
                    dx = dx.array().colwise() * inv_rms.col(0).array();
                    tp.accumulate(x, dx);
                  }
                });
}

/// Multi-head scaled dot-product attention. q is Rq x (H*dh), k and v are
/// Rk x (H*dh); head h uses columns [h*dh, (h+1)*dh). Query rows outside
/// every block produce zeros.
template <typename T>
Id attention(Tape<T>& t, Id q, Id k, Id v, std::span<const AttentionBlock> blocks, std::size_t n_heads, std::size_t d_head) {
  const auto& qv = t.value(q);
  const auto& kv = t.value(k);
  const auto& vv = t.value(v);
  const auto width = static_cast<Eigen::Index>(n_heads * d_head);
  require(qv.cols() == width && kv.cols() == width && vv.cols() == width, "attention: width != heads * d_head");
  require(kv.rows() == vv.rows(), "attention: key/value row mismatch");
  const T scale = T(1) / std::sqrt(static_cast<T>(d_head));
  const auto dh = static_cast<Eigen::Index>(d_head);
  Matrix<T> out = Matrix<T>::Zero(qv.rows(), width);
  std::vector<Matrix<T>> probs;
  probs.reserve(blocks.size() * n_heads);
  for (const auto& b : blocks) {
    require(b.keys.length > 0, "attention: block with no keys");
    require(b.queries.offset + b.queries.length <= static_cast<std::size_t>(qv.rows()) &&
                b.keys.offset + b.keys.length <= static_cast<std::size_t>(kv.rows()),
            "attention: block out of range");
    const auto q0 = static_cast<Eigen::Index>(b.queries.offset), ql = static_cast<Eigen::Index>(b.queries.length);
    const auto k0 = static_cast<Eigen::Index>(b.keys.offset), kl = static_cast<Eigen::Index>(b.keys.length);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const auto c0 = static_cast<Eigen::Index>(h) * dh;
      Matrix<T> s = (qv.block(q0, c0, ql, dh) * kv.block(k0, c0, kl, dh).transpose()) * scale;
      for (Eigen::Index r = 0; r < ql; ++r) {
        const T mx = s.row(r).maxCoeff();
        s.row(r) = (s.row(r).array() - mx).exp();
        s.row(r) /= s.row(r).sum();
      }
      out.block(q0, c0, ql, dh) = s * vv.block(k0, c0, kl, dh);
      probs.push_back(std::move(s));
    }
  }
  std::vector<AttentionBlock> saved(blocks.begin(), blocks.end());
  return t.push(std::move(out), any_grad(t, {q, k, v}),
                [q, k, v, saved = std::move(saved), probs = std::move(probs), n_heads, dh, scale](Tape<T>& tp, Id self) {
                  const auto& g = tp.upstream(self);
                  const auto& qv = tp.value(q);
                  const auto& kv = tp.value(k);
                  const auto& vv = tp.value(v);
                  Matrix<T> dq = Matrix<T>::Zero(qv.rows(), qv.cols());
                  Matrix<T> dk = Matrix<T>::Zero(kv.rows(), kv.cols());
                  Matrix<T> dv = Matrix<T>::Zero(vv.rows(), vv.cols());
                  std::size_t pi = 0;
                  for (const auto& b : saved) {
                    const auto q0 = static_cast<Eigen::Index>(b.queries.offset), ql = static_cast<Eigen::Index>(b.queries.length);
                    const auto k0 = static_cast<Eigen::Index>(b.keys.offset), kl = static_cast<Eigen::Index>(b.keys.length);
                    for (std::size_t h = 0; h < n_heads; ++h) {
                      const auto c0 = static_cast<Eigen::Index>(h) * dh;
                      const Matrix<T>& p = probs[pi++];
                      const auto go = g.block(q0, c0, ql, dh);
                      dv.block(k0, c0, kl, dh).noalias() += p.transpose() * go;
                      const Matrix<T> dp = go * vv.block(k0, c0, kl, dh).transpose();
                      Matrix<T> ds = p.cwiseProduct(dp);
                      const Matrix<T> row_dot = ds.rowwise().sum();
                      ds -= (p.array().colwise() * row_dot.col(0).array()).matrix();
                      ds *= scale;
                      dq.block(q0, c0, ql, dh).noalias() += ds * kv.block(k0, c0, kl, dh);
                      dk.block(k0, c0, kl, dh).noalias() += ds.transpose() * qv.block(q0, c0, ql, dh);
                    }
                  }
                  tp.accumulate(q, dq);
                  tp.accumulate(k, dk);
                  tp.accumulate(v, dv);
                });
}

/// Mean of the rows of each span; one output row per span.
template <typename T>
Id span_mean(Tape<T>& t, Id x, std::span<const RowSpan> spans) {
  const auto& xv = t.value(x);
  Matrix<T> out(static_cast<Eigen::Index>(spans.size()), xv.cols());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    require(spans[i].length > 0, "span_mean: empty span");
    require(spans[i].offset + spans[i].length <= static_cast<std::size_t>(xv.rows()), "span_mean: span out of range");
    out.row(static_cast<Eigen::Index>(i)) =
        xv.middleRows(static_cast<Eigen::Index>(spans[i].offset), static_cast<Eigen::Index>(spans[i].length)).colwise().sum() /
        static_cast<T>(spans[i].length);
  }
  std::vector<RowSpan> saved(spans.begin(), spans.end());
  return t.push(std::move(out), t.needs_grad(x), [x, saved = std::move(saved)](Tape<T>& tp, Id self) {
    const auto& g = tp.upstream(self);
    Matrix<T> dx = Matrix<T>::Zero(tp.value(x).rows(), tp.value(x).cols());
    for (std::size_t i = 0; i < saved.size(); ++i) {
      const auto row = g.row(static_cast<Eigen::Index>(i)) / static_cast<T>(saved[i].length);
      for (std::size_t r = 0; r < saved[i].length; ++r) dx.row(static_cast<Eigen::Index>(saved[i].offset + r)) += row;
    }
    tp.accumulate(x, dx);
  });
}

/// Row-major reshape (same element order).
template <typename T>
Id reshape(Tape<T>& t, Id x, Eigen::Index rows, Eigen::Index cols) {
  const auto& xv = t.value(x);
  require(rows * cols == xv.size(), "reshape: element count mismatch");
  Matrix<T> v = Eigen::Map<const Matrix<T>>(xv.data(), rows, cols);
  const Eigen::Index r0 = xv.rows(), c0 = xv.cols();
  return t.push(std::move(v), t.needs_grad(x), [x, r0, c0](Tape<T>& tp, Id self) {
    const auto& g = tp.upstream(self);
    tp.accumulate(x, Eigen::Map<const Matrix<T>>(g.data(), r0, c0));
  });
}

/// Each row divided by its L2 norm.
template <typename T>
Id l2_normalize_rows(Tape<T>& t, Id x) {
  const auto& xv = t.value(x);
  Matrix<T> norms(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    norms(r, 0) = xv.row(r).norm();
    require(norms(r, 0) > 0, "l2_normalize: zero row");
  }
  Matrix<T> y = xv.array().colwise() / norms.col(0).array();
  Matrix<T> saved_y = y;
  return t.push(std::move(y), t.needs_grad(x), [x, norms = std::move(norms), yv = std::move(saved_y)](Tape<T>& tp, Id self) {
    const auto& g = tp.upstream(self);
    const Matrix<T> dots = g.cwiseProduct(yv).rowwise().sum();
    Matrix<T> dx = g - (yv.array().colwise() * dots.col(0).array()).matrix();
    dx = dx.array().colwise() / norms.col(0).array();
    tp.accumulate(x, dx);
  });
}

/// Scalar supervised contrastive loss over the rows of z.
template <typename T>
Id supcon(Tape<T>& t, Id z, const std::vector<std::vector<std::size_t>>& positives, T tau) {
  auto r = supcon_loss<T>(t.value(z), positives, tau);
  Matrix<T> v(1, 1);
  v(0, 0) = r.loss;
  return t.push(std::move(v), t.needs_grad(z), [z, grad = std::move(r.grad)](Tape<T>& tp, Id self) {
    tp.accumulate(z, grad * tp.upstream(self)(0, 0));
  });
}

/// sum(x .* weights) as a 1x1 node.
template <typename T>
Id weighted_sum(Tape<T>& t, Id x, const Matrix<T>& weights) {
  require(weights.rows() == t.value(x).rows() && weights.cols() == t.value(x).cols(), "weighted_sum: shape mismatch");
  Matrix<T> v(1, 1);
  v(0, 0) = t.value(x).cwiseProduct(weights).sum();
  return t.push(std::move(v), t.needs_grad(x), [x, weights](Tape<T>& tp, Id self) {
    tp.accumulate(x, weights * tp.upstream(self)(0, 0));
  });
}

}  // namespace ad
}  // namespace vlafp
