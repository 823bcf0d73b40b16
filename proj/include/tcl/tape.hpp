#pragma once

// Reverse-mode autodiff over 2-D tensors.
//
// Ops compute values eagerly and, when a Tape is supplied and any input is
// tracked, record a backward closure. backward() walks the tape in reverse
// creation order (a valid topological order), accumulating into additive
// gradient buffers. Passing tape = nullptr runs the same math as pure
// inference with no recording.
//
// Invariants kept by every op:
//   - shapes are validated up front (ContractViolation on mismatch)
//   - value results do not depend on whether a tape is recording
//   - a non-finite gradient produced during backward raises NumericError
//     naming the op that produced it

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "tcl/common.hpp"
#include "tcl/tensor.hpp"

namespace tcl::ad {

template <class T>
class Tape {
 public:
  struct Node {
    std::string op;
    std::function<void()> backward;
    std::vector<TensorData<T>*> written;  // grads to scan after backward
  };

  void record(std::string op, std::function<void()> fn,
              std::vector<TensorData<T>*> written) {
    nodes_.push_back(Node{std::move(op), std::move(fn), std::move(written)});
  }

  size_t node_count() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates to every tracked tensor.
  void backward(Tensor<T> loss) {
    check(loss.rows() == 1 && loss.cols() == 1,
          "backward: loss must be a [1,1] scalar");
    loss.grad()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      it->backward();
      for (TensorData<T>* td : it->written) {
        for (const T& g : td->grad) {
          if (!std::isfinite(g))
            throw NumericError("backward: non-finite gradient out of op '" +
                               it->op + "'");
        }
      }
    }
  }

  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

namespace detail {

template <class T>
inline bool want_grad(Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (!tape) return false;
  for (const Tensor<T>* t : ins)
    if (t->track()) return true;
  return false;
}

}  // namespace detail

// ----------------------------- structural ops -----------------------------

// Value copy that gradients never flow through.
template <class T>
Tensor<T> detach(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  std::copy(a.data(), a.data() + a.size(), out.data());
  return out;
}

// Row gather from an embedding table. id -1 yields a zero row (used for the
// unused tail of a fixed-height canvas); other ids must be in [0, rows).
template <class T>
Tensor<T> embed(Tape<T>* tape, Tensor<T> table, const std::vector<int>& ids) {
  const int v = table.rows(), d = table.cols();
  Tensor<T> out = Tensor<T>::zeros(static_cast<int>(ids.size()), d);
  for (size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id == -1) continue;
    check(id >= 0 && id < v, "embed: token id out of range");
    std::copy(table.data() + static_cast<size_t>(id) * d,
              table.data() + static_cast<size_t>(id + 1) * d,
              out.data() + i * static_cast<size_t>(d));
  }
  if (detail::want_grad(tape, {&table})) {
    out.set_track(true);
    std::vector<int> ids_copy = ids;
    tape->record(
        "embed",
        [table, out, ids_copy, d]() mutable {
          const T* go = out.grad();
          T* gt = table.grad();
          for (size_t i = 0; i < ids_copy.size(); ++i) {
            const int id = ids_copy[i];
            if (id == -1) continue;
            for (int j = 0; j < d; ++j)
              gt[static_cast<size_t>(id) * d + j] += go[i * static_cast<size_t>(d) + j];
          }
        },
        {table.node()});
  }
  return out;
}

template <class T>
Tensor<T> slice_rows(Tape<T>* tape, Tensor<T> a, int r0, int r1) {
  check(0 <= r0 && r0 < r1 && r1 <= a.rows(), "slice_rows: range out of bounds");
  const int c = a.cols();
  Tensor<T> out = Tensor<T>::zeros(r1 - r0, c);
  std::copy(a.data() + static_cast<size_t>(r0) * c,
            a.data() + static_cast<size_t>(r1) * c, out.data());
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "slice_rows",
        [a, out, r0, c]() mutable {
          EMap<T>(a.grad(), a.rows(), c).middleRows(r0, out.rows()) +=
              EMap<T>(out.grad(), out.rows(), c);
        },
        {a.node()});
  }
  return out;
}

template <class T>
Tensor<T> slice_cols(Tape<T>* tape, Tensor<T> a, int c0, int c1) {
  check(0 <= c0 && c0 < c1 && c1 <= a.cols(), "slice_cols: range out of bounds");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), c1 - c0);
  out.mat() = a.mat().middleCols(c0, c1 - c0);
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "slice_cols",
        [a, out, c0]() mutable {
          a.gmat().middleCols(c0, out.cols()) += EMap<T>(out.grad(), out.rows(), out.cols());
        },
        {a.node()});
  }
  return out;
}

// Entry gather: out[i] = a[rows[i], cols[i]]. Duplicate coordinates are
// allowed and their gradients accumulate.
template <class T>
Tensor<T> pick(Tape<T>* tape, Tensor<T> a, const std::vector<int>& rows,
               const std::vector<int>& cols) {
  check(rows.size() == cols.size() && !rows.empty(),
        "pick: need matching nonempty row/col lists");
  Tensor<T> out = Tensor<T>::zeros(static_cast<int>(rows.size()), 1);
  const int c = a.cols();
  for (size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < a.rows() && cols[i] >= 0 && cols[i] < c,
          "pick: coordinate out of range");
    out.data()[i] = a.data()[static_cast<size_t>(rows[i]) * c + cols[i]];
  }
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    std::vector<int> rs = rows, cs = cols;
    tape->record(
        "pick",
        [a, out, rs, cs, c]() mutable {
          T* ga = a.grad();
          const T* go = out.grad();
          for (size_t i = 0; i < rs.size(); ++i)
            ga[static_cast<size_t>(rs[i]) * c + cs[i]] += go[i];
        },
        {a.node()});
  }
  return out;
}

template <class T>
Tensor<T> concat_cols(Tape<T>* tape, const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_cols: empty part list");
  const int r = parts[0].rows();
  int c = 0;
  for (const auto& p : parts) {
    check(p.rows() == r, "concat_cols: row mismatch");
    c += p.cols();
  }
  Tensor<T> out = Tensor<T>::zeros(r, c);
  int at = 0;
  bool any = false;
  for (const auto& p : parts) {
    out.mat().middleCols(at, p.cols()) = p.mat();
    at += p.cols();
    any = any || p.track();
  }
  if (tape && any) {
    out.set_track(true);
    std::vector<Tensor<T>> ps = parts;
    std::vector<TensorData<T>*> written;
    for (auto& p : ps)
      if (p.track()) written.push_back(p.node());
    tape->record(
        "concat_cols",
        [ps, out]() mutable {
          int at = 0;
          for (auto& p : ps) {
            if (p.track())
              p.gmat() += EMap<T>(out.grad(), out.rows(), out.cols())
                              .middleCols(at, p.cols());
            at += p.cols();
          }
        },
        std::move(written));
  }
  return out;
}

// ----------------------------- arithmetic ops -----------------------------

template <class T>
Tensor<T> add(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  out.mat() = a.mat() + b.mat();
  if (detail::want_grad(tape, {&a, &b})) {
    out.set_track(true);
    std::vector<TensorData<T>*> written;
    if (a.track()) written.push_back(a.node());
    if (b.track()) written.push_back(b.node());
    tape->record(
        "add",
        [a, b, out]() mutable {
          EMap<T> go(out.grad(), out.rows(), out.cols());
          if (a.track()) a.gmat() += go;
          if (b.track()) b.gmat() += go;
        },
        std::move(written));
  }
  return out;
}

template <class T>
Tensor<T> mul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  out.mat() = a.mat().cwiseProduct(b.mat());
  if (detail::want_grad(tape, {&a, &b})) {
    out.set_track(true);
    std::vector<TensorData<T>*> written;
    if (a.track()) written.push_back(a.node());
    if (b.track()) written.push_back(b.node());
    tape->record(
        "mul",
        [a, b, out]() mutable {
          EMap<T> go(out.grad(), out.rows(), out.cols());
          if (a.track()) a.gmat() += go.cwiseProduct(b.mat());
          if (b.track()) b.gmat() += go.cwiseProduct(a.mat());
        },
        std::move(written));
  }
  return out;
}

template <class T>
Tensor<T> scale(Tape<T>* tape, Tensor<T> a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  out.mat() = a.mat() * c;
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "scale",
        [a, out, c]() mutable {
          a.gmat() += EMap<T>(out.grad(), out.rows(), out.cols()) * c;
        },
        {a.node()});
  }
  return out;
}

template <class T>
Tensor<T> matmul(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), b.cols());
  out.mat().noalias() = a.mat() * b.mat();
  if (detail::want_grad(tape, {&a, &b})) {
    out.set_track(true);
    std::vector<TensorData<T>*> written;
    if (a.track()) written.push_back(a.node());
    if (b.track()) written.push_back(b.node());
    tape->record(
        "matmul",
        [a, b, out]() mutable {
          EMap<T> go(out.grad(), out.rows(), out.cols());
          if (a.track()) a.gmat().noalias() += go * b.mat().transpose();
          if (b.track()) b.gmat().noalias() += a.mat().transpose() * go;
        },
        std::move(written));
  }
  return out;
}

// C = A * B^T, used for attention scores against a key matrix.
template <class T>
Tensor<T> matmul_nt(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  check(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), b.rows());
  out.mat().noalias() = a.mat() * b.mat().transpose();
  if (detail::want_grad(tape, {&a, &b})) {
    out.set_track(true);
    std::vector<TensorData<T>*> written;
    if (a.track()) written.push_back(a.node());
    if (b.track()) written.push_back(b.node());
    tape->record(
        "matmul_nt",
        [a, b, out]() mutable {
          EMap<T> go(out.grad(), out.rows(), out.cols());
          if (a.track()) a.gmat().noalias() += go * b.mat();
          if (b.track()) b.gmat().noalias() += go.transpose() * a.mat();
        },
        std::move(written));
  }
  return out;
}

// ----------------------------- nonlinearities -----------------------------

template <class T>
Tensor<T> exp_op(Tape<T>* tape, Tensor<T> a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  out.mat() = a.mat().array().exp().matrix();
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "exp",
        [a, out]() mutable {
          a.gmat().array() +=
              EMap<T>(out.grad(), out.rows(), out.cols()).array() * out.mat().array();
        },
        {a.node()});
  }
  return out;
}

template <class T>
Tensor<T> log_op(Tape<T>* tape, Tensor<T> a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  out.mat() = a.mat().array().log().matrix();
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "log",
        [a, out]() mutable {
          a.gmat().array() +=
              EMap<T>(out.grad(), out.rows(), out.cols()).array() / a.mat().array();
        },
        {a.node()});
  }
  return out;
}

template <class T>
Tensor<T> relu(Tape<T>* tape, Tensor<T> a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  out.mat() = a.mat().cwiseMax(T(0));
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "relu",
        [a, out]() mutable {
          a.gmat().array() += EMap<T>(out.grad(), out.rows(), out.cols()).array() *
                              (a.mat().array() > T(0)).template cast<T>();
        },
        {a.node()});
  }
  return out;
}

// Row-wise softmax with max-shift. Fully masked entries (additive -1e9)
// underflow to exactly zero, which keeps padded columns inert.
template <class T>
Tensor<T> softmax_rows(Tape<T>* tape, Tensor<T> a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    auto row = a.mat().row(i);
    const T m = row.maxCoeff();
    out.mat().row(i) = (row.array() - m).exp();
    const T s = out.mat().row(i).sum();
    out.mat().row(i) /= s;
  }
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "softmax_rows",
        [a, out]() mutable {
          EMap<T> go(out.grad(), out.rows(), out.cols());
          for (int i = 0; i < a.rows(); ++i) {
            const T dot = go.row(i).cwiseProduct(out.mat().row(i)).sum();
            a.gmat().row(i).array() +=
                out.mat().row(i).array() * (go.row(i).array() - dot);
          }
        },
        {a.node()});
  }
  return out;
}

template <class T>
Tensor<T> log_softmax_rows(Tape<T>* tape, Tensor<T> a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    auto row = a.mat().row(i);
    const T m = row.maxCoeff();
    const T lse = std::log((row.array() - m).exp().sum());
    out.mat().row(i) = row.array() - m - lse;
  }
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "log_softmax_rows",
        [a, out]() mutable {
          EMap<T> go(out.grad(), out.rows(), out.cols());
          for (int i = 0; i < a.rows(); ++i) {
            const T gsum = go.row(i).sum();
            a.gmat().row(i).array() +=
                go.row(i).array() - out.mat().row(i).array().exp() * gsum;
          }
        },
        {a.node()});
  }
  return out;
}

// Row-wise layer normalization with a learnable per-column gain, no bias.
template <class T>
Tensor<T> layer_norm(Tape<T>* tape, Tensor<T> x, Tensor<T> gain) {
  check(gain.rows() == 1 && gain.cols() == x.cols(),
        "layer_norm: gain must be [1, cols]");
  constexpr T kEps = T(1e-5);
  const int r = x.rows(), c = x.cols();
  Tensor<T> out = Tensor<T>::zeros(r, c);
  Tensor<T> xhat = Tensor<T>::zeros(r, c);  // saved for backward
  std::vector<T> inv_sigma(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    auto row = x.mat().row(i);
    const T mu = row.mean();
    const T var = (row.array() - mu).square().sum() / T(c);
    const T is = T(1) / std::sqrt(var + kEps);
    inv_sigma[static_cast<size_t>(i)] = is;
    xhat.mat().row(i) = (row.array() - mu) * is;
    out.mat().row(i) = xhat.mat().row(i).cwiseProduct(gain.mat().row(0));
  }
  if (detail::want_grad(tape, {&x, &gain})) {
    out.set_track(true);
    std::vector<TensorData<T>*> written;
    if (x.track()) written.push_back(x.node());
    if (gain.track()) written.push_back(gain.node());
    tape->record(
        "layer_norm",
        [x, gain, out, xhat, inv_sigma, r, c]() mutable {
          EMap<T> go(out.grad(), r, c);
          for (int i = 0; i < r; ++i) {
            auto dy = go.row(i);
            auto xh = xhat.mat().row(i);
            if (gain.track())
              gain.gmat().row(0).array() += dy.array() * xh.array();
            if (x.track()) {
              Eigen::Array<T, 1, Eigen::Dynamic> dxh =
                  dy.array() * gain.mat().row(0).array();
              const T m1 = dxh.mean();
              const T m2 = (dxh * xh.array()).mean();
              x.gmat().row(i).array() +=
                  inv_sigma[static_cast<size_t>(i)] * (dxh - m1 - xh.array() * m2);
            }
          }
        },
        std::move(written));
  }
  return out;
}

// ----------------------------- reductions -----------------------------

template <class T>
Tensor<T> sum_all(Tape<T>* tape, Tensor<T> a) {
  Tensor<T> out = Tensor<T>::scalar(a.mat().sum());
  if (detail::want_grad(tape, {&a})) {
    out.set_track(true);
    tape->record(
        "sum_all",
        [a, out]() mutable { a.gmat().array() += out.grad()[0]; },
        {a.node()});
  }
  return out;
}

// Elementwise minimum of two scalars; an exact tie routes the gradient to a.
template <class T>
Tensor<T> min_scalar(Tape<T>* tape, Tensor<T> a, Tensor<T> b) {
  check(a.rows() == 1 && a.cols() == 1 && b.rows() == 1 && b.cols() == 1,
        "min_scalar: both inputs must be [1,1]");
  const bool pick_a = a.item() <= b.item();
  Tensor<T> out = Tensor<T>::scalar(pick_a ? a.item() : b.item());
  if (detail::want_grad(tape, {&a, &b})) {
    out.set_track(true);
    std::vector<TensorData<T>*> written;
    if (pick_a && a.track()) written.push_back(a.node());
    if (!pick_a && b.track()) written.push_back(b.node());
    tape->record(
        "min_scalar",
        [a, b, out, pick_a]() mutable {
          if (pick_a) {
            if (a.track()) a.grad()[0] += out.grad()[0];
          } else {
            if (b.track()) b.grad()[0] += out.grad()[0];
          }
        },
        std::move(written));
  }
  return out;
}

}  // namespace tcl::ad
