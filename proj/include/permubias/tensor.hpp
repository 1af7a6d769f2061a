#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "permubias/error.hpp"
#include "permubias/rng.hpp"

namespace permubias {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // sized lazily by the tape
  bool requires_grad = false;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

}  // namespace detail

template <class T>
class Tape;

// Immutable dense row-major tensor. Copies share the underlying node; data is
// never mutated after construction, so tensors are safe to share across
// threads and safe to reuse on a tape.
template <class T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    auto node = std::make_shared<Node>();
    node->data.assign(static_cast<size_t>(shape_numel(shape)), value);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(T value) { return from_data({1}, {value}); }

  static Tensor randn(Shape shape, Rng& rng, double stddev, bool requires_grad = false) {
    auto data = rng.normal_vec<T>(static_cast<size_t>(shape_numel(shape)), stddev);
    return from_data(std::move(shape), std::move(data), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return node_->numel(); }
  std::span<const T> values() const { return node_->data; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  T item() const {
    if (size() != 1) throw ContractError("item() on tensor of size " + std::to_string(size()));
    return node_->data[0];
  }

  // Element access by multi-index (rank must match).
  T at(std::initializer_list<int64_t> idx) const {
    const Shape& s = node_->shape;
    if (idx.size() != s.size()) throw RangeError("at(): index rank mismatch");
    int64_t flat = 0;
    size_t k = 0;
    for (int64_t i : idx) {
      if (i < 0 || i >= s[k]) throw RangeError("at(): index out of range");
      flat = flat * s[k] + i;
      ++k;
    }
    return node_->data[static_cast<size_t>(flat)];
  }

  // Gradient buffer (valid after backward has run over a tape this tensor
  // participated in with requires_grad set).
  std::span<const T> grad() const {
    if (!node_ || node_->grad.size() != node_->data.size()) {
      throw ContractError("grad(): no gradient available for this tensor");
    }
    return node_->grad;
  }

  bool has_grad() const { return node_ && node_->grad.size() == node_->data.size(); }

  // Internal node handle for op implementations and the tape.
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

// Ordered record of executed operations. Replaying it backward visits the
// operations in exact reverse execution order. A tape is confined to one
// logical thread; concurrent recording is not supported.
template <class T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<detail::TensorNode<T>>;

  void record(std::vector<NodePtr> participants, std::function<void()> backward_fn) {
    ops_.push_back(Op{std::move(participants), std::move(backward_fn)});
  }

  size_t op_count() const { return ops_.size(); }

  // Clears gradients of every participating node, seeds d(loss)/d(loss) = 1,
  // and replays adjoints in reverse execution order. Running it twice over
  // the same tape produces identical gradients.
  void run_backward(const NodePtr& loss) {
    if (!loss || loss->numel() != 1) {
      throw ContractError("backward: loss must be a scalar tensor");
    }
    for (auto& op : ops_) {
      for (auto& n : op.participants) {
        if (n->requires_grad) n->grad.assign(n->data.size(), T(0));
      }
    }
    loss->grad.assign(1, T(1));
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward_fn();
  }

 private:
  struct Op {
    std::vector<NodePtr> participants;
    std::function<void()> backward_fn;
  };
  std::vector<Op> ops_;
};

template <class T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
  tape.run_backward(loss.node());
}

// ---------------------------------------------------------------------------
// Operations. Each op validates shapes, computes the forward value, and, when
// a tape is supplied and any input requires grad, records its adjoint.
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
bool track(Tape<T>* tape, std::initializer_list<const Tensor<T>*> ins) {
  if (!tape) return false;
  for (const auto* t : ins) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  for (int64_t i = 0; i < a.size(); ++i) out[static_cast<size_t>(i)] += b.values()[static_cast<size_t>(i)];
  auto y = Tensor<T>::from_data(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  if (detail::track<T>(tape, {&a, &b})) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape->record({an, bn, yn}, [an, bn, yn] {
      for (size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->requires_grad) an->grad[i] += yn->grad[i];
        if (bn->requires_grad) bn->grad[i] += yn->grad[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  for (int64_t i = 0; i < a.size(); ++i) out[static_cast<size_t>(i)] -= b.values()[static_cast<size_t>(i)];
  auto y = Tensor<T>::from_data(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  if (detail::track<T>(tape, {&a, &b})) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape->record({an, bn, yn}, [an, bn, yn] {
      for (size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->requires_grad) an->grad[i] += yn->grad[i];
        if (bn->requires_grad) bn->grad[i] -= yn->grad[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out(static_cast<size_t>(a.size()));
  for (int64_t i = 0; i < a.size(); ++i) {
    out[static_cast<size_t>(i)] = a.values()[static_cast<size_t>(i)] * b.values()[static_cast<size_t>(i)];
  }
  auto y = Tensor<T>::from_data(a.shape(), std::move(out), a.requires_grad() || b.requires_grad());
  if (detail::track<T>(tape, {&a, &b})) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape->record({an, bn, yn}, [an, bn, yn] {
      for (size_t i = 0; i < yn->grad.size(); ++i) {
        if (an->requires_grad) an->grad[i] += yn->grad[i] * bn->data[i];
        if (bn->requires_grad) bn->grad[i] += yn->grad[i] * an->data[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c, Tape<T>* tape = nullptr) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= c;
  auto y = Tensor<T>::from_data(a.shape(), std::move(out), a.requires_grad());
  if (detail::track<T>(tape, {&a})) {
    auto an = a.node(), yn = y.node();
    tape->record({an, yn}, [an, yn, c] {
      for (size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i] * c;
    });
  }
  return y;
}

// x [m x n] + v broadcast over rows; v is [n] or [1 x n].
template <class T>
Tensor<T> add_row_vector(const Tensor<T>& x, const Tensor<T>& v, Tape<T>* tape = nullptr) {
  if (x.rank() != 2) throw DimensionError("add_row_vector: x must be rank 2, got " + shape_str(x.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  if (v.size() != n) {
    throw DimensionError("add_row_vector: vector size " + shape_str(v.shape()) +
                         " does not match row width " + std::to_string(n));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] += v.values()[static_cast<size_t>(j)];
  }
  auto y = Tensor<T>::from_data(x.shape(), std::move(out), x.requires_grad() || v.requires_grad());
  if (detail::track<T>(tape, {&x, &v})) {
    auto xn = x.node(), vn = v.node(), yn = y.node();
    tape->record({xn, vn, yn}, [xn, vn, yn, m, n] {
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          const size_t k = static_cast<size_t>(i * n + j);
          if (xn->requires_grad) xn->grad[k] += yn->grad[k];
          if (vn->requires_grad) vn->grad[static_cast<size_t>(j)] += yn->grad[k];
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<size_t>(m * n), T(0));
  const T* ap = a.values().data();
  const T* bp = b.values().data();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const T aip = ap[i * k + p];
      const T* brow = bp + p * n;
      T* orow = out.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  auto y = Tensor<T>::from_data({m, n}, std::move(out), a.requires_grad() || b.requires_grad());
  if (detail::track<T>(tape, {&a, &b})) {
    auto an = a.node(), bn = b.node(), yn = y.node();
    tape->record({an, bn, yn}, [an, bn, yn, m, k, n] {
      const T* g = yn->grad.data();
      if (an->requires_grad) {
        // dA = g . B^T
        T* da = an->grad.data();
        const T* bp = bn->data.data();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t j = 0; j < n; ++j) {
            const T gij = g[i * n + j];
            const T* bcol = bp + j;  // column j, stride n
            T* darow = da + i * k;
            for (int64_t p = 0; p < k; ++p) darow[p] += gij * bcol[p * n];
          }
        }
      }
      if (bn->requires_grad) {
        // dB = A^T . g
        T* db = bn->grad.data();
        const T* ap = an->data.data();
        for (int64_t i = 0; i < m; ++i) {
          for (int64_t p = 0; p < k; ++p) {
            const T aip = ap[i * k + p];
            const T* grow = g + i * n;
            T* dbrow = db + p * n;
            for (int64_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
          }
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a, Tape<T>* tape = nullptr) {
  if (a.rank() != 2) throw DimensionError("transpose: rank-2 tensor required, got " + shape_str(a.shape()));
  const int64_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j * m + i)] = a.values()[static_cast<size_t>(i * n + j)];
  }
  auto y = Tensor<T>::from_data({n, m}, std::move(out), a.requires_grad());
  if (detail::track<T>(tape, {&a})) {
    auto an = a.node(), yn = y.node();
    tape->record({an, yn}, [an, yn, m, n] {
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          an->grad[static_cast<size_t>(i * n + j)] += yn->grad[static_cast<size_t>(j * m + i)];
        }
      }
    });
  }
  return y;
}

// Copies into a new shape with the same element count.
template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape new_shape, Tape<T>* tape = nullptr) {
  if (shape_numel(new_shape) != a.size()) {
    throw DimensionError("reshape: cannot reshape " + shape_str(a.shape()) + " to " + shape_str(new_shape));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  auto y = Tensor<T>::from_data(std::move(new_shape), std::move(out), a.requires_grad());
  if (detail::track<T>(tape, {&a})) {
    auto an = a.node(), yn = y.node();
    tape->record({an, yn}, [an, yn] {
      for (size_t i = 0; i < yn->grad.size(); ++i) an->grad[i] += yn->grad[i];
    });
  }
  return y;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, int64_t start, int64_t len, Tape<T>* tape = nullptr) {
  if (a.rank() != 2) throw DimensionError("slice_rows: rank-2 tensor required");
  const int64_t m = a.dim(0), n = a.dim(1);
  if (start < 0 || len < 0 || start + len > m) throw RangeError("slice_rows: range out of bounds");
  std::vector<T> out(a.values().begin() + start * n, a.values().begin() + (start + len) * n);
  auto y = Tensor<T>::from_data({len, n}, std::move(out), a.requires_grad());
  if (detail::track<T>(tape, {&a})) {
    auto an = a.node(), yn = y.node();
    tape->record({an, yn}, [an, yn, start, n] {
      for (size_t i = 0; i < yn->grad.size(); ++i) {
        an->grad[static_cast<size_t>(start * n) + i] += yn->grad[i];
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, int64_t start, int64_t len, Tape<T>* tape = nullptr) {
  if (a.rank() != 2) throw DimensionError("slice_cols: rank-2 tensor required");
  const int64_t m = a.dim(0), n = a.dim(1);
  if (start < 0 || len < 0 || start + len > n) throw RangeError("slice_cols: range out of bounds");
  std::vector<T> out(static_cast<size_t>(m * len));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < len; ++j) {
      out[static_cast<size_t>(i * len + j)] = a.values()[static_cast<size_t>(i * n + start + j)];
    }
  }
  auto y = Tensor<T>::from_data({m, len}, std::move(out), a.requires_grad());
  if (detail::track<T>(tape, {&a})) {
    auto an = a.node(), yn = y.node();
    tape->record({an, yn}, [an, yn, m, n, start, len] {
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < len; ++j) {
          an->grad[static_cast<size_t>(i * n + start + j)] += yn->grad[static_cast<size_t>(i * len + j)];
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts, Tape<T>* tape = nullptr) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const int64_t n = parts[0].rank() == 2 ? parts[0].dim(1) : -1;
  if (n < 0) throw DimensionError("concat_rows: rank-2 tensors required");
  int64_t rows = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(1) != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(p.shape()));
    }
    rows += p.dim(0);
    rg = rg || p.requires_grad();
  }
  std::vector<T> out;
  out.reserve(static_cast<size_t>(rows * n));
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  auto y = Tensor<T>::from_data({rows, n}, std::move(out), rg);
  if (tape && rg) {
    std::vector<typename Tape<T>::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    auto yn = y.node();
    auto participants = nodes;
    participants.push_back(yn);
    tape->record(std::move(participants), [nodes, yn] {
      size_t offset = 0;
      for (const auto& pn : nodes) {
        if (pn->requires_grad) {
          for (size_t i = 0; i < pn->data.size(); ++i) pn->grad[i] += yn->grad[offset + i];
        }
        offset += pn->data.size();
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts, Tape<T>* tape = nullptr) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int64_t m = parts[0].rank() == 2 ? parts[0].dim(0) : -1;
  if (m < 0) throw DimensionError("concat_cols: rank-2 tensors required");
  int64_t cols = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(p.shape()));
    }
    cols += p.dim(1);
    rg = rg || p.requires_grad();
  }
  std::vector<T> out(static_cast<size_t>(m * cols));
  int64_t col_off = 0;
  for (const auto& p : parts) {
    const int64_t pn = p.dim(1);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < pn; ++j) {
        out[static_cast<size_t>(i * cols + col_off + j)] = p.values()[static_cast<size_t>(i * pn + j)];
      }
    }
    col_off += pn;
  }
  auto y = Tensor<T>::from_data({m, cols}, std::move(out), rg);
  if (tape && rg) {
    std::vector<typename Tape<T>::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    auto yn = y.node();
    auto participants = nodes;
    participants.push_back(yn);
    tape->record(std::move(participants), [nodes, yn, m, cols] {
      int64_t off = 0;
      for (const auto& pn : nodes) {
        const int64_t w = static_cast<int64_t>(pn->data.size()) / m;
        if (pn->requires_grad) {
          for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < w; ++j) {
              pn->grad[static_cast<size_t>(i * w + j)] += yn->grad[static_cast<size_t>(i * cols + off + j)];
            }
          }
        }
        off += w;
      }
    });
  }
  return y;
}

// Gathers rows of a [r x c] table by index; the embedding lookup.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> indices, Tape<T>* tape = nullptr) {
  if (table.rank() != 2) throw DimensionError("gather_rows: rank-2 table required");
  const int64_t r = table.dim(0), c = table.dim(1);
  std::vector<T> out;
  out.reserve(indices.size() * static_cast<size_t>(c));
  for (int idx : indices) {
    if (idx < 0 || idx >= r) throw RangeError("gather_rows: index " + std::to_string(idx) + " out of range");
    out.insert(out.end(), table.values().begin() + idx * c, table.values().begin() + (idx + 1) * c);
  }
  auto y = Tensor<T>::from_data({static_cast<int64_t>(indices.size()), c}, std::move(out), table.requires_grad());
  if (detail::track<T>(tape, {&table})) {
    auto tn = table.node(), yn = y.node();
    std::vector<int> idx(indices.begin(), indices.end());
    tape->record({tn, yn}, [tn, yn, idx = std::move(idx), c] {
      for (size_t i = 0; i < idx.size(); ++i) {
        for (int64_t j = 0; j < c; ++j) {
          tn->grad[static_cast<size_t>(idx[i] * c + j)] += yn->grad[i * static_cast<size_t>(c) + static_cast<size_t>(j)];
        }
      }
    });
  }
  return y;
}

// Gathers columns of x [m x v] by index.
template <class T>
Tensor<T> gather_cols(const Tensor<T>& x, std::span<const int> indices, Tape<T>* tape = nullptr) {
  if (x.rank() != 2) throw DimensionError("gather_cols: rank-2 tensor required");
  const int64_t m = x.dim(0), v = x.dim(1);
  const int64_t k = static_cast<int64_t>(indices.size());
  std::vector<T> out(static_cast<size_t>(m * k));
  for (int64_t j = 0; j < k; ++j) {
    const int idx = indices[static_cast<size_t>(j)];
    if (idx < 0 || idx >= v) throw RangeError("gather_cols: index " + std::to_string(idx) + " out of range");
    for (int64_t i = 0; i < m; ++i) {
      out[static_cast<size_t>(i * k + j)] = x.values()[static_cast<size_t>(i * v + idx)];
    }
  }
  auto y = Tensor<T>::from_data({m, k}, std::move(out), x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    std::vector<int> idx(indices.begin(), indices.end());
    tape->record({xn, yn}, [xn, yn, idx = std::move(idx), m, v, k] {
      for (int64_t j = 0; j < k; ++j) {
        for (int64_t i = 0; i < m; ++i) {
          xn->grad[static_cast<size_t>(i * v + idx[static_cast<size_t>(j)])] +=
              yn->grad[static_cast<size_t>(i * k + j)];
        }
      }
    });
  }
  return y;
}

// Softmax over the trailing axis, numerically stabilized by max-subtraction.
// Rejects non-finite input.
template <class T>
Tensor<T> row_softmax(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  if (x.rank() < 1 || x.dim(x.rank() - 1) < 1) {
    throw DimensionError("row_softmax: trailing axis must be nonempty");
  }
  const int64_t n = x.dim(x.rank() - 1);
  const int64_t rows = x.size() / n;
  for (T v : x.values()) {
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("row_softmax: non-finite input");
  }
  std::vector<T> out(static_cast<size_t>(x.size()));
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = x.values().data() + r * n;
    T* o = out.data() + r * n;
    T mx = in[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    T denom = T(0);
    for (int64_t j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    for (int64_t j = 0; j < n; ++j) o[j] /= denom;
  }
  auto y = Tensor<T>::from_data(x.shape(), std::move(out), x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    tape->record({xn, yn}, [xn, yn, rows, n] {
      for (int64_t r = 0; r < rows; ++r) {
        const T* yv = yn->data.data() + r * n;
        const T* g = yn->grad.data() + r * n;
        T* dx = xn->grad.data() + r * n;
        T dot = T(0);
        for (int64_t j = 0; j < n; ++j) dot += g[j] * yv[j];
        for (int64_t j = 0; j < n; ++j) dx[j] += yv[j] * (g[j] - dot);
      }
    });
  }
  return y;
}

// Causal softmax over rows of a [rows x keys] score matrix where row i may
// attend keys j <= offset + i. Masked entries produce exactly 0 and never
// contribute; valid entries of each row sum to 1.
template <class T>
Tensor<T> causal_masked_softmax(const Tensor<T>& x, int64_t offset, Tape<T>* tape = nullptr) {
  if (x.rank() != 2) throw DimensionError("causal_masked_softmax: rank-2 tensor required");
  const int64_t rows = x.dim(0), keys = x.dim(1);
  if (offset < 0 || offset >= keys) throw RangeError("causal_masked_softmax: offset out of range");
  std::vector<T> out(static_cast<size_t>(rows * keys), T(0));
  for (int64_t i = 0; i < rows; ++i) {
    const int64_t valid = std::min(keys, offset + i + 1);
    const T* in = x.values().data() + i * keys;
    T* o = out.data() + i * keys;
    T mx = in[0];
    for (int64_t j = 1; j < valid; ++j) mx = std::max(mx, in[j]);
    if (!std::isfinite(static_cast<double>(mx))) throw NumericError("causal_masked_softmax: non-finite input");
    T denom = T(0);
    for (int64_t j = 0; j < valid; ++j) {
      o[j] = std::exp(in[j] - mx);
      denom += o[j];
    }
    for (int64_t j = 0; j < valid; ++j) o[j] /= denom;
  }
  auto y = Tensor<T>::from_data(x.shape(), std::move(out), x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    tape->record({xn, yn}, [xn, yn, rows, keys, offset] {
      for (int64_t i = 0; i < rows; ++i) {
        const int64_t valid = std::min(keys, offset + i + 1);
        const T* yv = yn->data.data() + i * keys;
        const T* g = yn->grad.data() + i * keys;
        T* dx = xn->grad.data() + i * keys;
        T dot = T(0);
        for (int64_t j = 0; j < valid; ++j) dot += g[j] * yv[j];
        for (int64_t j = 0; j < valid; ++j) dx[j] += yv[j] * (g[j] - dot);
      }
    });
  }
  return y;
}

// Natural log; rejects non-positive input.
template <class T>
Tensor<T> log(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  std::vector<T> out(static_cast<size_t>(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) {
    const T v = x.values()[static_cast<size_t>(i)];
    if (!(v > T(0))) throw NumericError("log: non-positive input");
    out[static_cast<size_t>(i)] = std::log(v);
  }
  auto y = Tensor<T>::from_data(x.shape(), std::move(out), x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    tape->record({xn, yn}, [xn, yn] {
      for (size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i] / xn->data[i];
    });
  }
  return y;
}

// GELU, tanh approximation.
template <class T>
Tensor<T> gelu(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<T> out(static_cast<size_t>(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) {
    const double v = static_cast<double>(x.values()[static_cast<size_t>(i)]);
    out[static_cast<size_t>(i)] = static_cast<T>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
  }
  auto y = Tensor<T>::from_data(x.shape(), std::move(out), x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    tape->record({xn, yn}, [xn, yn] {
      constexpr double kC = 0.7978845608028654;
      constexpr double kA = 0.044715;
      for (size_t i = 0; i < yn->grad.size(); ++i) {
        const double v = static_cast<double>(xn->data[i]);
        const double inner = kC * (v + kA * v * v * v);
        const double t = std::tanh(inner);
        const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
        xn->grad[i] += yn->grad[i] * static_cast<T>(d);
      }
    });
  }
  return y;
}

// RMS normalization over the trailing axis with a learned gain:
// y = x / sqrt(mean(x^2) + eps) * gain.
template <class T>
Tensor<T> rms_norm(const Tensor<T>& x, const Tensor<T>& gain, T eps, Tape<T>* tape = nullptr) {
  if (x.rank() != 2) throw DimensionError("rms_norm: rank-2 tensor required");
  const int64_t m = x.dim(0), n = x.dim(1);
  if (gain.size() != n) throw DimensionError("rms_norm: gain size must equal row width");
  std::vector<T> out(static_cast<size_t>(m * n));
  std::vector<T> inv(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    const T* row = x.values().data() + i * n;
    T ms = T(0);
    for (int64_t j = 0; j < n; ++j) ms += row[j] * row[j];
    ms = ms / static_cast<T>(n);
    inv[static_cast<size_t>(i)] = T(1) / std::sqrt(ms + eps);
    for (int64_t j = 0; j < n; ++j) {
      out[static_cast<size_t>(i * n + j)] = row[j] * inv[static_cast<size_t>(i)] * gain.values()[static_cast<size_t>(j)];
    }
  }
  auto y = Tensor<T>::from_data(x.shape(), std::move(out), x.requires_grad() || gain.requires_grad());
  if (detail::track<T>(tape, {&x, &gain})) {
    auto xn = x.node(), gn = gain.node(), yn = y.node();
    tape->record({xn, gn, yn}, [xn, gn, yn, m, n, inv = std::move(inv)] {
      for (int64_t i = 0; i < m; ++i) {
        const T* row = xn->data.data() + i * n;
        const T* g = yn->grad.data() + i * n;
        const T r = inv[static_cast<size_t>(i)];
        if (gn->requires_grad) {
          for (int64_t j = 0; j < n; ++j) {
            gn->grad[static_cast<size_t>(j)] += g[j] * row[j] * r;
          }
        }
        if (xn->requires_grad) {
          // u = gain .* g ; dx = r*u - r^3/n * x * (u . x)
          T ux = T(0);
          for (int64_t j = 0; j < n; ++j) ux += gn->data[static_cast<size_t>(j)] * g[j] * row[j];
          const T c = r * r * r * ux / static_cast<T>(n);
          T* dx = xn->grad.data() + i * n;
          for (int64_t j = 0; j < n; ++j) {
            dx[j] += r * gn->data[static_cast<size_t>(j)] * g[j] - c * row[j];
          }
        }
      }
    });
  }
  return y;
}

// Sum of all elements, producing a scalar.
template <class T>
Tensor<T> sum(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  T s = T(0);
  for (T v : x.values()) s += v;
  auto y = Tensor<T>::from_data({1}, {s}, x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    tape->record({xn, yn}, [xn, yn] {
      const T g = yn->grad[0];
      for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
    });
  }
  return y;
}

// Mean over rows of [m x n], producing [1 x n].
template <class T>
Tensor<T> col_mean(const Tensor<T>& x, Tape<T>* tape = nullptr) {
  if (x.rank() != 2) throw DimensionError("col_mean: rank-2 tensor required");
  const int64_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(static_cast<size_t>(n), T(0));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(j)] += x.values()[static_cast<size_t>(i * n + j)];
  }
  for (auto& v : out) v /= static_cast<T>(m);
  auto y = Tensor<T>::from_data({1, n}, std::move(out), x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    tape->record({xn, yn}, [xn, yn, m, n] {
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          xn->grad[static_cast<size_t>(i * n + j)] += yn->grad[static_cast<size_t>(j)] / static_cast<T>(m);
        }
      }
    });
  }
  return y;
}

// Tiles a [1 x n] row vector to [m x n].
template <class T>
Tensor<T> broadcast_rows(const Tensor<T>& v, int64_t m, Tape<T>* tape = nullptr) {
  if (v.rank() != 2 || v.dim(0) != 1) throw DimensionError("broadcast_rows: [1 x n] tensor required");
  const int64_t n = v.dim(1);
  std::vector<T> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(i * n + j)] = v.values()[static_cast<size_t>(j)];
  }
  auto y = Tensor<T>::from_data({m, n}, std::move(out), v.requires_grad());
  if (detail::track<T>(tape, {&v})) {
    auto vn = v.node(), yn = y.node();
    tape->record({vn, yn}, [vn, yn, m, n] {
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          vn->grad[static_cast<size_t>(j)] += yn->grad[static_cast<size_t>(i * n + j)];
        }
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr) {
  return sum(mul(a, b, tape), tape);
}

// Inverted dropout: zeroes each element with probability p and scales the
// survivors by 1/(1-p). The mask is drawn once at the forward pass and reused
// by the adjoint, so backward stays consistent with what actually ran.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, Tape<T>* tape = nullptr) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(static_cast<size_t>(x.size()));
  for (auto& m : mask) m = rng.bernoulli(p) ? T(0) : keep_scale;
  std::vector<T> out(static_cast<size_t>(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) {
    out[static_cast<size_t>(i)] = x.values()[static_cast<size_t>(i)] * mask[static_cast<size_t>(i)];
  }
  auto y = Tensor<T>::from_data(x.shape(), std::move(out), x.requires_grad());
  if (detail::track<T>(tape, {&x})) {
    auto xn = x.node(), yn = y.node();
    tape->record({xn, yn}, [xn, yn, mask = std::move(mask)] {
      for (size_t i = 0; i < yn->grad.size(); ++i) xn->grad[i] += yn->grad[i] * mask[i];
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Gradient verification harness. f must rebuild its computation purely from
// the leaves it is handed (never from captured tensors), so that perturbed
// copies propagate. Returns max over all leaf coordinates of
// |analytic - numeric| / (|numeric| + 1e-12), central differences.
// ---------------------------------------------------------------------------

template <class T>
using LeafFunction = std::function<Tensor<T>(const std::vector<Tensor<T>>&, Tape<T>*)>;

template <class T>
double finite_diff_check(const LeafFunction<T>& f, const std::vector<Tensor<T>>& leaves,
                         double step = 1e-6) {
  std::vector<Tensor<T>> tracked;
  tracked.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    std::vector<T> data(leaf.values().begin(), leaf.values().end());
    tracked.push_back(Tensor<T>::from_data(leaf.shape(), std::move(data), true));
  }
  Tape<T> tape;
  Tensor<T> loss = f(tracked, &tape);
  backward(loss, tape);

  std::vector<std::vector<T>> analytic;
  for (const auto& t : tracked) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(static_cast<size_t>(t.size()), T(0));
    }
  }

  double max_rel = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    const auto& leaf = leaves[li];
    for (int64_t c = 0; c < leaf.size(); ++c) {
      auto evaluate = [&](double delta) {
        std::vector<Tensor<T>> probe;
        probe.reserve(leaves.size());
        for (size_t k = 0; k < leaves.size(); ++k) {
          std::vector<T> data(leaves[k].values().begin(), leaves[k].values().end());
          if (k == li) data[static_cast<size_t>(c)] += static_cast<T>(delta);
          probe.push_back(Tensor<T>::from_data(leaves[k].shape(), std::move(data), false));
        }
        return static_cast<double>(f(probe, nullptr).item());
      };
      const double fp = evaluate(step);
      const double fm = evaluate(-step);
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = static_cast<double>(analytic[li][static_cast<size_t>(c)]);
      const double rel = std::abs(a - numeric) / (std::abs(numeric) + 1e-12);
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace permubias
