#pragma once
// Dense float32 tensors (rank 1..4, row-major) with tape-based
// reverse-mode differentiation.
//
// Recording is explicit: ops record onto the thread's active tape only
// when at least one input is tracked on it (see Tape::watch). Inference
// paths therefore run tape-free at zero overhead.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvt/rng.hpp"

namespace mvt {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Row-major flat index of a coordinate tuple: ((b*C + c)*H + h)*W + w.
inline int64_t flat_index(const Shape& shape, const std::vector<int>& coord) {
  check(coord.size() == shape.size(), "flat_index: rank mismatch");
  int64_t idx = 0;
  for (size_t i = 0; i < shape.size(); ++i) {
    check(coord[i] >= 0 && coord[i] < shape[i], "flat_index: coordinate out of range");
    idx = idx * shape[i] + coord[i];
  }
  return idx;
}

inline std::vector<int> coords_of(const Shape& shape, int64_t flat) {
  std::vector<int> c(shape.size());
  for (size_t i = shape.size(); i-- > 0;) {
    c[i] = static_cast<int>(flat % shape[i]);
    flat /= shape[i];
  }
  return c;
}

class Tape;

class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    validate();
    store_ = std::make_shared<std::vector<float>>(static_cast<size_t>(numel(shape_)), 0.0f);
  }
  Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)) {
    validate();
    check(static_cast<int64_t>(values.size()) == numel(shape_),
          "tensor data length " + std::to_string(values.size()) +
              " does not match shape " + shape_str(shape_));
    store_ = std::make_shared<std::vector<float>>(std::move(values));
  }

  static Tensor full(Shape shape, float v) {
    Tensor t(std::move(shape));
    std::fill(t.store_->begin(), t.store_->end(), v);
    return t;
  }
  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t size() const { return store_ ? static_cast<int64_t>(store_->size()) : 0; }
  bool defined() const { return store_ != nullptr; }

  const float* data() const { return store_->data(); }
  float* data() { return store_->data(); }  // fill during construction only
  float operator[](int64_t i) const { return (*store_)[static_cast<size_t>(i)]; }

  // Zero-copy reshape (shares storage, drops autodiff annotation).
  Tensor view(Shape s) const {
    check(numel(s) == size(), "view: element count mismatch " + shape_str(shape_) +
                                  " -> " + shape_str(s));
    Tensor t = *this;
    t.shape_ = std::move(s);
    t.node = -1;
    t.tape = nullptr;
    return t;
  }

  Tensor clone() const {
    check(defined(), "clone: undefined tensor");
    return Tensor(shape_, *store_);
  }

  bool same_data(const Tensor& o) const { return store_ == o.store_; }

  // Autodiff annotation, maintained by Tape::watch and op recording.
  int node = -1;
  const Tape* tape = nullptr;

private:
  void validate() const {
    check(!shape_.empty() && shape_.size() <= 4,
          "tensor rank must be 1..4, got " + shape_str(shape_));
    for (int e : shape_) check(e >= 1, "tensor extents must be >= 1, got " + shape_str(shape_));
  }

  Shape shape_;
  std::shared_ptr<std::vector<float>> store_;
};

// ======================================================================
//  Tape
// ======================================================================

class Tape {
public:
  // Returns gradient contributions aligned with the node's parents;
  // entries for parents with need[i]==false may be left undefined.
  using BackwardFn =
      std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& need)>;

  struct Record {
    const char* op;            // operation tag
    std::vector<int> parents;  // input node ids (-1 for untracked inputs)
    Shape shape;               // output shape (leaf shape for leaves)
    BackwardFn backward;       // empty for leaves
  };

  // Registers a leaf the caller wants gradients for.
  int watch(Tensor& t) {
    check(t.defined(), "watch: undefined tensor");
    if (t.tape == this && t.node >= 0) return t.node;
    nodes_.push_back(Record{"leaf", {}, t.shape(), {}});
    t.node = static_cast<int>(nodes_.size()) - 1;
    t.tape = this;
    leaves_.push_back(t.node);
    return t.node;
  }

  int record(const char* op, Shape out_shape, std::vector<int> parents, BackwardFn fn) {
    nodes_.push_back(Record{op, std::move(parents), std::move(out_shape), std::move(fn)});
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::unordered_map<int, Tensor> backward(const Tensor& root) const;

  static Tape*& active_slot() {
    thread_local Tape* active = nullptr;
    return active;
  }
  static Tape* active() { return active_slot(); }

  size_t size() const { return nodes_.size(); }
  const Record& record_at(int id) const { return nodes_.at(static_cast<size_t>(id)); }
  const std::vector<int>& leaves() const { return leaves_; }

private:
  std::vector<Record> nodes_;
  std::vector<int> leaves_;
};

// Activates a tape for the current thread for the scope's lifetime.
class TapeScope {
public:
  explicit TapeScope(Tape& t) : prev_(Tape::active_slot()) { Tape::active_slot() = &t; }
  ~TapeScope() { Tape::active_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* prev_;
};

// Suspends recording (backward rules, finite-difference probes).
class TapePause {
public:
  TapePause() : prev_(Tape::active_slot()) { Tape::active_slot() = nullptr; }
  ~TapePause() { Tape::active_slot() = prev_; }
  TapePause(const TapePause&) = delete;
  TapePause& operator=(const TapePause&) = delete;

private:
  Tape* prev_;
};

namespace detail {

inline bool tracked(const Tensor& t) {
  const Tape* a = Tape::active();
  return a && t.tape == a && t.node >= 0;
}

// Attaches a freshly computed output to the active tape when any input
// is tracked. Backward closures may capture `out` (storage is shared).
inline void record_op(Tensor& out, const char* op, std::initializer_list<const Tensor*> inputs,
                      const Tape::BackwardFn& fn) {
  Tape* a = Tape::active();
  if (!a) return;
  bool any = false;
  for (const Tensor* t : inputs) any = any || tracked(*t);
  if (!any) return;
  std::vector<int> parents;
  parents.reserve(inputs.size());
  for (const Tensor* t : inputs) parents.push_back(tracked(*t) ? t->node : -1);
  out.node = a->record(op, out.shape(), std::move(parents), fn);
  out.tape = a;
}

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<int64_t>(i) * k;
    float* crow = c + static_cast<int64_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + static_cast<int64_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
inline void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<int64_t>(i) * k;
    float* crow = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<int64_t>(j) * k;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const float* arow = a + static_cast<int64_t>(p) * m;
    const float* brow = b + static_cast<int64_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      float av = arow[i];
      if (av == 0.0f) continue;
      float* crow = c + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace detail

// ======================================================================
//  Elementwise and linear-algebra ops
// ======================================================================

inline Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] + pb[i];
  detail::record_op(out, "add", {&a, &b},
                    [](const Tensor& g, const std::vector<bool>&) {
                      return std::vector<Tensor>{g, g};
                    });
  return out;
}

inline Tensor scale(const Tensor& a, float s) {
  Tensor out(a.shape());
  const float* pa = a.data();
  float* po = out.data();
  for (int64_t i = 0; i < a.size(); ++i) po[i] = pa[i] * s;
  detail::record_op(out, "scale", {&a},
                    [s](const Tensor& g, const std::vector<bool>&) {
                      Tensor dg(g.shape());
                      const float* pg = g.data();
                      float* pd = dg.data();
                      for (int64_t i = 0; i < g.size(); ++i) pd[i] = pg[i] * s;
                      return std::vector<Tensor>{dg};
                    });
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  detail::record_op(out, "sub", {&a, &b},
                    [](const Tensor& g, const std::vector<bool>& need) {
                      std::vector<Tensor> parts(2);
                      if (need[0]) parts[0] = g;
                      if (need[1]) parts[1] = scale(g, -1.0f);
                      return parts;
                    });
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  detail::record_op(out, "mul", {&a, &b},
                    [a, b](const Tensor& g, const std::vector<bool>& need) {
                      std::vector<Tensor> parts(2);
                      if (need[0]) parts[0] = mul(g, b);
                      if (need[1]) parts[1] = mul(g, a);
                      return parts;
                    });
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2,
        "matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
            shape_str(b.shape()));
  check(a.dim(1) == b.dim(0), "matmul: inner extents differ: " + shape_str(a.shape()) +
                                  " vs " + shape_str(b.shape()));
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  detail::gemm_nn(a.data(), b.data(), out.data(), m, k, n);
  detail::record_op(
      out, "matmul", {&a, &b},
      [a, b, m, k, n](const Tensor& g, const std::vector<bool>& need) {
        std::vector<Tensor> parts(2);
        if (need[0]) {
          Tensor da({m, k});
          detail::gemm_nt(g.data(), b.data(), da.data(), m, n, k);
          parts[0] = da;
        }
        if (need[1]) {
          Tensor db({k, n});
          detail::gemm_tn(a.data(), g.data(), db.data(), k, m, n);
          parts[1] = db;
        }
        return parts;
      });
  return out;
}

// Batched matmul over the leading axis: [G,M,K] x [G,K,N] -> [G,M,N].
// With transpose_b, b is [G,N,K].
inline Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  check(a.rank() == 3 && b.rank() == 3,
        "bmm: expects rank-3 operands, got " + shape_str(a.shape()) + " and " +
            shape_str(b.shape()));
  check(a.dim(0) == b.dim(0), "bmm: batch extents differ: " + shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
  int g_count = a.dim(0), m = a.dim(1), k = a.dim(2);
  int n = transpose_b ? b.dim(1) : b.dim(2);
  int bk = transpose_b ? b.dim(2) : b.dim(1);
  check(bk == k, "bmm: inner extents differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor out({g_count, m, n});
  int64_t sa = static_cast<int64_t>(m) * k, sb = static_cast<int64_t>(k) * n,
          so = static_cast<int64_t>(m) * n;
  for (int i = 0; i < g_count; ++i) {
    if (transpose_b)
      detail::gemm_nt(a.data() + i * sa, b.data() + i * sb, out.data() + i * so, m, k, n);
    else
      detail::gemm_nn(a.data() + i * sa, b.data() + i * sb, out.data() + i * so, m, k, n);
  }
  detail::record_op(
      out, "bmm", {&a, &b},
      [a, b, transpose_b, g_count, m, k, n, sa, sb, so](const Tensor& g,
                                                        const std::vector<bool>& need) {
        std::vector<Tensor> parts(2);
        if (need[0]) {
          Tensor da(a.shape());
          for (int i = 0; i < g_count; ++i) {
            if (transpose_b)  // dA = G * B
              detail::gemm_nn(g.data() + i * so, b.data() + i * sb, da.data() + i * sa, m, n, k);
            else  // dA = G * B^T
              detail::gemm_nt(g.data() + i * so, b.data() + i * sb, da.data() + i * sa, m, n, k);
          }
          parts[0] = da;
        }
        if (need[1]) {
          Tensor db(b.shape());
          for (int i = 0; i < g_count; ++i) {
            if (transpose_b)  // dB = G^T * A
              detail::gemm_tn(g.data() + i * so, a.data() + i * sa, db.data() + i * sb, n, m, k);
            else  // dB = A^T * G
              detail::gemm_tn(a.data() + i * sa, g.data() + i * so, db.data() + i * sb, k, m, n);
          }
          parts[1] = db;
        }
        return parts;
      });
  return out;
}

// x [M,N] + row vector b [N], broadcast over rows.
inline Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  check(x.rank() == 2 && b.rank() == 1 && x.dim(1) == b.dim(0),
        "add_rowvec: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(b.shape()));
  int m = x.dim(0), n = x.dim(1);
  Tensor out(x.shape());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data()[static_cast<int64_t>(i) * n + j] = x.data()[static_cast<int64_t>(i) * n + j] + b.data()[j];
  detail::record_op(out, "add_rowvec", {&x, &b},
                    [m, n](const Tensor& g, const std::vector<bool>& need) {
                      std::vector<Tensor> parts(2);
                      if (need[0]) parts[0] = g;
                      if (need[1]) {
                        Tensor db({n});
                        for (int i = 0; i < m; ++i)
                          for (int j = 0; j < n; ++j)
                            db.data()[j] += g.data()[static_cast<int64_t>(i) * n + j];
                        parts[1] = db;
                      }
                      return parts;
                    });
  return out;
}

inline Tensor softmax(const Tensor& x, int axis) {
  check(axis >= 0 && axis < x.rank(),
        "softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  int n = x.dim(axis);
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.dim(i);
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  Tensor out(x.shape());
  const float* px = x.data();
  float* po = out.data();
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t in = 0; in < inner; ++in) {
      int64_t base = o * n * inner + in;
      float mx = px[base];
      for (int j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        float e = std::exp(px[base + j * inner] - mx);
        po[base + j * inner] = e;
        sum += e;
      }
      float inv = static_cast<float>(1.0 / sum);
      for (int j = 0; j < n; ++j) po[base + j * inner] *= inv;
    }
  }
  detail::record_op(out, "softmax", {&x},
                    [y = out, n, outer, inner](const Tensor& g, const std::vector<bool>&) {
                      Tensor dx(y.shape());
                      const float* py = y.data();
                      const float* pg = g.data();
                      float* pd = dx.data();
                      for (int64_t o = 0; o < outer; ++o) {
                        for (int64_t in = 0; in < inner; ++in) {
                          int64_t base = o * n * inner + in;
                          double dot = 0.0;
                          for (int j = 0; j < n; ++j)
                            dot += static_cast<double>(pg[base + j * inner]) * py[base + j * inner];
                          for (int j = 0; j < n; ++j) {
                            int64_t idx = base + j * inner;
                            pd[idx] = py[idx] * (pg[idx] - static_cast<float>(dot));
                          }
                        }
                      }
                      return std::vector<Tensor>{dx};
                    });
  return out;
}

inline Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  detail::record_op(out, "sum", {&x},
                    [shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                      return std::vector<Tensor>{Tensor::full(shape, g[0])};
                    });
  return out;
}

inline Tensor reshape(const Tensor& x, Shape s) {
  Tensor out = x.view(std::move(s));
  detail::record_op(out, "reshape", {&x},
                    [shape = x.shape()](const Tensor& g, const std::vector<bool>&) {
                      return std::vector<Tensor>{g.view(shape)};
                    });
  return out;
}

inline Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  int r = x.rank();
  check(static_cast<int>(perm.size()) == r, "permute: order length must equal rank");
  std::vector<bool> seen(static_cast<size_t>(r), false);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    check(perm[i] >= 0 && perm[i] < r && !seen[perm[i]], "permute: invalid axis order");
    seen[perm[i]] = true;
    out_shape[i] = x.dim(perm[i]);
  }
  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * x.dim(i + 1);
  Tensor out(out_shape);
  const float* px = x.data();
  float* po = out.data();
  std::vector<int> c(static_cast<size_t>(r), 0);
  for (int64_t flat = 0; flat < out.size(); ++flat) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) src += static_cast<int64_t>(c[i]) * in_strides[perm[i]];
    po[flat] = px[src];
    for (int i = r - 1; i >= 0; --i) {
      if (++c[i] < out_shape[i]) break;
      c[i] = 0;
    }
  }
  detail::record_op(out, "permute", {&x},
                    [perm, r](const Tensor& g, const std::vector<bool>&) {
                      std::vector<int> inv(static_cast<size_t>(r));
                      for (int i = 0; i < r; ++i) inv[perm[i]] = i;
                      return std::vector<Tensor>{permute(g, inv)};
                    });
  return out;
}

// Concatenation along the channel axis of two [B,C,H,W] tensors.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check(a.rank() == 4 && b.rank() == 4, "concat_channels: expects rank-4 operands");
  check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
        "concat_channels: shape mismatch " + shape_str(a.shape()) + " vs " +
            shape_str(b.shape()));
  int bsz = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  int64_t plane = static_cast<int64_t>(h) * w;
  Tensor out({bsz, ca + cb, h, w});
  for (int i = 0; i < bsz; ++i) {
    std::copy_n(a.data() + i * ca * plane, ca * plane, out.data() + static_cast<int64_t>(i) * (ca + cb) * plane);
    std::copy_n(b.data() + i * cb * plane, cb * plane,
                out.data() + (static_cast<int64_t>(i) * (ca + cb) + ca) * plane);
  }
  detail::record_op(out, "concat", {&a, &b},
                    [bsz, ca, cb, plane, ash = a.shape(), bsh = b.shape()](
                        const Tensor& g, const std::vector<bool>& need) {
                      std::vector<Tensor> parts(2);
                      if (need[0]) {
                        Tensor da(ash);
                        for (int i = 0; i < bsz; ++i)
                          std::copy_n(g.data() + static_cast<int64_t>(i) * (ca + cb) * plane,
                                      ca * plane, da.data() + i * ca * plane);
                        parts[0] = da;
                      }
                      if (need[1]) {
                        Tensor db(bsh);
                        for (int i = 0; i < bsz; ++i)
                          std::copy_n(g.data() + (static_cast<int64_t>(i) * (ca + cb) + ca) * plane,
                                      cb * plane, db.data() + i * cb * plane);
                        parts[1] = db;
                      }
                      return parts;
                    });
  return out;
}

// ======================================================================
//  Backward traversal
// ======================================================================

inline std::unordered_map<int, Tensor> Tape::backward(const Tensor& root) const {
  check(root.size() == 1, "backward: root must be a scalar, got " + shape_str(root.shape()));
  check(root.node < 0 || root.tape == this, "backward: root recorded on a different tape");
  std::vector<Tensor> grads(nodes_.size());
  if (root.tape == this && root.node >= 0) {
    TapePause pause;  // gradient math must not re-record
    grads[static_cast<size_t>(root.node)] = Tensor::scalar(1.0f);
    for (int id = root.node; id >= 0; --id) {
      const Tensor& gout = grads[static_cast<size_t>(id)];
      if (!gout.defined()) continue;
      const Record& rec = nodes_[static_cast<size_t>(id)];
      if (!rec.backward) continue;  // leaf
      std::vector<bool> need(rec.parents.size());
      for (size_t i = 0; i < rec.parents.size(); ++i) need[i] = rec.parents[i] >= 0;
      std::vector<Tensor> parts = rec.backward(gout, need);
      for (size_t i = 0; i < rec.parents.size(); ++i) {
        int p = rec.parents[i];
        if (p < 0 || !parts[i].defined()) continue;
        Tensor& slot = grads[static_cast<size_t>(p)];
        // Accumulate copy-on-write: contributions may alias grad_out.
        slot = slot.defined() ? add(slot, parts[i]) : parts[i];
      }
    }
  }
  std::unordered_map<int, Tensor> out;
  for (size_t id = 0; id < nodes_.size(); ++id)
    if (grads[id].defined()) out.emplace(static_cast<int>(id), grads[id]);
  for (int leaf : leaves_)
    if (!out.count(leaf)) out.emplace(leaf, Tensor(nodes_[static_cast<size_t>(leaf)].shape));
  return out;
}

inline std::unordered_map<int, Tensor> backward(const Tensor& root) {
  const Tape* t = root.tape ? root.tape : Tape::active();
  check(t != nullptr, "backward: no tape associated with root and none active");
  return t->backward(root);
}

// ======================================================================
//  Gradient checking
// ======================================================================

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool finite = true;      // false if any NaN/Inf was seen
  int64_t bad_index = -1;  // offending flat index when !finite
  int64_t checked = 0;
};

// Compares reverse-mode gradients of a scalar-valued f against central
// differences on a sampled index subset. Relative error uses
// max(|analytic|, |numeric|, 1e-8) as denominator.
//
// Index selection: descending analytic magnitude, skipping components
// below 5% of the dominant one. In 32-bit a component near zero
// measures only forward rounding noise at eps=1e-3, so the large
// components carry the signal; if the analytic gradient is identically
// zero a uniform random subset is probed instead, which still catches
// a backward that silently returns zeros.
inline GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                                  float eps = 1e-3f, int max_probes = 64,
                                  uint64_t seed = 0x5eedULL) {
  check(eps > 0.0f, "grad_check: eps must be positive");
  GradCheckResult res;

  Tensor analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor xt = x.clone();
    tape.watch(xt);
    Tensor y = f(xt);
    check(y.size() == 1, "grad_check: f must return a scalar");
    if (!std::isfinite(y[0])) {
      res.finite = false;
      res.bad_index = -1;
      return res;
    }
    analytic = tape.backward(y).at(xt.node);
  }

  std::vector<int64_t> probe(static_cast<size_t>(x.size()));
  for (int64_t i = 0; i < x.size(); ++i) probe[static_cast<size_t>(i)] = i;
  bool all_zero = true;
  for (int64_t i = 0; i < analytic.size(); ++i)
    if (analytic[i] != 0.0f) {
      all_zero = false;
      break;
    }
  if (all_zero) {
    Rng rng(seed);
    rng.shuffle(probe);
  } else {
    std::stable_sort(probe.begin(), probe.end(), [&](int64_t a, int64_t b) {
      return std::fabs(analytic[a]) > std::fabs(analytic[b]);
    });
    float cutoff = 0.05f * std::fabs(analytic[probe[0]]);
    size_t keep = 1;
    while (keep < probe.size() && std::fabs(analytic[probe[keep]]) >= cutoff) ++keep;
    probe.resize(keep);
  }
  if (static_cast<int64_t>(probe.size()) > max_probes)
    probe.resize(static_cast<size_t>(max_probes));

  TapePause pause;
  for (int64_t idx : probe) {
    Tensor hi = x.clone();
    hi.data()[idx] += eps;
    Tensor lo = x.clone();
    lo.data()[idx] -= eps;
    float fhi = f(hi)[0];
    float flo = f(lo)[0];
    double numeric = (static_cast<double>(fhi) - static_cast<double>(flo)) / (2.0 * eps);
    double a = analytic[idx];
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      res.finite = false;
      res.bad_index = idx;
      return res;
    }
    double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.checked;
  }
  return res;
}

// Convenience constructors used across tests and tools.
inline Tensor random_uniform(const Shape& shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_normal(const Shape& shape, Rng& rng, float stddev = 1.0f) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal() * stddev;
  return t;
}

}  // namespace mvt
