#include "ssetm/tensor.hpp"

#include <cmath>
#include <utility>

namespace ssetm {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return static_cast<int>(n);
}

// ---- Tensor ---------------------------------------------------------------

static std::shared_ptr<TensorData> make_node(Shape shape, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  for (int dim : shape) {
    if (dim <= 0)
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_str(shape));
  }
  d->shape = std::move(shape);
  d->v.assign(static_cast<size_t>(shape_numel(d->shape)), 0.0);
  d->requires_grad = requires_grad;
  return d;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return Tensor(make_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto d = make_node(std::move(shape), requires_grad);
  for (auto& x : d->v) x = value;
  return Tensor(d);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  auto d = make_node(std::move(shape), requires_grad);
  if (values.size() != d->v.size())
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(d->shape));
  d->v = std::move(values);
  return Tensor(d);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  auto d = make_node(Shape{}, requires_grad);
  d->v[0] = value;
  return Tensor(d);
}

double Tensor::item() const {
  if (!d_ || d_->numel() != 1)
    throw ContractError("item() expects a single-element tensor, got " +
                        (d_ ? shape_str(d_->shape) : std::string("null")));
  return d_->v[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  const Shape& s = d_->shape;
  if (idx.size() != s.size())
    throw DimensionError("index rank mismatch for shape " + shape_str(s));
  int64_t off = 0;
  size_t k = 0;
  for (int i : idx) {
    off = off * s[k] + i;
    ++k;
  }
  return d_->v[static_cast<size_t>(off)];
}

// ---- Tape -----------------------------------------------------------------

static thread_local std::vector<Tape*> t_tape_stack;

Tape::Tape() { t_tape_stack.push_back(this); }

Tape::~Tape() {
  if (!t_tape_stack.empty() && t_tape_stack.back() == this)
    t_tape_stack.pop_back();
}

Tape* Tape::active() {
  return t_tape_stack.empty() ? nullptr : t_tape_stack.back();
}

void Tape::record(std::shared_ptr<TensorData> out, std::function<void()> back) {
  nodes_.push_back(Node{std::move(out), std::move(back)});
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

void backward(const Tensor& loss, bool retain) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError(
        "backward expects a scalar loss, got " +
        (loss.defined() ? shape_str(loss.shape()) : std::string("null")));
  Tape* tape = Tape::active();
  if (tape) {
    // Intermediate grads from any previous replay must not leak into this
    // one; leaves are never tape outputs so their accumulation survives.
    for (auto& n : tape->nodes_) n.out->g.clear();
  }
  loss.node()->ensure_grad();
  loss.node()->g[0] += 1.0;
  if (tape) {
    for (auto it = tape->nodes_.rbegin(); it != tape->nodes_.rend(); ++it) {
      if (!it->out->g.empty()) it->back();
    }
    if (!retain) tape->clear();
  }
}

// ---- broadcast machinery ---------------------------------------------------

namespace detail {

Shape broadcast_shape(const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (size_t i = 0; i < r; ++i) {
    int da = i < a.size() ? a[a.size() - 1 - i] : 1;
    int db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    out[r - 1 - i] = std::max(da, db);
  }
  return out;
}

std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t acc = 1;
  for (size_t i = 0; i < in.size(); ++i) {
    size_t d_in = in.size() - 1 - i;
    size_t d_out = out.size() - 1 - i;
    strides[d_out] = (in[d_in] == 1 && out[d_out] != 1) ? 0 : acc;
    acc *= in[d_in];
  }
  return strides;
}

// Odometer walk over `out`, tracking the linear offsets of two broadcast
// inputs without per-element division.
template <class Fn>
static void walk2(const Shape& out, const std::vector<int64_t>& sa,
                  const std::vector<int64_t>& sb, Fn&& fn) {
  const int r = static_cast<int>(out.size());
  const int64_t n = shape_numel(out);
  std::vector<int> idx(static_cast<size_t>(r), 0);
  int64_t ia = 0, ib = 0;
  for (int64_t io = 0; io < n; ++io) {
    fn(io, ia, ib);
    for (int d = r - 1; d >= 0; --d) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= static_cast<int64_t>(idx[d]) * sa[d];
      ib -= static_cast<int64_t>(idx[d]) * sb[d];
      idx[d] = 0;
    }
  }
}

void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b,
                        const std::function<void(int64_t, int64_t, int64_t)>& fn) {
  walk2(out, broadcast_strides(a, out), broadcast_strides(b, out), fn);
}

}  // namespace detail

// ---- binary elementwise ----------------------------------------------------

namespace {

struct BinOps {
  double (*f)(double, double);
  double (*dfa)(double a, double b, double go);
  double (*dfb)(double a, double b, double go);
};

Tensor binary_op(const Tensor& a, const Tensor& b, const BinOps& ops) {
  Shape out_shape = detail::broadcast_shape(a.shape(), b.shape());
  bool rec = should_record({&a, &b});
  Tensor out = Tensor::zeros(out_shape, rec);

  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();

  if (a.shape() == b.shape()) {
    const double* av = an->v.data();
    const double* bv = bn->v.data();
    double* ov = on->v.data();
    const int64_t n = on->numel();
    for (int64_t i = 0; i < n; ++i) ov[i] = ops.f(av[i], bv[i]);
  } else {
    detail::walk2(out_shape, detail::broadcast_strides(a.shape(), out_shape),
                  detail::broadcast_strides(b.shape(), out_shape),
                  [&](int64_t io, int64_t ia, int64_t ib) {
                    on->v[static_cast<size_t>(io)] =
                        ops.f(an->v[static_cast<size_t>(ia)],
                              bn->v[static_cast<size_t>(ib)]);
                  });
  }

  if (rec) {
    bool need_a = a.requires_grad();
    bool need_b = b.requires_grad();
    Shape os = out_shape, as = a.shape(), bs = b.shape();
    Tape::active()->record(on, [an, bn, on, ops, need_a, need_b, os = std::move(os),
                                as = std::move(as), bs = std::move(bs)]() {
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      detail::walk2(os, detail::broadcast_strides(as, os),
                    detail::broadcast_strides(bs, os),
                    [&](int64_t io, int64_t ia, int64_t ib) {
                      double go = on->g[static_cast<size_t>(io)];
                      double av = an->v[static_cast<size_t>(ia)];
                      double bv = bn->v[static_cast<size_t>(ib)];
                      if (need_a) an->g[static_cast<size_t>(ia)] += ops.dfa(av, bv, go);
                      if (need_b) bn->g[static_cast<size_t>(ib)] += ops.dfb(av, bv, go);
                    });
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  static const BinOps ops{[](double x, double y) { return x + y; },
                          [](double, double, double go) { return go; },
                          [](double, double, double go) { return go; }};
  return binary_op(a, b, ops);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  static const BinOps ops{[](double x, double y) { return x - y; },
                          [](double, double, double go) { return go; },
                          [](double, double, double go) { return -go; }};
  return binary_op(a, b, ops);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  static const BinOps ops{[](double x, double y) { return x * y; },
                          [](double, double y, double go) { return go * y; },
                          [](double x, double, double go) { return go * x; }};
  return binary_op(a, b, ops);
}

Tensor div(const Tensor& a, const Tensor& b) {
  static const BinOps ops{
      [](double x, double y) { return x / y; },
      [](double, double y, double go) { return go / y; },
      [](double x, double y, double go) { return -go * x / (y * y); }};
  return binary_op(a, b, ops);
}

// ---- unary elementwise -----------------------------------------------------

namespace detail {

Tensor unary_op(const Tensor& a, double (*f)(double),
                double (*df)(double, double)) {
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(a.shape(), rec);
  auto an = a.node();
  auto on = out.node();
  const int64_t n = an->numel();
  for (int64_t i = 0; i < n; ++i) on->v[static_cast<size_t>(i)] = f(an->v[static_cast<size_t>(i)]);
  if (rec) {
    Tape::active()->record(on, [an, on, df, n]() {
      an->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        size_t s = static_cast<size_t>(i);
        an->g[s] += df(an->v[s], on->v[s]) * on->g[s];
      }
    });
  }
  return out;
}

}  // namespace detail

Tensor exp(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return std::exp(x); },
                          [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return std::log(x); },
                          [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return std::sqrt(x); },
                          [](double, double y) { return 0.5 / y; });
}

Tensor neg(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return -x; },
                          [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(a.shape(), rec);
  auto an = a.node();
  auto on = out.node();
  const int64_t n = an->numel();
  for (int64_t i = 0; i < n; ++i) on->v[static_cast<size_t>(i)] = an->v[static_cast<size_t>(i)] * c;
  if (rec) {
    Tape::active()->record(on, [an, on, c, n]() {
      an->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        an->g[static_cast<size_t>(i)] += c * on->g[static_cast<size_t>(i)];
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(a.shape(), rec);
  auto an = a.node();
  auto on = out.node();
  const int64_t n = an->numel();
  for (int64_t i = 0; i < n; ++i) on->v[static_cast<size_t>(i)] = an->v[static_cast<size_t>(i)] + c;
  if (rec) {
    Tape::active()->record(on, [an, on, n]() {
      an->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        an->g[static_cast<size_t>(i)] += on->g[static_cast<size_t>(i)];
    });
  }
  return out;
}

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw DimensionError("matmul needs rank >= 2, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const int m = as[as.size() - 2];
  const int k = as[as.size() - 1];
  const int k2 = bs[bs.size() - 2];
  const int n = bs[bs.size() - 1];
  if (k != k2)
    throw DimensionError("matmul inner dimensions disagree: " +
                         shape_str(as) + " x " + shape_str(bs));

  Shape abatch(as.begin(), as.end() - 2);
  Shape bbatch(bs.begin(), bs.end() - 2);
  Shape batch = detail::broadcast_shape(abatch, bbatch);
  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);

  bool rec = should_record({&a, &b});
  Tensor out = Tensor::zeros(out_shape, rec);
  auto an = a.node();
  auto bn = b.node();
  auto on = out.node();

  auto sa = detail::broadcast_strides(abatch, batch);
  auto sb = detail::broadcast_strides(bbatch, batch);
  // Batch strides index whole matrices, not elements.
  const int64_t a_mat = static_cast<int64_t>(m) * k;
  const int64_t b_mat = static_cast<int64_t>(k) * n;
  const int64_t o_mat = static_cast<int64_t>(m) * n;

  auto forward_one = [&](int64_t iob, int64_t iab, int64_t ibb) {
    const double* A = an->v.data() + iab * a_mat;
    const double* B = bn->v.data() + ibb * b_mat;
    double* O = on->v.data() + iob * o_mat;
    for (int i = 0; i < m; ++i) {
      for (int kk = 0; kk < k; ++kk) {
        const double av = A[static_cast<int64_t>(i) * k + kk];
        if (av == 0.0) continue;
        const double* Brow = B + static_cast<int64_t>(kk) * n;
        double* Orow = O + static_cast<int64_t>(i) * n;
        for (int j = 0; j < n; ++j) Orow[j] += av * Brow[j];
      }
    }
  };
  detail::walk2(batch, sa, sb, forward_one);

  if (rec) {
    bool need_a = a.requires_grad();
    bool need_b = b.requires_grad();
    Tape::active()->record(on, [an, bn, on, sa, sb, batch, m, k, n, a_mat,
                                b_mat, o_mat, need_a, need_b]() {
      if (need_a) an->ensure_grad();
      if (need_b) bn->ensure_grad();
      detail::walk2(batch, sa, sb, [&](int64_t iob, int64_t iab, int64_t ibb) {
        const double* A = an->v.data() + iab * a_mat;
        const double* B = bn->v.data() + ibb * b_mat;
        const double* G = on->g.data() + iob * o_mat;
        if (need_a) {
          double* dA = an->g.data() + iab * a_mat;
          // dA = G * B^T
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
              const double go = G[static_cast<int64_t>(i) * n + j];
              if (go == 0.0) continue;
              const double* Brow = B + 0;
              for (int kk = 0; kk < k; ++kk)
                dA[static_cast<int64_t>(i) * k + kk] +=
                    go * Brow[static_cast<int64_t>(kk) * n + j];
            }
        }
        if (need_b) {
          double* dB = bn->g.data() + ibb * b_mat;
          // dB = A^T * G
          for (int kk = 0; kk < k; ++kk)
            for (int i = 0; i < m; ++i) {
              const double av = A[static_cast<int64_t>(i) * k + kk];
              if (av == 0.0) continue;
              const double* Grow = G + static_cast<int64_t>(i) * n;
              double* dBrow = dB + static_cast<int64_t>(kk) * n;
              for (int j = 0; j < n; ++j) dBrow[j] += av * Grow[j];
            }
        }
      });
    });
  }
  return out;
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a) {
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(Shape{}, rec);
  auto an = a.node();
  auto on = out.node();
  double acc = 0.0;
  for (double x : an->v) acc += x;
  on->v[0] = acc;
  if (rec) {
    Tape::active()->record(on, [an, on]() {
      an->ensure_grad();
      const double go = on->g[0];
      for (auto& g : an->g) g += go;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(Shape{}, rec);
  auto an = a.node();
  auto on = out.node();
  const double inv = 1.0 / static_cast<double>(an->numel());
  double acc = 0.0;
  for (double x : an->v) acc += x;
  on->v[0] = acc * inv;
  if (rec) {
    Tape::active()->record(on, [an, on, inv]() {
      an->ensure_grad();
      const double go = on->g[0] * inv;
      for (auto& g : an->g) g += go;
    });
  }
  return out;
}

namespace {

Tensor reduce_last(const Tensor& a, bool keepdim, bool take_mean) {
  if (a.rank() < 1)
    throw DimensionError("reduction over last dimension needs rank >= 1");
  const int d = a.shape().back();
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (keepdim) out_shape.push_back(1);
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(out_shape, rec);
  auto an = a.node();
  auto on = out.node();
  const int64_t rows = an->numel() / d;
  const double inv = take_mean ? 1.0 / d : 1.0;
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = an->v.data() + r * d;
    for (int j = 0; j < d; ++j) acc += row[j];
    on->v[static_cast<size_t>(r)] = acc * inv;
  }
  if (rec) {
    Tape::active()->record(on, [an, on, rows, d, inv]() {
      an->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double go = on->g[static_cast<size_t>(r)] * inv;
        double* grow = an->g.data() + r * d;
        for (int j = 0; j < d; ++j) grow[j] += go;
      }
    });
  }
  return out;
}

}  // namespace

Tensor sum_last(const Tensor& a, bool keepdim) {
  return reduce_last(a, keepdim, false);
}

Tensor mean_last(const Tensor& a, bool keepdim) {
  return reduce_last(a, keepdim, true);
}

Tensor max_last_detached(const Tensor& a, bool keepdim) {
  if (a.rank() < 1)
    throw DimensionError("max over last dimension needs rank >= 1");
  const int d = a.shape().back();
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (keepdim) out_shape.push_back(1);
  Tensor out = Tensor::zeros(out_shape, false);
  auto an = a.node();
  auto on = out.node();
  const int64_t rows = an->numel() / d;
  for (int64_t r = 0; r < rows; ++r) {
    const double* row = an->v.data() + r * d;
    double m = row[0];
    for (int j = 1; j < d; ++j)
      if (row[j] > m) m = row[j];
    on->v[static_cast<size_t>(r)] = m;
  }
  return out;
}

// ---- structural -------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("cannot reshape " + shape_str(a.shape()) + " into " +
                         shape_str(shape));
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(std::move(shape), rec);
  auto an = a.node();
  auto on = out.node();
  on->v = an->v;
  if (rec) {
    Tape::active()->record(on, [an, on]() {
      an->ensure_grad();
      const int64_t n = an->numel();
      for (int64_t i = 0; i < n; ++i)
        an->g[static_cast<size_t>(i)] += on->g[static_cast<size_t>(i)];
    });
  }
  return out;
}

namespace {

std::vector<int64_t> contiguous_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[static_cast<size_t>(i)] = st[static_cast<size_t>(i) + 1] * s[static_cast<size_t>(i) + 1];
  return st;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r)
    throw DimensionError("permute order size must equal rank " +
                         std::to_string(r));
  std::vector<bool> seen(static_cast<size_t>(r), false);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    int p = perm[static_cast<size_t>(i)];
    if (p < 0 || p >= r || seen[static_cast<size_t>(p)])
      throw DimensionError("invalid permutation for rank " + std::to_string(r));
    seen[static_cast<size_t>(p)] = true;
    out_shape[static_cast<size_t>(i)] = a.dim(p);
  }
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(out_shape, rec);
  auto an = a.node();
  auto on = out.node();

  auto in_strides = contiguous_strides(a.shape());
  // Stride of the output walk expressed in input offsets.
  std::vector<int64_t> walk(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i)
    walk[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

  const int64_t n = an->numel();
  {
    std::vector<int> idx(static_cast<size_t>(r), 0);
    int64_t ii = 0;
    for (int64_t io = 0; io < n; ++io) {
      on->v[static_cast<size_t>(io)] = an->v[static_cast<size_t>(ii)];
      for (int d = r - 1; d >= 0; --d) {
        ++idx[static_cast<size_t>(d)];
        ii += walk[static_cast<size_t>(d)];
        if (idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
        ii -= static_cast<int64_t>(idx[static_cast<size_t>(d)]) * walk[static_cast<size_t>(d)];
        idx[static_cast<size_t>(d)] = 0;
      }
    }
  }

  if (rec) {
    Tape::active()->record(on, [an, on, walk, out_shape, r, n]() {
      an->ensure_grad();
      std::vector<int> idx(static_cast<size_t>(r), 0);
      int64_t ii = 0;
      for (int64_t io = 0; io < n; ++io) {
        an->g[static_cast<size_t>(ii)] += on->g[static_cast<size_t>(io)];
        for (int d = r - 1; d >= 0; --d) {
          ++idx[static_cast<size_t>(d)];
          ii += walk[static_cast<size_t>(d)];
          if (idx[static_cast<size_t>(d)] < out_shape[static_cast<size_t>(d)]) break;
          ii -= static_cast<int64_t>(idx[static_cast<size_t>(d)]) * walk[static_cast<size_t>(d)];
          idx[static_cast<size_t>(d)] = 0;
        }
      }
    });
  }
  return out;
}

Tensor gather_last(const Tensor& a, const std::vector<int>& idx) {
  if (a.rank() < 1)
    throw DimensionError("gather_last needs rank >= 1");
  const int d = a.shape().back();
  const int64_t rows = a.numel() / d;
  if (static_cast<int64_t>(idx.size()) != rows)
    throw DimensionError("gather_last index count " +
                         std::to_string(idx.size()) + " != row count " +
                         std::to_string(rows));
  for (int64_t r = 0; r < rows; ++r)
    if (idx[static_cast<size_t>(r)] < 0 || idx[static_cast<size_t>(r)] >= d)
      throw ContractError("gather_last index out of range at row " +
                          std::to_string(r));
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(out_shape, rec);
  auto an = a.node();
  auto on = out.node();
  for (int64_t r = 0; r < rows; ++r)
    on->v[static_cast<size_t>(r)] = an->v[static_cast<size_t>(r * d + idx[static_cast<size_t>(r)])];
  if (rec) {
    Tape::active()->record(on, [an, on, idx, rows, d]() {
      an->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        an->g[static_cast<size_t>(r * d + idx[static_cast<size_t>(r)])] +=
            on->g[static_cast<size_t>(r)];
    });
  }
  return out;
}

Tensor grad_scale(const Tensor& a, double factor) {
  bool rec = should_record({&a});
  Tensor out = Tensor::zeros(a.shape(), rec);
  auto an = a.node();
  auto on = out.node();
  on->v = an->v;
  if (rec) {
    Tape::active()->record(on, [an, on, factor]() {
      an->ensure_grad();
      const int64_t n = an->numel();
      for (int64_t i = 0; i < n; ++i)
        an->g[static_cast<size_t>(i)] += factor * on->g[static_cast<size_t>(i)];
    });
  }
  return out;
}

}  // namespace ssetm
