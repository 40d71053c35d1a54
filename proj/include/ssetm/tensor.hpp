#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssetm/errors.hpp"

namespace ssetm {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int shape_numel(const Shape& s);

// Values plus an optional gradient buffer. Ops allocate a fresh node per
// result; gradients are allocated lazily the first time backward touches a
// node, so untouched side branches cost nothing.
struct TensorData {
  Shape shape;
  std::vector<double> v;
  std::vector<double> g;
  bool requires_grad = false;

  int numel() const { return static_cast<int>(v.size()); }
  void ensure_grad() {
    if (g.empty()) g.assign(v.size(), 0.0);
  }
};

// Value-semantics handle onto a shared TensorData node. Copying a Tensor
// aliases the same storage. Values are treated as immutable once an op has
// consumed them; parameter updates happen between tapes, never inside one.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<size_t>(i)]; }
  int numel() const { return d_->numel(); }
  bool requires_grad() const { return d_ && d_->requires_grad; }

  std::span<const double> values() const { return d_->v; }
  std::span<double> values_mut() { return d_->v; }
  // Empty span means "no gradient accumulated", i.e. all zeros.
  std::span<const double> grad() const {
    return d_ ? std::span<const double>(d_->g) : std::span<const double>();
  }
  double grad_at(int i) const { return d_->g.empty() ? 0.0 : d_->g[static_cast<size_t>(i)]; }
  void zero_grad() {
    if (d_) d_->g.clear();
  }

  double item() const;
  double at(std::initializer_list<int> idx) const;

  std::shared_ptr<TensorData> node() const { return d_; }

 private:
  std::shared_ptr<TensorData> d_;
};

// Dynamic tape of backward closures in recording order. Constructing a Tape
// makes it the active tape for the current thread (tapes nest LIFO), so
// independent tapes may run on separate threads without sharing state.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::shared_ptr<TensorData> out, std::function<void()> back);
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  friend void backward(const Tensor&, bool);
  struct Node {
    std::shared_ptr<TensorData> out;
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and replays the active tape in reverse, visiting
// each recorded node once. Gradients accumulate additively, so a leaf used in
// several places receives the sum of its path contributions. The tape is
// cleared afterwards unless retain is set.
void backward(const Tensor& loss, bool retain = false);

// True when an op with these inputs must record a backward closure.
bool should_record(std::initializer_list<const Tensor*> inputs);

// ---- elementwise and structural ops -------------------------------------

// Binary ops broadcast right-aligned: trailing dimensions must match or be 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor neg(const Tensor& a);

// Matrix product on the two trailing dimensions; leading batch dimensions
// broadcast right-aligned like elementwise ops.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_last(const Tensor& a, bool keepdim);
Tensor mean_last(const Tensor& a, bool keepdim);
// Row maxima over the last dimension, detached from the graph. Meant for
// numerical-stability shifts (softmax/logsumexp are shift-invariant, so the
// true derivative through the shift is zero and detaching is exact).
Tensor max_last_detached(const Tensor& a, bool keepdim);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);

// out[..] = a[.., idx[..]] where idx has a's shape minus the last dimension.
Tensor gather_last(const Tensor& a, const std::vector<int>& idx);

// Identity forward; multiplies the gradient by `factor` on the way back.
Tensor grad_scale(const Tensor& a, double factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }
inline Tensor operator+(const Tensor& a, double c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

namespace detail {

// Generic unary elementwise op: f computes the value, df(x, y) the local
// derivative given input x and output y. Function pointers (not closures)
// keep these allocation-free on the hot path.
Tensor unary_op(const Tensor& a, double (*f)(double),
                double (*df)(double, double));

// Right-aligned broadcast result shape; throws DimensionError on mismatch.
Shape broadcast_shape(const Shape& a, const Shape& b);

// Strides of `in` aligned to a broadcast output shape (0 on broadcast axes).
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out);

// Calls fn(out_index, a_index, b_index) for every element of `out`.
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b,
                        const std::function<void(int64_t, int64_t, int64_t)>& fn);

}  // namespace detail

}  // namespace ssetm
