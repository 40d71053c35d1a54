#include "doctest.h"

#include <cmath>

#include "ssetm/tensor.hpp"
#include "test_util.hpp"

using namespace ssetm;
using testutil::fd_check;
using testutil::rand_tensor;

TEST_CASE("tensor factories and element access") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.rank() == 2);
  CHECK(z.at({1, 2}) == 0.0);

  Tensor f = Tensor::full({2, 2}, 1.5);
  CHECK(f.at({0, 0}) == 1.5);
  CHECK(f.at({1, 1}) == 1.5);

  Tensor v = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(v.at({0, 1}) == 2.0);
  CHECK(v.at({1, 0}) == 3.0);

  Tensor s = Tensor::scalar(7.0);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 7.0);

  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::zeros({2, 0}), DimensionError);
  CHECK_THROWS_AS(v.item(), ContractError);
}

TEST_CASE("elementwise ops broadcast right-aligned") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::from({3}, {10, 20, 30});
  Tensor out = add(a, row);
  CHECK(out.shape() == Shape{2, 3});
  CHECK(out.at({0, 0}) == 11.0);
  CHECK(out.at({1, 2}) == 36.0);

  Tensor col = Tensor::from({2, 1}, {1, 2});
  Tensor prod = mul(col, row);  // outer product
  CHECK(prod.shape() == Shape{2, 3});
  CHECK(prod.at({0, 1}) == 20.0);
  CHECK(prod.at({1, 2}) == 60.0);

  Tensor q = div(a, Tensor::from({3}, {1, 2, 3}));
  CHECK(q.at({1, 1}) == 2.5);

  Tensor d = sub(a, Tensor::scalar(1.0));
  CHECK(d.at({0, 0}) == 0.0);

  CHECK_THROWS_AS(add(a, Tensor::from({2}, {1, 2})), DimensionError);
}

TEST_CASE("scalar helpers and operator overloads") {
  Tensor a = Tensor::from({3}, {1, 2, 3});
  CHECK((a * 2.0).at({1}) == 4.0);
  CHECK((3.0 * a).at({2}) == 9.0);
  CHECK((a + 1.0).at({0}) == 2.0);
  CHECK((-a).at({2}) == -3.0);
  CHECK(neg(a).at({0}) == -1.0);
}

TEST_CASE("reductions compute sums and means") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(sum(a).item() == 21.0);
  CHECK(mean(a).item() == 3.5);

  Tensor sl = sum_last(a, false);
  CHECK(sl.shape() == Shape{2});
  CHECK(sl.at({0}) == 6.0);
  CHECK(sl.at({1}) == 15.0);

  Tensor ml = mean_last(a, true);
  CHECK(ml.shape() == Shape{2, 1});
  CHECK(ml.at({0, 0}) == 2.0);

  Tensor mx = max_last_detached(a, true);
  CHECK(mx.shape() == Shape{2, 1});
  CHECK(mx.at({0, 0}) == 3.0);
  CHECK(mx.at({1, 0}) == 6.0);
}

TEST_CASE("max_last_detached picks the first maximum and carries no grad") {
  Tensor a = Tensor::from({1, 3}, {5, 5, 2}, true);
  Tape tape;
  Tensor mx = max_last_detached(a, false);
  CHECK(mx.at({0}) == 5.0);
  CHECK(tape.size() == 0);  // detached: nothing recorded
}

TEST_CASE("backward on a matrix product matches the adjoint formula") {
  // d/dA sum(A @ B) = ones @ B^T; with B = 2*I every entry is 2.
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  Tensor b = Tensor::from({2, 2}, {2, 0, 0, 2});
  Tape tape;
  Tensor loss = sum(matmul(a, b));
  backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(a.grad_at(i) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("matmul multiplies matrices and broadcasts batch dimensions") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.at({0, 0}) == 58.0);
  CHECK(c.at({0, 1}) == 64.0);
  CHECK(c.at({1, 0}) == 139.0);
  CHECK(c.at({1, 1}) == 154.0);

  // [1,2,3] batched against [4,3,2]: the singleton batch broadcasts.
  Rng rng(11);
  Tensor ba = rand_tensor({1, 2, 3}, rng, -1, 1, false);
  Tensor bb = rand_tensor({4, 3, 2}, rng, -1, 1, false);
  Tensor bc = matmul(ba, bb);
  CHECK(bc.shape() == Shape{4, 2, 2});
  // Spot check one batch element against the unbatched product.
  double expect = 0.0;
  for (int k = 0; k < 3; ++k) expect += ba.at({0, 1, k}) * bb.at({2, k, 0});
  CHECK(bc.at({2, 1, 0}) == doctest::Approx(expect).epsilon(1e-12));

  CHECK_THROWS_AS(matmul(a, Tensor::from({2, 2}, {1, 2, 3, 4})), DimensionError);
  CHECK_THROWS_AS(matmul(Tensor::from({3}, {1, 2, 3}), b), DimensionError);
}

TEST_CASE("gradients flow through matmul with broadcast batches") {
  Rng rng(3);
  Tensor a = rand_tensor({1, 2, 3}, rng);
  Tensor b = rand_tensor({4, 3, 2}, rng);
  auto loss = [&] { return sum(mul(matmul(a, b), matmul(a, b))); };
  auto rep = fd_check(loss, {a, b});
  CHECK(rep.max_rel_err < 1e-7);
}

TEST_CASE("leaves accumulate gradients across uses and across backward calls") {
  Tensor x = Tensor::from({2}, {3, 4}, true);
  Tape tape;
  Tensor y = add(x, x);  // x feeds two edges
  Tensor loss = sum(y);
  backward(loss, /*retain=*/true);
  CHECK(x.grad_at(0) == 2.0);
  CHECK(x.grad_at(1) == 2.0);

  // A second replay accumulates on the leaf without double-counting the
  // intermediate node.
  backward(loss, /*retain=*/true);
  CHECK(x.grad_at(0) == 4.0);
  CHECK(x.grad_at(1) == 4.0);

  x.zero_grad();
  CHECK(x.grad_at(0) == 0.0);
}

TEST_CASE("backward requires a scalar loss and an active tape") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    Tape tape;
    Tensor y = add(x, x);
    CHECK_THROWS_AS(backward(y), ContractError);
  }
}

TEST_CASE("ops record only when a tape is active and an input needs grad") {
  Tensor a = Tensor::from({2}, {1, 2}, true);
  Tensor b = Tensor::from({2}, {3, 4});
  {
    Tape tape;
    add(a, b);
    CHECK(tape.size() == 1);
    add(b, b);  // no input requires grad
    CHECK(tape.size() == 1);
  }
  // No active tape: runs as a plain forward computation.
  Tensor c = add(a, b);
  CHECK(c.at({0}) == 4.0);
}

TEST_CASE("broadcast gradients reduce over expanded axes") {
  // loss = sum(col * row): d/d(row_j) = sum_i col_i, d/d(col_i) = sum_j row_j.
  Tensor col = Tensor::from({2, 1}, {1, 2}, true);
  Tensor row = Tensor::from({3}, {10, 20, 30}, true);
  Tape tape;
  backward(sum(mul(col, row)));
  CHECK(col.grad_at(0) == 60.0);
  CHECK(col.grad_at(1) == 60.0);
  CHECK(row.grad_at(0) == 3.0);
  CHECK(row.grad_at(2) == 3.0);
}

TEST_CASE("unary math ops match finite differences") {
  Rng rng(5);
  Tensor x = rand_tensor({2, 3}, rng, 0.2, 2.0);  // positive for log/sqrt
  auto rep = fd_check([&] { return sum(mul(log(x), sqrt(x))); }, {x});
  CHECK(rep.max_rel_err < 1e-7);

  Tensor y = rand_tensor({4}, rng, -1.0, 1.0);
  auto rep2 = fd_check([&] { return sum(exp(neg(y))); }, {y});
  CHECK(rep2.max_rel_err < 1e-7);
}

TEST_CASE("division gradients match finite differences") {
  Rng rng(6);
  Tensor a = rand_tensor({2, 3}, rng, -1.0, 1.0);
  Tensor b = rand_tensor({3}, rng, 1.0, 2.0);  // bounded away from zero
  auto rep = fd_check([&] { return sum(div(a, b)); }, {a, b});
  CHECK(rep.max_rel_err < 1e-7);
}

TEST_CASE("reshape preserves values and routes gradients") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor r = reshape(a, {3, 2});
  CHECK(r.at({2, 1}) == 6.0);
  CHECK_THROWS_AS(reshape(a, {4, 2}), DimensionError);

  auto rep = fd_check([&] { return sum(mul(reshape(a, {6}), reshape(a, {6}))); }, {a});
  CHECK(rep.max_rel_err < 1e-7);
}

TEST_CASE("permute reorders axes and transposes gradients back") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor t = permute(a, {1, 0});
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.at({0, 1}) == 4.0);
  CHECK(t.at({2, 0}) == 3.0);

  Rng rng(7);
  Tensor x = rand_tensor({2, 3, 4}, rng);
  Tensor w = rand_tensor({2, 4, 3}, rng, -1, 1, false);
  auto rep = fd_check([&] { return sum(mul(permute(x, {0, 2, 1}), w)); }, {x});
  CHECK(rep.max_rel_err < 1e-7);

  CHECK_THROWS_AS(permute(a, {0}), DimensionError);
  CHECK_THROWS_AS(permute(a, {0, 0}), DimensionError);
}

TEST_CASE("gather_last selects one entry per row and scatters gradients") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  Tensor g = gather_last(a, {2, 0});
  CHECK(g.shape() == Shape{2});
  CHECK(g.at({0}) == 3.0);
  CHECK(g.at({1}) == 4.0);

  Tape tape;
  backward(sum(gather_last(a, {2, 0})));
  CHECK(a.grad_at(2) == 1.0);
  CHECK(a.grad_at(3) == 1.0);
  CHECK(a.grad_at(0) == 0.0);

  CHECK_THROWS_AS(gather_last(a, {3, 0}), ContractError);
  CHECK_THROWS_AS(gather_last(a, {0}), DimensionError);
}

TEST_CASE("grad_scale is the identity forward and scales the gradient") {
  Tensor x = Tensor::from({2}, {5, -3}, true);
  Tensor y = grad_scale(x, 0.1);
  CHECK(y.at({0}) == 5.0);
  CHECK(y.at({1}) == -3.0);

  Tape tape;
  backward(sum(grad_scale(x, 0.1)));
  CHECK(x.grad_at(0) == 0.1);
  CHECK(x.grad_at(1) == 0.1);

  // Downstream of the node the graph is untouched: the scaled leaf gradient
  // is exactly factor times the incoming one.
  Tensor w = Tensor::from({2}, {2, 7}, true);
  {
    Tape t2;
    backward(sum(mul(grad_scale(w, 0.25), Tensor::from({2}, {4, 8}))));
  }
  CHECK(w.grad_at(0) == 0.25 * 4.0);
  CHECK(w.grad_at(1) == 0.25 * 8.0);
}

TEST_CASE("a composite expression passes a full finite-difference sweep") {
  Rng rng(9);
  Tensor a = rand_tensor({2, 4}, rng, 0.5, 1.5);
  Tensor b = rand_tensor({4, 3}, rng, -1.0, 1.0);
  Tensor c = rand_tensor({3}, rng, 1.0, 2.0);
  auto loss = [&] {
    Tensor h = matmul(log(a), b);
    Tensor y = div(exp(h), c);
    return mean(mul(y, y));
  };
  auto rep = fd_check(loss, {a, b, c});
  CHECK(rep.checked == 8 + 12 + 3);
  CHECK(rep.max_rel_err < 1e-6);
}
