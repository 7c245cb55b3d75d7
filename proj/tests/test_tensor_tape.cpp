#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "dvsa/rng.hpp"
#include "dvsa/tape.hpp"
#include "dvsa/tensor.hpp"

using namespace dvsa;

namespace {

// Central finite differences of a scalar tape function w.r.t. one leaf input.
template <typename BuildLoss>
void check_gradient(Tensor input, BuildLoss build, double eps = 1e-6, double tol = 1e-6) {
  Tape tape;
  Var x = tape.leaf(input);
  Var loss = build(tape, x);
  tape.backward(loss);
  Tensor analytic = x.grad();
  for (std::size_t i = 0; i < input.size(); ++i) {
    double keep = input.data[i];
    input.data[i] = keep + eps;
    Tape hi_tape;
    double hi = build(hi_tape, hi_tape.leaf(input)).value().data[0];
    input.data[i] = keep - eps;
    Tape lo_tape;
    double lo = build(lo_tape, lo_tape.leaf(input)).value().data[0];
    input.data[i] = keep;
    double numeric = (hi - lo) / (2 * eps);
    CHECK(std::abs(analytic.data[i] - numeric) / std::max(1.0, std::abs(numeric)) < tol);
  }
}

Tensor random_tensor(std::size_t r, std::size_t c, std::uint64_t seed) {
  auto rng = make_rng(seed);
  return uniform_tensor(r, c, -1.0, 1.0, rng);
}

}  // namespace

TEST_CASE("matmul identity and selector") {
  Tape tape;
  Var i2 = tape.leaf(Tensor::identity(2));
  Var m = tape.leaf(Tensor(2, 2, {1, 2, 3, 4}));
  Tensor out = matmul(i2, m).value();
  CHECK(out.data == std::vector<double>{1, 2, 3, 4});

  Var sel = tape.leaf(Tensor(2, 2, {1, 0, 0, 0}));
  Var v = tape.leaf(Tensor(2, 1, {5, 7}));
  Tensor picked = matmul(sel, v).value();
  CHECK(picked.data == std::vector<double>{5, 0});
}

TEST_CASE("matmul shape error names both shapes") {
  Tape tape;
  Var a = tape.leaf(Tensor(2, 3));
  Var b = tape.leaf(Tensor(4, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences on random 3x4 * 4x2") {
  Tensor a = random_tensor(3, 4, 11);
  Tensor b = random_tensor(4, 2, 12);
  check_gradient(a, [&](Tape& t, Var x) { return sum_all(softmax_rows(matmul(x, t.leaf(b)))); });
  check_gradient(b, [&](Tape& t, Var x) { return sum_all(softmax_rows(matmul(t.leaf(a), x))); });
}

TEST_CASE("matmul associativity on random conforming triples") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tensor a = random_tensor(3, 4, 100 + seed);
    Tensor b = random_tensor(4, 5, 200 + seed);
    Tensor c = random_tensor(5, 2, 300 + seed);
    Tensor left = matmul_plain(matmul_plain(a, b), c);
    Tensor right = matmul_plain(a, matmul_plain(b, c));
    for (std::size_t i = 0; i < left.size(); ++i)
      CHECK(left.data[i] == doctest::Approx(right.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("softmax_rows uniform and analytic cases") {
  Tensor zeros(1, 4, 0.0);
  Tensor u = softmax_rows_plain(zeros);
  for (double v : u.data) CHECK(v == doctest::Approx(0.25));

  Tensor two(1, 2, {0.0, std::log(3.0)});
  Tensor p = softmax_rows_plain(two);
  CHECK(p.data[0] == doctest::Approx(0.25));
  CHECK(p.data[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax_rows rows sum to 1, including large-magnitude rows") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = make_rng(seed, 7);
    Tensor x = uniform_tensor(5, 7, -1e4, 1e4, rng);
    Tensor y = softmax_rows_plain(x);
    for (std::size_t r = 0; r < y.n_rows; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < y.n_cols; ++c) sum += y.at(r, c);
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("softmax_rows Jacobian matches finite differences on random 5x7") {
  Tensor x = random_tensor(5, 7, 42);
  // weight the outputs to probe the whole Jacobian, not just the (zero) row sums
  Tensor w = random_tensor(5, 7, 43);
  check_gradient(x, [&](Tape&, Var v) { return sum_all(mul_const(softmax_rows(v), w)); });
}

TEST_CASE("cosine trivial cases and scale invariance") {
  Tensor u(1, 3, {1, 2, 3});
  CHECK(cosine(u, u) == doctest::Approx(1.0));
  Tensor e1(1, 2, {1, 0}), e2(1, 2, {0, 1});
  CHECK(cosine(e1, e2) == doctest::Approx(0.0));
  Tensor nu(1, 3, {-1, -2, -3});
  CHECK(cosine(u, nu) == doctest::Approx(-1.0));

  Tensor zero(1, 3, 0.0);
  CHECK_THROWS_AS(cosine(u, zero), DegenerateInputError);

  auto rng = make_rng(5);
  for (int i = 0; i < 10; ++i) {
    Tensor a = uniform_tensor(1, 6, -1, 1, rng);
    Tensor b = uniform_tensor(1, 6, -1, 1, rng);
    Tensor a2 = a, b2 = b;
    for (double& v : a2.data) v *= 3.7;
    for (double& v : b2.data) v *= 0.02;
    CHECK(std::abs(cosine(a, b) - cosine(a2, b2)) < 1e-12);
  }
}

TEST_CASE("gap means rows; single region is identity") {
  Tensor f(2, 2, {2, 4, 4, 8});
  Tensor g = gap(f);
  CHECK(g.data[0] == doctest::Approx(3.0));
  CHECK(g.data[1] == doctest::Approx(6.0));

  Tensor one(1, 3, {7, 8, 9});
  CHECK(gap(one).data == one.data);

  CHECK_THROWS_AS(gap(Tensor(0, 3)), DegenerateInputError);
}

TEST_CASE("gap gradient of sum is 1/D everywhere") {
  Tensor f = random_tensor(7, 5, 77);
  Tape tape;
  Var x = tape.leaf(f);
  Var loss = sum_all(mean_rows(x));
  tape.backward(loss);
  for (double g : x.grad().data) CHECK(g == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("elementwise ops match finite differences") {
  Tensor x = random_tensor(3, 5, 9);
  for (double& v : x.data) v = std::abs(v) + 0.5;  // keep log well-posed
  check_gradient(x, [&](Tape&, Var v) { return sum_all(log_elem(v)); });
  check_gradient(x, [&](Tape&, Var v) { return sum_all(softplus(scale(v, 2.0))); });
  check_gradient(x, [&](Tape&, Var v) { return sum_all(exp_clamp(v, 20.0)); });
  Tensor y = random_tensor(3, 5, 10);
  check_gradient(x, [&](Tape& t, Var v) { return sum_all(mul(v, t.leaf(y))); });
  check_gradient(x, [&](Tape& t, Var v) { return mean_all(concat_cols(v, t.leaf(y))); });
}

TEST_CASE("exp_clamp caps the value and counts hits") {
  Tape tape;
  Var x = tape.leaf(Tensor(1, 2, {25.0, 1.0}));
  Var y = exp_clamp(x, 20.0);
  CHECK(y.value().data[0] == doctest::Approx(std::exp(20.0)));
  CHECK(tape.exp_clamp_hits == 1);
  tape.backward(sum_all(y));
  CHECK(x.grad().data[0] == 0.0);  // flat past the cap
  CHECK(x.grad().data[1] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("cosine_matrix values and gradient") {
  Tensor a = random_tensor(3, 4, 21);
  Tensor b = random_tensor(5, 4, 22);
  Tape tape;
  Var c = cosine_matrix(tape.leaf(a), tape.leaf(b));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      Tensor ai(1, 4), bj(1, 4);
      std::copy(a.row(i), a.row(i) + 4, ai.data.begin());
      std::copy(b.row(j), b.row(j) + 4, bj.data.begin());
      CHECK(c.value().at(i, j) == doctest::Approx(cosine(ai, bj)));
    }
  Tensor w = random_tensor(3, 5, 23);
  check_gradient(a, [&](Tape& t, Var v) {
    return sum_all(mul_const(cosine_matrix(v, t.leaf(b)), w));
  });
  check_gradient(b, [&](Tape& t, Var v) {
    return sum_all(mul_const(cosine_matrix(t.leaf(a), v), w));
  });
}

TEST_CASE("gather_rows scatters gradients back to sources") {
  Tensor a = random_tensor(4, 3, 31);
  Tensor w = random_tensor(3, 3, 32);
  check_gradient(a, [&](Tape& t, Var v) {
    Var g = gather_rows(t, {{v, 2}, {v, 0}, {v, 2}});
    return sum_all(mul_const(g, w));
  });
}

TEST_CASE("attention-shaped composite gradient (matmul_nt, softmax, residual)") {
  Tensor q = random_tensor(3, 4, 51);
  Tensor k = random_tensor(6, 4, 52);
  Tensor v = random_tensor(6, 4, 53);
  check_gradient(q, [&](Tape& t, Var x) {
    Var attn = softmax_rows(scale(matmul_nt(x, t.leaf(k)), 0.5));
    return sum_all(softplus(add(matmul(attn, t.leaf(v)), x)));
  }, 1e-6, 1e-5);
}
