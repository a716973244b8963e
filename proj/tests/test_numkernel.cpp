#include "doctest.h"
#include "rankedcl/numkernel.hpp"
#include "rankedcl/tape.hpp"
#include "test_util.hpp"

using namespace rankedcl;
using rankedcl::testing::random_matrix;

TEST_CASE("matmul examples") {
  Rng rng(1);
  const Matrix a = random_matrix(rng, 3, 4);
  CHECK(matmul(Matrix::Identity(3, 3), a) == a);
  CHECK(matmul(a, Matrix::Zero(4, 2)).isZero(0.0));

  Matrix x(2, 2), y(2, 1);
  x << 1, 2, 3, 4;
  y << 5, 6;
  const Matrix p = matmul(x, y);
  CHECK(p(0, 0) == 17.0);
  CHECK(p(1, 0) == 39.0);

  CHECK_THROWS_AS(matmul(x, Matrix::Zero(3, 1)), ShapeError);
}

TEST_CASE("matmul is associative on random triples") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Matrix a = random_matrix(rng, 4, 5), b = random_matrix(rng, 5, 3), c = random_matrix(rng, 3, 6);
    CHECK((matmul(matmul(a, b), c) - matmul(a, matmul(b, c))).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("l2_normalize_rows") {
  Matrix unit(1, 3);
  unit << 1, 0, 0;
  CHECK(l2_normalize_rows(unit) == unit);

  Matrix v(1, 2);
  v << 3, 4;
  const Matrix n = l2_normalize_rows(v);
  CHECK(n(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.8).epsilon(1e-15));

  CHECK_THROWS_AS(l2_normalize_rows(Matrix::Zero(1, 2)), DegenerateInputError);

  Rng rng(3);
  const Matrix r = random_matrix(rng, 20, 7);
  const Matrix once = l2_normalize_rows(r);
  for (Eigen::Index i = 0; i < once.rows(); ++i) CHECK(std::abs(once.row(i).norm() - 1.0) < 1e-12);
  CHECK((l2_normalize_rows(once) - once).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("finite_diff_grad on closed forms") {
  Rng rng(4);
  const Matrix x = random_matrix(rng, 3, 4);
  const Matrix g_sum = finite_diff_grad([](const Matrix& m) { return m.sum(); }, x, 1e-5);
  CHECK((g_sum.array() - 1.0).abs().maxCoeff() < 1e-9);

  const Matrix g_sq = finite_diff_grad([](const Matrix& m) { return 0.5 * m.squaredNorm(); }, x, 1e-5);
  CHECK((g_sq - x).cwiseAbs().maxCoeff() < 1e-8);

  CHECK_THROWS_AS(finite_diff_grad([](const Matrix& m) { return m.sum(); }, x, 0.0), ValidationError);
}

TEST_CASE("relative error floor") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(0.0, 1e-12) == doctest::Approx(1e-4));
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("matrix json round trip keeps row-major order") {
  Matrix m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const auto j = matrix_to_json(m);
  CHECK(j["data"] == nlohmann::json({1.0, 2.0, 3.0, 4.0, 5.0, 6.0}));
  CHECK(matrix_from_json(j) == m);
  CHECK_THROWS_AS(matrix_from_json(nlohmann::json{{"rows", 2}, {"cols", 2}, {"data", {1, 2, 3}}}), ValidationError);
}

namespace {

// sum(tanh(relu(h)) ⊙ c) + ½‖normalize(h) ⊙ c‖² − 0.3 sum(h), h = x W + b
struct Composite {
  Matrix w, b, c;
  double eval(GradTape& tape, GradTape::Var x, GradTape::Var* out = nullptr) const {
    auto vw = tape.leaf(w);
    auto vb = tape.leaf(b);
    auto vc = tape.leaf(c);
    auto h = tape.add_row_bias(tape.matmul(x, vw), vb);
    auto a = tape.tanh(tape.relu(h));
    auto t1 = tape.sum(tape.hadamard(a, vc));
    auto t2 = tape.half_squared_norm(tape.hadamard(tape.l2_normalize_rows(h), vc));
    auto loss = tape.add(t1, tape.add(t2, tape.sum(tape.scale(h, -0.3))));
    if (out) *out = loss;
    return tape.scalar(loss);
  }
};

}  // namespace

TEST_CASE("tape gradient agrees with finite differences on composites") {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Composite f{random_matrix(rng, 4, 5), random_matrix(rng, 1, 5), random_matrix(rng, 3, 5)};
    const Matrix x = random_matrix(rng, 3, 4);
    GradTape tape;
    auto vx = tape.leaf(x);
    GradTape::Var out = vx;
    f.eval(tape, vx, &out);
    tape.backward(out);
    const Matrix fd = finite_diff_grad(
        [&](const Matrix& probe) {
          GradTape t;
          return f.eval(t, t.leaf(probe));
        },
        x, 1e-5);
    worst = std::max(worst, max_relative_error(tape.grad(vx), fd));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("softmax cross entropy gradient") {
  Rng rng(6);
  const Matrix logits = random_matrix(rng, 5, 3, -2, 2);
  const std::vector<int> labels{0, 2, 1, 1, 0};
  GradTape tape;
  auto v = tape.leaf(logits);
  auto loss = tape.softmax_cross_entropy(v, labels);
  tape.backward(loss);
  const Matrix fd = finite_diff_grad(
      [&](const Matrix& probe) {
        GradTape t;
        return t.scalar(t.softmax_cross_entropy(t.leaf(probe), labels));
      },
      logits, 1e-5);
  CHECK(max_relative_error(tape.grad(v), fd) < 1e-4);
}

TEST_CASE("backward visits nodes in reverse order and leaves unused outputs at zero") {
  GradTape tape;
  auto x = tape.leaf(Matrix::Ones(2, 2));
  auto unused = tape.scale(x, 3.0);
  auto y = tape.sum(tape.scale(x, 2.0));
  tape.backward(y);
  CHECK(tape.last_backward_order() == std::vector<std::size_t>{3, 2, 1, 0});
  CHECK(tape.grad(unused).isZero(0.0));
  CHECK((tape.grad(x).array() == 2.0).all());
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}
