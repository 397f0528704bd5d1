#include "grad_check.hpp"

using namespace vlafp;
using Catch::Approx;
using testing::max_op_gradient_error;
using testing::random_matrix;

TEST_CASE("elementwise and linear ops pass finite differences") {
  Rng rng(1);
  const auto a = random_matrix<double>(3, 4, rng), b = random_matrix<double>(4, 2, rng), c = random_matrix<double>(3, 4, rng);
  const auto bias = random_matrix<double>(1, 4, rng);
  REQUIRE(max_op_gradient_error({a, b}, [](auto& t, auto& x) { return ad::matmul(t, x[0], x[1]); }) < 1e-8);
  REQUIRE(max_op_gradient_error({a, c}, [](auto& t, auto& x) { return ad::add(t, x[0], x[1]); }) < 1e-8);
  REQUIRE(max_op_gradient_error({a, bias}, [](auto& t, auto& x) { return ad::add_row(t, x[0], x[1]); }) < 1e-8);
  REQUIRE(max_op_gradient_error({a, c}, [](auto& t, auto& x) { return ad::hadamard(t, x[0], x[1]); }) < 1e-8);
  REQUIRE(max_op_gradient_error({a}, [](auto& t, auto& x) { return ad::silu(t, x[0]); }) < 1e-8);
  REQUIRE(max_op_gradient_error({a}, [](auto& t, auto& x) { return ad::l2_normalize_rows(t, x[0]); }) < 1e-8);
  REQUIRE(max_op_gradient_error({a}, [](auto& t, auto& x) { return ad::reshape(t, x[0], 2, 6); }) < 1e-8);
}

TEST_CASE("rms norm gradient and values") {
  Rng rng(2);
  const auto x = random_matrix<double>(5, 6, rng);
  const auto g = random_matrix<double>(1, 6, rng);
  REQUIRE(max_op_gradient_error({x, g}, [](auto& t, auto& in) { return ad::rms_norm(t, in[0], in[1], 1e-6); }) < 1e-7);

  ad::Tape<double> t;
  Matrix<double> v(1, 2);
  v << 3.0, 4.0;
  const auto y = t.value(ad::rms_norm(t, t.constant(v), t.constant(Matrix<double>::Ones(1, 2)), 0.0));
  REQUIRE(y(0, 0) == Approx(3.0 / std::sqrt(12.5)).epsilon(1e-12));
  REQUIRE(y(0, 1) == Approx(4.0 / std::sqrt(12.5)).epsilon(1e-12));
  REQUIRE(y(0, 0) == Approx(0.8485).margin(1e-4));

  const auto ones = t.value(ad::rms_norm(t, t.constant(Matrix<double>::Ones(2, 5)), t.constant(Matrix<double>::Ones(1, 5)), 1e-12));
  REQUIRE((ones.array() - 1.0).abs().maxCoeff() < 1e-9);
  const auto r = t.value(ad::rms_norm(t, t.constant(x), t.constant(Matrix<double>::Ones(1, 6)), 1e-6));
  for (Eigen::Index i = 0; i < r.rows(); ++i) REQUIRE(std::abs(std::sqrt(r.row(i).squaredNorm() / 6.0) - 1.0) < std::sqrt(1e-6));
}

TEST_CASE("silu values") {
  ad::Tape<double> t;
  Matrix<double> v(1, 2);
  v << 0.0, 1.0;
  const auto y = t.value(ad::silu(t, t.constant(v)));
  REQUIRE(y(0, 0) == 0.0);
  REQUIRE(y(0, 1) == Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  REQUIRE(y(0, 1) == Approx(0.7311).margin(1e-4));
}

TEST_CASE("attention matches a scalar computation") {
  Rng rng(3);
  const auto q = random_matrix<double>(3, 2, rng), k = random_matrix<double>(3, 2, rng), v = random_matrix<double>(3, 2, rng);
  ad::Tape<double> t;
  const std::vector<AttentionBlock> all{{{0, 3}, {0, 3}}};
  const auto out = t.value(ad::attention(t, t.constant(q), t.constant(k), t.constant(v), all, 1, 2));
  for (int i = 0; i < 3; ++i) {
    double s[3], total = 0.0;
    for (int j = 0; j < 3; ++j) {
      s[j] = std::exp((q(i, 0) * k(j, 0) + q(i, 1) * k(j, 1)) / std::sqrt(2.0));
      total += s[j];
    }
    for (int c = 0; c < 2; ++c) {
      double expect = 0.0;
      for (int j = 0; j < 3; ++j) expect += s[j] / total * v(j, c);
      REQUIRE(out(i, c) == Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention with one key returns the value row") {
  Rng rng(4);
  const auto q = random_matrix<double>(1, 4, rng), v = random_matrix<double>(1, 4, rng);
  ad::Tape<double> t;
  const std::vector<AttentionBlock> one{{{0, 1}, {0, 1}}};
  const auto out = t.value(ad::attention(t, t.constant(q), t.constant(q), t.constant(v), one, 2, 2));
  REQUIRE((out - v).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("block masked multi-head attention gradients") {
  Rng rng(5);
  const auto q = random_matrix<double>(6, 6, rng), k = random_matrix<double>(7, 6, rng), v = random_matrix<double>(7, 6, rng);
  const std::vector<AttentionBlock> mask{{{0, 2}, {0, 3}}, {{2, 4}, {3, 4}}};
  REQUIRE(max_op_gradient_error({q, k, v}, [&](auto& t, auto& x) { return ad::attention(t, x[0], x[1], x[2], mask, 3, 2); }) < 1e-7);
}

TEST_CASE("masked rows do not see other blocks") {
  Rng rng(6);
  auto q = random_matrix<double>(4, 2, rng), k = random_matrix<double>(4, 2, rng), v = random_matrix<double>(4, 2, rng);
  const std::vector<AttentionBlock> mask{{{0, 2}, {0, 2}}, {{2, 2}, {2, 2}}};
  ad::Tape<double> t;
  const auto before = t.value(ad::attention(t, t.constant(q), t.constant(k), t.constant(v), mask, 1, 2));
  k.row(3) *= 5.0;
  v.row(3) *= -2.0;
  const auto after = t.value(ad::attention(t, t.constant(q), t.constant(k), t.constant(v), mask, 1, 2));
  REQUIRE((before.topRows(2) - after.topRows(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("span mean gradients and values") {
  Rng rng(7);
  const auto x = random_matrix<double>(7, 3, rng);
  const std::vector<RowSpan> spans{{0, 3}, {3, 1}, {4, 3}};
  REQUIRE(max_op_gradient_error({x}, [&](auto& t, auto& in) { return ad::span_mean(t, in[0], spans); }) < 1e-8);
  ad::Tape<double> t;
  const auto m = t.value(ad::span_mean(t, t.constant(x), spans));
  REQUIRE((m.row(1) - x.row(3)).norm() == 0.0);
  REQUIRE((m.row(0) - x.topRows(3).colwise().mean()).norm() < 1e-15);
}

TEST_CASE("tape accumulates gradients through shared nodes") {
  ad::Tape<double> t;
  Matrix<double> v(1, 1);
  v << 3.0;
  const auto x = t.variable(v);
  const auto y = ad::hadamard(t, x, x);
  const auto z = ad::add(t, y, x);
  t.backward(ad::weighted_sum(t, z, Matrix<double>(Matrix<double>::Ones(1, 1))));
  REQUIRE(t.grad(x)(0, 0) == Approx(7.0));
  const auto c = t.constant(v);
  REQUIRE(t.grad(c)(0, 0) == 0.0);
}

TEST_CASE("supcon closed forms") {
  for (std::size_t n : {2u, 3u, 8u, 60u}) {
    Matrix<double> z = Matrix<double>::Zero(static_cast<Eigen::Index>(n), 4);
    z.col(0).setOnes();
    std::vector<std::vector<std::size_t>> pos(n);
    for (std::size_t a = 0; a < n; ++a) pos[a] = {(a + 1) % n};
    const auto r = supcon_loss<double>(z, pos, 0.05);
    REQUIRE(std::abs(r.loss - static_cast<double>(n) * std::log(static_cast<double>(n - 1))) < 1e-9);
  }
  Matrix<double> pair = Matrix<double>::Zero(2, 3);
  pair.col(1).setOnes();
  REQUIRE(std::abs(supcon_loss<double>(pair, {{1}, {0}}, 0.1).loss) < 1e-12);
}

TEST_CASE("supcon gradient matches finite differences") {
  Rng rng(8);
  Matrix<double> z = random_matrix<double>(6, 4, rng);
  z.rowwise().normalize();
  const std::vector<std::vector<std::size_t>> pos{{1, 2}, {0, 2}, {0, 1}, {4, 5}, {3, 5}, {3, 4}};
  const double tau = 0.3;
  const auto r = supcon_loss<double>(z, pos, tau);
  Matrix<double> numeric(z.rows(), z.cols());
  for (Eigen::Index e = 0; e < z.size(); ++e) {
    Matrix<double> up = z, down = z;
    up.data()[e] += 1e-6;
    down.data()[e] -= 1e-6;
    numeric.data()[e] = (supcon_loss<double>(up, pos, tau).loss - supcon_loss<double>(down, pos, tau).loss) / 2e-6;
  }
  REQUIRE((numeric - r.grad).norm() / numeric.norm() < 1e-6);
}

TEST_CASE("supcon matches a direct evaluation of the definition") {
  Rng rng(9);
  Matrix<double> z = random_matrix<double>(5, 3, rng);
  z.rowwise().normalize();
  const std::vector<std::vector<std::size_t>> pos{{1}, {0}, {3, 4}, {2, 4}, {2, 3}};
  double expect = 0.0;
  for (int a = 0; a < 5; ++a) {
    double denom = 0.0;
    for (int k = 0; k < 5; ++k)
      if (k != a) denom += std::exp(z.row(a).dot(z.row(k)) / 0.2);
    double term = 0.0;
    for (auto p : pos[static_cast<std::size_t>(a)]) term += std::log(std::exp(z.row(a).dot(z.row(static_cast<Eigen::Index>(p))) / 0.2) / denom);
    expect -= term / static_cast<double>(pos[static_cast<std::size_t>(a)].size());
  }
  REQUIRE(supcon_loss<double>(z, pos, 0.2).loss == Approx(expect).epsilon(1e-12));
}

TEST_CASE("supcon rejects malformed positives") {
  const Matrix<double> z = Matrix<double>::Identity(3, 3);
  REQUIRE_THROWS_AS(supcon_loss<double>(z, {{1}, {}, {0}}, 0.1), Error);
  REQUIRE_THROWS_AS(supcon_loss<double>(z, {{0}, {0}, {0}}, 0.1), Error);
  REQUIRE_THROWS_AS(supcon_loss<double>(z, {{1}, {0}, {7}}, 0.1), Error);
}
