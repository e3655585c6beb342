#include <doctest.h>

#include <random>

#include "cheblap/chebyshev.hpp"
#include "cheblap/error.hpp"
#include "oracles.hpp"

using namespace cheblap;

TEST_CASE("order one is the identity") {
  std::mt19937_64 rng(1);
  const ChebyshevBasis b = forward_basis(oracle::random_matrix(4, 4, -1, 1, rng), 1);
  REQUIRE(b.order() == 1);
  CHECK(b.terms[0] == Matrix::Identity(4, 4));
  CHECK_THROWS_AS(forward_basis(Matrix::Identity(2, 2), 0), Error);
  CHECK_THROWS_AS(forward_basis(Matrix::Identity(2, 2), kMaxOrder + 1), Error);
}

TEST_CASE("hand-evaluated second term") {
  Matrix l(2, 2);
  l << 0, -1, -1, 0;
  const ChebyshevBasis b = forward_basis(l, 3);
  Matrix expected(2, 2);
  expected << -1, 2, 2, -1;
  CHECK(b.terms[1] == l);
  CHECK(b.terms[2] == expected);
}

TEST_CASE("entries follow the scalar recursion") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix l = oracle::random_matrix(4, 4, -1, 1, rng);
    const ChebyshevBasis b = forward_basis(l, 5);
    for (int k = 0; k < 5; ++k)
      for (Index i = 0; i < 4; ++i)
        for (Index j = 0; j < 4; ++j) {
          const double expect = oracle::scalar_chebyshev(i == j ? 1.0 : 0.0, l(i, j), k);
          CHECK(std::fabs(b.terms[k](i, j) - expect) <= 1e-12);
        }
  }
}

TEST_CASE("derivative basis closed forms") {
  std::mt19937_64 rng(3);
  const Matrix l = oracle::random_matrix(3, 3, -1, 1, rng);
  ChebyshevBasis b = forward_basis(l, 4);
  derivative_basis(l, b);
  REQUIRE(b.derivs.size() == 4);
  CHECK(b.derivs[0] == Matrix::Zero(3, 3));
  CHECK(b.derivs[1] == Matrix::Ones(3, 3));
  CHECK((b.derivs[2] - 4.0 * l).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("derivative basis matches finite differences") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, 2);
  double worst = 0.0;
  for (int probe = 0; probe < 50; ++probe) {
    const Matrix l = oracle::random_matrix(3, 3, -1, 1, rng);
    ChebyshevBasis b = forward_basis(l, 7);
    derivative_basis(l, b);
    const Index i = pick(rng), j = pick(rng);
    for (int k = 0; k <= 6; ++k) {
      auto entry = [&](double v) {
        Matrix p = l;
        p(i, j) = v;
        return forward_basis(p, k + 1).terms[k](i, j);
      };
      const double fd = oracle::central_difference(entry, l(i, j));
      worst = std::max(worst, std::fabs(fd - b.derivs[k](i, j)) / std::max({std::fabs(fd), 1e-6}));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("derivative basis rejects a basis from another operator") {
  const Matrix l = Matrix::Identity(3, 3);
  ChebyshevBasis b = forward_basis(l, 3);
  try {
    derivative_basis(2.0 * l, b);
    FAIL("expected MismatchedBasis");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MismatchedBasis);
  }
}

TEST_CASE("aggregate examples") {
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  Matrix psi(1, 2);
  psi << 1, 2;
  const auto out = aggregate(forward_basis(swap, 2), psi);
  CHECK(out[0] == psi.transpose());
  Matrix expected(2, 1);
  expected << 2, 1;
  CHECK(out[1] == expected);
  CHECK_THROWS_AS(aggregate(forward_basis(swap, 2), Matrix::Zero(1, 3)), Error);
}

TEST_CASE("aggregate matches a naive multiply and is linear") {
  std::mt19937_64 rng(5);
  const Matrix l = oracle::random_matrix(6, 6, -1, 1, rng);
  const ChebyshevBasis b = forward_basis(l, 4);
  const Matrix p1 = oracle::random_matrix(12, 6, -1, 1, rng);
  const Matrix p2 = oracle::random_matrix(12, 6, -1, 1, rng);
  const auto a1 = aggregate(b, p1);
  const auto a2 = aggregate(b, p2);
  const auto mix = aggregate(b, 0.3 * p1 - 1.7 * p2);
  for (int k = 0; k < 4; ++k) {
    CHECK((a1[k] - oracle::naive_multiply(b.terms[k], p1.transpose())).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((mix[k] - (0.3 * a1[k] - 1.7 * a2[k])).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("checksum detects single-bit changes") {
  Matrix a = Matrix::Identity(3, 3);
  const auto h = matrix_checksum(a);
  a(2, 1) = 1e-300;
  CHECK(matrix_checksum(a) != h);
  CHECK(matrix_checksum(Matrix::Identity(3, 3)) == h);
}
