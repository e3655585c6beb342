#include <doctest.h>

#include <random>

#include "cheblap/chebyshev.hpp"
#include "cheblap/error.hpp"
#include "cheblap/gradcheck.hpp"
#include "cheblap/laplacian_grad.hpp"
#include "oracles.hpp"

using namespace cheblap;

namespace {

// Surrogate loss sum_k <C_k, T_k(L)>_F and its analytic gradient w.r.t. A.
struct Surrogate {
  std::vector<Matrix> c;
  LaplacianKind kind;

  double loss_of_l(const Matrix& l) const {
    const ChebyshevBasis b = forward_basis(l, static_cast<int>(c.size()));
    double s = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) s += (c[k].array() * b.terms[k].array()).sum();
    return s;
  }
  double loss(const Matrix& a) const { return loss_of_l(build_laplacian(a, kind).matrix); }
  Matrix grad_l(const Matrix& l) const {
    ChebyshevBasis b = forward_basis(l, static_cast<int>(c.size()));
    derivative_basis(l, b);
    return grad_wrt_laplacian(BasisGradients{c}, b);
  }
  Matrix grad(const Matrix& a) const {
    const Matrix l = build_laplacian(a, kind).matrix;
    return apply_parametrization_jacobian(kind, a, l, grad_l(l));
  }
};

Surrogate make_surrogate(LaplacianKind kind, Index n, int order, std::mt19937_64& rng) {
  Surrogate s{{}, kind};
  for (int k = 0; k < order; ++k) s.c.push_back(oracle::random_matrix(n, n, -1, 1, rng));
  return s;
}

}  // namespace

TEST_CASE("grad_wrt_laplacian trivial orders") {
  std::mt19937_64 rng(1);
  const Matrix l = oracle::random_matrix(3, 3, -1, 1, rng);
  const Matrix g = oracle::random_matrix(3, 3, -1, 1, rng);
  ChebyshevBasis b1 = forward_basis(l, 1);
  derivative_basis(l, b1);
  CHECK(grad_wrt_laplacian(BasisGradients{{g}}, b1) == Matrix::Zero(3, 3));

  ChebyshevBasis b2 = forward_basis(l, 2);
  derivative_basis(l, b2);
  CHECK(grad_wrt_laplacian(BasisGradients{{Matrix::Zero(3, 3), g}}, b2) == g);
  CHECK_THROWS_AS(grad_wrt_laplacian(BasisGradients{{g}}, b2), Error);
}

TEST_CASE("grad_wrt_laplacian matches finite differences of a surrogate") {
  std::mt19937_64 rng(2);
  const Surrogate s = make_surrogate({}, 4, 4, rng);
  const Matrix l = oracle::random_matrix(4, 4, -1, 1, rng);
  const Matrix fd = oracle::fd_gradient([&](const Matrix& x) { return s.loss_of_l(x); }, l);
  CHECK(oracle::max_relative_error(s.grad_l(l), fd, 1e-6) < 1e-6);
}

TEST_CASE("COMB Jacobian on the 2-path") {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  Matrix g(2, 2);
  g << 1, 0, 0, 0;
  const LaplacianKind comb{LaplacianFamily::Comb, false};
  const Matrix l = build_laplacian(a, comb).matrix;
  Matrix expected(2, 2);
  expected << 0, 1, 0, 0;  // only L_00 = A_01 is touched
  CHECK(apply_parametrization_jacobian(comb, a, l, g) == expected);

  // Brute force: the materialized 4x4 Jacobian applied to vec(G).
  const Matrix jac = materialize_jacobian(comb, a);
  Matrix vec_g(1, 4);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) vec_g(0, i * 2 + j) = g(i, j);
  const Matrix via_jac = vec_g * jac;
  for (Index p = 0; p < 2; ++p)
    for (Index q = 0; q < 2; ++q) CHECK(via_jac(0, p * 2 + q) == expected(p, q));
}

TEST_CASE("zero upstream gradient gives zero") {
  std::mt19937_64 rng(3);
  const Matrix a = oracle::random_matrix(4, 4, 0.1, 1, rng);
  for (LaplacianKind kind : all_kinds()) {
    const Matrix l = build_laplacian(a, kind).matrix;
    CHECK(apply_parametrization_jacobian(kind, a, l, Matrix::Zero(4, 4)) == Matrix::Zero(4, 4));
  }
}

TEST_CASE("materialized Jacobians match finite-difference Jacobians") {
  std::mt19937_64 rng(4);
  for (LaplacianKind kind : all_kinds()) {
    CAPTURE(to_string(kind));
    const Matrix a = oracle::random_matrix(3, 3, 0.1, 1, rng);
    const Matrix fd = oracle::fd_jacobian([&](const Matrix& x) { return build_laplacian(x, kind).matrix; }, a);
    const Matrix jac = materialize_jacobian(kind, a);
    CHECK((jac - fd).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("random-walk Jacobians are column coupled") {
  std::mt19937_64 rng(5);
  const Matrix a = oracle::random_matrix(3, 3, 0.1, 1, rng);
  for (LaplacianFamily f : {LaplacianFamily::Ndrw, LaplacianFamily::Drw}) {
    const Matrix jac = materialize_jacobian({f, false}, a);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 3; ++j)
        for (Index p = 0; p < 3; ++p)
          for (Index q = 0; q < 3; ++q)
            if (j != q) CHECK(jac(i * 3 + j, p * 3 + q) == 0.0);
  }
}

TEST_CASE("tabulated forms: exact for COMB and NDRW, off for DRW, NDN and DN") {
  std::mt19937_64 rng(6);
  const Matrix a = oracle::random_matrix(4, 4, 0.1, 1, rng);
  for (LaplacianFamily f : kAllFamilies) {
    CAPTURE(family_name(f));
    const Matrix exact = materialize_jacobian({f, false}, a, JacobianForm::Exact);
    const Matrix tab = materialize_jacobian({f, false}, a, JacobianForm::Tabulated);
    const double gap = (exact - tab).cwiseAbs().maxCoeff();
    if (f == LaplacianFamily::Comb || f == LaplacianFamily::Ndrw) {
      CHECK(gap < 1e-12);
    } else {
      CHECK(gap > 1e-3);
    }
  }
}

TEST_CASE("tabulated normalized form guards vanishing entries in strict mode") {
  Matrix a = Matrix::Constant(3, 3, 0.5);
  a(0, 2) = 0.0;
  const LaplacianKind ndn{LaplacianFamily::Ndn, false};
  const Matrix l = build_laplacian(a, ndn).matrix;
  try {
    apply_parametrization_jacobian(ndn, a, l, Matrix::Ones(3, 3), JacobianForm::Tabulated, BuildOptions{true});
    FAIL("expected DivisionGuard");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DivisionGuard);
  }
  // The exact form never divides by A entries.
  CHECK(apply_parametrization_jacobian(ndn, a, l, Matrix::Ones(3, 3)).allFinite());
}

TEST_CASE("end-to-end surrogate gradients for every kind") {
  std::mt19937_64 rng(7);
  for (Index n : {2, 3, 4}) {
    for (LaplacianKind kind : all_kinds()) {
      CAPTURE(n);
      CAPTURE(to_string(kind));
      const Surrogate s = make_surrogate(kind, n, 4, rng);
      const Matrix a = oracle::random_matrix(n, n, 0.1, 1, rng);
      const Matrix fd = oracle::fd_gradient([&](const Matrix& x) { return s.loss(x); }, a);
      const double floor = std::max(1e-8, 1e-6 * fd.cwiseAbs().maxCoeff());
      CHECK(oracle::max_relative_error(s.grad(a), fd, floor) < 1e-5);
    }
  }
}

TEST_CASE("isolated nodes keep gradients finite") {
  Matrix a = Matrix::Constant(4, 4, 0.3);
  a.col(2).setZero();
  a.row(2).setZero();
  for (LaplacianKind kind : all_kinds()) {
    const Matrix l = build_laplacian(a, kind).matrix;
    CHECK(apply_parametrization_jacobian(kind, a, l, Matrix::Ones(4, 4)).allFinite());
  }
}

TEST_CASE("symmetrize_gradient") {
  Matrix g(2, 2);
  g << 0, 1, 0, 0;
  Matrix expected(2, 2);
  expected << 0, 1, 1, 0;
  CHECK(symmetrize_gradient(g) == expected);

  std::mt19937_64 rng(8);
  const Matrix s = oracle::random_symmetric(4, -1, 1, rng);
  CHECK(symmetrize_gradient(s) == 2.0 * s);

  const Matrix r = oracle::random_matrix(5, 5, -1, 1, rng);
  const Matrix once = symmetrize_gradient(r);
  CHECK((once - once.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
  // Image is the symmetric subspace, where the map is 2x identity.
  CHECK((symmetrize_gradient(once) / 2.0 - once).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("gradcheck report passes and catches a corrupted Jacobian") {
  GradcheckOptions o;
  o.seeds = 2;
  const GradcheckReport good = run_gradcheck(o);
  CHECK(good.passed());
  CHECK(good.rows.size() == 20);

  o.corrupt = [](Matrix& g) { g(1, 2) += 1e-2 * (1.0 + std::abs(g(1, 2))); };
  CHECK_FALSE(run_gradcheck(o).passed());
}

TEST_CASE("gradcheck with a single term is trivially exact") {
  GradcheckOptions o;
  o.order = 1;
  o.pipeline = GradcheckPipeline::Surrogate;
  const GradcheckReport r = run_gradcheck(o);
  CHECK(r.passed());
  for (const auto& row : r.rows) CHECK(row.max_rel_error == 0.0);
}
