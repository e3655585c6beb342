#pragma once

#include <vector>

#include "cheblap/chebyshev.hpp"
#include "cheblap/graph.hpp"
#include "cheblap/matrix.hpp"

namespace cheblap {

// nabla[k] = dLoss / dT_k(L).
struct BasisGradients {
  std::vector<Matrix> nabla;

  // Zero gradients for a basis of the given order and size.
  static BasisGradients zeros(int order, Index n);
  BasisGradients& operator+=(const BasisGradients& other);
};

// dLoss/dL_ij = sum_k dT_k/dL_ij * nabla_k,ij. The per-order Jacobians are
// diagonal, so this is an elementwise multiply-accumulate.
Matrix grad_wrt_laplacian(const BasisGradients& grads, const ChebyshevBasis& basis);

enum class JacobianForm {
  // Derivative of the parametrization as implemented by build_laplacian.
  Exact,
  // Entry formulas exactly as tabulated for the parametrizations. Kept so the
  // gradient checker can report how far they drift from Exact; DRW, NDN and
  // DN differ from the true derivative.
  Tabulated,
};

// dLoss/dA = vec^-1(J vec(dLoss/dL)) for the parametrization `kind`, where
// `adjacency` is the free matrix A and `l` = build_laplacian(A, kind) (not
// rescaled). For S-kinds the J_s tie is composed in. Applied by index loops;
// J is never materialized.
Matrix apply_parametrization_jacobian(LaplacianKind kind, const Matrix& adjacency, const Matrix& l,
                                      const Matrix& grad_l, JacobianForm form = JacobianForm::Exact,
                                      const BuildOptions& opts = {});
inline Matrix apply_parametrization_jacobian(LaplacianKind kind, const AdjacencyParam& a, const LaplacianOperator& l,
                                             const Matrix& grad_l) {
  return apply_parametrization_jacobian(kind, a.values(), l.matrix, grad_l);
}

// Action of J_s: G + G^T.
Matrix symmetrize_gradient(const Matrix& grad_a);

// Applies the Jacobian of `kind` at `adjacency` to every unit matrix e_ij and
// returns the n^2 x n^2 matrix with entry (i*n+j, p*n+q) = dL_ij/dA_pq.
// Diagnostics and tests only.
Matrix materialize_jacobian(LaplacianKind kind, const Matrix& adjacency, JacobianForm form = JacobianForm::Exact);

}  // namespace cheblap
