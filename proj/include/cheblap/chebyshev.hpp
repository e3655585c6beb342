#pragma once

#include <cstdint>
#include <vector>

#include "cheblap/graph.hpp"
#include "cheblap/matrix.hpp"

namespace cheblap {

inline constexpr int kMaxOrder = 32;

// Chebyshev terms T_0..T_{K-1} of an operator under the elementwise
// recursion T_k = 2 L o T_{k-1} - T_{k-2}, together with the entrywise
// derivatives d[T_k]_ij / dL_ij once derivative_basis() has run.
struct ChebyshevBasis {
  std::vector<Matrix> terms;
  std::vector<Matrix> derivs;   // empty until derivative_basis()
  std::uint64_t source_hash = 0;  // checksum of the L the terms were built from

  int order() const { return static_cast<int>(terms.size()); }
  Index size() const { return terms.empty() ? 0 : terms.front().rows(); }
};

// Bitwise checksum of a matrix; used to detect a basis paired with the wrong L.
std::uint64_t matrix_checksum(const Matrix& m);

ChebyshevBasis forward_basis(const Matrix& l, int order);
inline ChebyshevBasis forward_basis(const LaplacianOperator& l, int order) { return forward_basis(l.matrix, order); }

// Fills basis.derivs via the recursion 0, 1, 2([T_{k-1}] + L [d_{k-1}]) - d_{k-2}.
void derivative_basis(const Matrix& l, ChebyshevBasis& basis);
inline void derivative_basis(const LaplacianOperator& l, ChebyshevBasis& basis) { derivative_basis(l.matrix, basis); }

// output[k] = T_k psi^T, one n x s matrix per order.
std::vector<Matrix> aggregate(const ChebyshevBasis& basis, const Matrix& psi);

#ifdef CHEBLAP_MATRIX_RECURSION
// Classical recursion with ordinary matrix products, T_k = 2 L T_{k-1} - T_{k-2}.
// Comparison experiments only: no derivative counterpart exists.
ChebyshevBasis forward_basis_matrix_product(const Matrix& l, int order);
#endif

}  // namespace cheblap
