#include "cheblap/chebyshev.hpp"

#include <cstring>

#include "cheblap/error.hpp"

namespace cheblap {

std::uint64_t matrix_checksum(const Matrix& m) {
  // FNV-1a over the shape and raw bytes.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  const Index dims[2] = {m.rows(), m.cols()};
  mix(dims, sizeof(dims));
  mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  return h;
}

ChebyshevBasis forward_basis(const Matrix& l, int order) {
  if (order < 1) throw Error(ErrorCode::InvalidOrder, "Chebyshev order must be >= 1, got " + std::to_string(order));
  if (order > kMaxOrder) throw Error(ErrorCode::InvalidOrder, "Chebyshev order above " + std::to_string(kMaxOrder));
  if (l.rows() != l.cols()) throw Error(ErrorCode::ShapeMismatch, "Laplacian must be square");
  if (!l.allFinite()) throw Error(ErrorCode::NonFinite, "Laplacian has non-finite entries");
  const Index n = l.rows();
  ChebyshevBasis basis;
  basis.source_hash = matrix_checksum(l);
  basis.terms.reserve(order);
  basis.terms.push_back(Matrix::Identity(n, n));
  if (order >= 2) basis.terms.push_back(l);
  for (int k = 2; k < order; ++k) {
    basis.terms.push_back((2.0 * l.array() * basis.terms[k - 1].array() - basis.terms[k - 2].array()).matrix());
  }
  return basis;
}

void derivative_basis(const Matrix& l, ChebyshevBasis& basis) {
  if (basis.terms.empty()) throw Error(ErrorCode::MismatchedBasis, "basis has no terms");
  if (matrix_checksum(l) != basis.source_hash) {
    throw Error(ErrorCode::MismatchedBasis, "basis was built from a different Laplacian");
  }
  const Index n = l.rows();
  const int order = basis.order();
  basis.derivs.clear();
  basis.derivs.reserve(order);
  basis.derivs.push_back(Matrix::Zero(n, n));
  if (order >= 2) basis.derivs.push_back(Matrix::Ones(n, n));
  for (int k = 2; k < order; ++k) {
    basis.derivs.push_back(
        (2.0 * (basis.terms[k - 1].array() + l.array() * basis.derivs[k - 1].array()) - basis.derivs[k - 2].array())
            .matrix());
  }
}

std::vector<Matrix> aggregate(const ChebyshevBasis& basis, const Matrix& psi) {
  if (psi.cols() != basis.size()) {
    throw Error(ErrorCode::ShapeMismatch, "signal has " + std::to_string(psi.cols()) + " nodes, basis has " +
                                              std::to_string(basis.size()));
  }
  std::vector<Matrix> out;
  out.reserve(basis.terms.size());
  const Matrix x = psi.transpose();
  for (const auto& t : basis.terms) out.push_back(t * x);
  return out;
}

#ifdef CHEBLAP_MATRIX_RECURSION
ChebyshevBasis forward_basis_matrix_product(const Matrix& l, int order) {
  if (order < 1) throw Error(ErrorCode::InvalidOrder, "Chebyshev order must be >= 1");
  const Index n = l.rows();
  ChebyshevBasis basis;
  basis.source_hash = matrix_checksum(l);
  basis.terms.push_back(Matrix::Identity(n, n));
  if (order >= 2) basis.terms.push_back(l);
  for (int k = 2; k < order; ++k) basis.terms.push_back(2.0 * l * basis.terms[k - 1] - basis.terms[k - 2]);
  return basis;
}
#endif

}  // namespace cheblap
