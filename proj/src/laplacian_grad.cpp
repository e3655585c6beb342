#include "cheblap/laplacian_grad.hpp"

#include <algorithm>
#include <cmath>

#include "cheblap/error.hpp"

namespace cheblap {

BasisGradients BasisGradients::zeros(int order, Index n) {
  BasisGradients g;
  g.nabla.assign(order, Matrix::Zero(n, n));
  return g;
}

BasisGradients& BasisGradients::operator+=(const BasisGradients& other) {
  if (nabla.size() != other.nabla.size()) throw Error(ErrorCode::ShapeMismatch, "basis gradient orders differ");
  for (std::size_t k = 0; k < nabla.size(); ++k) nabla[k] += other.nabla[k];
  return *this;
}

Matrix grad_wrt_laplacian(const BasisGradients& grads, const ChebyshevBasis& basis) {
  if (basis.derivs.size() != basis.terms.size()) {
    throw Error(ErrorCode::MismatchedBasis, "derivative_basis() has not been run");
  }
  if (grads.nabla.size() != basis.terms.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient order " + std::to_string(grads.nabla.size()) +
                                              " != basis order " + std::to_string(basis.terms.size()));
  }
  const Index n = basis.size();
  Matrix out = Matrix::Zero(n, n);
  for (std::size_t k = 0; k < grads.nabla.size(); ++k) {
    if (grads.nabla[k].rows() != n || grads.nabla[k].cols() != n) {
      throw Error(ErrorCode::ShapeMismatch, "basis gradient has wrong shape");
    }
    out.array() += basis.derivs[k].array() * grads.nabla[k].array();
  }
  return out;
}

Matrix symmetrize_gradient(const Matrix& grad_a) { return grad_a + grad_a.transpose(); }

namespace {

struct Degrees {
  Vector value;     // floored
  std::vector<bool> active;  // false where the floor is binding (derivative is zero)
};

Degrees degrees(const Matrix& a, DegreeAxis axis, const BuildOptions& opts) {
  Degrees d{degree_matrix(a, axis), {}};
  d.active.resize(d.value.size());
  for (Index i = 0; i < d.value.size(); ++i) {
    if (opts.strict && d.value(i) < opts.degree_floor) {
      throw Error(ErrorCode::DegenerateDegree, "degree of node " + std::to_string(i) + " is below the floor");
    }
    d.active[i] = d.value(i) >= opts.degree_floor;
    d.value(i) = std::max(d.value(i), opts.degree_floor);
  }
  return d;
}

// dL/dA for L = D(A^T) - A:  g_pq = G_pp - G_pq (p != q), 0 on the diagonal.
Matrix comb_jacobian(const Matrix& g) {
  const Index n = g.rows();
  Matrix out(n, n);
  for (Index p = 0; p < n; ++p) {
    for (Index q = 0; q < n; ++q) out(p, q) = (p == q) ? 0.0 : g(p, p) - g(p, q);
  }
  return out;
}

// N = A D(A)^-1, N_ij = A_ij / c_j:  g_pq = (G_pq - sum_i G_iq N_iq) / c_q.
Matrix random_walk_jacobian(const Matrix& a, const Matrix& nd, const Matrix& g, const BuildOptions& opts) {
  const Index n = a.rows();
  const Degrees c = degrees(a, DegreeAxis::Columns, opts);
  Matrix out(n, n);
  for (Index q = 0; q < n; ++q) {
    const double coupled = c.active[q] ? g.col(q).dot(nd.col(q)) : 0.0;
    for (Index p = 0; p < n; ++p) out(p, q) = (g(p, q) - coupled) / c.value(q);
  }
  return out;
}

// N = D(A^T)^-1/2 A D(A)^-1/2, N_ij = A_ij / sqrt(r_i c_j):
//   g_pq = G_pq / sqrt(r_p c_q) - (G o N)_p. / (2 r_p) - (G o N)_.q / (2 c_q).
Matrix normalized_jacobian(const Matrix& a, const Matrix& nd, const Matrix& g, const BuildOptions& opts) {
  const Index n = a.rows();
  const Degrees r = degrees(a, DegreeAxis::Rows, opts);
  const Degrees c = degrees(a, DegreeAxis::Columns, opts);
  const Matrix gn = g.cwiseProduct(nd);
  const Vector row_terms = gn.rowwise().sum();
  const Vector col_terms = gn.colwise().sum().transpose();
  Matrix out(n, n);
  for (Index p = 0; p < n; ++p) {
    const double rp = r.active[p] ? row_terms(p) / (2.0 * r.value(p)) : 0.0;
    for (Index q = 0; q < n; ++q) {
      const double cq = c.active[q] ? col_terms(q) / (2.0 * c.value(q)) : 0.0;
      out(p, q) = g(p, q) / std::sqrt(r.value(p) * c.value(q)) - rp - cq;
    }
  }
  return out;
}

// Tabulated entry formulas, applied literally with l = the operator of `family`.
Matrix tabulated_jacobian(LaplacianFamily family, const Matrix& a, const Matrix& l, const Matrix& g,
                          const BuildOptions& opts) {
  const Index n = a.rows();
  Matrix out = Matrix::Zero(n, n);
  switch (family) {
    case LaplacianFamily::Comb:
      return comb_jacobian(g);
    case LaplacianFamily::Ndrw:
    case LaplacianFamily::Drw: {
      // 1{j=q} (delta_ip - L_ij) / c_q for NDRW, 1{j=q} (L_ij - delta_ip) / c_q for DRW.
      const double sign = family == LaplacianFamily::Ndrw ? 1.0 : -1.0;
      const Degrees c = degrees(a, DegreeAxis::Columns, opts);
      for (Index p = 0; p < n; ++p) {
        for (Index q = 0; q < n; ++q) {
          double s = 0.0;
          for (Index i = 0; i < n; ++i) s += g(i, q) * sign * ((i == p ? 1.0 : 0.0) - l(i, q));
          out(p, q) = s / c.value(q);
        }
      }
      return out;
    }
    case LaplacianFamily::Ndn:
    case LaplacianFamily::Dn: {
      // 1{i=p or j=q} L_ij / (2 A_pq) (+-)(2 delta_ip delta_jq - [D(A^T)^-1 A + A D(A)^-1]_pq).
      const double sign = family == LaplacianFamily::Ndn ? 1.0 : -1.0;
      const Degrees r = degrees(a, DegreeAxis::Rows, opts);
      const Degrees c = degrees(a, DegreeAxis::Columns, opts);
      for (Index p = 0; p < n; ++p) {
        for (Index q = 0; q < n; ++q) {
          if (opts.strict && a(p, q) < opts.degree_floor) {
            throw Error(ErrorCode::DivisionGuard, "tabulated Jacobian divides by a vanishing A entry");
          }
          const double apq = std::max(a(p, q), opts.degree_floor);
          const double mix = a(p, q) / r.value(p) + a(p, q) / c.value(q);
          double s = 0.0;
          for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
              if (i != p && j != q) continue;
              const double delta = (i == p && j == q) ? 2.0 : 0.0;
              s += g(i, j) * l(i, j) / (2.0 * apq) * sign * (delta - mix);
            }
          }
          out(p, q) = s;
        }
      }
      return out;
    }
  }
  return out;
}

}  // namespace

Matrix apply_parametrization_jacobian(LaplacianKind kind, const Matrix& adjacency, const Matrix& l,
                                      const Matrix& grad_l, JacobianForm form, const BuildOptions& opts) {
  const Index n = adjacency.rows();
  if (adjacency.cols() != n || l.rows() != n || l.cols() != n || grad_l.rows() != n || grad_l.cols() != n) {
    throw Error(ErrorCode::ShapeMismatch, "Jacobian operands must all be n x n");
  }
  if (!grad_l.allFinite()) throw Error(ErrorCode::NonFinite, "dLoss/dL has non-finite entries");
  const Matrix a = effective_adjacency(adjacency, kind.symmetric);
  Matrix g;
  if (form == JacobianForm::Tabulated) {
    g = tabulated_jacobian(kind.family, a, l, grad_l, opts);
  } else {
    switch (kind.family) {
      case LaplacianFamily::Comb: g = comb_jacobian(grad_l); break;
      case LaplacianFamily::Ndrw: g = random_walk_jacobian(a, l, grad_l, opts); break;
      case LaplacianFamily::Drw: g = -random_walk_jacobian(a, Matrix::Identity(n, n) - l, grad_l, opts); break;
      case LaplacianFamily::Ndn: g = normalized_jacobian(a, l, grad_l, opts); break;
      case LaplacianFamily::Dn: g = -normalized_jacobian(a, Matrix::Identity(n, n) - l, grad_l, opts); break;
    }
  }
  return kind.symmetric ? symmetrize_gradient(g) : g;
}

Matrix materialize_jacobian(LaplacianKind kind, const Matrix& adjacency, JacobianForm form) {
  const Index n = adjacency.rows();
  const Matrix l = build_laplacian(adjacency, kind).matrix;
  Matrix jac(n * n, n * n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      Matrix unit = Matrix::Zero(n, n);
      unit(i, j) = 1.0;
      const Matrix row = apply_parametrization_jacobian(kind, adjacency, l, unit, form);
      for (Index p = 0; p < n; ++p) {
        for (Index q = 0; q < n; ++q) jac(i * n + j, p * n + q) = row(p, q);
      }
    }
  }
  return jac;
}

}  // namespace cheblap
