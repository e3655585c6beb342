#pragma once

#include <Eigen/Dense>

namespace cheblap {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// True when every entry is finite.
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// Frobenius inner product tr(a^T b).
inline double frobenius_dot(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

}  // namespace cheblap
