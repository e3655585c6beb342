#include "cheblap/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "cheblap/error.hpp"
#include "cheblap/text_io.hpp"

namespace cheblap {

std::string_view family_name(LaplacianFamily family) {
  switch (family) {
    case LaplacianFamily::Comb: return "COMB";
    case LaplacianFamily::Ndrw: return "NDRW";
    case LaplacianFamily::Drw: return "DRW";
    case LaplacianFamily::Ndn: return "NDN";
    case LaplacianFamily::Dn: return "DN";
  }
  return "?";
}

std::string to_string(LaplacianKind kind) {
  std::string name(family_name(kind.family));
  return kind.symmetric ? "S-" + name : name;
}

std::optional<LaplacianFamily> parse_family(std::string_view text) {
  std::string upper;
  for (char c : text) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (auto f : kAllFamilies) {
    if (family_name(f) == upper) return f;
  }
  return std::nullopt;
}

LaplacianKind parse_kind(std::string_view text) {
  bool symmetric = false;
  if (text.size() > 2 && (text[0] == 's' || text[0] == 'S') && text[1] == '-') {
    symmetric = true;
    text.remove_prefix(2);
  }
  auto family = parse_family(text);
  if (!family) throw Error(ErrorCode::ConfigError, "unknown Laplacian kind '" + std::string(text) + "'");
  return {*family, symmetric};
}

std::array<LaplacianKind, 10> all_kinds() {
  std::array<LaplacianKind, 10> out{};
  for (std::size_t i = 0; i < kAllFamilies.size(); ++i) {
    out[i] = {kAllFamilies[i], false};
    out[i + kAllFamilies.size()] = {kAllFamilies[i], true};
  }
  return out;
}

AdjacencyParam::AdjacencyParam(Matrix values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols() || values_.rows() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "adjacency must be a non-empty square matrix");
  }
  if (!values_.allFinite()) throw Error(ErrorCode::NonFinite, "adjacency has non-finite entries");
  if ((values_.array() < 0.0).any()) {
    throw Error(ErrorCode::ShapeMismatch, "adjacency entries must be nonnegative");
  }
}

void AdjacencyParam::project_nonnegative() { values_ = values_.cwiseMax(0.0); }

Vector degree_matrix(const Matrix& a, DegreeAxis axis) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::ShapeMismatch, "degree of a non-square matrix");
  if (!a.allFinite()) throw Error(ErrorCode::NonFinite, "degree of a matrix with NaN/Inf entries");
  if (axis == DegreeAxis::Columns) return a.colwise().sum().transpose();
  return a.rowwise().sum();
}

Matrix effective_adjacency(const Matrix& a, bool symmetric) {
  if (!symmetric) return a;
  return a + a.transpose();
}

namespace {

Vector floored(const Vector& d, const BuildOptions& opts, const char* which) {
  if (opts.strict) {
    for (Index i = 0; i < d.size(); ++i) {
      if (d(i) < opts.degree_floor) {
        throw Error(ErrorCode::DegenerateDegree,
                    std::string(which) + " degree of node " + std::to_string(i) + " is below the floor");
      }
    }
  }
  return d.cwiseMax(opts.degree_floor);
}

}  // namespace

LaplacianOperator build_laplacian(const AdjacencyParam& a, LaplacianKind kind, const BuildOptions& opts) {
  return build_laplacian(a.values(), kind, opts);
}

LaplacianOperator build_laplacian(const Matrix& adjacency, LaplacianKind kind, const BuildOptions& opts) {
  if (adjacency.rows() != adjacency.cols() || adjacency.rows() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "adjacency must be a non-empty square matrix");
  }
  if (!adjacency.allFinite()) throw Error(ErrorCode::NonFinite, "adjacency has non-finite entries");
  const Matrix a = effective_adjacency(adjacency, kind.symmetric);
  const Index n = a.rows();
  LaplacianOperator out{Matrix(n, n), kind, false, std::nullopt};
  Matrix& l = out.matrix;

  switch (kind.family) {
    case LaplacianFamily::Comb: {
      floored(degree_matrix(a, DegreeAxis::Rows), opts, "row");
      l = -a;
      // The self-loop cancels in D(A^T) - A; summing the off-diagonal part
      // keeps the diagonal independent of A(p,p) in floating point too.
      for (Index p = 0; p < n; ++p) {
        double s = 0.0;
        for (Index v = 0; v < n; ++v) {
          if (v != p) s += a(p, v);
        }
        l(p, p) = s;
      }
      break;
    }
    case LaplacianFamily::Ndrw:
    case LaplacianFamily::Drw: {
      const Vector c = floored(degree_matrix(a, DegreeAxis::Columns), opts, "column");
      l = a * c.cwiseInverse().asDiagonal();
      if (kind.family == LaplacianFamily::Drw) l = Matrix::Identity(n, n) - l;
      break;
    }
    case LaplacianFamily::Ndn:
    case LaplacianFamily::Dn: {
      const Vector r = floored(degree_matrix(a, DegreeAxis::Rows), opts, "row");
      const Vector c = floored(degree_matrix(a, DegreeAxis::Columns), opts, "column");
      l = r.cwiseSqrt().cwiseInverse().asDiagonal() * a * c.cwiseSqrt().cwiseInverse().asDiagonal();
      if (kind.family == LaplacianFamily::Dn) l = Matrix::Identity(n, n) - l;
      break;
    }
  }
  return out;
}

SpectralBounds extreme_eigenvalues(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw Error(ErrorCode::ShapeMismatch, "eigenvalues of a non-square matrix");
  if (!m.allFinite()) throw Error(ErrorCode::NonFinite, "eigenvalues of a matrix with NaN/Inf entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    throw Error(ErrorCode::NotSymmetric, "matrix asymmetry " + io::format_double(asym) + " exceeds tolerance");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::NonFinite, "symmetric eigensolver failed");
  const Vector& ev = solver.eigenvalues();  // ascending
  return {ev(0), ev(ev.size() - 1)};
}

SpectralBounds rescaling_bounds(const Matrix& l) {
  const Matrix sym = 0.5 * (l + l.transpose());
  return extreme_eigenvalues(sym);
}

double rescale_gain(SpectralBounds bounds) { return 2.0 / (bounds.lambda_max - bounds.lambda_min); }

LaplacianOperator rescale_spectrum(const LaplacianOperator& l) { return rescale_spectrum(l, rescaling_bounds(l.matrix)); }

LaplacianOperator rescale_spectrum(const LaplacianOperator& l, SpectralBounds bounds) {
  const double width = bounds.lambda_max - bounds.lambda_min;
  if (!(width >= 1e-9)) {
    throw Error(ErrorCode::DegenerateSpectrum,
                "spectral width " + io::format_double(width) + " too small to rescale");
  }
  const Index n = l.matrix.rows();
  LaplacianOperator out{Matrix(n, n), l.kind, true, bounds};
  out.matrix = (2.0 / width) * (l.matrix - bounds.lambda_min * Matrix::Identity(n, n)) - Matrix::Identity(n, n);
  return out;
}

InvariantReport check_invariants(const LaplacianOperator& l) {
  InvariantReport rep;
  const Matrix& m = l.matrix;
  if (l.rescaled) return rep;  // sums are not preserved by the affine map
  switch (l.kind.family) {
    case LaplacianFamily::Comb: rep.row_sum_residual = m.rowwise().sum().cwiseAbs().maxCoeff(); break;
    case LaplacianFamily::Ndrw: rep.column_sum_residual = (m.colwise().sum().array() - 1.0).abs().maxCoeff(); break;
    case LaplacianFamily::Drw: rep.column_sum_residual = m.colwise().sum().cwiseAbs().maxCoeff(); break;
    default: break;
  }
  // Column normalization breaks symmetry, so S-NDRW/S-DRW are exempt.
  const bool symmetric_output = l.kind.symmetric && l.kind.family != LaplacianFamily::Ndrw &&
                                l.kind.family != LaplacianFamily::Drw;
  if (symmetric_output) rep.asymmetry = (m - m.transpose()).cwiseAbs().maxCoeff();
  return rep;
}

Matrix read_adjacency(std::istream& in, const std::string& source) { return io::read_square_matrix(in, source); }

void write_adjacency(std::ostream& out, const Matrix& a) { io::write_square_matrix(out, a); }

void write_laplacian_dump(std::ostream& out, const LaplacianOperator& l) {
  const auto fmt = [&](bool have, double v) { return have ? io::format_double(v) : std::string("nan"); };
  const bool have = l.bounds.has_value();
  out << "# kind=" << to_string(l.kind) << " rescaled=" << (l.rescaled ? 1 : 0)
      << " lmin=" << fmt(have, have ? l.bounds->lambda_min : 0.0)
      << " lmax=" << fmt(have, have ? l.bounds->lambda_max : 0.0) << '\n';
  io::write_square_matrix(out, l.matrix);
}

}  // namespace cheblap
