#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "cheblap/matrix.hpp"

namespace cheblap {

// Degrees are clamped below by this value before inversion.
inline constexpr double kDegreeFloor = 1e-8;

enum class LaplacianFamily { Comb, Ndrw, Drw, Ndn, Dn };

// A parametrization family, optionally applied to the symmetrized adjacency
// A + A^T (the "S-" variants).
struct LaplacianKind {
  LaplacianFamily family = LaplacianFamily::Ndrw;
  bool symmetric = false;

  friend bool operator==(const LaplacianKind&, const LaplacianKind&) = default;
};

std::string to_string(LaplacianKind kind);
std::string_view family_name(LaplacianFamily family);
// Accepts "comb", "NDRW", "s-ndn", ... (case insensitive).
LaplacianKind parse_kind(std::string_view text);
std::optional<LaplacianFamily> parse_family(std::string_view text);

inline constexpr std::array<LaplacianFamily, 5> kAllFamilies = {
    LaplacianFamily::Comb, LaplacianFamily::Ndrw, LaplacianFamily::Drw, LaplacianFamily::Ndn,
    LaplacianFamily::Dn};

// All ten kinds: plain families first, then their symmetric variants.
std::array<LaplacianKind, 10> all_kinds();

// Whether the parametrization carries the leading identity term.
constexpr bool is_differential(LaplacianFamily f) {
  return f == LaplacianFamily::Comb || f == LaplacianFamily::Drw || f == LaplacianFamily::Dn;
}

// Trainable adjacency. Entries are nonnegative and finite.
class AdjacencyParam {
 public:
  AdjacencyParam() = default;
  explicit AdjacencyParam(Matrix values);

  Index size() const { return values_.rows(); }
  const Matrix& values() const { return values_; }
  // Raw access for the optimizer; call project_nonnegative() afterwards.
  Matrix& mutable_values() { return values_; }
  void project_nonnegative();

 private:
  Matrix values_;
};

struct SpectralBounds {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
};

struct LaplacianOperator {
  Matrix matrix;
  LaplacianKind kind;
  bool rescaled = false;
  std::optional<SpectralBounds> bounds;  // set iff rescaled
};

enum class DegreeAxis { Columns, Rows };

// d_u = sum_v A(v,u) for Columns (the D(A) convention); Rows gives D(A^T).
Vector degree_matrix(const Matrix& a, DegreeAxis axis);

struct BuildOptions {
  // In strict mode a degree below the floor is an error instead of being clamped.
  bool strict = false;
  double degree_floor = kDegreeFloor;
};

// The adjacency the plain formula is applied to: A, or A + A^T for S-kinds.
Matrix effective_adjacency(const Matrix& a, bool symmetric);

LaplacianOperator build_laplacian(const AdjacencyParam& a, LaplacianKind kind, const BuildOptions& opts = {});
LaplacianOperator build_laplacian(const Matrix& a, LaplacianKind kind, const BuildOptions& opts = {});

// Min and max eigenvalue of a symmetric matrix.
SpectralBounds extreme_eigenvalues(const Matrix& m);

// Bounds used for rescaling: the spectrum of the symmetric part (L + L^T)/2.
SpectralBounds rescaling_bounds(const Matrix& l);

// 2 (L - lmin I) / (lmax - lmin) - I with bounds from rescaling_bounds().
LaplacianOperator rescale_spectrum(const LaplacianOperator& l);
// Same map with caller-supplied bounds (held constant by the backward pass).
LaplacianOperator rescale_spectrum(const LaplacianOperator& l, SpectralBounds bounds);

// d(rescaled)/dL for constant bounds: 2 / (lmax - lmin).
double rescale_gain(SpectralBounds bounds);

// Diagnostic-mode validity check for a built operator. Returns the largest
// violation of the kind's row/column-sum and symmetry invariants.
struct InvariantReport {
  double row_sum_residual = 0.0;     // COMB: max |row sum|
  double column_sum_residual = 0.0;  // NDRW: max |col sum - 1|, DRW: max |col sum|
  double asymmetry = 0.0;            // S-COMB/S-NDN/S-DN: max |L - L^T|
  bool ok(double tol) const {
    return row_sum_residual <= tol && column_sum_residual <= tol && asymmetry <= tol;
  }
};
InvariantReport check_invariants(const LaplacianOperator& l);

// Adjacency text format (first line n, then n rows).
Matrix read_adjacency(std::istream& in, const std::string& source);
void write_adjacency(std::ostream& out, const Matrix& a);
// Same format prefixed by `# kind=<KIND> rescaled=<0|1> lmin=<v> lmax=<v>`.
void write_laplacian_dump(std::ostream& out, const LaplacianOperator& l);

}  // namespace cheblap
