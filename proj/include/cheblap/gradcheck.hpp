#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cheblap/graph.hpp"
#include "cheblap/laplacian_grad.hpp"
#include "cheblap/matrix.hpp"

namespace cheblap {

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-6);

enum class GradcheckPipeline {
  // build_laplacian -> rescale -> forward_basis -> sum_k <C_k, T_k>_F
  Surrogate,
  // Full single-sample model loss in Learned mode.
  Model,
};

struct GradcheckOptions {
  Index n = 5;
  int order = 4;
  std::vector<LaplacianKind> kinds;  // empty: all ten
  std::uint64_t seed = 1;
  int seeds = 1;  // instances per kind, seeds seed .. seed+seeds-1
  double h = 1e-5;
  double threshold = 1e-4;
  bool orthogonal = true;  // rescale with bounds frozen at the base point
  GradcheckPipeline pipeline = GradcheckPipeline::Model;
  bool tabulated_rows = true;  // also report the tabulated Jacobian forms
  // Test hook: applied to the analytic dLoss/dA before comparison.
  std::function<void(Matrix&)> corrupt;
};

struct GradcheckRow {
  LaplacianKind kind;
  JacobianForm form = JacobianForm::Exact;
  double max_rel_error = 0.0;
  long probes = 0;
  bool gating = true;  // tabulated rows are informational
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double threshold = 0.0;
  bool passed() const;
};

GradcheckReport run_gradcheck(const GradcheckOptions& opts);
void print_gradcheck(std::ostream& out, const GradcheckReport& report);

// Central-difference gradient of f at x, one entry at a time.
Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& x, double h);

}  // namespace cheblap
