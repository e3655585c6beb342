#pragma once

#include <span>

namespace cheblap {

// Correctly rounded sum of a sequence of doubles (Shewchuk partials, as in
// Python's math.fsum). Repeating every term twice yields exactly twice the
// result, which makes chunk means invariant under frame duplication.
double exact_sum(std::span<const double> values);

}  // namespace cheblap
