#pragma once

// Central finite differences, used as the independent oracle for every
// reverse-mode gradient in the project.

#include "hlps/autodiff.hpp"

#include <functional>

namespace hlps::check {

using ad::Matrix;

/// d f / d x by central differences, perturbing x in place (restored on
/// return). f must read x by reference.
Matrix numeric_gradient(const std::function<double()>& f, Matrix& x, double h = 1e-5);

/// max |a - n| / max(max |a|, max |n|, floor): a norm-wise relative error
/// that stays meaningful when some entries are near zero.
double relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-12);

}  // namespace hlps::check
