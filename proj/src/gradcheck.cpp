#include "hlps/gradcheck.hpp"

#include <algorithm>

namespace hlps::check {

Matrix numeric_gradient(const std::function<double()>& f, Matrix& x, double h) {
    Matrix g(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double orig = x(i, j);
            x(i, j) = orig + h;
            const double up = f();
            x(i, j) = orig - h;
            const double down = f();
            x(i, j) = orig;
            g(i, j) = (up - down) / (2.0 * h);
        }
    }
    return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
    if (analytic.size() == 0 && numeric.size() == 0) return 0.0;
    const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), floor});
    return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace hlps::check
