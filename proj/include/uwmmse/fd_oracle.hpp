#pragma once

// Central finite differences, used as the independent reference for every
// analytic gradient in the library.

#include <algorithm>
#include <cmath>
#include <functional>

#include "uwmmse/matrix_kernel.hpp"

namespace uwmmse {

inline constexpr double kFdRelativeStep = 1e-6;

/// Step used for an entry of magnitude |x|.
inline double fd_step(double magnitude, double relative = kFdRelativeStep) {
    return relative * std::max(1.0, magnitude);
}

/// Central difference of a real function of a real scalar.
inline double fd_derivative(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Estimate of df/d(entry)* = (df/dRe + i df/dIm) / 2. `loss` is evaluated
/// with `entry` perturbed in place; the entry is restored afterwards.
inline Complex fd_wirtinger(const std::function<double()>& loss, Complex& entry, double h) {
    const Complex saved = entry;
    entry = saved + Complex(h, 0.0);
    const double re_plus = loss();
    entry = saved - Complex(h, 0.0);
    const double re_minus = loss();
    entry = saved + Complex(0.0, h);
    const double im_plus = loss();
    entry = saved - Complex(0.0, h);
    const double im_minus = loss();
    entry = saved;
    return 0.5 * Complex((re_plus - re_minus) / (2.0 * h), (im_plus - im_minus) / (2.0 * h));
}

inline Complex fd_wirtinger(const std::function<double()>& loss, Complex& entry) {
    return fd_wirtinger(loss, entry, fd_step(std::abs(entry)));
}

/// Entrywise oracle for a whole matrix perturbed in place.
inline ComplexMatrix fd_wirtinger_matrix(const std::function<double()>& loss, ComplexMatrix& point,
                                         double relative = kFdRelativeStep) {
    ComplexMatrix g(point.rows(), point.cols());
    for (Index i = 0; i < point.rows(); ++i) {
        for (Index j = 0; j < point.cols(); ++j) {
            g(i, j) = fd_wirtinger(loss, point(i, j), fd_step(std::abs(point(i, j)), relative));
        }
    }
    return g;
}

/// |a - b| / max(|b|, floor): the comparison used throughout the gradient checks.
inline double relative_error(Complex analytic, Complex reference, double floor) {
    return std::abs(analytic - reference) / std::max(std::abs(reference), floor);
}

} // namespace uwmmse
