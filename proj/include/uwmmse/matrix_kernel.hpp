#pragma once

// Dense complex-matrix primitives shared by the solver, the unfolded network
// and its reverse pass. Everything here is a pure function of its arguments.

#include <cmath>
#include <complex>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "uwmmse/errors.hpp"

namespace uwmmse {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
using Index = Eigen::Index;

/// Guard for diag_reciprocal, relative to the infinity norm of the argument.
inline constexpr double kDiagEps = 1e-12;
/// Pivot threshold for stable_inverse, relative to the infinity norm of the argument.
inline constexpr double kSingularTol = 1e-12;

inline std::string shape_string(const ComplexMatrix& a) {
    std::ostringstream os;
    os << a.rows() << "x" << a.cols();
    return os.str();
}

inline void require_square(const ComplexMatrix& a, const char* what) {
    if (a.rows() != a.cols()) {
        throw ShapeMismatch(std::string(what) + ": expected a square matrix, got " + shape_string(a));
    }
}

inline void require_same_shape(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeMismatch(std::string(what) + ": " + shape_string(a) + " vs " + shape_string(b));
    }
}

inline void require_product(const ComplexMatrix& a, const ComplexMatrix& b, const char* what) {
    if (a.cols() != b.rows()) {
        throw ShapeMismatch(std::string(what) + ": cannot multiply " + shape_string(a) + " by " +
                            shape_string(b));
    }
}

inline ComplexMatrix identity(Index n) { return ComplexMatrix::Identity(n, n); }

inline Complex trace(const ComplexMatrix& a) { return a.trace(); }

/// Tr(A B) without forming the product.
inline Complex trace_of_product(const ComplexMatrix& a, const ComplexMatrix& b) {
    return a.cwiseProduct(b.transpose()).sum();
}

inline double infinity_norm(const ComplexMatrix& a) {
    if (a.size() == 0) return 0.0;
    return a.cwiseAbs().rowwise().sum().maxCoeff();
}

inline bool all_finite(const ComplexMatrix& a) {
    for (Index i = 0; i < a.size(); ++i) {
        const Complex z = a.data()[i];
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

/// Reciprocals of the diagonal of a square matrix, as a vector.
inline ComplexVector diag_reciprocal_vector(const ComplexMatrix& a, double eps = kDiagEps) {
    require_square(a, "diag_reciprocal");
    const double guard = eps * infinity_norm(a);
    ComplexVector r(a.rows());
    for (Index i = 0; i < a.rows(); ++i) {
        const Complex aii = a(i, i);
        if (!(std::abs(aii) > guard)) {
            std::ostringstream os;
            os << "diag_reciprocal: |A(" << i << "," << i << ")| = " << std::abs(aii)
               << " is below the guard " << guard;
            throw DegenerateDiagonal(os.str());
        }
        r(i) = 1.0 / aii;
    }
    return r;
}

/// A+ : reciprocal of every diagonal entry, zero elsewhere.
inline ComplexMatrix diag_reciprocal(const ComplexMatrix& a, double eps = kDiagEps) {
    ComplexMatrix r = ComplexMatrix::Zero(a.rows(), a.cols());
    r.diagonal() = diag_reciprocal_vector(a, eps);
    return r;
}

/// Inverse through a partially pivoted LU factorization. Throws SingularMatrix
/// when a pivot falls below kSingularTol * ||A||_inf.
inline ComplexMatrix stable_inverse(const ComplexMatrix& a) {
    require_square(a, "stable_inverse");
    const double scale = infinity_norm(a);
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw SingularMatrix("stable_inverse: zero or non-finite matrix of shape " + shape_string(a));
    }
    Eigen::PartialPivLU<ComplexMatrix> lu(a);
    const auto& packed = lu.matrixLU();
    const double tol = kSingularTol * scale;
    for (Index i = 0; i < packed.rows(); ++i) {
        if (!(std::abs(packed(i, i)) > tol)) {
            throw SingularMatrix("stable_inverse: rank deficient " + shape_string(a) + " matrix");
        }
    }
    return lu.inverse();
}

inline ComplexMatrix hadamard(const ComplexMatrix& a, const ComplexMatrix& b) {
    require_same_shape(a, b, "hadamard");
    return a.cwiseProduct(b);
}

/// First-order expansion of A^{-1} around A0: 2 A0^{-1} - A0^{-1} A A0^{-1}.
inline ComplexMatrix taylor_inverse(const ComplexMatrix& a, const ComplexMatrix& a0_inv) {
    require_square(a, "taylor_inverse");
    require_same_shape(a, a0_inv, "taylor_inverse");
    return 2.0 * a0_inv - a0_inv * a * a0_inv;
}

/// log det of a matrix whose determinant is real and positive (Hermitian PD in
/// practice). Uses a Cholesky factor when available, otherwise LU.
inline double log_det_positive(const ComplexMatrix& a) {
    require_square(a, "log_det_positive");
    Eigen::LLT<ComplexMatrix> llt(a);
    if (llt.info() == Eigen::Success) {
        double s = 0.0;
        const auto& l = llt.matrixLLT();
        for (Index i = 0; i < a.rows(); ++i) s += std::log(l(i, i).real());
        return 2.0 * s;
    }
    Eigen::PartialPivLU<ComplexMatrix> lu(a);
    const auto& packed = lu.matrixLU();
    double s = 0.0;
    for (Index i = 0; i < a.rows(); ++i) s += std::log(std::abs(packed(i, i)));
    return s;
}

/// Sum of Tr(V_k V_k^H) over a set of matrices.
template <class Range>
double total_power(const Range& v) {
    double p = 0.0;
    for (const auto& m : v) p += m.squaredNorm();
    return p;
}

} // namespace uwmmse
