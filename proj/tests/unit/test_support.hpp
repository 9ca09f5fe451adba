#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "uwmmse/backprop.hpp"
#include "uwmmse/scenario.hpp"

namespace uwmmse::test_support {

inline ModelParams random_params(const SystemConfig& config, int layers, Variant variant, std::uint64_t seed,
                                 double scale = 1.0) {
    ModelParams p = zero_params(config, layers, variant);
    std::mt19937_64 rng(seed);
    for_each_block(p, [&](ComplexMatrix& m) {
        m = random_complex_gaussian(m.rows(), m.cols(), rng, scale * scale / static_cast<double>(m.rows()));
    });
    return p;
}

inline double max_abs(const ComplexMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline ComplexMatrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return random_complex_gaussian(rows, cols, rng);
}

/// Hermitian positive definite with eigenvalues bounded away from zero.
inline ComplexMatrix random_hpd(Index n, std::uint64_t seed) {
    const ComplexMatrix g = random_matrix(n, n, seed);
    return g * g.adjoint() + static_cast<double>(n) * ComplexMatrix::Identity(n, n);
}

/// Single-user MIMO capacity in bits: water-filling of P over the
/// eigenvalues of H^H H / sigma^2.
inline double water_filling_capacity(const ComplexMatrix& h, double power, double sigma2) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h.adjoint() * h);
    std::vector<double> gains;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
        if (es.eigenvalues()(i) > 1e-12) gains.push_back(es.eigenvalues()(i) / sigma2);
    }
    std::sort(gains.rbegin(), gains.rend());
    double level = 0.0;
    std::size_t active = 0;
    for (std::size_t n = gains.size(); n >= 1; --n) {
        double inv_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) inv_sum += 1.0 / gains[i];
        const double mu = (power + inv_sum) / static_cast<double>(n);
        if (mu > 1.0 / gains[n - 1]) {
            level = mu;
            active = n;
            break;
        }
    }
    double c = 0.0;
    for (std::size_t i = 0; i < active; ++i) c += std::log2(level * gains[i]);
    return c;
}

/// Sum of 2 Re Tr(G^H D) over every block: the first-order change of the loss
/// along direction D when G is the conjugate Wirtinger gradient.
inline double directional(const ModelParams& g, const ModelParams& d) {
    double s = 0.0;
    for_each_block_pair(const_cast<ModelParams&>(g), d,
                        [&](const ComplexMatrix& a, const ComplexMatrix& b) { s += 2.0 * (a.adjoint() * b).trace().real(); });
    return s;
}

} // namespace uwmmse::test_support
