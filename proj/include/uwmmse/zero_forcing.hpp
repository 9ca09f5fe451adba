#pragma once

#include <Eigen/QR>

#include "uwmmse/precoder.hpp"

namespace uwmmse {

/// Zero-forcing start point V^0. Stacks the channels, takes the right
/// pseudo-inverse and keeps the first d columns of each user's block. When
/// K*Nr > Nt the matched filter H_k^H is used instead. Output meets the power
/// budget with equality.
inline Precoders zf_init(const ChannelSample& sample, const SystemConfig& config) {
    const int k = config.k;
    Precoders v(static_cast<std::size_t>(k));
    if (config.zf_feasible()) {
        ComplexMatrix stacked(static_cast<Index>(k) * config.nr, config.nt);
        for (int user = 0; user < k; ++user) {
            stacked.middleRows(static_cast<Index>(user) * config.nr, config.nr) = sample.h[static_cast<std::size_t>(user)];
        }
        // Complete orthogonal decomposition keeps zero-padded users (rank
        // deficient stacks) well defined: their block of the pseudo-inverse is zero.
        Eigen::CompleteOrthogonalDecomposition<ComplexMatrix> cod(stacked);
        const ComplexMatrix pinv = cod.pseudoInverse();
        for (int user = 0; user < k; ++user) {
            v[static_cast<std::size_t>(user)] =
                pinv.middleCols(static_cast<Index>(user) * config.nr, config.nr).leftCols(config.d);
        }
    } else {
        for (int user = 0; user < k; ++user) {
            v[static_cast<std::size_t>(user)] = sample.h[static_cast<std::size_t>(user)].adjoint().leftCols(config.d);
        }
    }
    if (!(total_power(v) > 0.0)) {
        // All channels zero: no direction is preferable to any other.
        for (auto& m : v) m = ComplexMatrix::Identity(config.nt, config.d);
    }
    return scale_to_power(std::move(v), config);
}

} // namespace uwmmse
