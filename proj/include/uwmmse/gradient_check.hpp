#pragma once

#include <algorithm>
#include <cstdint>

#include "uwmmse/backprop.hpp"
#include "uwmmse/fd_oracle.hpp"
#include "uwmmse/trainer.hpp"

namespace uwmmse {

struct GradientCheck {
    double relative_error = 0.0;  // max |analytic - fd| / max |fd| over every parameter entry
    double max_abs_error = 0.0;
    double max_gradient = 0.0;
    std::size_t entries = 0;
};

/// Relative step for end-to-end checks. The network loss carries round-off
/// near 1e-14, so 3e-5 balances it against the O(h^2) truncation error.
inline constexpr double kEndToEndFdStep = 3e-5;

/// Analytic parameter gradients of one random instance against the
/// finite-difference oracle, over every trainable entry.
inline GradientCheck check_gradients(const ModelParams& model, const ChannelSample& sample,
                                     double relative_step = kEndToEndFdStep) {
    ModelParams params = model;
    const SystemConfig& config = params.config;
    const GradientBundle analytic = backward_pass(forward_pass(params, sample, config), sample, config, params);
    auto loss = [&] { return forward_pass(params, sample, config).objective; };
    GradientCheck out;
    for_each_block_pair(params, analytic.params, [&](ComplexMatrix& block, const ComplexMatrix& g) {
        const ComplexMatrix fd = fd_wirtinger_matrix(loss, block, relative_step);
        if (fd.size() == 0) return;
        out.max_abs_error = std::max(out.max_abs_error, (fd - g).cwiseAbs().maxCoeff());
        out.max_gradient = std::max(out.max_gradient, fd.cwiseAbs().maxCoeff());
        out.entries += static_cast<std::size_t>(fd.size());
    });
    out.relative_error = out.max_abs_error / std::max(out.max_gradient, 1e-300);
    return out;
}

/// Random channel and Gaussian-initialized parameters drawn from `seed`.
inline GradientCheck check_gradients(const SystemConfig& config, int layers, Variant variant, std::uint64_t seed) {
    const ModelParams model = init_params(config, layers, variant, seed, InitScheme::gaussian);
    return check_gradients(model, sample_channel(config, seed ^ 0x9e3779b97f4a7c15ULL));
}

} // namespace uwmmse
