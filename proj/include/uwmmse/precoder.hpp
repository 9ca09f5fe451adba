#pragma once

// Building blocks of the WMMSE updates that the reference solver and the
// unfolded network share: receive covariances, the transmit-side matrix B,
// the closed-form precoder update and power scaling.

#include <cmath>
#include <vector>

#include "uwmmse/errors.hpp"
#include "uwmmse/matrix_kernel.hpp"
#include "uwmmse/scenario.hpp"

namespace uwmmse {

using Precoders = std::vector<ComplexMatrix>;
/// cross[k][m] = H_k V_m.
using CrossProducts = std::vector<std::vector<ComplexMatrix>>;

inline CrossProducts cross_products(const ChannelSample& sample, const Precoders& v) {
    const std::size_t k = sample.h.size();
    if (v.size() != k) throw ShapeMismatch("cross_products: precoder count differs from user count");
    CrossProducts out(k, std::vector<ComplexMatrix>(k));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t m = 0; m < k; ++m) {
            require_product(sample.h[i], v[m], "cross_products");
            out[i][m] = sample.h[i] * v[m];
        }
    }
    return out;
}

/// A_k = (sigma_k^2/P_T) * power * I + sum_m H_k V_m V_m^H H_k^H.
inline ComplexMatrix receive_covariance(int user, const CrossProducts& hv, double power, const SystemConfig& config) {
    const auto& row = hv[static_cast<std::size_t>(user)];
    const Index nr = row.front().rows();
    ComplexMatrix a = ComplexMatrix::Identity(nr, nr) * (config.noise_ratio(user) * power);
    for (const auto& g : row) a.noalias() += g * g.adjoint();
    return a;
}

/// B = sum_k (sigma_k^2/P_T) omega_k Tr(U_k W_k U_k^H) I + sum_m omega_m F_m W_m F_m^H
/// with F_m = H_m^H U_m supplied by the caller.
inline ComplexMatrix transmit_matrix(const std::vector<ComplexMatrix>& hu, const std::vector<ComplexMatrix>& u,
                                     const std::vector<ComplexMatrix>& w, const SystemConfig& config) {
    const Index nt = hu.front().rows();
    Complex loading = 0.0;
    ComplexMatrix b = ComplexMatrix::Zero(nt, nt);
    for (std::size_t m = 0; m < hu.size(); ++m) {
        const int user = static_cast<int>(m);
        const double wt = config.weight(user);
        loading += config.noise_ratio(user) * wt * trace_of_product(w[m], u[m].adjoint() * u[m]);
        b.noalias() += wt * (hu[m] * w[m] * hu[m].adjoint());
    }
    b.diagonal().array() += loading;
    return b;
}

inline std::vector<ComplexMatrix> matched_receivers(const ChannelSample& sample, const std::vector<ComplexMatrix>& u) {
    std::vector<ComplexMatrix> hu(u.size());
    for (std::size_t m = 0; m < u.size(); ++m) hu[m] = sample.h[m].adjoint() * u[m];
    return hu;
}

/// Result of the closed-form precoder update V_k = B^{-1} omega_k H_k^H U_k W_k.
struct PrecoderUpdate {
    ComplexMatrix b;
    ComplexMatrix b_inverse;
    std::vector<ComplexMatrix> hu;  // H_k^H U_k
    std::vector<ComplexMatrix> q;   // omega_k H_k^H U_k W_k
    Precoders v;
};

inline PrecoderUpdate precoder_from_receivers(const std::vector<ComplexMatrix>& u, const std::vector<ComplexMatrix>& w,
                                              const ChannelSample& sample, const SystemConfig& config) {
    PrecoderUpdate r;
    r.hu = matched_receivers(sample, u);
    r.b = transmit_matrix(r.hu, u, w, config);
    r.b_inverse = stable_inverse(r.b);
    r.q.resize(u.size());
    r.v.resize(u.size());
    for (std::size_t m = 0; m < u.size(); ++m) {
        r.q[m] = config.weight(static_cast<int>(m)) * (r.hu[m] * w[m]);
        r.v[m] = r.b_inverse * r.q[m];
    }
    return r;
}

/// Factor sqrt(P_T / sum Tr(V V^H)) that puts the precoders on the power budget.
inline double power_scale_factor(const Precoders& v, const SystemConfig& config) {
    const double p = total_power(v);
    if (!(p > 0.0) || !std::isfinite(p)) throw DegenerateInput("scale_to_power: precoders carry no power");
    return std::sqrt(config.total_power / p);
}

inline Precoders scale_to_power(Precoders v, const SystemConfig& config) {
    const double alpha = power_scale_factor(v, config);
    for (auto& m : v) m *= alpha;
    return v;
}

} // namespace uwmmse
