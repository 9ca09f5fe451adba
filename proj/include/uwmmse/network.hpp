#pragma once

// Unfolded WMMSE network. Each layer replaces the three matrix inversions of
// a WMMSE sweep with a trainable surrogate
//
//     standard:  inv(A) ~ A+ X + A Y + Z
//     improved:  inv(A) ~ A^{-1} X + P A Y + Z
//
// where A+ keeps only the reciprocal diagonal. U and V blocks also carry a
// trainable offset. Precoders are renormalized to the power budget after
// every layer; the last layer computes V with the exact closed-form update.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uwmmse/precoder.hpp"
#include "uwmmse/wmmse.hpp"
#include "uwmmse/zero_forcing.hpp"

namespace uwmmse {

enum class Variant : std::uint8_t { standard = 0, improved = 1 };

inline const char* to_string(Variant v) { return v == Variant::improved ? "improved" : "standard"; }

inline Variant parse_variant(const std::string& s) {
    if (s == "standard") return Variant::standard;
    if (s == "improved") return Variant::improved;
    throw DegenerateInput("unknown variant '" + s + "' (expected standard|improved)");
}

/// Trainable factors of one inverse surrogate. `p` is used by the improved variant only.
struct SurrogateParams {
    ComplexMatrix x, y, z, p;
};

struct UserParams {
    SurrogateParams u;       // Nr x Nr
    ComplexMatrix offset_u;  // Nr x d
    SurrogateParams w;       // d x d
    SurrogateParams v;       // Nt x Nt, empty in the last layer
    ComplexMatrix offset_v;  // Nt x d, empty in the last layer
};

struct LayerParams {
    std::vector<UserParams> users;
    bool has_v_block = true;
};

/// Trainable parameters of the whole network. The same type carries
/// parameter gradients.
struct ModelParams {
    SystemConfig config;
    Variant variant = Variant::standard;
    std::vector<LayerParams> layers;

    int num_layers() const { return static_cast<int>(layers.size()); }
};

/// Visits every trainable block in checkpoint order: per layer, per user,
/// Xu Yu Zu Ou Xw Yw Zw [Xv Yv Zv Ov] then, for the improved variant, Pu Pw [Pv].
template <class Params, class Fn>
void for_each_block(Params& params, Fn&& fn) {
    const bool improved = params.variant == Variant::improved;
    for (auto& layer : params.layers) {
        for (auto& user : layer.users) {
            fn(user.u.x);
            fn(user.u.y);
            fn(user.u.z);
            fn(user.offset_u);
            fn(user.w.x);
            fn(user.w.y);
            fn(user.w.z);
            if (layer.has_v_block) {
                fn(user.v.x);
                fn(user.v.y);
                fn(user.v.z);
                fn(user.offset_v);
            }
            if (improved) {
                fn(user.u.p);
                fn(user.w.p);
                if (layer.has_v_block) fn(user.v.p);
            }
        }
    }
}

/// Visits corresponding blocks of two structurally identical parameter sets.
template <class A, class B, class Fn>
void for_each_block_pair(A& a, B& b, Fn&& fn) {
    std::vector<ComplexMatrix*> lhs;
    std::vector<const ComplexMatrix*> rhs;
    for_each_block(a, [&](auto& m) { lhs.push_back(const_cast<ComplexMatrix*>(&m)); });
    for_each_block(b, [&](const auto& m) { rhs.push_back(&m); });
    if (lhs.size() != rhs.size()) throw ShapeMismatch("parameter sets have different structure");
    for (std::size_t i = 0; i < lhs.size(); ++i) fn(*lhs[i], *rhs[i]);
}

inline std::size_t parameter_count(const ModelParams& params) {
    std::size_t n = 0;
    for_each_block(params, [&](const ComplexMatrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

/// Per-layer count of the standard variant when the layer has a V block.
inline std::size_t layer_parameter_count(const SystemConfig& c) {
    const std::size_t nt = c.nt, nr = c.nr, d = c.d, k = c.k;
    return (3 * nr * nr + 3 * d * d + 3 * nt * nt + d * nr + d * nt) * k;
}

/// Total count of the standard variant with `layers` layers (no V block in the last).
inline std::size_t model_parameter_count(const SystemConfig& c, int layers) {
    const std::size_t nt = c.nt, nr = c.nr, d = c.d, k = c.k, l = static_cast<std::size_t>(layers);
    return l * k * (3 * nr * nr + 3 * d * d + d * nr) + (l - 1) * k * (3 * nt * nt + d * nt);
}

/// Parameter set of the right shapes with every entry zero.
inline ModelParams zero_params(const SystemConfig& config, int layers, Variant variant) {
    ModelParams p;
    p.config = config;
    p.variant = variant;
    p.layers.resize(static_cast<std::size_t>(layers));
    const bool improved = variant == Variant::improved;
    for (int l = 0; l < layers; ++l) {
        LayerParams& layer = p.layers[static_cast<std::size_t>(l)];
        layer.has_v_block = l + 1 < layers;
        layer.users.resize(static_cast<std::size_t>(config.k));
        for (auto& user : layer.users) {
            auto square = [](Index n) { return ComplexMatrix::Zero(n, n).eval(); };
            user.u = {square(config.nr), square(config.nr), square(config.nr),
                      improved ? square(config.nr) : ComplexMatrix()};
            user.offset_u = ComplexMatrix::Zero(config.nr, config.d);
            user.w = {square(config.d), square(config.d), square(config.d),
                      improved ? square(config.d) : ComplexMatrix()};
            if (layer.has_v_block) {
                user.v = {square(config.nt), square(config.nt), square(config.nt),
                          improved ? square(config.nt) : ComplexMatrix()};
                user.offset_v = ComplexMatrix::Zero(config.nt, config.d);
            }
        }
    }
    return p;
}

/// Explicit surrogate matrix: A+ X + A Y + Z, or A^{-1} X + P A Y + Z.
inline ComplexMatrix inv_surrogate(const ComplexMatrix& a, const ComplexMatrix& x, const ComplexMatrix& y,
                                   const ComplexMatrix& z, Variant variant, const ComplexMatrix& p = {}) {
    require_square(a, "inv_surrogate");
    require_same_shape(a, x, "inv_surrogate X");
    require_same_shape(a, y, "inv_surrogate Y");
    require_same_shape(a, z, "inv_surrogate Z");
    if (variant == Variant::standard) {
        return diag_reciprocal(a) * x + a * y + z;
    }
    require_same_shape(a, p, "inv_surrogate P");
    return stable_inverse(a) * x + p * a * y + z;
}

/// The matrix a surrogate is built from, with the reciprocal diagonal
/// (standard) or the exact inverse (improved) precomputed.
struct SurrogateBasis {
    ComplexMatrix arg;
    ComplexVector recip;
    ComplexMatrix inverse;
};

inline SurrogateBasis make_surrogate_basis(ComplexMatrix arg, Variant variant) {
    SurrogateBasis b;
    if (variant == Variant::standard) {
        b.recip = diag_reciprocal_vector(arg);
    } else {
        b.inverse = stable_inverse(arg);
    }
    b.arg = std::move(arg);
    return b;
}

/// surrogate(A) * R evaluated right-to-left, plus the partial products the
/// reverse pass needs.
struct SurrogateProducts {
    ComplexMatrix x_rhs;      // X R
    ComplexMatrix y_rhs;      // Y R
    ComplexMatrix arg_y_rhs;  // A Y R (improved variant)
    ComplexMatrix value;
};

inline SurrogateProducts apply_surrogate(const SurrogateBasis& basis, const SurrogateParams& p, const ComplexMatrix& rhs,
                                         Variant variant) {
    SurrogateProducts s;
    s.x_rhs = p.x * rhs;
    s.y_rhs = p.y * rhs;
    if (variant == Variant::standard) {
        s.value = basis.recip.asDiagonal() * s.x_rhs;
        s.value.noalias() += basis.arg * s.y_rhs;
    } else {
        s.arg_y_rhs = basis.arg * s.y_rhs;
        s.value = basis.inverse * s.x_rhs;
        s.value.noalias() += p.p * s.arg_y_rhs;
    }
    s.value.noalias() += p.z * rhs;
    return s;
}

struct ForwardOptions {
    /// Renormalize V to the power budget after every layer. Disabling this is
    /// only meant for comparisons against the unnormalized reference iteration.
    bool normalize_layers = true;
};

/// Everything one layer computed, kept for the reverse pass.
struct LayerTrace {
    Precoders v_in;             // normalized precoders consumed by this layer
    CrossProducts hv;           // H_k V_m of the incoming (normalized) precoders
    double input_power = 0.0;   // sum Tr(V V^H) of the incoming precoders
    std::vector<SurrogateBasis> a;
    std::vector<SurrogateProducts> u_products;
    std::vector<ComplexMatrix> u;
    std::vector<SurrogateBasis> e;
    std::vector<SurrogateProducts> w_products;
    std::vector<ComplexMatrix> w;
    std::vector<ComplexMatrix> hu;  // H_k^H U_k
    std::vector<ComplexMatrix> q;   // omega_k H_k^H U_k W_k
    SurrogateBasis b;               // B; exact inverse stored in the last layer
    std::vector<SurrogateProducts> v_products;
    Precoders v_raw;                // before normalization
    double raw_power = 0.0;         // sum Tr(v_raw v_raw^H)
    Precoders v;                    // after normalization
    bool exact_v = false;           // V came from the closed-form update
    bool normalized = true;
};

struct ForwardTrace {
    Precoders v0;
    std::vector<LayerTrace> layers;
    double objective = 0.0;  // sum rate in nats, the training objective
    double sum_rate = 0.0;   // bits

    const Precoders& output() const { return layers.back().v; }
};

struct Normalized {
    Precoders v;
    double raw_power = 0.0;
};

/// Scales every V_k by sqrt(P_T / a), a = sum Tr(V V^H); returns a as well.
inline Normalized normalize_v(Precoders v, const SystemConfig& config) {
    Normalized n;
    n.raw_power = total_power(v);
    const double s = power_scale_factor(v, config);
    for (auto& m : v) m *= s;
    n.v = std::move(v);
    return n;
}

/// U and W of one layer (and V when the layer has a V block) from the
/// normalized precoders of the previous layer.
inline LayerTrace forward_layer(const Precoders& v_prev, const LayerParams& params, const ChannelSample& sample,
                                const SystemConfig& config, Variant variant, const ForwardOptions& options = {}) {
    const std::size_t k = static_cast<std::size_t>(config.k);
    if (params.users.size() != k) throw ShapeMismatch("forward_layer: parameter user count differs from scenario");
    LayerTrace t;
    t.normalized = options.normalize_layers;
    t.v_in = v_prev;
    t.hv = cross_products(sample, v_prev);
    t.input_power = total_power(v_prev);
    t.a.resize(k);
    t.u_products.resize(k);
    t.u.resize(k);
    t.e.resize(k);
    t.w_products.resize(k);
    t.w.resize(k);
    const ComplexMatrix eye_d = ComplexMatrix::Identity(config.d, config.d);
    for (std::size_t i = 0; i < k; ++i) {
        const UserParams& p = params.users[i];
        const int user = static_cast<int>(i);
        t.a[i] = make_surrogate_basis(receive_covariance(user, t.hv, t.input_power, config), variant);
        t.u_products[i] = apply_surrogate(t.a[i], p.u, t.hv[i][i], variant);
        t.u[i] = t.u_products[i].value + p.offset_u;

        t.e[i] = make_surrogate_basis(eye_d - t.u[i].adjoint() * t.hv[i][i], variant);
        t.w_products[i] = apply_surrogate(t.e[i], p.w, eye_d, variant);
        t.w[i] = t.w_products[i].value;
    }
    if (!params.has_v_block) return t;

    t.hu = matched_receivers(sample, t.u);
    t.b = make_surrogate_basis(transmit_matrix(t.hu, t.u, t.w, config), variant);
    t.q.resize(k);
    t.v_products.resize(k);
    t.v_raw.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        t.q[i] = config.weight(static_cast<int>(i)) * (t.hu[i] * t.w[i]);
        t.v_products[i] = apply_surrogate(t.b, params.users[i].v, t.q[i], variant);
        t.v_raw[i] = t.v_products[i].value + params.users[i].offset_v;
    }
    if (options.normalize_layers) {
        Normalized n = normalize_v(t.v_raw, config);
        t.raw_power = n.raw_power;
        t.v = std::move(n.v);
    } else {
        t.raw_power = total_power(t.v_raw);
        t.v = t.v_raw;
    }
    return t;
}

/// Exact closed-form V from the last layer's U and W, scaled to the budget.
/// Shares its code path with the WMMSE precoder update.
inline void final_layer_v(LayerTrace& t, const ChannelSample& sample, const SystemConfig& config) {
    PrecoderUpdate upd = precoder_from_receivers(t.u, t.w, sample, config);
    t.exact_v = true;
    t.hu = std::move(upd.hu);
    t.q = std::move(upd.q);
    t.b.arg = std::move(upd.b);
    t.b.inverse = std::move(upd.b_inverse);
    t.v_raw = std::move(upd.v);
    Normalized n = normalize_v(t.v_raw, config);
    t.raw_power = n.raw_power;
    t.v = std::move(n.v);
}

/// Zero-forcing start, L-1 full layers, U/W of layer L, closed-form V.
inline ForwardTrace forward_pass(const ModelParams& params, const ChannelSample& sample, const SystemConfig& config,
                                 const ForwardOptions& options = {}) {
    if (params.layers.empty()) throw DegenerateInput("forward_pass: model has no layers");
    ForwardTrace trace;
    trace.v0 = zf_init(sample, config);
    trace.layers.reserve(params.layers.size());
    const Precoders* prev = &trace.v0;
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        trace.layers.push_back(forward_layer(*prev, params.layers[l], sample, config, params.variant, options));
        LayerTrace& t = trace.layers.back();
        if (!params.layers[l].has_v_block) final_layer_v(t, sample, config);
        prev = &t.v;
    }
    const RateEvaluation rate = evaluate_sum_rate(trace.output(), sample, config);
    trace.objective = rate.nats;
    trace.sum_rate = rate.bits();
    return trace;
}

/// Sum rate (bits) of the network output; no trace retained.
inline double network_rate(const ModelParams& params, const ChannelSample& sample, const SystemConfig& config) {
    return forward_pass(params, sample, config).sum_rate;
}

} // namespace uwmmse
