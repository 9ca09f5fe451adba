#pragma once

// Closed-form reverse pass through the unfolded network.
//
// Every adjoint here is the conjugate Wirtinger derivative X_bar = df/dX*,
// so that for real f, df = 2 Re Tr(X_bar^H dX). With this convention
//   Y = A X B      ->  X_bar = A^H Y_bar B^H
//   Y = X^{-1}     ->  X_bar = -Y^H Y_bar Y^H
//   f = log det M  ->  M_bar = M^{-1} / 2   (M Hermitian positive definite)
// and a gradient-ascent step is X += lr * X_bar up to a factor of two.

#include <cmath>
#include <vector>

#include "uwmmse/network.hpp"

namespace uwmmse {

/// Coefficients of one generalized chain-rule step G_prev = E ((F G A) o B^T) C.
struct GcrLayerSpec {
    ComplexMatrix a, b, c, e, f;
};

inline ComplexMatrix gcr_propagate(const ComplexMatrix& g_next, const GcrLayerSpec& s) {
    require_product(s.f, g_next, "gcr_propagate F*G");
    const ComplexMatrix fg = s.f * g_next;
    require_product(fg, s.a, "gcr_propagate (FG)*A");
    const ComplexMatrix fga = fg * s.a;
    const ComplexMatrix bt = s.b.transpose();
    require_same_shape(fga, bt, "gcr_propagate Hadamard with B^T");
    const ComplexMatrix h = fga.cwiseProduct(bt);
    require_product(s.e, h, "gcr_propagate E*(.)");
    const ComplexMatrix eh = s.e * h;
    require_product(eh, s.c, "gcr_propagate (.)*C");
    return eh * s.c;
}

/// Backpropagation through z = W x, y = phi(z): g_prev = (W^T g) o phi'(z).
inline ComplexMatrix standard_chain_rule(const ComplexMatrix& w, const ComplexMatrix& g_next,
                                         const ComplexMatrix& dphi) {
    require_product(w.transpose(), g_next, "standard_chain_rule");
    const ComplexMatrix wg = w.transpose() * g_next;
    require_same_shape(wg, dphi, "standard_chain_rule");
    return wg.cwiseProduct(dphi);
}

/// Gradient step through the quadratic layer
///     X_next = A X B X C + phi(A X B X C) D
/// in trace form (df = Tr(G dX)), given G of X_next and phi' at Y = A X B X C.
/// The element-wise part is one generalized chain-rule step with F = D.
inline ComplexMatrix quadratic_layer_gradient(const ComplexMatrix& g_next, const ComplexMatrix& x,
                                              const ComplexMatrix& a, const ComplexMatrix& b, const ComplexMatrix& c,
                                              const ComplexMatrix& d, const ComplexMatrix& dphi) {
    const Index m = dphi.rows(), n = dphi.cols();
    GcrLayerSpec spec{ComplexMatrix::Identity(m, m), dphi, ComplexMatrix::Identity(m, m), ComplexMatrix::Identity(n, n), d};
    const ComplexMatrix g_y = g_next + gcr_propagate(g_next, spec);
    return b * x * c * g_y * a + c * g_y * a * x * b;
}

/// Adjoint of the sum rate (nats) with respect to the precoders it is evaluated at.
inline Precoders sum_rate_adjoint(const Precoders& v, const ChannelSample& sample, const SystemConfig& config) {
    const double power = total_power(v);
    if (!(power > 0.0)) throw DegenerateInput("sum_rate_adjoint: precoders carry no power");
    const CrossProducts hv = cross_products(sample, v);
    const std::size_t k = v.size();
    Precoders grad(k);
    for (std::size_t m = 0; m < k; ++m) grad[m] = ComplexMatrix::Zero(v[m].rows(), v[m].cols());
    double c_bar = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const int user = static_cast<int>(i);
        const double wt = config.weight(user);
        const ComplexMatrix total = receive_covariance(user, hv, power, config);
        const ComplexMatrix interference = total - hv[i][i] * hv[i][i].adjoint();
        const ComplexMatrix t_bar = 0.5 * wt * stable_inverse(total);
        const ComplexMatrix n_bar = -0.5 * wt * stable_inverse(interference);
        c_bar += 2.0 * config.noise_ratio(user) * (t_bar + n_bar).trace().real();
        const ComplexMatrix s_other = t_bar + n_bar;
        const ComplexMatrix h_adj = sample.h[i].adjoint();
        for (std::size_t m = 0; m < k; ++m) {
            const ComplexMatrix& s = m == i ? t_bar : s_other;
            grad[m].noalias() += 2.0 * (h_adj * (s * hv[i][m]));
        }
    }
    for (std::size_t m = 0; m < k; ++m) grad[m] += c_bar * v[m];
    return grad;
}

namespace detail {

/// Adjoints of U and W through B = sum kappa w Tr(U W U^H) I + sum w F W F^H
/// and q = w F W, F = H^H U.
inline void transmit_side_backward(const ComplexMatrix& b_bar, const std::vector<ComplexMatrix>& q_bar,
                                   const LayerTrace& t, const ChannelSample& sample, const SystemConfig& config,
                                   std::vector<ComplexMatrix>& u_bar, std::vector<ComplexMatrix>& w_bar) {
    const Complex s_bar = b_bar.trace();
    const ComplexMatrix b_bar_h = b_bar.adjoint();
    for (std::size_t m = 0; m < t.u.size(); ++m) {
        const int user = static_cast<int>(m);
        const double wt = config.weight(user);
        const ComplexMatrix& u = t.u[m];
        const ComplexMatrix& w = t.w[m];
        const ComplexMatrix& f = t.hu[m];

        const Complex t_bar = config.noise_ratio(user) * wt * s_bar;
        w_bar[m].noalias() += t_bar * (u.adjoint() * u);
        u_bar[m].noalias() += t_bar * (u * w.adjoint()) + std::conj(t_bar) * (u * w);

        ComplexMatrix f_bar = wt * (b_bar * (f * w.adjoint()) + b_bar_h * (f * w));
        w_bar[m].noalias() += wt * (f.adjoint() * b_bar * f);
        if (!q_bar.empty()) {
            f_bar.noalias() += wt * (q_bar[m] * w.adjoint());
            w_bar[m].noalias() += wt * (f.adjoint() * q_bar[m]);
        }
        u_bar[m].noalias() += sample.h[m] * f_bar;
    }
}

} // namespace detail

/// Basis adjoints accumulated while back-propagating one or more surrogate
/// applications that share the same argument matrix.
struct SurrogateBasisAdjoint {
    ComplexMatrix arg;
    ComplexVector recip;
    ComplexMatrix inverse;

    static SurrogateBasisAdjoint zeros(const SurrogateBasis& b) {
        SurrogateBasisAdjoint a;
        a.arg = ComplexMatrix::Zero(b.arg.rows(), b.arg.cols());
        a.recip = ComplexVector::Zero(b.arg.rows());
        a.inverse = ComplexMatrix::Zero(b.arg.rows(), b.arg.cols());
        return a;
    }
};

/// Back-propagates value_bar through value = surrogate(A) R (+ offset).
/// Accumulates into the basis adjoint and returns R_bar.
inline ComplexMatrix surrogate_backward(const SurrogateBasis& basis, const SurrogateParams& p,
                                        const SurrogateProducts& prod, const ComplexMatrix& value_bar,
                                        Variant variant, SurrogateBasisAdjoint& basis_bar) {
    ComplexMatrix rhs_bar = p.z.adjoint() * value_bar;
    if (variant == Variant::standard) {
        basis_bar.recip += value_bar.cwiseProduct(prod.x_rhs.conjugate()).rowwise().sum();
        rhs_bar.noalias() += p.x.adjoint() * (basis.recip.conjugate().asDiagonal() * value_bar);
        basis_bar.arg.noalias() += value_bar * prod.y_rhs.adjoint();
        rhs_bar.noalias() += p.y.adjoint() * (basis.arg.adjoint() * value_bar);
    } else {
        basis_bar.inverse.noalias() += value_bar * prod.x_rhs.adjoint();
        rhs_bar.noalias() += p.x.adjoint() * (basis.inverse.adjoint() * value_bar);
        const ComplexMatrix s_bar = p.p.adjoint() * value_bar;
        basis_bar.arg.noalias() += s_bar * prod.y_rhs.adjoint();
        rhs_bar.noalias() += p.y.adjoint() * (basis.arg.adjoint() * s_bar);
    }
    return rhs_bar;
}

/// Folds the reciprocal/inverse adjoint back onto the argument matrix.
inline ComplexMatrix finish_basis_adjoint(const SurrogateBasis& basis, const SurrogateBasisAdjoint& bar,
                                          Variant variant) {
    ComplexMatrix arg_bar = bar.arg;
    if (variant == Variant::standard) {
        for (Index i = 0; i < arg_bar.rows(); ++i) {
            const Complex r = std::conj(basis.recip(i));
            arg_bar(i, i) -= r * r * bar.recip(i);
        }
    } else {
        const ComplexMatrix inv_h = basis.inverse.adjoint();
        arg_bar.noalias() -= inv_h * bar.inverse * inv_h;
    }
    return arg_bar;
}

/// Gradient of a surrogate's own parameters for value = surrogate(A) R + O.
inline SurrogateParams surrogate_param_gradient(const SurrogateBasis& basis, const SurrogateParams& p,
                                                const ComplexMatrix& rhs, const SurrogateProducts& prod,
                                                const ComplexMatrix& value_bar, Variant variant) {
    SurrogateParams g;
    const ComplexMatrix rhs_h = rhs.adjoint();
    g.z = value_bar * rhs_h;
    if (variant == Variant::standard) {
        g.x = (basis.recip.conjugate().asDiagonal() * value_bar) * rhs_h;
        g.y = (basis.arg.adjoint() * value_bar) * rhs_h;
    } else {
        g.x = (basis.inverse.adjoint() * value_bar) * rhs_h;
        g.p = value_bar * prod.arg_y_rhs.adjoint();
        g.y = (basis.arg.adjoint() * (p.p.adjoint() * value_bar)) * rhs_h;
    }
    return g;
}

/// Adjoints of the state of one layer.
struct LayerGradients {
    std::vector<ComplexMatrix> u;        // of U^l
    std::vector<ComplexMatrix> w;        // of W^l
    std::vector<ComplexMatrix> v;        // of the pre-normalization V^l (empty without a V block)
    std::vector<ComplexMatrix> v_input;  // of the normalized V^{l-1} this layer consumed
};

struct LastLayerGradients {
    std::vector<ComplexMatrix> u;
    std::vector<ComplexMatrix> w;
};

/// Adjoints of U^L and W^L for f = sum rate of the closed-form, power-scaled V^L.
inline LastLayerGradients last_layer_gradients(const LayerTrace& t, const ChannelSample& sample,
                                               const SystemConfig& config) {
    if (!t.exact_v) throw DegenerateInput("last_layer_gradients: layer has no closed-form V");
    const std::size_t k = t.u.size();
    // The rate is scale invariant, so the adjoint at the scaled V equals the
    // adjoint at the unscaled closed-form V divided by the scale; evaluate it
    // directly at the unscaled point.
    const Precoders v_bar = sum_rate_adjoint(t.v_raw, sample, config);
    std::vector<ComplexMatrix> q_bar(k);
    ComplexMatrix b_bar = ComplexMatrix::Zero(t.b.arg.rows(), t.b.arg.cols());
    const ComplexMatrix inv_h = t.b.inverse.adjoint();
    for (std::size_t m = 0; m < k; ++m) {
        q_bar[m] = inv_h * v_bar[m];
        b_bar.noalias() -= q_bar[m] * t.v_raw[m].adjoint();
    }
    LastLayerGradients g;
    g.u.resize(k);
    g.w.resize(k);
    for (std::size_t m = 0; m < k; ++m) {
        g.u[m] = ComplexMatrix::Zero(t.u[m].rows(), t.u[m].cols());
        g.w[m] = ComplexMatrix::Zero(t.w[m].rows(), t.w[m].cols());
    }
    detail::transmit_side_backward(b_bar, q_bar, t, sample, config, g.u, g.w);
    return g;
}

/// Adjoint of the pre-normalization precoders given the adjoint of the
/// normalized ones, V_n = sqrt(P_T / a) V_raw_n with a = sum Tr(V_raw V_raw^H).
inline Precoders normalization_backward(const Precoders& g_normalized, const Precoders& v_raw, double a,
                                        const SystemConfig& config) {
    if (!(a > 0.0)) throw DegenerateInput("normalization_backward: a must be positive");
    if (g_normalized.size() != v_raw.size()) throw ShapeMismatch("normalization_backward: user count mismatch");
    const double root_p = std::sqrt(config.total_power);
    const double s = root_p / std::sqrt(a);
    double rho = 0.0;
    for (std::size_t m = 0; m < v_raw.size(); ++m) {
        require_same_shape(g_normalized[m], v_raw[m], "normalization_backward");
        rho += trace_of_product(g_normalized[m].adjoint(), v_raw[m]).real();
    }
    const double coeff = root_p * std::pow(a, -1.5) * rho;
    Precoders out(v_raw.size());
    for (std::size_t m = 0; m < v_raw.size(); ++m) out[m] = s * g_normalized[m] - coeff * v_raw[m];
    return out;
}

/// Reverse pass through one layer. `u_bar`, `w_bar` are adjoints of this
/// layer's U and W arriving from outside the layer (the last-layer objective);
/// `v_bar` is the adjoint of this layer's pre-normalization V (empty when the
/// layer has no V block). Fills every state adjoint, including the one of the
/// normalized input precoders.
inline LayerGradients backward_layer(const LayerTrace& t, const LayerParams& params, std::vector<ComplexMatrix> u_bar,
                                     std::vector<ComplexMatrix> w_bar, const Precoders& v_bar,
                                     const ChannelSample& sample, const SystemConfig& config, Variant variant) {
    const std::size_t k = t.u.size();
    if (u_bar.size() != k || w_bar.size() != k) throw ShapeMismatch("backward_layer: adjoint user count mismatch");
    LayerGradients g;

    if (params.has_v_block) {
        if (v_bar.size() != k) throw ShapeMismatch("backward_layer: V adjoint missing for a layer with a V block");
        SurrogateBasisAdjoint b_acc = SurrogateBasisAdjoint::zeros(t.b);
        std::vector<ComplexMatrix> q_bar(k);
        for (std::size_t m = 0; m < k; ++m) {
            require_same_shape(v_bar[m], t.v_raw[m], "backward_layer V adjoint");
            q_bar[m] = surrogate_backward(t.b, params.users[m].v, t.v_products[m], v_bar[m], variant, b_acc);
        }
        const ComplexMatrix b_bar = finish_basis_adjoint(t.b, b_acc, variant);
        detail::transmit_side_backward(b_bar, q_bar, t, sample, config, u_bar, w_bar);
        g.v = v_bar;
    }

    // W = surrogate(E), E = I - U^H G_kk with G = H V^{l-1}.
    std::vector<std::vector<ComplexMatrix>> g_bar(k, std::vector<ComplexMatrix>(k));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t m = 0; m < k; ++m) g_bar[i][m] = ComplexMatrix::Zero(t.hv[i][m].rows(), t.hv[i][m].cols());
    }
    double c_bar = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const UserParams& p = params.users[i];
        SurrogateBasisAdjoint e_acc = SurrogateBasisAdjoint::zeros(t.e[i]);
        surrogate_backward(t.e[i], p.w, t.w_products[i], w_bar[i], variant, e_acc);
        const ComplexMatrix e_bar = finish_basis_adjoint(t.e[i], e_acc, variant);
        g_bar[i][i].noalias() -= t.u[i] * e_bar;
        u_bar[i].noalias() -= t.hv[i][i] * e_bar.adjoint();

        // U = surrogate(A) G_kk + O.
        SurrogateBasisAdjoint a_acc = SurrogateBasisAdjoint::zeros(t.a[i]);
        g_bar[i][i] += surrogate_backward(t.a[i], p.u, t.u_products[i], u_bar[i], variant, a_acc);
        const ComplexMatrix a_bar = finish_basis_adjoint(t.a[i], a_acc, variant);
        const ComplexMatrix a_sym = a_bar + a_bar.adjoint();
        for (std::size_t m = 0; m < k; ++m) g_bar[i][m].noalias() += a_sym * t.hv[i][m];
        c_bar += 2.0 * config.noise_ratio(static_cast<int>(i)) * a_bar.trace().real();
    }
    g.u = std::move(u_bar);
    g.w = std::move(w_bar);

    // Incoming precoders: G_km = H_k V_m and the noise loading c = sum Tr(V V^H).
    g.v_input.resize(k);
    for (std::size_t m = 0; m < k; ++m) {
        ComplexMatrix acc = c_bar * t.v_in[m];
        for (std::size_t i = 0; i < k; ++i) acc.noalias() += sample.h[i].adjoint() * g_bar[i][m];
        g.v_input[m] = std::move(acc);
    }
    return g;
}

/// Parameter gradients of one layer from its state adjoints.
inline LayerParams parameter_gradients(const LayerGradients& g, const LayerTrace& t, const LayerParams& params,
                                       const SystemConfig& config, Variant variant) {
    const std::size_t k = t.u.size();
    LayerParams out;
    out.has_v_block = params.has_v_block;
    out.users.resize(k);
    const ComplexMatrix eye_d = ComplexMatrix::Identity(config.d, config.d);
    for (std::size_t i = 0; i < k; ++i) {
        const UserParams& p = params.users[i];
        UserParams& o = out.users[i];
        o.u = surrogate_param_gradient(t.a[i], p.u, t.hv[i][i], t.u_products[i], g.u[i], variant);
        o.offset_u = g.u[i];
        o.w = surrogate_param_gradient(t.e[i], p.w, eye_d, t.w_products[i], g.w[i], variant);
        if (params.has_v_block) {
            o.v = surrogate_param_gradient(t.b, p.v, t.q[i], t.v_products[i], g.v[i], variant);
            o.offset_v = g.v[i];
        }
    }
    return out;
}

struct GradientBundle {
    std::vector<LayerGradients> layers;
    Precoders v0;        // adjoint of the zero-forcing start point
    ModelParams params;  // parameter gradients, same layout as the model
};

/// Full reverse pass for one sample. Parameter gradients are df/dtheta* of the
/// sum rate in nats.
inline GradientBundle backward_pass(const ForwardTrace& trace, const ChannelSample& sample, const SystemConfig& config,
                                    const ModelParams& params) {
    const std::size_t n = params.layers.size();
    if (trace.layers.size() != n) throw ShapeMismatch("backward_pass: trace and model layer counts differ");
    GradientBundle bundle;
    bundle.layers.resize(n);
    bundle.params.config = params.config;
    bundle.params.variant = params.variant;
    bundle.params.layers.resize(n);

    LastLayerGradients last = last_layer_gradients(trace.layers.back(), sample, config);
    std::vector<ComplexMatrix> u_bar = std::move(last.u);
    std::vector<ComplexMatrix> w_bar = std::move(last.w);
    Precoders v_bar;
    for (std::size_t step = 0; step < n; ++step) {
        const std::size_t l = n - 1 - step;
        const LayerTrace& t = trace.layers[l];
        LayerGradients g = backward_layer(t, params.layers[l], std::move(u_bar), std::move(w_bar), v_bar, sample,
                                          config, params.variant);
        bundle.params.layers[l] = parameter_gradients(g, t, params.layers[l], config, params.variant);
        if (l > 0) {
            const LayerTrace& prev = trace.layers[l - 1];
            v_bar = prev.normalized ? normalization_backward(g.v_input, prev.v_raw, prev.raw_power, config) : g.v_input;
            u_bar.clear();
            w_bar.clear();
            for (std::size_t m = 0; m < prev.u.size(); ++m) {
                u_bar.push_back(ComplexMatrix::Zero(prev.u[m].rows(), prev.u[m].cols()));
                w_bar.push_back(ComplexMatrix::Zero(prev.w[m].rows(), prev.w[m].cols()));
            }
        } else {
            bundle.v0 = g.v_input;
        }
        bundle.layers[l] = std::move(g);
    }
    return bundle;
}

} // namespace uwmmse
