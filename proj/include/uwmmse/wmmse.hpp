#pragma once

// Reference WMMSE solver: block coordinate descent on the weighted MMSE
// objective with a normalized noise term, which shares its stationary
// precoders (up to scale) with the power-constrained sum-rate problem.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "uwmmse/precoder.hpp"
#include "uwmmse/zero_forcing.hpp"

namespace uwmmse {

struct PrecoderState {
    std::vector<ComplexMatrix> u;  // K x (Nr x d)
    std::vector<ComplexMatrix> w;  // K x (d x d)
    Precoders v;                   // K x (Nt x d)
};

struct SolveReport {
    int iterations = 0;                   // of the best run
    std::vector<double> objective_trace;  // MMSE objective per iteration of the best run (nats)
    double sum_rate = 0.0;                // bits per channel use
    int best_restart = 0;
    std::vector<double> restart_rates;
    bool converged = false;
};

inline void to_json(nlohmann::json& j, const SolveReport& r) {
    j = nlohmann::json{{"iterations", r.iterations},       {"objective_trace", r.objective_trace},
                       {"sum_rate_bits", r.sum_rate},      {"best_restart", r.best_restart},
                       {"restart_rates", r.restart_rates}, {"converged", r.converged}};
}

struct WmmseSettings {
    double tolerance = 1e-4;  // relative change of the MMSE objective
    int max_iterations = 200;
    int restarts = 1;
    std::uint64_t seed = 0;
};

struct RateEvaluation {
    double nats = 0.0;
    bool degenerate = false;  // every precoder was zero
    double bits() const { return nats / std::numbers::ln2; }
};

/// Weighted sum rate with noise scaled by sum Tr(V V^H) / P_T. Invariant to a
/// common scaling of the precoders; equals the constrained objective when the
/// power budget is met with equality.
inline RateEvaluation evaluate_sum_rate(const Precoders& v, const ChannelSample& sample, const SystemConfig& config) {
    RateEvaluation out;
    const double power = total_power(v);
    if (!(power > 0.0)) {
        out.degenerate = true;
        return out;
    }
    const CrossProducts hv = cross_products(sample, v);
    for (int k = 0; k < config.k; ++k) {
        const ComplexMatrix total = receive_covariance(k, hv, power, config);
        const auto& own = hv[static_cast<std::size_t>(k)][static_cast<std::size_t>(k)];
        const ComplexMatrix interference = total - own * own.adjoint();
        out.nats += config.weight(k) * (log_det_positive(total) - log_det_positive(interference));
    }
    return out;
}

/// Sum rate in bits; zero for all-zero precoders (see evaluate_sum_rate for the flag).
inline double sum_rate(const Precoders& v, const ChannelSample& sample, const SystemConfig& config) {
    return evaluate_sum_rate(v, sample, config).bits();
}

/// sum_k omega_k (Tr(W_k E_k) - log det W_k), E_k the MSE matrix with the
/// normalized noise term. Natural logarithm.
inline double mmse_objective(const PrecoderState& s, const ChannelSample& sample, const SystemConfig& config) {
    const double power = total_power(s.v);
    const CrossProducts hv = cross_products(sample, s.v);
    double obj = 0.0;
    for (int k = 0; k < config.k; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const ComplexMatrix& u = s.u[ku];
        const ComplexMatrix& w = s.w[ku];
        Eigen::PartialPivLU<ComplexMatrix> lu(w);
        const double scale = infinity_norm(w);
        for (Index i = 0; i < w.rows(); ++i) {
            if (!(std::abs(lu.matrixLU()(i, i)) > kSingularTol * scale)) throw SingularW("mmse_objective: W_k is singular");
        }
        const ComplexMatrix a = receive_covariance(k, hv, power, config);
        const ComplexMatrix& g = hv[ku][ku];
        const ComplexMatrix uhg = u.adjoint() * g;
        const ComplexMatrix mse =
            ComplexMatrix::Identity(config.d, config.d) - uhg - uhg.adjoint() + u.adjoint() * a * u;
        obj += config.weight(k) * (trace_of_product(w, mse).real() - log_det_positive(w));
    }
    return obj;
}

/// One BCD sweep U -> W -> V, each block using the freshest values.
inline PrecoderState wmmse_iteration(const PrecoderState& s, const ChannelSample& sample, const SystemConfig& config) {
    PrecoderState next;
    const double power = total_power(s.v);
    const CrossProducts hv = cross_products(sample, s.v);
    next.u.resize(static_cast<std::size_t>(config.k));
    next.w.resize(static_cast<std::size_t>(config.k));
    for (int k = 0; k < config.k; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const ComplexMatrix a = receive_covariance(k, hv, power, config);
        next.u[ku] = stable_inverse(a) * hv[ku][ku];
        const ComplexMatrix e = ComplexMatrix::Identity(config.d, config.d) - next.u[ku].adjoint() * hv[ku][ku];
        next.w[ku] = stable_inverse(e);
    }
    next.v = precoder_from_receivers(next.u, next.w, sample, config).v;
    return next;
}

namespace detail {

inline Precoders random_precoders(const SystemConfig& config, std::mt19937_64& rng) {
    Precoders v;
    for (int k = 0; k < config.k; ++k) v.push_back(random_complex_gaussian(config.nt, config.d, rng));
    return scale_to_power(std::move(v), config);
}

struct RunResult {
    PrecoderState state;
    std::vector<double> trace;
    bool converged = false;
};

inline RunResult iterate_from(Precoders v0, const ChannelSample& sample, const SystemConfig& config,
                              const WmmseSettings& settings) {
    RunResult r;
    r.state.v = std::move(v0);
    double previous = std::numeric_limits<double>::quiet_NaN();
    for (int t = 0; t < settings.max_iterations; ++t) {
        r.state = wmmse_iteration(r.state, sample, config);
        const double obj = mmse_objective(r.state, sample, config);
        r.trace.push_back(obj);
        if (std::isfinite(previous) &&
            std::abs(previous - obj) <= settings.tolerance * std::max(std::abs(previous), 1e-12)) {
            r.converged = true;
            break;
        }
        previous = obj;
    }
    r.state.v = scale_to_power(std::move(r.state.v), config);
    return r;
}

} // namespace detail

/// Best-of-restarts WMMSE. Restart 0 starts from zero-forcing, later restarts
/// from power-scaled complex Gaussian precoders seeded by (settings.seed,
/// sample.seed, restart).
inline std::pair<PrecoderState, SolveReport> run_wmmse(const ChannelSample& sample, const SystemConfig& config,
                                                       const WmmseSettings& settings = {}) {
    if (!(settings.tolerance > 0.0) || settings.max_iterations < 1 || settings.restarts < 1) {
        throw DegenerateInput("run_wmmse: need tolerance > 0, max_iterations >= 1, restarts >= 1");
    }
    PrecoderState best;
    SolveReport report;
    report.sum_rate = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < settings.restarts; ++r) {
        Precoders v0;
        if (r == 0) {
            v0 = zf_init(sample, config);
        } else {
            std::seed_seq seq{static_cast<std::uint32_t>(settings.seed), static_cast<std::uint32_t>(settings.seed >> 32),
                              static_cast<std::uint32_t>(sample.seed), static_cast<std::uint32_t>(sample.seed >> 32),
                              static_cast<std::uint32_t>(r)};
            std::mt19937_64 rng(seq);
            v0 = detail::random_precoders(config, rng);
        }
        auto run = detail::iterate_from(std::move(v0), sample, config, settings);
        const double rate = sum_rate(run.state.v, sample, config);
        report.restart_rates.push_back(rate);
        if (rate > report.sum_rate) {
            report.sum_rate = rate;
            report.best_restart = r;
            report.iterations = static_cast<int>(run.trace.size());
            report.objective_trace = std::move(run.trace);
            report.converged = run.converged;
            best = std::move(run.state);
        }
    }
    return {std::move(best), std::move(report)};
}

} // namespace uwmmse
