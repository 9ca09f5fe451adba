#pragma once

// Mini-batch training of the unfolded network by gradient ascent on the
// batch-mean sum rate, plus evaluation against the reference solver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "uwmmse/backprop.hpp"
#include "uwmmse/wmmse.hpp"

namespace uwmmse {

enum class InitScheme : std::uint8_t {
    gaussian,  // every entry complex Gaussian with variance 1/rows
    structured,  // starts at a known precoder: see init_params
};

inline InitScheme parse_init_scheme(const std::string& s) {
    if (s == "gaussian") return InitScheme::gaussian;
    if (s == "structured") return InitScheme::structured;
    throw DegenerateInput("unknown init scheme '" + s + "' (expected gaussian|structured)");
}

inline const char* to_string(InitScheme s) { return s == InitScheme::structured ? "structured" : "gaussian"; }

enum class Optimizer : std::uint8_t { sgd, adam };

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "sgd") return Optimizer::sgd;
    if (s == "adam") return Optimizer::adam;
    throw DegenerateInput("unknown optimizer '" + s + "' (expected sgd|adam)");
}

inline const char* to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

struct TrainConfig {
    int batch_size = 10;
    double alpha = 0.6;
    double lr_scale = 0.0;  // 0: default_lr_scale(variant)
    int max_iterations = 20000;
    int validation_interval = 50;
    int patience = 10;
    std::uint64_t seed = 1;
    std::size_t validation_limit = 0;  // 0: use the whole validation split
    Optimizer optimizer = Optimizer::sgd;
    int threads = 1;

    void validate() const {
        if (batch_size < 1) throw DegenerateInput("batch_size must be >= 1");
        if (!(alpha > 0.0 && alpha < 1.0)) throw DegenerateInput("alpha must lie in (0, 1)");
        if (!(lr_scale >= 0.0)) throw DegenerateInput("lr_scale must be non-negative");
        if (max_iterations < 1 || validation_interval < 1 || patience < 1) {
            throw DegenerateInput("max_iterations, validation_interval and patience must be >= 1");
        }
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"batch_size", c.batch_size},
                       {"alpha", c.alpha},
                       {"lr_scale", c.lr_scale},
                       {"max_iterations", c.max_iterations},
                       {"validation_interval", c.validation_interval},
                       {"patience", c.patience},
                       {"seed", c.seed},
                       {"validation_limit", c.validation_limit},
                       {"optimizer", to_string(c.optimizer)},
                       {"threads", c.threads}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.alpha = j.value("alpha", c.alpha);
    c.lr_scale = j.value("lr_scale", c.lr_scale);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.validation_interval = j.value("validation_interval", c.validation_interval);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.validation_limit = j.value("validation_limit", c.validation_limit);
    if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.threads = j.value("threads", c.threads);
}

struct TrainReport {
    std::vector<double> train_loss;  // batch-mean sum rate (bits) per iteration
    std::vector<int> validation_iterations;
    std::vector<double> validation_rate;  // mean sum rate (bits)
    int iterations = 0;
    int best_iteration = 0;
    double best_validation_rate = -std::numeric_limits<double>::infinity();
    double initial_validation_rate = 0.0;
    double train_seconds = 0.0;
    double validation_seconds = 0.0;
    double test_ratio = std::numeric_limits<double>::quiet_NaN();
};

inline void to_json(nlohmann::json& j, const TrainReport& r) {
    j = nlohmann::json{{"train_loss", r.train_loss},
                       {"validation_iterations", r.validation_iterations},
                       {"validation_rate", r.validation_rate},
                       {"iterations", r.iterations},
                       {"best_iteration", r.best_iteration},
                       {"best_validation_rate", r.best_validation_rate},
                       {"initial_validation_rate", r.initial_validation_rate},
                       {"train_seconds", r.train_seconds},
                       {"validation_seconds", r.validation_seconds},
                       {"test_ratio", std::isfinite(r.test_ratio) ? nlohmann::json(r.test_ratio) : nlohmann::json()}};
}

/// Step-size scale that trains both variants at the default 20 dB scenarios.
/// The gradient with respect to Y grows with the entries of A, B and E, so
/// the standard variant needs a much smaller step.
inline double default_lr_scale(Variant variant) { return variant == Variant::improved ? 1e-7 : 3e-9; }

/// scale * m^{-alpha}, clamped to (0, 1].
inline double lr_schedule(int m, double alpha, double scale) {
    if (m < 1) throw DegenerateInput("lr_schedule: iteration index starts at 1");
    const double s = scale * std::pow(static_cast<double>(m), -alpha);
    return std::clamp(s, std::numeric_limits<double>::min(), 1.0);
}

/// Gaussian: every block i.i.d. complex Gaussian with variance 1/rows.
/// Structured: the improved variant starts with X = I in every block, so the
/// network reproduces L exact WMMSE sweeps; the standard variant cannot
/// express the inverse and starts with U = I, W = I instead, which makes the
/// closed-form last layer a regularized zero-forcing precoder.
inline ModelParams init_params(const SystemConfig& config, int layers, Variant variant, std::uint64_t seed,
                               InitScheme scheme = InitScheme::gaussian) {
    if (layers < 1) throw DegenerateInput("init_params: need at least one layer");
    config.validate();
    ModelParams p = zero_params(config, layers, variant);
    std::mt19937_64 rng(seed);
    if (scheme == InitScheme::gaussian) {
        for_each_block(p, [&](ComplexMatrix& m) {
            m = random_complex_gaussian(m.rows(), m.cols(), rng, 1.0 / static_cast<double>(m.rows()));
        });
        return p;
    }
    // The A Y term sees entries of order P_T times the channel gain, so any
    // noise on Y must be far below the offsets it would otherwise swamp.
    constexpr double kNoise = 1e-6;
    for_each_block(p, [&](ComplexMatrix& m) {
        m = random_complex_gaussian(m.rows(), m.cols(), rng, kNoise * kNoise / static_cast<double>(m.rows()));
    });
    for (auto& layer : p.layers) {
        for (auto& user : layer.users) {
            if (variant == Variant::improved) {
                user.u.x.diagonal().array() += 1.0;
                user.w.x.diagonal().array() += 1.0;
                if (layer.has_v_block) user.v.x.diagonal().array() += 1.0;
            } else {
                user.offset_u.diagonal().array() += 1.0;
                user.w.z.diagonal().array() += 1.0;
                if (layer.has_v_block) user.v.z.diagonal().array() += 1.0;
            }
        }
    }
    return p;
}

/// Runs fn(i) for i in [0, n) on up to `threads` threads. Each index is
/// handled by exactly one thread.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

inline int default_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

/// Mean sum rate (bits) of the network over a sample set.
inline double mean_network_rate(const ModelParams& model, const std::vector<ChannelSample>& samples,
                                const SystemConfig& config, int threads = 1) {
    if (samples.empty()) throw DegenerateInput("mean_network_rate: empty sample set");
    std::vector<double> rates(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) { rates[i] = network_rate(model, samples[i], config); });
    return std::accumulate(rates.begin(), rates.end(), 0.0) / static_cast<double>(rates.size());
}

struct BatchGradient {
    ModelParams gradient;  // arithmetic mean of per-sample gradients
    double mean_rate = 0.0;  // bits
};

/// Forward and backward pass for every sample, averaged. Per-sample results
/// are reduced in sample order, so the result does not depend on `threads`.
inline BatchGradient batch_gradient(const ModelParams& model, const std::vector<const ChannelSample*>& batch,
                                    const SystemConfig& config, int threads = 1) {
    if (batch.empty()) throw DegenerateInput("batch_gradient: empty batch");
    std::vector<ModelParams> grads(batch.size());
    std::vector<double> rates(batch.size());
    parallel_for(batch.size(), threads, [&](std::size_t i) {
        const ChannelSample& s = *batch[i];
        try {
            const ForwardTrace trace = forward_pass(model, s, config);
            rates[i] = trace.sum_rate;
            grads[i] = backward_pass(trace, s, config, model).params;
        } catch (const Error& e) {
            throw Error(std::string(e.what()) + " (sample seed " + std::to_string(s.seed) + ")");
        }
    });
    BatchGradient out;
    out.gradient = std::move(grads[0]);
    for (std::size_t i = 1; i < grads.size(); ++i) {
        for_each_block_pair(out.gradient, grads[i], [](ComplexMatrix& acc, const ComplexMatrix& g) { acc += g; });
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for_each_block(out.gradient, [&](ComplexMatrix& m) { m *= inv; });
    out.mean_rate = std::accumulate(rates.begin(), rates.end(), 0.0) * inv;
    return out;
}

namespace detail {

struct AdamState {
    ModelParams m, v;
    int step = 0;
};

inline bool finite_params(const ModelParams& p) {
    bool ok = true;
    for_each_block(p, [&](const ComplexMatrix& m) { ok = ok && all_finite(m); });
    return ok;
}

} // namespace detail

/// Gradient ascent on the batch-mean sum rate. Returns the parameters with
/// the best validation rate seen.
inline std::pair<ModelParams, TrainReport> train(const Dataset& dataset, const TrainConfig& cfg, ModelParams model) {
    cfg.validate();
    const SystemConfig& config = dataset.config;
    std::vector<ChannelSample> train_set = dataset.subset(Split::train);
    std::vector<ChannelSample> validation_set = dataset.subset(Split::validation);
    if (train_set.empty() || validation_set.empty()) throw DegenerateInput("train: need train and validation samples");
    if (cfg.validation_limit > 0 && validation_set.size() > cfg.validation_limit) {
        validation_set.resize(cfg.validation_limit);
    }

    const double lr_scale = cfg.lr_scale > 0.0 ? cfg.lr_scale : default_lr_scale(model.variant);
    using clock = std::chrono::steady_clock;
    TrainReport report;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    auto validate_now = [&](int iteration) {
        const auto t0 = clock::now();
        const double rate = mean_network_rate(model, validation_set, config, cfg.threads);
        report.validation_seconds += std::chrono::duration<double>(clock::now() - t0).count();
        report.validation_iterations.push_back(iteration);
        report.validation_rate.push_back(rate);
        return rate;
    };

    ModelParams best = model;
    report.initial_validation_rate = validate_now(0);
    report.best_validation_rate = report.initial_validation_rate;
    int stale = 0;

    detail::AdamState adam;
    if (cfg.optimizer == Optimizer::adam) {
        adam.m = zero_params(config, model.num_layers(), model.variant);
        adam.v = adam.m;
    }

    const auto start = clock::now();
    std::vector<const ChannelSample*> batch;
    for (int m = 1; m <= cfg.max_iterations; ++m) {
        batch.clear();
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(&train_set[order[cursor++]]);
        }
        BatchGradient g = batch_gradient(model, batch, config, cfg.threads);
        report.train_loss.push_back(g.mean_rate);
        const double lr = lr_schedule(m, cfg.alpha, lr_scale);
        if (cfg.optimizer == Optimizer::sgd) {
            for_each_block_pair(model, g.gradient, [&](ComplexMatrix& p, const ComplexMatrix& d) { p += lr * d; });
        } else {
            constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
            ++adam.step;
            const double c1 = 1.0 - std::pow(b1, adam.step), c2 = 1.0 - std::pow(b2, adam.step);
            std::vector<ComplexMatrix*> ps, ms, vs;
            for_each_block(model, [&](ComplexMatrix& x) { ps.push_back(&x); });
            for_each_block(adam.m, [&](ComplexMatrix& x) { ms.push_back(&x); });
            for_each_block(adam.v, [&](ComplexMatrix& x) { vs.push_back(&x); });
            std::size_t i = 0;
            for_each_block(g.gradient, [&](const ComplexMatrix& d) {
                ComplexMatrix& mm = *ms[i];
                ComplexMatrix& vv = *vs[i];
                mm = b1 * mm + (1.0 - b1) * d;
                // Second moment kept per real component in the real/imag parts.
                const ComplexMatrix sq = d.unaryExpr([](Complex z) {
                    return Complex(z.real() * z.real(), z.imag() * z.imag());
                });
                vv = b2 * vv + (1.0 - b2) * sq;
                ComplexMatrix& p = *ps[i];
                for (Index r = 0; r < p.rows(); ++r) {
                    for (Index c = 0; c < p.cols(); ++c) {
                        const Complex mh = mm(r, c) / c1;
                        const Complex vh = vv(r, c) / c2;
                        p(r, c) += lr * Complex(mh.real() / (std::sqrt(vh.real()) + eps),
                                                mh.imag() / (std::sqrt(vh.imag()) + eps));
                    }
                }
                ++i;
            });
        }
        if (!detail::finite_params(model)) {
            throw Error("train: parameters became non-finite at iteration " + std::to_string(m));
        }
        report.iterations = m;
        if (m % cfg.validation_interval == 0) {
            const double rate = validate_now(m);
            if (rate > report.best_validation_rate) {
                report.best_validation_rate = rate;
                report.best_iteration = m;
                best = model;
                stale = 0;
            } else if (++stale >= cfg.patience) {
                break;
            }
        }
    }
    report.train_seconds = std::chrono::duration<double>(clock::now() - start).count() - report.validation_seconds;
    return {std::move(best), std::move(report)};
}

struct Evaluation {
    std::vector<double> network_rates;    // bits, per sample
    std::vector<double> reference_rates;  // bits, per sample
    double network_mean = 0.0;
    double reference_mean = 0.0;
    double ratio = 0.0;           // network_mean / reference_mean
    double mean_of_ratios = 0.0;  // mean of per-sample ratios
};

inline void to_json(nlohmann::json& j, const Evaluation& e) {
    j = nlohmann::json{{"samples", e.network_rates.size()},
                       {"network_mean_bits", e.network_mean},
                       {"reference_mean_bits", e.reference_mean},
                       {"ratio", e.ratio},
                       {"mean_of_ratios", e.mean_of_ratios}};
}

inline Evaluation compare_rates(std::vector<double> network, std::vector<double> reference) {
    if (network.empty() || network.size() != reference.size()) {
        throw DegenerateInput("compare_rates: need equally sized, nonempty rate lists");
    }
    Evaluation e;
    const double n = static_cast<double>(network.size());
    e.network_mean = std::accumulate(network.begin(), network.end(), 0.0) / n;
    e.reference_mean = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
    e.ratio = e.network_mean / e.reference_mean;
    double acc = 0.0;
    for (std::size_t i = 0; i < network.size(); ++i) acc += network[i] / reference[i];
    e.mean_of_ratios = acc / n;
    e.network_rates = std::move(network);
    e.reference_rates = std::move(reference);
    return e;
}

/// Best-of-restarts reference rates (bits) for each sample.
inline std::vector<double> wmmse_rates(const std::vector<ChannelSample>& samples, const SystemConfig& config,
                                       const WmmseSettings& settings, int threads = 1) {
    std::vector<double> rates(samples.size());
    parallel_for(samples.size(), threads,
                 [&](std::size_t i) { rates[i] = run_wmmse(samples[i], config, settings).second.sum_rate; });
    return rates;
}

inline std::vector<double> network_rates(const ModelParams& model, const std::vector<ChannelSample>& samples,
                                         const SystemConfig& config, int threads = 1) {
    std::vector<double> rates(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) { rates[i] = network_rate(model, samples[i], config); });
    return rates;
}

/// Network against precomputed reference rates of the same samples.
inline Evaluation evaluate_against(const ModelParams& model, const std::vector<ChannelSample>& samples,
                                   const SystemConfig& config, std::vector<double> reference, int threads = 1) {
    return compare_rates(network_rates(model, samples, config, threads), std::move(reference));
}

inline Evaluation evaluate(const ModelParams& model, const std::vector<ChannelSample>& samples,
                           const SystemConfig& config, const WmmseSettings& settings, int threads = 1) {
    if (samples.empty()) throw DegenerateInput("evaluate: empty test set");
    return evaluate_against(model, samples, config, wmmse_rates(samples, config, settings, threads), threads);
}

} // namespace uwmmse
