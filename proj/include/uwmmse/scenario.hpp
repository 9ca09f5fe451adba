#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uwmmse/errors.hpp"
#include "uwmmse/matrix_kernel.hpp"

namespace uwmmse {

/// Downlink scenario: one base station with nt antennas serving k users,
/// each with nr antennas and d streams.
struct SystemConfig {
    int nt = 8;
    int nr = 2;
    int d = 2;
    int k = 2;
    double total_power = 100.0;
    std::vector<double> sigma;  // per-user noise std, length k
    std::vector<double> omega;  // per-user priority, length k

    /// Unit noise, unit weights, P_T = 10^(snr_db/10).
    static SystemConfig make(int nt, int nr, int d, int k, double snr_db = 20.0) {
        SystemConfig c;
        c.nt = nt;
        c.nr = nr;
        c.d = d;
        c.k = k;
        c.total_power = std::pow(10.0, snr_db / 10.0);
        c.sigma.assign(static_cast<std::size_t>(k), 1.0);
        c.omega.assign(static_cast<std::size_t>(k), 1.0);
        return c;
    }

    double snr_db() const {
        const double s0 = sigma.empty() ? 1.0 : sigma.front();
        return 10.0 * std::log10(total_power / (s0 * s0));
    }

    /// sigma_k^2 / P_T, the coefficient of the normalized noise term.
    double noise_ratio(int user) const {
        const double s = sigma[static_cast<std::size_t>(user)];
        return s * s / total_power;
    }

    double weight(int user) const { return omega[static_cast<std::size_t>(user)]; }

    /// Whether zero-forcing has enough spatial degrees of freedom.
    bool zf_feasible() const { return k * nr <= nt; }

    void validate() const {
        if (nt < 1 || nr < 1 || k < 0) throw DegenerateInput("SystemConfig: antenna and user counts must be positive");
        if (d < 1 || d > nr) throw DegenerateInput("SystemConfig: streams must satisfy 1 <= d <= Nr");
        if (!(total_power > 0.0)) throw DegenerateInput("SystemConfig: P_T must be positive");
        if (sigma.size() != static_cast<std::size_t>(k) || omega.size() != static_cast<std::size_t>(k)) {
            throw DegenerateInput("SystemConfig: sigma and omega need one entry per user");
        }
        for (double s : sigma) {
            if (!(s > 0.0)) throw DegenerateInput("SystemConfig: sigma_k must be positive");
        }
        for (double w : omega) {
            if (!(w > 0.0)) throw DegenerateInput("SystemConfig: omega_k must be positive");
        }
    }

    bool operator==(const SystemConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const SystemConfig& c) {
    j = nlohmann::json{{"Nt", c.nt},          {"Nr", c.nr},       {"d", c.d},
                       {"K", c.k},            {"P_T", c.total_power}, {"sigma", c.sigma},
                       {"omega", c.omega},    {"snr_db", c.snr_db()}};
}

/// Missing fields fall back to SystemConfig::make defaults; "snr_db" is used
/// when "P_T" is absent.
inline void from_json(const nlohmann::json& j, SystemConfig& c) {
    const int nt = j.value("Nt", 8);
    const int nr = j.value("Nr", 2);
    const int d = j.value("d", nr);
    const int k = j.value("K", 2);
    c = SystemConfig::make(nt, nr, d, k, j.value("snr_db", 20.0));
    if (j.contains("P_T")) c.total_power = j.at("P_T").get<double>();
    if (j.contains("sigma")) c.sigma = j.at("sigma").get<std::vector<double>>();
    if (j.contains("omega")) c.omega = j.at("omega").get<std::vector<double>>();
    c.validate();
}

struct ChannelSample {
    std::vector<ComplexMatrix> h;  // k matrices, nr x nt
    std::uint64_t seed = 0;

    bool operator==(const ChannelSample& o) const {
        if (seed != o.seed || h.size() != o.h.size()) return false;
        for (std::size_t i = 0; i < h.size(); ++i) {
            if (h[i].rows() != o.h[i].rows() || h[i].cols() != o.h[i].cols() || h[i] != o.h[i]) return false;
        }
        return true;
    }
};

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

struct Dataset {
    SystemConfig config;
    std::vector<ChannelSample> samples;
    std::vector<Split> splits;  // one label per sample

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < splits.size(); ++i) {
            if (splits[i] == s) out.push_back(i);
        }
        return out;
    }

    std::vector<ChannelSample> subset(Split s) const {
        std::vector<ChannelSample> out;
        for (std::size_t i : indices(s)) out.push_back(samples[i]);
        return out;
    }

    bool operator==(const Dataset&) const = default;
};

namespace detail {

inline ComplexMatrix complex_gaussian(Index rows, Index cols, double variance, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
    ComplexMatrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            const double re = n(rng);
            const double im = n(rng);
            m(i, j) = Complex(re, im);
        }
    }
    return m;
}

} // namespace detail

/// i.i.d. CN(0, variance) matrix drawn from a seeded generator.
inline ComplexMatrix random_complex_gaussian(Index rows, Index cols, std::mt19937_64& rng, double variance = 1.0) {
    return detail::complex_gaussian(rows, cols, variance, rng);
}

/// Rayleigh channel: every entry of every H_k is CN(0,1).
inline ChannelSample sample_channel(const SystemConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ChannelSample s;
    s.seed = seed;
    s.h.reserve(static_cast<std::size_t>(config.k));
    for (int user = 0; user < config.k; ++user) {
        s.h.push_back(detail::complex_gaussian(config.nr, config.nt, 1.0, rng));
    }
    return s;
}

/// H_k + E_k with E_k i.i.d. CN(0, sigma_e2).
inline ChannelSample apply_csi_error(const ChannelSample& sample, double sigma_e2, std::uint64_t seed) {
    if (sigma_e2 < 0.0) throw DegenerateInput("apply_csi_error: variance must be non-negative");
    if (sigma_e2 == 0.0) return sample;
    std::mt19937_64 rng(seed);
    ChannelSample out = sample;
    for (auto& h : out.h) h += detail::complex_gaussian(h.rows(), h.cols(), sigma_e2, rng);
    return out;
}

/// Embeds a sample drawn for `small` into the shape of `big`: users past
/// small.k get an all-zero channel, retained users get zero rows/columns for
/// the missing receive/transmit antennas.
inline ChannelSample zero_pad(const ChannelSample& sample, const SystemConfig& big, const SystemConfig& small) {
    if (small.k > big.k || small.nt > big.nt || small.nr > big.nr) {
        throw DimensionExceeds("zero_pad: target scenario does not fit inside the trained scenario");
    }
    ChannelSample out;
    out.seed = sample.seed;
    out.h.reserve(static_cast<std::size_t>(big.k));
    for (int user = 0; user < big.k; ++user) {
        ComplexMatrix h = ComplexMatrix::Zero(big.nr, big.nt);
        if (user < small.k && static_cast<std::size_t>(user) < sample.h.size()) {
            const ComplexMatrix& src = sample.h[static_cast<std::size_t>(user)];
            const Index rows = std::min<Index>(small.nr, src.rows());
            const Index cols = std::min<Index>(small.nt, src.cols());
            h.topLeftCorner(rows, cols) = src.topLeftCorner(rows, cols);
        }
        out.h.push_back(std::move(h));
    }
    return out;
}

/// Samples seeded seed_base + index, labelled train / validation / test in that order.
inline Dataset generate_dataset(const SystemConfig& config, std::size_t n_train, std::size_t n_validation,
                                std::size_t n_test, std::uint64_t seed_base) {
    config.validate();
    Dataset ds;
    ds.config = config;
    const std::size_t total = n_train + n_validation + n_test;
    ds.samples.reserve(total);
    ds.splits.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        ds.samples.push_back(sample_channel(config, seed_base + i));
        ds.splits.push_back(i < n_train ? Split::train : (i < n_train + n_validation ? Split::validation : Split::test));
    }
    return ds;
}

} // namespace uwmmse
