#pragma once

// Experiment harness: scenario grids, empirical CDFs, zero-padding transfer
// and inference timing. Tables go to CSV, reports to JSON.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uwmmse/checkpoint.hpp"
#include "uwmmse/trainer.hpp"

namespace uwmmse {

inline constexpr int kReportSchemaVersion = 1;

struct ScenarioPoint {
    int nt = 8, nr = 2, d = 2, k = 2;
    double snr_db = 20.0;
    int layers = 7;
    Variant variant = Variant::standard;

    SystemConfig config() const { return SystemConfig::make(nt, nr, d, k, snr_db); }

    std::string id() const {
        return "nt" + std::to_string(nt) + "_nr" + std::to_string(nr) + "_d" + std::to_string(d) + "_k" +
               std::to_string(k) + "_snr" + std::to_string(static_cast<int>(std::lround(snr_db))) + "_L" +
               std::to_string(layers) + "_" + to_string(variant);
    }
};

struct ExperimentSpec {
    std::vector<ScenarioPoint> grid;
    std::size_t n_train = 600, n_validation = 100, n_test = 1000;
    WmmseSettings wmmse{1e-4, 200, 30, 0};
    TrainConfig train;
    InitScheme init = InitScheme::structured;
    double csi_variance = 0.0;  // estimation error seen by both methods; rates use the true channel
    std::uint64_t seed = 1;
    std::string output_dir;  // empty: nothing written
    int threads = 1;
};

inline void from_json(const nlohmann::json& j, ScenarioPoint& p) {
    p.nt = j.value("Nt", p.nt);
    p.nr = j.value("Nr", p.nr);
    p.d = j.value("d", p.d);
    p.k = j.value("K", p.k);
    p.snr_db = j.value("snr_db", p.snr_db);
    p.layers = j.value("layers", p.layers);
    if (j.contains("variant")) p.variant = parse_variant(j.at("variant").get<std::string>());
}

inline void from_json(const nlohmann::json& j, ExperimentSpec& s) {
    if (j.contains("grid")) {
        s.grid.clear();
        for (const auto& g : j.at("grid")) s.grid.push_back(g.get<ScenarioPoint>());
    }
    s.n_train = j.value("n_train", s.n_train);
    s.n_validation = j.value("n_validation", s.n_validation);
    s.n_test = j.value("n_test", s.n_test);
    s.wmmse.tolerance = j.value("wmmse_tolerance", s.wmmse.tolerance);
    s.wmmse.max_iterations = j.value("wmmse_max_iterations", s.wmmse.max_iterations);
    s.wmmse.restarts = j.value("restarts", s.wmmse.restarts);
    if (j.contains("train")) s.train = j.at("train").get<TrainConfig>();
    if (j.contains("init")) s.init = parse_init_scheme(j.at("init").get<std::string>());
    s.csi_variance = j.value("csi_var", s.csi_variance);
    s.seed = j.value("seed", s.seed);
    s.output_dir = j.value("out", s.output_dir);
    s.threads = j.value("threads", s.threads);
}

struct ResultRow {
    std::string scenario;
    SystemConfig config;
    int layers = 0;
    Variant variant = Variant::standard;
    double wmmse_mean = 0.0;    // bits
    double network_mean = 0.0;  // bits
    double ratio = 0.0;
    double mean_of_ratios = 0.0;
    std::size_t samples = 0;
    double train_minutes = 0.0;
    double network_seconds_per_sample = 0.0;
    double wmmse_seconds_per_sample = 0.0;
    std::uint64_t seed = 0;
    std::string error;  // nonempty when the grid point failed
};

inline void to_json(nlohmann::json& j, const ResultRow& r) {
    j = nlohmann::json{{"scenario", r.scenario},
                       {"config", r.config},
                       {"layers", r.layers},
                       {"variant", to_string(r.variant)},
                       {"wmmse_mean_bits", r.wmmse_mean},
                       {"network_mean_bits", r.network_mean},
                       {"ratio", r.ratio},
                       {"mean_of_ratios", r.mean_of_ratios},
                       {"samples", r.samples},
                       {"train_minutes", r.train_minutes},
                       {"network_seconds_per_sample", r.network_seconds_per_sample},
                       {"wmmse_seconds_per_sample", r.wmmse_seconds_per_sample},
                       {"seed", r.seed},
                       {"error", r.error}};
}

inline const char* result_csv_header() {
    return "schema,scenario,Nt,Nr,d,K,snr_db,layers,variant,wmmse_mean_bits,network_mean_bits,ratio,mean_of_ratios,"
           "samples,train_minutes,network_s_per_sample,wmmse_s_per_sample,seed,error";
}

inline void write_result_csv_row(std::ostream& os, const ResultRow& r) {
    os << kReportSchemaVersion << ',' << r.scenario << ',' << r.config.nt << ',' << r.config.nr << ',' << r.config.d
       << ',' << r.config.k << ',' << r.config.snr_db() << ',' << r.layers << ',' << to_string(r.variant) << ','
       << r.wmmse_mean << ',' << r.network_mean << ',' << r.ratio << ',' << r.mean_of_ratios << ',' << r.samples
       << ',' << r.train_minutes << ',' << r.network_seconds_per_sample << ',' << r.wmmse_seconds_per_sample << ','
       << r.seed << ',' << '"' << r.error << '"' << '\n';
}

/// Appends rows to a CSV file, writing the header only when the file is new.
inline void append_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream os(path, std::ios::app);
    if (!os) throw IoError("cannot open " + path.string() + " for appending");
    if (fresh) os << result_csv_header() << '\n';
    os.precision(10);
    for (const auto& r : rows) write_result_csv_row(os, r);
}

/// Empirical CDF: sorted values with quantile i/n for the i-th (1-based).
inline std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> values) {
    if (values.empty()) throw DegenerateInput("empirical_cdf: empty input");
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(values.size());
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out.emplace_back(values[i], static_cast<double>(i + 1) / n);
    return out;
}

/// Long-format CSV: method,rate_bits,quantile.
inline void cdf_report(std::ostream& os, const std::vector<double>& network, const std::vector<double>& reference) {
    os << "method,rate_bits,quantile\n";
    os.precision(10);
    for (const auto& [rate, q] : empirical_cdf(network)) os << "network," << rate << ',' << q << '\n';
    for (const auto& [rate, q] : empirical_cdf(reference)) os << "wmmse," << rate << ',' << q << '\n';
}

inline void cdf_report(const std::filesystem::path& path, const std::vector<double>& network,
                       const std::vector<double>& reference) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    cdf_report(os, network, reference);
}

struct TimingStats {
    double network_median = 0.0;  // seconds per sample
    double wmmse_median = 0.0;    // seconds per sample
    double speedup = 0.0;         // wmmse_median / network_median
    int repetitions = 0;
    std::size_t samples = 0;
};

inline void to_json(nlohmann::json& j, const TimingStats& t) {
    j = nlohmann::json{{"network_median_s", t.network_median},
                       {"wmmse_median_s", t.wmmse_median},
                       {"speedup", t.speedup},
                       {"repetitions", t.repetitions},
                       {"samples", t.samples}};
}

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class Fn>
double seconds_per_sample(const std::vector<ChannelSample>& samples, Fn&& fn) {
    using clock = std::chrono::steady_clock;
    double sink = 0.0;
    const auto t0 = clock::now();
    for (const auto& s : samples) sink += fn(s);
    const double elapsed = std::chrono::duration<double>(clock::now() - t0).count();
    if (!std::isfinite(sink)) throw Error("timing run produced a non-finite rate");
    return elapsed / static_cast<double>(samples.size());
}

} // namespace detail

/// Single-threaded median wall time per sample: network inference (forward
/// pass to precoders) against one WMMSE run from zero-forcing.
inline TimingStats timing_compare(const ModelParams& model, const std::vector<ChannelSample>& samples,
                                  const SystemConfig& config, WmmseSettings settings, int repetitions) {
    if (repetitions < 10) throw DegenerateInput("timing_compare: need at least 10 repetitions");
    if (samples.empty()) throw DegenerateInput("timing_compare: empty sample set");
    settings.restarts = 1;
    auto net = [&](const ChannelSample& s) { return forward_pass(model, s, config).output().front()(0, 0).real(); };
    auto ref = [&](const ChannelSample& s) { return run_wmmse(s, config, settings).first.v.front()(0, 0).real(); };
    detail::seconds_per_sample(samples, net);
    detail::seconds_per_sample(samples, ref);
    std::vector<double> tn, tw;
    for (int r = 0; r < repetitions; ++r) {
        tn.push_back(detail::seconds_per_sample(samples, net));
        tw.push_back(detail::seconds_per_sample(samples, ref));
    }
    TimingStats t;
    t.network_median = detail::median(tn);
    t.wmmse_median = detail::median(tw);
    t.speedup = t.wmmse_median / t.network_median;
    t.repetitions = repetitions;
    t.samples = samples.size();
    return t;
}

/// Rates (bits) on the true channels of precoders computed from the estimated ones.
inline std::vector<double> mismatched_network_rates(const ModelParams& model, const std::vector<ChannelSample>& truth,
                                                    const std::vector<ChannelSample>& estimate,
                                                    const SystemConfig& config, int threads = 1) {
    std::vector<double> rates(truth.size());
    parallel_for(truth.size(), threads, [&](std::size_t i) {
        rates[i] = sum_rate(forward_pass(model, estimate[i], config).output(), truth[i], config);
    });
    return rates;
}

inline std::vector<double> mismatched_wmmse_rates(const std::vector<ChannelSample>& truth,
                                                  const std::vector<ChannelSample>& estimate,
                                                  const SystemConfig& config, const WmmseSettings& settings,
                                                  int threads = 1) {
    std::vector<double> rates(truth.size());
    parallel_for(truth.size(), threads, [&](std::size_t i) {
        rates[i] = sum_rate(run_wmmse(estimate[i], config, settings).first.v, truth[i], config);
    });
    return rates;
}

/// Model built for `big` applied to test channels of the dominated `small`
/// scenario by zero padding; compared with WMMSE solved natively at `small`.
inline ResultRow generalization_eval(const ModelParams& model, const SystemConfig& small,
                                     const std::vector<ChannelSample>& small_test, const WmmseSettings& settings,
                                     int threads = 1) {
    const SystemConfig& big = model.config;
    std::vector<ChannelSample> padded;
    padded.reserve(small_test.size());
    for (const auto& s : small_test) padded.push_back(zero_pad(s, big, small));
    const Evaluation e = compare_rates(network_rates(model, padded, big, threads),
                                       wmmse_rates(small_test, small, settings, threads));
    ResultRow r;
    r.scenario = "transfer_K" + std::to_string(big.k) + "_to_K" + std::to_string(small.k) + "_Nt" +
                 std::to_string(big.nt) + "_to_" + std::to_string(small.nt);
    r.config = small;
    r.layers = model.num_layers();
    r.variant = model.variant;
    r.wmmse_mean = e.reference_mean;
    r.network_mean = e.network_mean;
    r.ratio = e.ratio;
    r.mean_of_ratios = e.mean_of_ratios;
    r.samples = small_test.size();
    return r;
}

/// Seed layout per grid point i: datasets from spec.seed * 1'000'003 + i * 10'007,
/// model init and batch order from spec.seed + i.
inline std::uint64_t grid_data_seed(std::uint64_t seed, std::size_t i) { return seed * 1'000'003ULL + i * 10'007ULL; }

/// Generates data, trains and evaluates every grid point. A failing point
/// yields a row with `error` set; the rest of the grid still runs.
inline std::vector<ResultRow> run_benchmark(const ExperimentSpec& spec, std::ostream* log = nullptr) {
    std::vector<ResultRow> rows;
    for (std::size_t i = 0; i < spec.grid.size(); ++i) {
        const ScenarioPoint& point = spec.grid[i];
        ResultRow row;
        row.scenario = point.id();
        row.layers = point.layers;
        row.variant = point.variant;
        row.seed = grid_data_seed(spec.seed, i);
        try {
            row.config = point.config();
            row.config.validate();
            const Dataset ds = generate_dataset(row.config, spec.n_train, spec.n_validation, spec.n_test, row.seed);
            ModelParams model = init_params(row.config, point.layers, point.variant, spec.seed + i, spec.init);
            TrainConfig tc = spec.train;
            tc.seed = spec.seed + i;
            tc.threads = spec.threads;
            auto [trained, report] = train(ds, tc, std::move(model));
            row.train_minutes = report.train_seconds / 60.0;

            const std::vector<ChannelSample> test = ds.subset(Split::test);
            Evaluation e;
            if (spec.csi_variance > 0.0) {
                std::vector<ChannelSample> est;
                for (const auto& s : test) est.push_back(apply_csi_error(s, spec.csi_variance, s.seed ^ 0x5eedULL));
                e = compare_rates(mismatched_network_rates(trained, test, est, row.config, spec.threads),
                                  mismatched_wmmse_rates(test, est, row.config, spec.wmmse, spec.threads));
            } else {
                e = evaluate(trained, test, row.config, spec.wmmse, spec.threads);
            }
            row.wmmse_mean = e.reference_mean;
            row.network_mean = e.network_mean;
            row.ratio = e.ratio;
            row.mean_of_ratios = e.mean_of_ratios;
            row.samples = test.size();

            const std::size_t n_time = std::min<std::size_t>(test.size(), 50);
            const std::vector<ChannelSample> timing_set(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(n_time));
            const TimingStats t = timing_compare(trained, timing_set, row.config, spec.wmmse, 10);
            row.network_seconds_per_sample = t.network_median;
            row.wmmse_seconds_per_sample = t.wmmse_median;

            if (!spec.output_dir.empty()) {
                const std::filesystem::path dir(spec.output_dir);
                std::filesystem::create_directories(dir);
                save_checkpoint(dir / (row.scenario + ".iaid"), trained);
                cdf_report(dir / (row.scenario + "_cdf.csv"), e.network_rates, e.reference_rates);
                nlohmann::json j{{"schema", kReportSchemaVersion}, {"row", row}, {"train", report}};
                std::ofstream(dir / (row.scenario + "_report.json")) << j.dump(2) << '\n';
            }
        } catch (const std::exception& ex) {
            row.error = ex.what();
        }
        if (log) {
            *log << row.scenario << ": ";
            if (row.error.empty()) {
                *log << "ratio " << row.ratio << " (network " << row.network_mean << " / wmmse " << row.wmmse_mean
                     << " bits)\n";
            } else {
                *log << "failed: " << row.error << '\n';
            }
        }
        rows.push_back(std::move(row));
    }
    if (!spec.output_dir.empty()) append_results_csv(std::filesystem::path(spec.output_dir) / "results.csv", rows);
    return rows;
}

} // namespace uwmmse
