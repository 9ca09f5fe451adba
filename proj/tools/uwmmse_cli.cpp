// Command-line front end: data generation, training, evaluation and the
// benchmark grid.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uwmmse/uwmmse.hpp"

namespace fs = std::filesystem;
using namespace uwmmse;
using nlohmann::json;

namespace {

struct ScenarioFlags {
    std::string config_path;
    int nt = 8, nr = 2, d = 2, k = 2;
    double snr_db = 20.0;

    SystemConfig resolve() const {
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw IoError("cannot open " + config_path);
            return json::parse(is).get<SystemConfig>();
        }
        SystemConfig c = SystemConfig::make(nt, nr, d, k, snr_db);
        c.validate();
        return c;
    }

    void add_to(CLI::App* app) {
        app->add_option("--config", config_path, "Scenario JSON (Nt, Nr, d, K, snr_db or P_T, sigma, omega)");
        app->add_option("--nt", nt, "Transmit antennas");
        app->add_option("--nr", nr, "Receive antennas per user");
        app->add_option("--d", d, "Streams per user");
        app->add_option("--k", k, "Users");
        app->add_option("--snr-db", snr_db, "SNR in dB (unit noise)");
    }
};

void write_json(const std::string& path, const json& j) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << j.dump(2) << '\n';
}

std::vector<ChannelSample> test_samples(const Dataset& ds) {
    std::vector<ChannelSample> t = ds.subset(Split::test);
    if (t.empty()) t = ds.samples;
    return t;
}

WmmseSettings wmmse_settings(int restarts, std::uint64_t seed) {
    WmmseSettings s;
    s.restarts = restarts;
    s.seed = seed;
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unfolded WMMSE precoder training and benchmarking"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "Worker threads for per-sample work")->check(CLI::PositiveNumber);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a Rayleigh channel dataset");
    ScenarioFlags gen_sc;
    gen_sc.add_to(gen);
    std::size_t n_train = 600, n_val = 100, n_test = 1000;
    std::uint64_t seed = 1;
    std::string out;
    gen->add_option("--n-train", n_train);
    gen->add_option("--n-val", n_val);
    gen->add_option("--n-test", n_test);
    gen->add_option("--seed", seed, "Seed of the first sample");
    gen->add_option("--out", out, "Dataset file")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train a model on a dataset");
    std::string data_path, model_path, report_path, init_name = "structured", variant_name = "standard",
                optimizer_name = "sgd";
    int layers = 7;
    TrainConfig tc;
    tr->add_option("--data", data_path, "Dataset file")->required();
    tr->add_option("--out", model_path, "Checkpoint to write")->required();
    tr->add_option("--report", report_path, "Training report JSON");
    tr->add_option("--layers", layers)->check(CLI::Range(1, 64));
    tr->add_option("--variant", variant_name)->check(CLI::IsMember({"standard", "improved"}));
    tr->add_option("--init", init_name)->check(CLI::IsMember({"gaussian", "structured"}));
    tr->add_option("--optimizer", optimizer_name)->check(CLI::IsMember({"sgd", "adam"}));
    tr->add_option("--batch", tc.batch_size);
    tr->add_option("--alpha", tc.alpha);
    tr->add_option("--lr", tc.lr_scale, "Step-size scale (0: variant default)");
    tr->add_option("--iterations", tc.max_iterations);
    tr->add_option("--patience", tc.patience);
    tr->add_option("--seed", seed);

    // eval
    auto* ev = app.add_subcommand("eval", "Compare a model with WMMSE on the test split");
    int restarts = 30;
    double csi_var = 0.0;
    ev->add_option("--model", model_path)->required();
    ev->add_option("--data", data_path)->required();
    ev->add_option("--restarts", restarts)->check(CLI::PositiveNumber);
    ev->add_option("--csi-var", csi_var, "Channel estimation error variance");
    ev->add_option("--seed", seed);
    ev->add_option("--out", out, "Evaluation JSON (default stdout)");

    // bench
    auto* bench = app.add_subcommand("bench", "Run an experiment grid");
    std::string spec_path;
    std::vector<int> grid_nt{8}, grid_k{2}, grid_layers{7};
    std::vector<double> grid_snr{20.0};
    bench->add_option("--config", spec_path, "Experiment JSON (grid, sizes, train settings)");
    bench->add_option("--nt", grid_nt);
    bench->add_option("--k", grid_k);
    bench->add_option("--layers", grid_layers);
    bench->add_option("--snr-db", grid_snr);
    bench->add_option("--variant", variant_name)->check(CLI::IsMember({"standard", "improved"}));
    bench->add_option("--restarts", restarts);
    bench->add_option("--csi-var", csi_var);
    bench->add_option("--seed", seed);
    bench->add_option("--out", out, "Output directory")->required();

    // cdf
    auto* cdf = app.add_subcommand("cdf", "Write per-sample rate CDFs of model and WMMSE");
    cdf->add_option("--model", model_path)->required();
    cdf->add_option("--data", data_path)->required();
    cdf->add_option("--restarts", restarts);
    cdf->add_option("--seed", seed);
    cdf->add_option("--out", out, "CSV file")->required();

    // transfer
    auto* transfer = app.add_subcommand("transfer", "Apply a model to a smaller scenario by zero padding");
    transfer->add_option("--model", model_path)->required();
    transfer->add_option("--data", data_path, "Dataset of the smaller scenario")->required();
    transfer->add_option("--restarts", restarts);
    transfer->add_option("--seed", seed);
    transfer->add_option("--out", out, "Result JSON (default stdout)");

    // time
    auto* timing = app.add_subcommand("time", "Median per-sample inference time against WMMSE");
    int reps = 10;
    std::size_t time_samples = 50;
    timing->add_option("--model", model_path)->required();
    timing->add_option("--data", data_path)->required();
    timing->add_option("--reps", reps)->check(CLI::Range(10, 100000));
    timing->add_option("--samples", time_samples);
    timing->add_option("--out", out, "Result JSON (default stdout)");

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    ScenarioFlags grad_sc;
    grad_sc.nt = 4;
    grad_sc.add_to(grad);
    int instances = 3, grad_layers = 3;
    std::string grad_init = "gaussian";
    grad->add_option("--layers", grad_layers)->check(CLI::Range(1, 64));
    grad->add_option("--init", grad_init, "Structured models have large gradients and use a 1e-6 step")
        ->check(CLI::IsMember({"gaussian", "structured"}));
    grad->add_option("--variant", variant_name)->check(CLI::IsMember({"standard", "improved"}));
    grad->add_option("--instances", instances);
    grad->add_option("--seed", seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            const SystemConfig c = gen_sc.resolve();
            write_dataset(fs::path(out), generate_dataset(c, n_train, n_val, n_test, seed));
            std::cout << "wrote " << (n_train + n_val + n_test) << " samples to " << out << '\n';
        } else if (tr->parsed()) {
            const Dataset ds = read_dataset(fs::path(data_path));
            tc.seed = seed;
            tc.threads = threads;
            tc.optimizer = parse_optimizer(optimizer_name);
            ModelParams m = init_params(ds.config, layers, parse_variant(variant_name), seed, parse_init_scheme(init_name));
            auto [trained, report] = train(ds, tc, std::move(m));
            save_checkpoint(fs::path(model_path), trained);
            std::cout << "validation rate " << report.initial_validation_rate << " -> " << report.best_validation_rate
                      << " bits after " << report.iterations << " iterations\n";
            if (!report_path.empty()) write_json(report_path, json{{"schema", kReportSchemaVersion}, {"config", tc}, {"report", report}});
        } else if (ev->parsed()) {
            const ModelParams m = load_checkpoint(fs::path(model_path));
            const Dataset ds = read_dataset(fs::path(data_path));
            if (!(ds.config == m.config)) throw DegenerateInput("eval: dataset scenario differs from the model's");
            const std::vector<ChannelSample> test = test_samples(ds);
            const WmmseSettings ws = wmmse_settings(restarts, seed);
            Evaluation e;
            if (csi_var > 0.0) {
                std::vector<ChannelSample> est;
                for (const auto& s : test) est.push_back(apply_csi_error(s, csi_var, s.seed ^ seed));
                e = compare_rates(mismatched_network_rates(m, test, est, ds.config, threads),
                                  mismatched_wmmse_rates(test, est, ds.config, ws, threads));
            } else {
                e = evaluate(m, test, ds.config, ws, threads);
            }
            write_json(out, json{{"schema", kReportSchemaVersion}, {"csi_var", csi_var}, {"evaluation", e}});
        } else if (bench->parsed()) {
            ExperimentSpec spec;
            if (!spec_path.empty()) {
                std::ifstream is(spec_path);
                if (!is) throw IoError("cannot open " + spec_path);
                spec = json::parse(is).get<ExperimentSpec>();
            } else {
                for (int nt : grid_nt) {
                    for (int k : grid_k) {
                        for (int l : grid_layers) {
                            for (double snr : grid_snr) {
                                spec.grid.push_back(ScenarioPoint{nt, 2, 2, k, snr, l, parse_variant(variant_name)});
                            }
                        }
                    }
                }
                spec.wmmse.restarts = restarts;
                spec.csi_variance = csi_var;
                spec.seed = seed;
            }
            spec.output_dir = out;
            spec.threads = threads;
            const auto rows = run_benchmark(spec, &std::cout);
            for (const auto& r : rows) {
                if (!r.error.empty()) return 2;
            }
        } else if (cdf->parsed()) {
            const ModelParams m = load_checkpoint(fs::path(model_path));
            const Dataset ds = read_dataset(fs::path(data_path));
            const std::vector<ChannelSample> test = test_samples(ds);
            const Evaluation e = evaluate(m, test, ds.config, wmmse_settings(restarts, seed), threads);
            cdf_report(fs::path(out), e.network_rates, e.reference_rates);
        } else if (transfer->parsed()) {
            const ModelParams m = load_checkpoint(fs::path(model_path));
            const Dataset ds = read_dataset(fs::path(data_path));
            const ResultRow r = generalization_eval(m, ds.config, test_samples(ds), wmmse_settings(restarts, seed), threads);
            write_json(out, json{{"schema", kReportSchemaVersion}, {"row", r}});
        } else if (timing->parsed()) {
            const ModelParams m = load_checkpoint(fs::path(model_path));
            const Dataset ds = read_dataset(fs::path(data_path));
            std::vector<ChannelSample> test = test_samples(ds);
            if (test.size() > time_samples) test.resize(time_samples);
            const TimingStats t = timing_compare(m, test, ds.config, WmmseSettings{}, reps);
            write_json(out, json{{"schema", kReportSchemaVersion}, {"timing", t}});
        } else if (grad->parsed()) {
            const SystemConfig c = grad_sc.resolve();
            double worst = 0.0;
            for (int i = 0; i < instances; ++i) {
                const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
                const InitScheme scheme = parse_init_scheme(grad_init);
                const GradientCheck g =
                    scheme == InitScheme::gaussian
                        ? check_gradients(c, grad_layers, parse_variant(variant_name), s)
                        : check_gradients(init_params(c, grad_layers, parse_variant(variant_name), s, scheme),
                                          sample_channel(c, s ^ 0x9e3779b97f4a7c15ULL), kFdRelativeStep);
                std::printf("instance %d: max relative error %.3e over %zu entries\n", i, g.relative_error, g.entries);
                worst = std::max(worst, g.relative_error);
            }
            std::printf("worst %.3e\n", worst);
            return worst < 1e-4 ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
