#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "uwmmse/bench.hpp"

using namespace uwmmse;
namespace fs = std::filesystem;

namespace {

ExperimentSpec tiny_spec(const std::string& out) {
    ExperimentSpec spec;
    spec.grid = {ScenarioPoint{8, 2, 2, 1, 20.0, 2, Variant::standard}, ScenarioPoint{8, 2, 2, 2, 20.0, 2, Variant::standard}};
    spec.n_train = 20;
    spec.n_validation = 10;
    spec.n_test = 10;
    spec.wmmse.restarts = 2;
    spec.train.max_iterations = 20;
    spec.train.validation_interval = 10;
    spec.seed = 3;
    spec.output_dir = out;
    return spec;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("uwmmse_test_" + name);
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST(Cdf, MonotoneEndingAtOne) {
    const auto cdf = empirical_cdf({3.0, 1.0, 2.0, 2.0, 5.0});
    ASSERT_EQ(cdf.size(), 5u);
    for (std::size_t i = 1; i < cdf.size(); ++i) {
        EXPECT_GE(cdf[i].first, cdf[i - 1].first);
        EXPECT_GE(cdf[i].second, cdf[i - 1].second);
    }
    EXPECT_DOUBLE_EQ(cdf.back().second, 1.0);
    EXPECT_DOUBLE_EQ(cdf.front().second, 0.2);
    EXPECT_THROW(empirical_cdf({}), DegenerateInput);
}

TEST(Cdf, ConstantInputIsSingleStep) {
    const auto cdf = empirical_cdf({4.0, 4.0, 4.0, 4.0});
    for (const auto& [rate, q] : cdf) EXPECT_EQ(rate, 4.0);
    EXPECT_DOUBLE_EQ(cdf.back().second, 1.0);
}

TEST(Cdf, ReportLayout) {
    std::ostringstream os;
    cdf_report(os, {1.0, 2.0}, {3.0});
    EXPECT_EQ(os.str(), "method,rate_bits,quantile\nnetwork,1,0.5\nnetwork,2,1\nwmmse,3,1\n");
}

TEST(Cdf, WmmseDominatesUntrainedModel) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 2);
    std::vector<ChannelSample> samples;
    for (std::uint64_t i = 0; i < 40; ++i) samples.push_back(sample_channel(c, 500 + i));
    const ModelParams untrained = init_params(c, 3, Variant::standard, 1);
    const auto net = empirical_cdf(network_rates(untrained, samples, c));
    const auto ref = empirical_cdf(wmmse_rates(samples, c, WmmseSettings{1e-4, 200, 3, 0}));
    // First-order dominance: every quantile of WMMSE sits to the right.
    for (std::size_t i = 0; i < net.size(); ++i) EXPECT_GE(ref[i].first, net[i].first);
}

TEST(Bench, GridRowsAndFiles) {
    const fs::path dir = fresh_dir("bench_grid");
    const auto rows = run_benchmark(tiny_spec(dir.string()));
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.error.empty()) << r.error;
        EXPECT_GT(r.ratio, 0.0);
        EXPECT_LE(r.ratio, 1.05);
        EXPECT_EQ(r.samples, 10u);
        EXPECT_TRUE(fs::exists(dir / (r.scenario + ".iaid")));
        EXPECT_TRUE(fs::exists(dir / (r.scenario + "_cdf.csv")));
        EXPECT_TRUE(fs::exists(dir / (r.scenario + "_report.json")));
    }
    EXPECT_NE(rows[0].scenario, rows[1].scenario);
    fs::remove_all(dir);
}

TEST(Bench, RerunReproducesRowsAndCsvHeaderOnce) {
    const fs::path dir = fresh_dir("bench_rerun");
    const auto a = run_benchmark(tiny_spec(dir.string()));
    const auto b = run_benchmark(tiny_spec(dir.string()));
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].scenario, b[i].scenario);
        EXPECT_EQ(a[i].seed, b[i].seed);
        EXPECT_EQ(a[i].network_mean, b[i].network_mean);
        EXPECT_EQ(a[i].wmmse_mean, b[i].wmmse_mean);
        EXPECT_EQ(a[i].ratio, b[i].ratio);
    }
    std::ifstream is(dir / "results.csv");
    std::string line;
    int headers = 0, lines = 0;
    while (std::getline(is, line)) {
        ++lines;
        if (line == result_csv_header()) ++headers;
    }
    EXPECT_EQ(headers, 1);
    EXPECT_EQ(lines, 5);
    fs::remove_all(dir);
}

TEST(Bench, FailingPointIsRecordedNotFatal) {
    ExperimentSpec spec = tiny_spec("");
    spec.grid.insert(spec.grid.begin(), ScenarioPoint{8, 2, 3, 2, 20.0, 2, Variant::standard});
    const auto rows = run_benchmark(spec);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_FALSE(rows[0].error.empty());
    EXPECT_TRUE(rows[1].error.empty());
    EXPECT_TRUE(rows[2].error.empty());
}

TEST(Bench, SpecFromJson) {
    const auto spec = nlohmann::json::parse(R"({"grid": [{"Nt": 16, "K": 4, "layers": 5, "variant": "improved"}],
        "n_train": 50, "restarts": 7, "train": {"batch_size": 4}, "init": "gaussian"})")
                          .get<ExperimentSpec>();
    ASSERT_EQ(spec.grid.size(), 1u);
    EXPECT_EQ(spec.grid[0].nt, 16);
    EXPECT_EQ(spec.grid[0].variant, Variant::improved);
    EXPECT_EQ(spec.n_train, 50u);
    EXPECT_EQ(spec.wmmse.restarts, 7);
    EXPECT_EQ(spec.train.batch_size, 4);
    EXPECT_EQ(spec.init, InitScheme::gaussian);
}

TEST(Generalization, SameConfigEqualsDirectEvaluation) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 2);
    const ModelParams model = init_params(c, 2, Variant::standard, 4, InitScheme::structured);
    std::vector<ChannelSample> test;
    for (std::uint64_t i = 0; i < 8; ++i) test.push_back(sample_channel(c, 900 + i));
    const WmmseSettings ws{1e-4, 200, 2, 0};
    const ResultRow r = generalization_eval(model, c, test, ws);
    const Evaluation e = evaluate(model, test, c, ws);
    EXPECT_EQ(r.ratio, e.ratio);
    EXPECT_EQ(r.network_mean, e.network_mean);
}

TEST(Generalization, SmallerScenarioRuns) {
    const SystemConfig big = SystemConfig::make(16, 2, 2, 4);
    const SystemConfig small = SystemConfig::make(16, 2, 2, 2);
    const ModelParams model = init_params(big, 2, Variant::standard, 5, InitScheme::structured);
    std::vector<ChannelSample> test;
    for (std::uint64_t i = 0; i < 5; ++i) test.push_back(sample_channel(small, 950 + i));
    const ResultRow r = generalization_eval(model, small, test, WmmseSettings{1e-4, 200, 2, 0});
    EXPECT_GT(r.ratio, 0.0);
    EXPECT_EQ(r.config, small);
    EXPECT_EQ(r.samples, 5u);
    EXPECT_THROW(generalization_eval(init_params(small, 2, Variant::standard, 5), big, {sample_channel(big, 1)},
                                     WmmseSettings{}),
                 DimensionExceeds);
}

TEST(Timing, StatsAreConsistent) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 2);
    const ModelParams model = init_params(c, 3, Variant::standard, 6, InitScheme::structured);
    std::vector<ChannelSample> samples;
    for (std::uint64_t i = 0; i < 5; ++i) samples.push_back(sample_channel(c, 980 + i));
    const TimingStats t = timing_compare(model, samples, c, WmmseSettings{}, 10);
    EXPECT_GT(t.network_median, 0.0);
    EXPECT_GT(t.wmmse_median, 0.0);
    EXPECT_DOUBLE_EQ(t.speedup, t.wmmse_median / t.network_median);
    EXPECT_EQ(t.repetitions, 10);
    EXPECT_THROW(timing_compare(model, samples, c, WmmseSettings{}, 9), DegenerateInput);
}

TEST(Timing, FewerLayersAreFaster) {
    const SystemConfig c = SystemConfig::make(16, 2, 2, 4);
    const ModelParams one = init_params(c, 1, Variant::standard, 7);
    const ModelParams seven = init_params(c, 7, Variant::standard, 7);
    const ChannelSample s = sample_channel(c, 8);
    auto median_time = [&](const ModelParams& m) {
        std::vector<double> t;
        for (int r = 0; r < 21; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            for (int i = 0; i < 5; ++i) forward_pass(m, s, c);
            t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        return detail::median(t);
    };
    EXPECT_LT(median_time(one), median_time(seven));
}

TEST(Csv, HeaderAndRow) {
    const fs::path dir = fresh_dir("csv");
    fs::create_directories(dir);
    ResultRow r;
    r.scenario = "x";
    r.config = SystemConfig::make(8, 2, 2, 2);
    append_results_csv(dir / "r.csv", {r});
    append_results_csv(dir / "r.csv", {r, r});
    std::ifstream is(dir / "r.csv");
    std::string first;
    std::getline(is, first);
    EXPECT_EQ(first, result_csv_header());
    int rows = 0;
    for (std::string line; std::getline(is, line);) ++rows;
    EXPECT_EQ(rows, 3);
    fs::remove_all(dir);
}
