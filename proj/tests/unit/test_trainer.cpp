#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "uwmmse/trainer.hpp"

using namespace uwmmse;

namespace {

const SystemConfig kSmall = SystemConfig::make(4, 2, 2, 2);

TrainConfig quick_config() {
    TrainConfig tc;
    tc.max_iterations = 200;
    tc.validation_interval = 20;
    tc.patience = 100;
    tc.seed = 3;
    return tc;
}

bool same_params(const ModelParams& a, const ModelParams& b) {
    bool same = true;
    for_each_block_pair(const_cast<ModelParams&>(a), b,
                        [&](const ComplexMatrix& x, const ComplexMatrix& y) { same = same && x == y; });
    return same;
}

} // namespace

TEST(LrSchedule, Examples) {
    EXPECT_DOUBLE_EQ(lr_schedule(1, 0.6, 0.25), 0.25);
    EXPECT_DOUBLE_EQ(lr_schedule(4, 0.5, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(lr_schedule(1, 0.5, 7.0), 1.0);
    double prev = lr_schedule(1, 0.6, 1.0);
    for (int m = 2; m <= 1000; ++m) {
        const double s = lr_schedule(m, 0.6, 1.0);
        EXPECT_LE(s, prev);
        EXPECT_GT(s, 0.0);
        prev = s;
    }
    EXPECT_THROW(lr_schedule(0, 0.6, 1.0), DegenerateInput);
}

TEST(TrainConfig, ValidateAndJson) {
    TrainConfig tc;
    EXPECT_NO_THROW(tc.validate());
    tc.alpha = 1.0;
    EXPECT_THROW(tc.validate(), DegenerateInput);
    tc.alpha = 0.5;
    tc.batch_size = 0;
    EXPECT_THROW(tc.validate(), DegenerateInput);

    TrainConfig c = quick_config();
    c.optimizer = Optimizer::adam;
    const TrainConfig back = nlohmann::json(c).get<TrainConfig>();
    EXPECT_EQ(back.max_iterations, 200);
    EXPECT_EQ(back.optimizer, Optimizer::adam);
    EXPECT_EQ(back.seed, 3u);
}

TEST(InitParams, CountAndDeterminism) {
    const SystemConfig c = SystemConfig::make(8, 2, 2, 2);
    const ModelParams a = init_params(c, 7, Variant::standard, 5);
    EXPECT_EQ(parameter_count(a), model_parameter_count(c, 7));
    EXPECT_TRUE(same_params(a, init_params(c, 7, Variant::standard, 5)));
    EXPECT_FALSE(same_params(a, init_params(c, 7, Variant::standard, 6)));
    EXPECT_THROW(init_params(c, 0, Variant::standard, 5), DegenerateInput);
}

TEST(InitParams, GaussianVariance) {
    const SystemConfig c = SystemConfig::make(16, 2, 2, 4);
    const ModelParams p = init_params(c, 5, Variant::improved, 1);
    // Every block has variance 1/rows, so rows * |entry|^2 averages to one.
    double acc = 0.0;
    std::size_t n = 0;
    for_each_block(p, [&](const ComplexMatrix& m) {
        acc += static_cast<double>(m.rows()) * m.cwiseAbs2().sum();
        n += static_cast<std::size_t>(m.size());
    });
    EXPECT_NEAR(acc / static_cast<double>(n), 1.0, 0.03);
}

TEST(InitParams, StructuredStartingPoints) {
    const ChannelSample s = sample_channel(kSmall, 2);
    const ModelParams improved = init_params(kSmall, 3, Variant::improved, 1, InitScheme::structured);
    EXPECT_LT((improved.layers[0].users[0].u.x - identity(2)).cwiseAbs().maxCoeff(), 1e-5);
    const ModelParams standard = init_params(kSmall, 3, Variant::standard, 1, InitScheme::structured);
    EXPECT_LT((standard.layers[1].users[1].offset_u.leftCols(2) - identity(2)).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_TRUE(std::isfinite(network_rate(standard, s, kSmall)));
    EXPECT_TRUE(std::isfinite(network_rate(improved, s, kSmall)));
    EXPECT_EQ(parse_init_scheme("structured"), InitScheme::structured);
    EXPECT_THROW(parse_init_scheme("zeros"), DegenerateInput);
}

TEST(BatchGradient, IsMeanOfPerSampleGradients) {
    const ModelParams model = test_support::random_params(kSmall, 2, Variant::standard, 4);
    std::vector<ChannelSample> samples;
    for (std::uint64_t i = 0; i < 3; ++i) samples.push_back(sample_channel(kSmall, 40 + i));
    std::vector<const ChannelSample*> batch{&samples[0], &samples[1], &samples[2]};
    const BatchGradient bg = batch_gradient(model, batch, kSmall);

    ModelParams expected = zero_params(kSmall, 2, Variant::standard);
    double rate = 0.0;
    for (const auto& s : samples) {
        const ForwardTrace t = forward_pass(model, s, kSmall);
        rate += t.sum_rate / 3.0;
        const GradientBundle g = backward_pass(t, s, kSmall, model);
        for_each_block_pair(expected, g.params, [](ComplexMatrix& acc, const ComplexMatrix& x) { acc += x / 3.0; });
    }
    EXPECT_NEAR(bg.mean_rate, rate, 1e-12);
    for_each_block_pair(expected, bg.gradient, [](const ComplexMatrix& e, const ComplexMatrix& g) {
        EXPECT_LE((e - g).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, e.cwiseAbs().maxCoeff()));
    });

    const BatchGradient single = batch_gradient(model, {&samples[1]}, kSmall);
    const GradientBundle direct = backward_pass(forward_pass(model, samples[1], kSmall), samples[1], kSmall, model);
    EXPECT_TRUE(same_params(single.gradient, direct.params));

    EXPECT_TRUE(same_params(batch_gradient(model, batch, kSmall, 3).gradient, bg.gradient));
    EXPECT_THROW(batch_gradient(model, {}, kSmall), DegenerateInput);
}

TEST(Train, ImprovesOverInitAndStaysFinite) {
    const Dataset ds = generate_dataset(kSmall, 40, 20, 0, 1);
    for (Variant v : {Variant::standard, Variant::improved}) {
        const ModelParams init = init_params(kSmall, 3, v, 2, InitScheme::structured);
        const double before = mean_network_rate(init, ds.subset(Split::validation), kSmall);
        auto [trained, report] = train(ds, quick_config(), init);
        EXPECT_DOUBLE_EQ(report.initial_validation_rate, before);
        EXPECT_GT(report.best_validation_rate, before) << to_string(v);
        EXPECT_NEAR(mean_network_rate(trained, ds.subset(Split::validation), kSmall), report.best_validation_rate, 1e-12);
        EXPECT_EQ(report.train_loss.size(), static_cast<std::size_t>(report.iterations));
        EXPECT_EQ(report.validation_rate.size(), report.validation_iterations.size());
        for (double l : report.train_loss) EXPECT_TRUE(std::isfinite(l));
    }
}

TEST(Train, IdenticalSeedsGiveIdenticalModels) {
    const Dataset ds = generate_dataset(kSmall, 30, 10, 0, 5);
    TrainConfig tc = quick_config();
    tc.max_iterations = 40;
    const ModelParams init = init_params(kSmall, 2, Variant::standard, 9, InitScheme::structured);
    const auto a = train(ds, tc, init);
    const auto b = train(ds, tc, init);
    EXPECT_TRUE(same_params(a.first, b.first));
    EXPECT_EQ(a.second.train_loss, b.second.train_loss);
    tc.seed = 4;
    tc.threads = 2;
    const auto c = train(ds, tc, init);
    EXPECT_NE(a.second.train_loss, c.second.train_loss);
}

TEST(Train, PatienceStopsEarly) {
    const Dataset ds = generate_dataset(kSmall, 20, 10, 0, 6);
    TrainConfig tc = quick_config();
    tc.lr_scale = 1e-30;
    tc.validation_interval = 5;
    tc.patience = 2;
    const auto [model, report] = train(ds, tc, init_params(kSmall, 2, Variant::standard, 1, InitScheme::structured));
    EXPECT_LT(report.iterations, tc.max_iterations);
}

TEST(Train, RequiresSplits) {
    const Dataset ds = generate_dataset(kSmall, 10, 0, 5, 1);
    EXPECT_THROW(train(ds, quick_config(), init_params(kSmall, 2, Variant::standard, 1)), DegenerateInput);
}

TEST(Evaluate, ModelAgainstItselfIsOne) {
    const ModelParams model = init_params(kSmall, 2, Variant::standard, 3, InitScheme::structured);
    std::vector<ChannelSample> samples;
    for (std::uint64_t i = 0; i < 5; ++i) samples.push_back(sample_channel(kSmall, 70 + i));
    const Evaluation e = evaluate_against(model, samples, kSmall, network_rates(model, samples, kSmall));
    EXPECT_DOUBLE_EQ(e.ratio, 1.0);
    EXPECT_DOUBLE_EQ(e.mean_of_ratios, 1.0);
    EXPECT_THROW(compare_rates({1.0}, {1.0, 2.0}), DegenerateInput);
    EXPECT_THROW(evaluate(model, {}, kSmall, WmmseSettings{}), DegenerateInput);
}

TEST(Evaluate, TrainedBeatsUntrained) {
    const Dataset ds = generate_dataset(kSmall, 40, 20, 20, 8);
    const auto [trained, report] = train(ds, quick_config(), init_params(kSmall, 3, Variant::standard, 2,
                                                                         InitScheme::structured));
    const ModelParams untrained = init_params(kSmall, 3, Variant::standard, 2);
    const std::vector<ChannelSample> test = ds.subset(Split::test);
    const std::vector<double> reference = wmmse_rates(test, kSmall, WmmseSettings{1e-4, 200, 5, 0});
    const Evaluation t = evaluate_against(trained, test, kSmall, reference);
    const Evaluation u = evaluate_against(untrained, test, kSmall, reference);
    EXPECT_LT(u.ratio, t.ratio);
    EXPECT_GT(t.ratio, 0.0);
    EXPECT_LE(t.ratio, 1.05);
}
