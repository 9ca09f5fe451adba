// Train a small unfolded network and compare it with WMMSE on held-out channels.

#include <cstdio>

#include "uwmmse/uwmmse.hpp"

using namespace uwmmse;

int main() {
    const SystemConfig config = SystemConfig::make(8, 2, 2, 2, 20.0);
    const Dataset data = generate_dataset(config, 200, 50, 100, 1);

    TrainConfig tc;
    tc.max_iterations = 1000;
    tc.threads = default_threads();
    const ModelParams init = init_params(config, 5, Variant::standard, 1, InitScheme::structured);
    const auto [model, report] = train(data, tc, init);
    std::printf("validation rate %.3f -> %.3f bits/s/Hz after %d iterations\n", report.initial_validation_rate,
                report.best_validation_rate, report.iterations);

    const Evaluation e = evaluate(model, data.subset(Split::test), config, WmmseSettings{1e-4, 200, 10, 0}, tc.threads);
    std::printf("network %.3f, WMMSE %.3f, ratio %.4f\n", e.network_mean, e.reference_mean, e.ratio);

    save_checkpoint("quickstart.iaid", model);
}
