// Times the batch kernels with the serial reference path (workers=1) against
// the parallel path, and checks that both produce identical bytes.

#include <chrono>
#include <cstdio>
#include <thread>

#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/evaluation.hpp"
#include "mockingbird/mockingbird.hpp"

using namespace mockingbird;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool same_batch(const GeneratedBatch& a, const GeneratedBatch& b) {
    if (a.traces.size() != b.traces.size() || a.errors != b.errors) return false;
    for (std::size_t i = 0; i < a.traces.size(); ++i) {
        if (a.traces[i].defended.bursts != b.traces[i].defended.bursts) return false;
        if (a.traces[i].iterations_used != b.traces[i].iterations_used) return false;
    }
    return true;
}

}  // namespace

int main() {
    unsigned hw = std::thread::hardware_concurrency();
    int parallel_workers = hw > 1 ? static_cast<int>(hw) : 4;

    SyntheticSpec spec;
    spec.classes = 12;
    spec.instances_per_class = 25;
    spec.seed = 97;
    BurstDataset data = generate_synthetic(spec);

    TrainConfig tc;
    tc.hidden_dims = {64};
    tc.epochs = 12;
    tc.seed = 5;
    DetectorModel model = train_detector(data, tc);
    std::printf("dataset: %zu traces, %zu classes; detector train accuracy %.3f\n",
                data.traces.size(), data.classes, accuracy(model, data));
    std::printf("parallel path uses %d workers (hardware reports %u)\n\n", parallel_workers, hw);

    std::printf("%-28s %10s %10s %8s %s\n", "kernel", "serial s", "parallel s", "speedup",
                "identical");

    {
        GenerationConfig cfg;
        cfg.max_iters = 120;
        cfg.seed = 11;
        auto t0 = Clock::now();
        GeneratedBatch serial = generate_batch(data, model, data, cfg, 1);
        double ts = seconds_since(t0);
        t0 = Clock::now();
        GeneratedBatch parallel = generate_batch(data, model, data, cfg, parallel_workers);
        double tp = seconds_since(t0);
        std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "adversarial generation", ts, tp, ts / tp,
                    same_batch(serial, parallel) ? "yes" : "NO");
        if (!same_batch(serial, parallel)) return 1;
    }

    {
        std::vector<BurstTrace> traces = data.traces;
        auto t0 = Clock::now();
        auto serial = top_k_accuracy(model, traces, 10, 1);
        double ts = seconds_since(t0);
        t0 = Clock::now();
        auto parallel = top_k_accuracy(model, traces, 10, parallel_workers);
        double tp = seconds_since(t0);
        std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "top-k scoring", ts, tp, ts / tp,
                    serial == parallel ? "yes" : "NO");
        if (serial != parallel) return 1;
    }

    return 0;
}
