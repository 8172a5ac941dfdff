#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "mockingbird/cw.hpp"
#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/error.hpp"
#include "mockingbird/rng.hpp"

using namespace mockingbird;

namespace {

BurstTrace make_trace(int label, std::vector<double> b, std::size_t fixed_len) {
    BurstTrace t;
    t.label = label;
    t.logical_len = b.size();
    b.resize(fixed_len, 0.0);
    t.bursts = std::move(b);
    return t;
}

double vec_sum(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

DetectorModel zero_model(std::size_t input_dim, std::size_t classes) {
    DetectorModel m;
    m.layer_dims = {input_dim, classes};
    m.weights = {std::vector<double>(input_dim * classes, 0.0)};
    m.biases = {std::vector<double>(classes, 0.0)};
    return m;
}

struct SmallWorld {
    BurstDataset data;
    DetectorModel detector;
};

SmallWorld trained_world() {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.instances_per_class = 20;
    spec.burst_min = 4;
    spec.burst_max = 8;
    spec.fixed_len = 10;
    spec.noise = 0.25;
    spec.seed = 11;
    SmallWorld w;
    w.data = generate_synthetic(spec);

    TrainConfig tc;
    tc.hidden_dims = {8};
    tc.epochs = 30;
    tc.batch_size = 8;
    tc.learning_rate = 0.3;
    tc.seed = 23;
    w.detector = train_detector(w.data, tc);
    return w;
}

void check_insertion_only(const DefendedTrace& r) {
    REQUIRE(r.defended.bursts.size() == r.original.bursts.size());
    for (std::size_t i = 0; i < r.defended.bursts.size(); ++i) {
        CHECK(r.defended.bursts[i] >= r.original.bursts[i]);
        CHECK(r.defended.bursts[i] == std::floor(r.defended.bursts[i]));
    }
}

}  // namespace

TEST_SUITE("cw") {

TEST_CASE("mode names round-trip") {
    CHECK(cw_mode_from_name("base_untargeted") == CwMode::BaseUntargeted);
    CHECK(cw_mode_from_name("base_targeted") == CwMode::BaseTargeted);
    CHECK(cw_mode_from_name("hybrid_capped") == CwMode::HybridCapped);
    CHECK(cw_mode_name(CwMode::HybridCapped) == std::string("hybrid_capped"));
    try {
        cw_mode_from_name("fancy");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadConfig);
    }
}

TEST_CASE("objective fixtures on a hand-set probability vector") {
    // Zero weights, biases = log p: output is exactly p = (0.5, 0.2, 0.3).
    DetectorModel m;
    m.layer_dims = {2, 3};
    m.weights = {std::vector<double>(6, 0.0)};
    m.biases = {{std::log(0.5), std::log(0.2), std::log(0.3)}};

    BurstTrace t = make_trace(0, {0.4, 0.6}, 2);
    CHECK(cw_objective(m, t, CwMode::BaseUntargeted, 0) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(cw_objective(m, t, CwMode::BaseTargeted, 0) == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(cw_objective(m, t, CwMode::BaseTargeted, 1) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(cw_objective(m, t, CwMode::HybridCapped, 1) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("scale_cap hand fixture") {
    std::vector<double> source = {60, 40};
    std::vector<double> current = {70, 50};
    // Budget S = 1.5 * 100 - 120 = 30; raw sums to 60, so it is halved.
    auto capped = scale_cap(source, current, {40, 20}, 0.5);
    CHECK(capped == std::vector<double>{20, 10});

    // Inside the budget the raw delta passes through untouched.
    capped = scale_cap(source, current, {10, 5}, 0.5);
    CHECK(capped == std::vector<double>{10, 5});

    // Budget exhausted: nothing more may be added.
    capped = scale_cap(source, {100, 60}, {10, 5}, 0.5);
    CHECK(capped == std::vector<double>{0, 0});

    // A zero proposal stays zero rather than dividing by zero.
    capped = scale_cap(source, current, {0, 0}, 0.5);
    CHECK(capped == std::vector<double>{0, 0});

    CHECK_THROWS_AS(scale_cap(source, current, {1, 2, 3}, 0.5), Error);
}

TEST_CASE("scale_cap keeps every step inside the size budget") {
    Rng rng(31);
    for (int rep = 0; rep < 200; ++rep) {
        std::size_t width = 6;
        std::vector<double> source(width), raw(width);
        for (double& v : source) v = uniform_real(rng, 1.0, 20.0);
        for (double& v : raw) v = uniform_real(rng, 0.0, 10.0);
        double m = uniform_real(rng, 0.1, 1.0);

        // Start from a current trace already grown somewhere inside the budget.
        std::vector<double> current = source;
        double budget = m * vec_sum(source);
        current[rep % width] += uniform_real(rng, 0.0, budget);

        auto capped = scale_cap(source, current, raw, m);
        for (std::size_t i = 0; i < width; ++i) {
            CHECK(capped[i] >= 0.0);
            CHECK(capped[i] <= raw[i] + 1e-12);
        }
        CHECK(vec_sum(current) + vec_sum(capped) <=
              (1.0 + m) * vec_sum(source) + 1e-9);
    }
}

TEST_CASE("an indifferent detector exhausts every target segment") {
    SmallWorld w = trained_world();
    DetectorModel flat = zero_model(10, 3);
    flat.normalization_scale = w.detector.normalization_scale;

    CwConfig cfg;
    cfg.mode = CwMode::BaseUntargeted;
    cfg.target_changes = 4;
    cfg.iters_per_target = 5;
    DefendedTrace r = cw_generate(w.data.traces[0], flat, w.data, cfg);

    CHECK_FALSE(r.escaped);
    CHECK(r.restarts == 4);
    CHECK(r.iterations_used == 20);
    CHECK(r.final_source_confidence == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    check_insertion_only(r);
}

TEST_CASE("base modes escape a trained detector") {
    SmallWorld w = trained_world();

    CwConfig cfg;
    cfg.mode = CwMode::BaseUntargeted;
    cfg.seed = 3;
    DefendedTrace r = cw_generate(w.data.traces[0], w.detector, w.data, cfg);
    CHECK(r.escaped);
    CHECK(r.restarts < cfg.target_changes);
    check_insertion_only(r);
    CHECK(r.overhead > 0.0);

    cfg.mode = CwMode::BaseTargeted;
    DefendedTrace rt = cw_generate(w.data.traces[5], w.detector, w.data, cfg);
    CHECK(rt.escaped);
    check_insertion_only(rt);
}

TEST_CASE("hybrid mode respects the size cap up to rounding") {
    SmallWorld w = trained_world();
    CwConfig cfg;
    cfg.mode = CwMode::HybridCapped;
    cfg.max_overhead = 0.5;

    for (std::size_t i = 0; i < 6; ++i) {
        cfg.seed = 100 + i;
        const BurstTrace& src = w.data.traces[i * 9];
        DefendedTrace r = cw_generate(src, w.detector, w.data, cfg);
        check_insertion_only(r);

        double touched = 0.0;
        for (double d : r.delta) {
            if (d > 0.0) touched += 1.0;
        }
        // Ceil adds strictly less than one packet per touched burst.
        CHECK(trace_size(r.defended) <= 1.5 * trace_size(src) + touched);
    }
}

TEST_CASE("open-world pools take the target class from the detector") {
    SmallWorld w = trained_world();
    // Unmonitored set: traces drawn from classes 1 and 2 but all labeled 0.
    BurstDataset open_world;
    open_world.classes = 1;
    for (const auto& t : w.data.traces) {
        if (t.label != 0) {
            BurstTrace copy = t;
            copy.label = 0;
            open_world.traces.push_back(std::move(copy));
        }
    }

    CwConfig cfg;
    cfg.mode = CwMode::BaseTargeted;
    cfg.target_case = TargetCase::CaseII;
    cfg.seed = 9;
    const BurstTrace& src = w.data.traces[0];  // label 0
    DefendedTrace r = cw_generate(src, w.detector, open_world, cfg);
    CHECK(r.escaped);
    check_insertion_only(r);
}

TEST_CASE("batch output is identical for any worker count") {
    SmallWorld w = trained_world();
    BurstDataset sources;
    sources.classes = w.data.classes;
    for (std::size_t i = 0; i < 6; ++i) sources.traces.push_back(w.data.traces[i * 10]);

    CwConfig cfg;
    cfg.seed = 41;
    GeneratedBatch serial = cw_generate_batch(sources, w.detector, w.data, cfg, 1);
    GeneratedBatch wide = cw_generate_batch(sources, w.detector, w.data, cfg, 3);

    REQUIRE(serial.traces.size() == wide.traces.size());
    for (std::size_t i = 0; i < serial.traces.size(); ++i) {
        CHECK(serial.traces[i].defended.bursts == wide.traces[i].defended.bursts);
        CHECK(serial.traces[i].iterations_used == wide.traces[i].iterations_used);
        CHECK(serial.traces[i].restarts == wide.traces[i].restarts);
    }
    CHECK(serial.errors == wide.errors);
    CHECK(serial.summary.escape_rate == wide.summary.escape_rate);

    GeneratedBatch again = cw_generate_batch(sources, w.detector, w.data, cfg, 1);
    for (std::size_t i = 0; i < serial.traces.size(); ++i) {
        CHECK(serial.traces[i].defended.bursts == again.traces[i].defended.bursts);
    }
}

// Full-size world: synthesis defaults plus a detector trained with training
// defaults. Built once; the cases below share it.
const SmallWorld& default_world() {
    static SmallWorld w = [] {
        SmallWorld d;
        d.data = generate_synthetic(SyntheticSpec{});
        d.detector = train_detector(d.data, TrainConfig{});
        return d;
    }();
    return w;
}

TEST_CASE("small descent steps almost never increase the objective") {
    const SmallWorld& w = default_world();
    CwConfig cfg;
    cfg.mode = CwMode::BaseUntargeted;
    cfg.step_size = 0.05;
    cfg.target_changes = 1;
    cfg.iters_per_target = 40;

    std::size_t total = 0;
    std::size_t noninc = 0;
    for (std::size_t s = 0; s < 20; ++s) {
        cfg.seed = 100 + s;
        const BurstTrace& src = w.data.traces[s * 67 % w.data.traces.size()];
        std::vector<double> traj;
        auto observe = [&](std::size_t, std::size_t, double obj) { traj.push_back(obj); };
        cw_generate(src, w.detector, cfg, TargetClassProvider{}, observe);
        for (std::size_t i = 1; i < traj.size(); ++i) {
            ++total;
            if (traj[i] <= traj[i - 1] + 1e-12) ++noninc;
        }
    }
    REQUIRE(total > 100);
    CHECK(static_cast<double>(noninc) / static_cast<double>(total) >= 0.90);
}

TEST_CASE("default settings fool a detector that never saw defended traces") {
    const SmallWorld& w = default_world();
    BurstDataset sources;
    sources.classes = w.data.classes;
    for (std::size_t i = 0; i < w.data.traces.size(); i += 19) {
        sources.traces.push_back(w.data.traces[i]);
    }

    CwConfig cfg;
    cfg.mode = CwMode::BaseUntargeted;
    cfg.seed = 7;
    GeneratedBatch b = cw_generate_batch(sources, w.detector, w.data, cfg, 1);
    REQUIRE(b.errors.empty());
    CHECK(b.summary.escape_rate >= 0.90);

    std::size_t mis = 0;
    for (const auto& t : b.traces) {
        if (top_k_labels(w.detector, t.defended, 1)[0] != t.original.label) ++mis;
    }
    CHECK(static_cast<double>(mis) / static_cast<double>(b.traces.size()) >= 0.90);
}

TEST_CASE("cw_generate validates its inputs") {
    SmallWorld w = trained_world();
    CwConfig cfg;

    CwConfig bad = cfg;
    bad.max_overhead = 0.0;
    CHECK_THROWS_AS(cw_generate(w.data.traces[0], w.detector, w.data, bad), Error);
    bad = cfg;
    bad.max_overhead = 1.5;
    CHECK_THROWS_AS(cw_generate(w.data.traces[0], w.detector, w.data, bad), Error);
    bad = cfg;
    bad.target_changes = 0;
    CHECK_THROWS_AS(cw_generate(w.data.traces[0], w.detector, w.data, bad), Error);
    bad = cfg;
    bad.step_size = 0.0;
    CHECK_THROWS_AS(cw_generate(w.data.traces[0], w.detector, w.data, bad), Error);

    BurstTrace stray = w.data.traces[0];
    stray.label = 7;
    try {
        cw_generate(stray, w.detector, w.data, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownClass);
    }

    // Targeted descent without any way to pick a class is a config error.
    try {
        cw_generate(w.data.traces[0], w.detector, cfg, TargetClassProvider{});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadConfig);
    }
}

}  // TEST_SUITE
