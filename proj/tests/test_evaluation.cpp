#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "doctest.h"
#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/error.hpp"
#include "mockingbird/evaluation.hpp"
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

DetectorModel identity_model(std::size_t n) {
    DetectorModel m;
    m.layer_dims = {n, n};
    std::vector<double> w(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
    m.weights = {std::move(w)};
    m.biases = {std::vector<double>(n, 0.0)};
    return m;
}

DefendedTrace defended_of(BurstTrace trace, double overhead) {
    DefendedTrace d;
    d.original = trace;
    d.defended = std::move(trace);
    d.overhead = overhead;
    d.escaped = true;
    return d;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("top-k accuracy hand fixture") {
    DetectorModel m = identity_model(3);
    std::vector<BurstTrace> traces = {
        make_trace(0, {2, 1, 0}, 3),  // ranked 0,1,2: hit at k=1
        make_trace(0, {0, 2, 1}, 3),  // ranked 1,2,0: hit at k=3
        make_trace(1, {1, 1, 0}, 3),  // tie 0/1 ranks 0 first: hit at k=2
    };
    auto acc = top_k_accuracy(m, traces, 3);
    CHECK(acc[1] == doctest::Approx(1.0 / 3.0));
    CHECK(acc[2] == doctest::Approx(2.0 / 3.0));
    CHECK(acc[3] == doctest::Approx(1.0));
}

TEST_CASE("top-k accuracy is monotone and saturates at k = classes") {
    Rng rng(71);
    DetectorModel m;
    m.layer_dims = {4, 5};
    std::vector<double> w(20);
    for (double& v : w) v = normal(rng, 0.0, 1.0);
    m.weights = {std::move(w)};
    m.biases = {std::vector<double>(5, 0.0)};

    std::vector<BurstTrace> traces;
    for (int i = 0; i < 40; ++i) {
        std::vector<double> b(4);
        for (double& v : b) v = uniform_real(rng, 0.0, 3.0);
        traces.push_back(make_trace(int(uniform_index(rng, 5)), b, 4));
    }

    auto acc = top_k_accuracy(m, traces, 5);
    for (std::size_t k = 2; k <= 5; ++k) CHECK(acc[k] >= acc[k - 1]);
    CHECK(acc[5] == doctest::Approx(1.0));
}

TEST_CASE("top-k defaults to min(10, classes) and validates inputs") {
    DetectorModel m3 = identity_model(3);
    std::vector<BurstTrace> traces = {make_trace(0, {1, 0, 0}, 3)};
    auto acc = top_k_accuracy(m3, traces);
    CHECK(acc.size() == 3);
    CHECK(acc.count(1) == 1);
    CHECK(acc.count(3) == 1);

    DetectorModel m12 = identity_model(12);
    std::vector<BurstTrace> wide = {make_trace(0, std::vector<double>(12, 1.0), 12)};
    auto acc12 = top_k_accuracy(m12, wide);
    CHECK(acc12.size() == 10);
    CHECK(acc12.count(10) == 1);
    CHECK(acc12.count(11) == 0);

    CHECK_THROWS_AS(top_k_accuracy(m3, traces, 4), Error);
    CHECK_THROWS_AS(top_k_accuracy(m3, {}), Error);

    std::vector<BurstTrace> stray = {make_trace(9, {1, 0, 0}, 3)};
    try {
        top_k_accuracy(m3, stray);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LabelMismatch);
    }
}

TEST_CASE("top-k accuracy is identical for any worker count") {
    Rng rng(5);
    DetectorModel m = identity_model(6);
    std::vector<BurstTrace> traces;
    for (int i = 0; i < 30; ++i) {
        std::vector<double> b(6);
        for (double& v : b) v = uniform_real(rng, 0.0, 2.0);
        traces.push_back(make_trace(int(uniform_index(rng, 6)), b, 6));
    }
    auto serial = top_k_accuracy(m, traces, 6, 1);
    auto wide = top_k_accuracy(m, traces, 6, 4);
    CHECK(serial == wide);
}

TEST_CASE("attacker without adversarial training scores defended traces") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.instances_per_class = 20;
    spec.burst_min = 3;
    spec.burst_max = 5;
    spec.fixed_len = 6;
    spec.seed = 13;
    BurstDataset clean = generate_synthetic(spec);

    // An identity defense: defended traces equal the originals.
    std::vector<DefendedTrace> defended;
    for (std::size_t i = 0; i < 10; ++i) defended.push_back(defended_of(clean.traces[i * 4], 0.3));

    TrainConfig tc;
    tc.hidden_dims = {6};
    tc.epochs = 25;
    tc.learning_rate = 0.3;
    tc.batch_size = 8;
    EvalReport report = eval_without_adv_training(clean, defended, tc);

    CHECK(report.scenario == "without_adv_training");
    CHECK(report.n_test == 10);
    CHECK(report.mean_overhead == doctest::Approx(0.3));
    // A defense that does nothing leaves the attacker accurate.
    CHECK(report.top_k[1] >= 0.9);
    CHECK(report.top_k[2] == doctest::Approx(1.0));

    std::vector<DefendedTrace> stray = {defended_of(make_trace(5, {1, 1, 1}, 6), 0.0)};
    try {
        eval_without_adv_training(clean, stray, tc);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LabelMismatch);
    }
    CHECK_THROWS_AS(eval_without_adv_training(clean, {}, tc), Error);
}

TEST_CASE("attacker with adversarial training learns the defended distribution") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.instances_per_class = 24;
    spec.burst_min = 3;
    spec.burst_max = 5;
    spec.fixed_len = 6;
    spec.seed = 29;
    BurstDataset clean = generate_synthetic(spec);

    // A deterministic "defense" the attacker can learn: add 5 to every burst.
    auto shift = [](BurstTrace t) {
        for (std::size_t i = 0; i < t.logical_len; ++i) t.bursts[i] += 5.0;
        return t;
    };
    std::vector<DefendedTrace> train, test;
    for (std::size_t i = 0; i < clean.traces.size(); ++i) {
        auto& bucket = i % 2 == 0 ? train : test;
        bucket.push_back(defended_of(shift(clean.traces[i]), 0.5));
    }

    TrainConfig tc;
    tc.hidden_dims = {6};
    tc.epochs = 25;
    tc.learning_rate = 0.3;
    tc.batch_size = 8;
    EvalReport report = eval_with_adv_training(train, test, tc);
    CHECK(report.scenario == "with_adv_training");
    CHECK(report.n_test == test.size());
    CHECK(report.top_k[1] >= 0.9);

    std::vector<DefendedTrace> stray_test = {defended_of(make_trace(7, {1, 1, 1}, 6), 0.0)};
    try {
        eval_with_adv_training(train, stray_test, tc);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::LabelMismatch);
    }
    CHECK_THROWS_AS(eval_with_adv_training({}, test, tc), Error);
}

TEST_CASE("intersection recurrence hand fixtures") {
    auto success = intersect_label_sets({{3, 7, 9}, {7, 9}, {7}}, 7);
    CHECK(success.kind == IntersectionResult::Kind::AbsoluteSuccess);
    CHECK(success.size == 1);

    auto empty = intersect_label_sets({{1, 2}, {3, 4}}, 1);
    CHECK(empty.kind == IntersectionResult::Kind::AbsoluteFailure);
    CHECK(empty.size == 0);

    auto narrowed = intersect_label_sets({{1, 7, 9}, {7, 9, 4}}, 7);
    CHECK(narrowed.kind == IntersectionResult::Kind::Intersection);
    CHECK(narrowed.size == 2);

    // Non-empty final set that misses the true label is still a failure.
    auto missed = intersect_label_sets({{1, 2}, {1, 2}}, 3);
    CHECK(missed.kind == IntersectionResult::Kind::AbsoluteFailure);
    CHECK(missed.size == 2);

    auto single = intersect_label_sets({{5}}, 5);
    CHECK(single.kind == IntersectionResult::Kind::AbsoluteSuccess);

    CHECK_THROWS_AS(intersect_label_sets({}, 0), Error);
}

TEST_CASE("intersection size never grows with more rounds") {
    Rng rng(83);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<std::vector<int>> rounds;
        for (int r = 0; r < 5; ++r) {
            std::vector<int> ids;
            for (int c = 0; c < 12; ++c) {
                if (uniform_real(rng, 0.0, 1.0) < 0.5) ids.push_back(c);
            }
            if (ids.empty()) ids.push_back(0);
            rounds.push_back(ids);
        }
        std::size_t prev = rounds[0].size();
        for (std::size_t n = 1; n <= rounds.size(); ++n) {
            std::vector<std::vector<int>> prefix(rounds.begin(), rounds.begin() + n);
            auto res = intersect_label_sets(prefix, 0);
            CHECK(res.size <= prev);
            prev = res.size;
        }
    }
}

TEST_CASE("intersection attack runs the recurrence on model top-k sets") {
    DetectorModel m = identity_model(3);
    std::vector<BurstTrace> rounds = {
        make_trace(1, {0, 2, 1}, 3),  // top-2 = {1, 2}
        make_trace(1, {1, 2, 0}, 3),  // top-2 = {1, 0}
    };
    auto res = intersection_attack(m, rounds, 2);
    CHECK(res.kind == IntersectionResult::Kind::AbsoluteSuccess);

    // k above the class count clamps instead of failing.
    auto clamped = intersection_attack(m, rounds, 10);
    CHECK(clamped.kind == IntersectionResult::Kind::Intersection);
    CHECK(clamped.size == 3);

    std::vector<BurstTrace> mixed = {make_trace(1, {0, 2, 1}, 3), make_trace(2, {1, 2, 0}, 3)};
    try {
        intersection_attack(m, mixed, 2);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MixedLabels);
    }
    CHECK_THROWS_AS(intersection_attack(m, {}, 2), Error);
}

TEST_CASE("intersection summary fixture") {
    std::vector<IntersectionResult> results = {
        {IntersectionResult::Kind::AbsoluteSuccess, 1},
        {IntersectionResult::Kind::AbsoluteFailure, 0},
        {IntersectionResult::Kind::Intersection, 3},
        {IntersectionResult::Kind::Intersection, 5},
    };
    IntersectionSummary s = summarize_intersection(results);
    CHECK(s.n == 4);
    CHECK(s.success_rate == doctest::Approx(0.25));
    CHECK(s.failure_rate == doctest::Approx(0.25));
    REQUIRE(s.mean_intersection.has_value());
    CHECK(*s.mean_intersection == doctest::Approx(4.0));
    // The three buckets partition the rounds.
    double bucket_sum = s.success_rate + s.failure_rate +
                        double(2) / double(s.n);
    CHECK(bucket_sum == doctest::Approx(1.0));

    IntersectionSummary none = summarize_intersection({});
    CHECK(none.n == 0);
    CHECK_FALSE(none.mean_intersection.has_value());

    IntersectionSummary all_success =
        summarize_intersection({{IntersectionResult::Kind::AbsoluteSuccess, 1}});
    CHECK(all_success.success_rate == doctest::Approx(1.0));
    CHECK_FALSE(all_success.mean_intersection.has_value());
}

}  // TEST_SUITE
