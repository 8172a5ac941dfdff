#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/error.hpp"
#include "mockingbird/rng.hpp"

using namespace mockingbird;

namespace {

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "mb_detector_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

BurstTrace make_trace(int label, std::vector<double> b, std::size_t fixed_len) {
    BurstTrace t;
    t.label = label;
    t.logical_len = b.size();
    b.resize(fixed_len, 0.0);
    t.bursts = std::move(b);
    return t;
}

DetectorModel random_model(Rng& rng, std::vector<std::size_t> dims) {
    DetectorModel m;
    m.layer_dims = std::move(dims);
    for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
        std::size_t in = m.layer_dims[l];
        std::size_t out = m.layer_dims[l + 1];
        std::vector<double> w(in * out);
        std::vector<double> b(out);
        for (double& v : w) v = normal(rng, 0.0, 0.5);
        for (double& v : b) v = normal(rng, 0.0, 0.2);
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    return m;
}

// Central differences on objective_value: the independent check that the
// backprop gradient is the true derivative.
std::vector<double> fd_gradient(const DetectorModel& m, std::vector<double> x,
                                const Objective& obj, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += h;
        double fp = objective_value(m, x, obj);
        x[i] -= 2.0 * h;
        double fm = objective_value(m, x, obj);
        x[i] += h;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double linf(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

double grad_rel_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
    REQUIRE(analytic.size() == fd.size());
    std::vector<double> diff(fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) diff[i] = analytic[i] - fd[i];
    return linf(diff) / std::max(linf(fd), 1e-300);
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("input gradients match finite differences on random models") {
    Rng rng(20260801);
    double h = 1e-5;
    std::vector<std::vector<std::size_t>> shapes = {{6, 5, 3}, {4, 3}, {5, 8, 8, 4}};
    for (const auto& dims : shapes) {
        for (int rep = 0; rep < 12; ++rep) {
            DetectorModel m = random_model(rng, dims);
            std::vector<double> x(dims.front());
            for (double& v : x) v = uniform_real(rng, 0.0, 1.5);
            int classes = int(dims.back());
            std::vector<Objective> objectives = {
                proba_of_class(int(uniform_index(rng, classes))),
                cw_targeted(int(uniform_index(rng, classes))),
                cw_untargeted(int(uniform_index(rng, classes)))};
            for (const Objective& obj : objectives) {
                auto analytic = input_gradient_normalized(m, x, obj);
                auto fd = fd_gradient(m, x, obj, h);
                CHECK(grad_rel_error(analytic, fd) < 1e-5);
            }
        }
    }
}

TEST_CASE("probability gradients on smooth objectives reach tight agreement") {
    Rng rng(7);
    DetectorModel m = random_model(rng, {8, 6, 4});
    std::vector<double> x(8);
    for (double& v : x) v = uniform_real(rng, 0.0, 1.0);
    auto analytic = input_gradient_normalized(m, x, proba_of_class(2));
    auto fd = fd_gradient(m, x, proba_of_class(2), 1e-5);
    CHECK(grad_rel_error(analytic, fd) < 1e-6);
}

TEST_CASE("zero-weight model is uniform and ties break to lower ids") {
    DetectorModel m;
    m.layer_dims = {4, 3};
    m.weights = {std::vector<double>(12, 0.0)};
    m.biases = {std::vector<double>(3, 0.0)};

    auto proba = predict_proba_normalized(m, {1.0, 2.0, 3.0, 4.0});
    REQUIRE(proba.size() == 3);
    for (double p : proba) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    CHECK(top_k_from_proba(proba, 3) == std::vector<int>{0, 1, 2});
}

TEST_CASE("softmax head reproduces hand-set probabilities") {
    // Zero weights, biases = log p: softmax(log p) = p.
    std::vector<double> p = {0.5, 0.2, 0.3};
    DetectorModel m;
    m.layer_dims = {2, 3};
    m.weights = {std::vector<double>(6, 0.0)};
    m.biases = {{std::log(p[0]), std::log(p[1]), std::log(p[2])}};

    std::vector<double> x = {0.4, 0.6};
    auto proba = predict_proba_normalized(m, x);
    for (int i = 0; i < 3; ++i) CHECK(proba[i] == doctest::Approx(p[i]).epsilon(1e-12));

    CHECK(objective_value(m, x, proba_of_class(1)) == doctest::Approx(0.2).epsilon(1e-12));
    // Untargeted on the winner: F_0 - max(F_1, F_2) = 0.5 - 0.3.
    CHECK(objective_value(m, x, cw_untargeted(0)) == doctest::Approx(0.2).epsilon(1e-12));
    // Targeted at the winner: max(F_1, F_2) - F_0 = -0.2.
    CHECK(objective_value(m, x, cw_targeted(0)) == doctest::Approx(-0.2).epsilon(1e-12));
    // Targeted at the loser: max(F_0, F_2) - F_1 = 0.3.
    CHECK(objective_value(m, x, cw_targeted(1)) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("predict_proba divides by the stored normalization scale") {
    DetectorModel m;
    m.layer_dims = {2, 2};
    m.weights = {{1.0, 0.0, 0.0, 1.0}};
    m.biases = {{0.0, 0.0}};
    m.normalization_scale = 2.0;

    BurstTrace t = make_trace(0, {2.0, 0.0}, 2);
    auto a = predict_proba(m, t);
    auto b = predict_proba_normalized(m, {1.0, 0.0});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    auto ga = input_gradient(m, t, proba_of_class(0));
    auto gb = input_gradient_normalized(m, {1.0, 0.0}, proba_of_class(0));
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == gb[i]);
}

TEST_CASE("training separates an easy synthetic corpus") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.instances_per_class = 30;
    spec.burst_min = 4;
    spec.burst_max = 6;
    spec.fixed_len = 8;
    spec.noise = 0.2;
    spec.seed = 3;
    BurstDataset data = generate_synthetic(spec);

    TrainConfig cfg;
    cfg.hidden_dims = {8};
    cfg.epochs = 40;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.3;
    cfg.seed = 5;
    DetectorModel m = train_detector(data, cfg);

    CHECK(accuracy(m, data) >= 0.95);

    double max_mag = 0.0;
    for (const auto& t : data.traces) {
        for (double b : t.bursts) max_mag = std::max(max_mag, b);
    }
    CHECK(m.normalization_scale == max_mag);
    CHECK(m.layer_dims == std::vector<std::size_t>{8, 8, 2});
}

TEST_CASE("training is bitwise deterministic in the seed") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.instances_per_class = 6;
    spec.burst_min = 3;
    spec.burst_max = 4;
    spec.fixed_len = 6;
    BurstDataset data = generate_synthetic(spec);

    TrainConfig cfg;
    cfg.hidden_dims = {5};
    cfg.epochs = 8;
    cfg.batch_size = 4;
    cfg.seed = 17;
    DetectorModel a = train_detector(data, cfg);
    DetectorModel b = train_detector(data, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.biases == b.biases);

    cfg.seed = 18;
    DetectorModel c = train_detector(data, cfg);
    CHECK(a.weights != c.weights);
}

TEST_CASE("model files round-trip bit for bit") {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.instances_per_class = 4;
    spec.burst_min = 3;
    spec.burst_max = 5;
    spec.fixed_len = 6;
    BurstDataset data = generate_synthetic(spec);
    TrainConfig cfg;
    cfg.hidden_dims = {4};
    cfg.epochs = 3;
    DetectorModel m = train_detector(data, cfg);

    std::string path = temp_path("model.mbdm");
    save_model(m, path);
    DetectorModel back = load_model(path);

    CHECK(back.arch_id == m.arch_id);
    CHECK(back.layer_dims == m.layer_dims);
    CHECK(back.weights == m.weights);
    CHECK(back.biases == m.biases);
    CHECK(back.normalization_scale == m.normalization_scale);

    BurstTrace t = data.traces[0];
    CHECK(predict_proba(back, t) == predict_proba(m, t));
}

TEST_CASE("model loader rejects corrupt files") {
    SyntheticSpec spec;
    spec.classes = 2;
    spec.instances_per_class = 3;
    spec.burst_min = 2;
    spec.burst_max = 3;
    spec.fixed_len = 4;
    BurstDataset data = generate_synthetic(spec);
    TrainConfig cfg;
    cfg.hidden_dims = {3};
    cfg.epochs = 2;
    DetectorModel m = train_detector(data, cfg);
    std::string path = temp_path("good.mbdm");
    save_model(m, path);

    auto slurp = [&]() {
        std::ifstream in(path, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    auto expect_format_error = [&](const std::string& bytes, const std::string& name) {
        std::string bad = temp_path(name);
        std::ofstream(bad, std::ios::binary) << bytes;
        try {
            load_model(bad);
            FAIL("expected an error for " << name);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::FormatError);
        }
    };

    std::string bytes = slurp();
    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    expect_format_error(wrong_magic, "bad_magic.mbdm");
    expect_format_error(bytes.substr(0, bytes.size() - 3), "truncated.mbdm");
    expect_format_error(bytes + "zz", "trailing.mbdm");
    std::string wrong_version = bytes;
    wrong_version[4] = char(0x7f);
    expect_format_error(wrong_version, "bad_version.mbdm");
}

TEST_CASE("top_k orders by probability with lower-id tie break") {
    std::vector<double> proba = {0.2, 0.5, 0.2, 0.1};
    CHECK(top_k_from_proba(proba, 1) == std::vector<int>{1});
    CHECK(top_k_from_proba(proba, 3) == std::vector<int>{1, 0, 2});
    CHECK(top_k_from_proba(proba, 4) == std::vector<int>{1, 0, 2, 3});
    CHECK_THROWS_AS(top_k_from_proba(proba, 0), Error);
    CHECK_THROWS_AS(top_k_from_proba(proba, 5), Error);
    try {
        top_k_from_proba(proba, 0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BadK);
    }
}

TEST_CASE("accuracy counts argmax hits with lower-id tie break") {
    DetectorModel m;
    m.layer_dims = {3, 3};
    m.weights = {{1, 0, 0, 0, 1, 0, 0, 0, 1}};
    m.biases = {{0, 0, 0}};

    BurstDataset data;
    data.classes = 3;
    data.traces.push_back(make_trace(0, {2, 1, 0}, 3));  // argmax 0: hit
    data.traces.push_back(make_trace(0, {0, 2, 1}, 3));  // argmax 1: miss
    data.traces.push_back(make_trace(1, {1, 1, 0}, 3));  // tie 0/1 -> 0: miss
    CHECK(accuracy(m, data) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("train_detector validates its inputs") {
    BurstDataset empty;
    TrainConfig cfg;
    cfg.epochs = 1;
    try {
        train_detector(empty, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyDataset);
    }

    BurstDataset one_class;
    one_class.classes = 1;
    one_class.traces.push_back(make_trace(0, {1, 2}, 4));
    one_class.traces.push_back(make_trace(0, {2, 1}, 4));
    try {
        train_detector(one_class, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SingleClassDataset);
    }

    BurstDataset two;
    two.classes = 2;
    two.traces.push_back(make_trace(0, {1, 2}, 4));
    two.traces.push_back(make_trace(1, {2, 1}, 4));

    TrainConfig bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(train_detector(two, bad), Error);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(train_detector(two, bad), Error);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train_detector(two, bad), Error);

    BurstDataset ragged = two;
    ragged.traces.push_back(make_trace(0, {1}, 6));
    try {
        train_detector(ragged, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
    }

    BurstDataset stray = two;
    stray.traces.push_back(make_trace(5, {1, 1}, 4));
    try {
        train_detector(stray, cfg);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownClass);
    }
}

}  // TEST_SUITE
