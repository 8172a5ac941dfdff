#include "mockingbird/cw.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mockingbird/error.hpp"
#include "mockingbird/parallel.hpp"

namespace mockingbird {

namespace {

// Per-step trust region: the largest normalized mass one descent step may add,
// as a fraction of the source trace size.
constexpr double kStepTrustFraction = 0.05;

void check_config(const CwConfig& cfg) {
    if (cfg.mode == CwMode::HybridCapped &&
        (cfg.max_overhead <= 0.0 || cfg.max_overhead > 1.0)) {
        throw Error(ErrorCode::BadConfig, "max_overhead must be in (0, 1]");
    }
    if (cfg.target_changes < 1) throw Error(ErrorCode::BadConfig, "target_changes must be >= 1");
    if (cfg.iters_per_target < 1) throw Error(ErrorCode::BadConfig, "iters_per_target must be >= 1");
    if (cfg.step_size <= 0.0) throw Error(ErrorCode::BadConfig, "step_size must be positive");
    if (cfg.init_delta <= 0.0) throw Error(ErrorCode::BadConfig, "init_delta must be positive");
    if (cfg.margin < 0.0) throw Error(ErrorCode::BadConfig, "margin must be non-negative");
    if (cfg.pool_size < 1) throw Error(ErrorCode::BadConfig, "pool size must be >= 1");
}

double vec_sum(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

Objective mode_objective(CwMode mode, int source_label, int target_cls) {
    switch (mode) {
        case CwMode::BaseUntargeted: return cw_untargeted(source_label);
        case CwMode::BaseTargeted:
        case CwMode::HybridCapped: return cw_targeted(target_cls);
    }
    throw Error(ErrorCode::BadConfig, "bad mode");
}

}  // namespace

const char* cw_mode_name(CwMode mode) {
    switch (mode) {
        case CwMode::BaseUntargeted: return "base_untargeted";
        case CwMode::BaseTargeted: return "base_targeted";
        case CwMode::HybridCapped: return "hybrid_capped";
    }
    return "unknown";
}

CwMode cw_mode_from_name(const std::string& name) {
    if (name == "base_untargeted") return CwMode::BaseUntargeted;
    if (name == "base_targeted") return CwMode::BaseTargeted;
    if (name == "hybrid_capped") return CwMode::HybridCapped;
    throw Error(ErrorCode::BadConfig, "unknown mode " + name);
}

double cw_objective(const DetectorModel& model, const BurstTrace& trace, CwMode mode, int cls) {
    std::vector<double> xnorm(trace.bursts.size());
    for (std::size_t i = 0; i < xnorm.size(); ++i) {
        xnorm[i] = trace.bursts[i] / model.normalization_scale;
    }
    return objective_value(model, xnorm, mode_objective(mode, cls, cls));
}

std::vector<double> scale_cap(const std::vector<double>& source, const std::vector<double>& current,
                              const std::vector<double>& raw_delta, double max_overhead) {
    if (source.size() != current.size() || source.size() != raw_delta.size()) {
        throw Error(ErrorCode::DimensionMismatch, "scale_cap width mismatch");
    }
    double budget = (1.0 + max_overhead) * vec_sum(source) - vec_sum(current);
    if (budget < 0.0) budget = 0.0;
    double raw_size = vec_sum(raw_delta);
    double scale = raw_size > 0.0 ? std::min(1.0, budget / raw_size) : 0.0;
    std::vector<double> out(raw_delta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = raw_delta[i] * scale;
    return out;
}

std::vector<double> scale_cap(const BurstTrace& source, const BurstTrace& current,
                              const std::vector<double>& raw_delta, double max_overhead) {
    return scale_cap(source.bursts, current.bursts, raw_delta, max_overhead);
}

TargetClassProvider pool_target_provider(const BurstTrace& source, const DetectorModel& detector,
                                         const BurstDataset& pool_source, const CwConfig& cfg) {
    double scale = detector.normalization_scale;
    int source_label = source.label;
    TargetCase target_case = cfg.target_case;
    std::size_t pool_size = cfg.pool_size;
    // Copy what the provider needs; it may outlive the caller's frame.
    auto pool_copy = std::make_shared<BurstDataset>(pool_source);
    auto det_copy = std::make_shared<DetectorModel>(detector);
    return [=](const std::vector<double>& current_norm, Rng& rng) -> int {
        for (int attempt = 0; attempt < 100; ++attempt) {
            TargetPool pool = sample_pool(source_label, *pool_copy, target_case, pool_size, rng);
            std::vector<double> raw(current_norm.size());
            for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = current_norm[i] * scale;
            std::size_t idx;
            try {
                idx = nearest_target(raw, *pool_copy, pool);
            } catch (const Error& e) {
                if (e.code() == ErrorCode::AllTargetsDegenerate) continue;
                throw;
            }
            const BurstTrace& member = pool_copy->traces[idx];
            int cls = member.label;
            if (target_case == TargetCase::CaseII ||
                static_cast<std::size_t>(cls) >= det_copy->classes()) {
                // Open-world members carry no usable label; use the class the
                // detector already sees in them.
                cls = top_k_labels(*det_copy, member, 1)[0];
            }
            if (cls != source_label) return cls;
        }
        throw Error(ErrorCode::AllTargetsDegenerate, "no usable target class after 100 pools");
    };
}

DefendedTrace cw_generate(const BurstTrace& source, const DetectorModel& detector,
                          const CwConfig& cfg, const TargetClassProvider& provider,
                          const DescentObserver& observer) {
    check_config(cfg);
    if (source.bursts.size() != detector.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "source width != detector input width");
    }
    if (source.label < 0 || static_cast<std::size_t>(source.label) >= detector.classes()) {
        throw Error(ErrorCode::UnknownClass, "source label " + std::to_string(source.label));
    }
    bool targeted = cfg.mode != CwMode::BaseUntargeted;
    if (targeted && !provider) throw Error(ErrorCode::BadConfig, "targeted mode needs a provider");

    double scale = detector.normalization_scale;
    std::size_t width = source.bursts.size();
    std::vector<double> start(width);
    for (std::size_t i = 0; i < width; ++i) start[i] = source.bursts[i] / scale;
    std::vector<double> cur = start;
    // One descent step may add at most this much normalized mass. Without the
    // bound the squared parameterization grows geometrically and a single
    // segment can overshoot every decision boundary into a region where the
    // softmax saturates and the gradient vanishes exactly.
    double trust = kStepTrustFraction * std::max(vec_sum(start), 1.0 / scale);

    Rng rng(cfg.seed);
    int label = source.label;

    DefendedTrace out;
    out.original = source;

    double obj = 0.0;
    std::vector<double> proba;
    auto evaluate = [&](const Objective& objective) {
        proba = predict_proba_normalized(detector, cur);
        double cls_p = proba[static_cast<std::size_t>(objective.cls)];
        double other = -1.0;
        for (std::size_t i = 0; i < proba.size(); ++i) {
            if (i == static_cast<std::size_t>(objective.cls)) continue;
            other = std::max(other, proba[i]);
        }
        obj = objective.kind == Objective::Kind::CwUntargeted ? cls_p - other : other - cls_p;
    };

    for (std::size_t seg = 0; seg < cfg.target_changes && !out.escaped; ++seg) {
        int target_cls = targeted ? provider(cur, rng) : label;
        Objective objective = mode_objective(cfg.mode, label, target_cls);

        std::vector<double> delta(width);
        for (double& d : delta) d = uniform_real(rng, 0.0, cfg.init_delta);

        for (std::size_t j = 0; j < cfg.iters_per_target; ++j) {
            evaluate(objective);
            if (observer) observer(seg, j, obj);
            if (obj < -cfg.margin) {
                out.escaped = true;
                break;
            }
            ++out.iterations_used;
            std::vector<double> g = input_gradient_normalized(detector, cur, objective);
            // Scale-free descent: a saturated softmax shrinks gradients by
            // orders of magnitude, so the step works on the gradient's shape,
            // not its magnitude. A zero gradient leaves delta unchanged.
            double gmax = 0.0;
            for (double v : g) gmax = std::max(gmax, std::abs(v));
            for (std::size_t i = 0; i < width; ++i) {
                if (gmax <= 0.0) break;
                // Only delta^2 reaches the trace, so along one coordinate the
                // objective is a parabola with its minimum at delta = 0; a
                // factor below zero would step past that minimum and add the
                // mass back. Clamp the shrink at zero instead.
                double factor = std::max(0.0, 1.0 - cfg.step_size * 2.0 * (g[i] / gmax));
                delta[i] *= factor;
            }
            double step_mass = 0.0;
            for (double d : delta) step_mass += d * d;
            if (step_mass > trust) {
                double shrink = std::sqrt(trust / step_mass);
                for (double& d : delta) d *= shrink;
            }
            std::vector<double> raw(width);
            for (std::size_t i = 0; i < width; ++i) raw[i] = delta[i] * delta[i];
            std::vector<double> inc = cfg.mode == CwMode::HybridCapped
                                          ? scale_cap(start, cur, raw, cfg.max_overhead)
                                          : raw;
            for (std::size_t i = 0; i < width; ++i) cur[i] += inc[i];
        }
        if (!out.escaped) {
            evaluate(objective);  // the segment's last step may have succeeded
            if (obj < -cfg.margin) {
                out.escaped = true;
            } else {
                ++out.restarts;
            }
        }
    }

    if (proba.empty()) proba = predict_proba_normalized(detector, cur);
    out.final_source_confidence = proba[static_cast<std::size_t>(label)];

    BurstTrace defended = source;
    for (std::size_t i = 0; i < width; ++i) {
        double d = cur[i] - start[i];
        if (d > 0.0) defended.bursts[i] = source.bursts[i] + d * scale;
    }
    out.defended = round_bursts(defended);
    out.delta.resize(width);
    for (std::size_t i = 0; i < width; ++i) {
        out.delta[i] = out.defended.bursts[i] - source.bursts[i];
    }
    out.overhead = bandwidth_overhead(source, out.defended);
    return out;
}

DefendedTrace cw_generate(const BurstTrace& source, const DetectorModel& detector,
                          const BurstDataset& pool_source, const CwConfig& cfg) {
    TargetClassProvider provider = cfg.mode == CwMode::BaseUntargeted
                                       ? TargetClassProvider{}
                                       : pool_target_provider(source, detector, pool_source, cfg);
    return cw_generate(source, detector, cfg, provider);
}

GeneratedBatch cw_generate_batch(const BurstDataset& sources, const DetectorModel& detector,
                                 const BurstDataset& pool_source, const CwConfig& cfg,
                                 int workers) {
    check_config(cfg);
    std::size_t n = sources.traces.size();
    std::vector<DefendedTrace> slots(n);
    std::vector<std::string> errs(n);
    std::vector<char> ok(n, 0);

    parallel_for(n, workers, [&](std::size_t i) {
        CwConfig local = cfg;
        local.seed = derive_seed(cfg.seed, i);
        try {
            slots[i] = cw_generate(sources.traces[i], detector, pool_source, local);
            ok[i] = 1;
        } catch (const std::exception& e) {
            errs[i] = e.what();
        }
    });

    GeneratedBatch batch;
    for (std::size_t i = 0; i < n; ++i) {
        if (ok[i]) {
            batch.traces.push_back(std::move(slots[i]));
        } else {
            batch.errors.emplace_back(i, errs[i]);
        }
    }
    batch.summary = summarize_batch(batch.traces, batch.errors.size());
    return batch;
}

}  // namespace mockingbird
