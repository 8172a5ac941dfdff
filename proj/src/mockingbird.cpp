#include "mockingbird/mockingbird.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mockingbird/error.hpp"
#include "mockingbird/parallel.hpp"

namespace mockingbird {

namespace {

void check_config(const GenerationConfig& cfg) {
    if (cfg.alpha <= 0.0) throw Error(ErrorCode::BadConfig, "alpha must be positive");
    if (cfg.tau_c <= 0.0) throw Error(ErrorCode::BadConfig, "tau_c must be positive");
    if (cfg.tau_d < 0.0) throw Error(ErrorCode::BadConfig, "tau_d must be non-negative");
    if (cfg.stall_window < 1) throw Error(ErrorCode::BadConfig, "stall window must be >= 1");
    if (cfg.pool_size < 1) throw Error(ErrorCode::BadConfig, "pool size must be >= 1");
    if (cfg.max_iters < 1) throw Error(ErrorCode::BadConfig, "max iters must be >= 1");
}

double l2_norm(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(v.size())));
    if (rank > 0) --rank;  // nearest-rank, 1-indexed
    return v[std::min(rank, v.size() - 1)];
}

}  // namespace

TargetPool sample_pool(int source_label, const BurstDataset& pool_source, TargetCase target_case,
                       std::size_t pool_size, Rng& rng) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool_source.traces.size(); ++i) {
        if (target_case == TargetCase::CaseI && pool_source.traces[i].label == source_label) {
            continue;
        }
        candidates.push_back(i);
    }
    if (candidates.size() < pool_size) {
        throw Error(ErrorCode::InsufficientPool,
                    std::to_string(candidates.size()) + " candidates for pool of " +
                        std::to_string(pool_size));
    }
    TargetPool pool;
    for (std::size_t k = 0; k < pool_size; ++k) {
        std::size_t j = k + uniform_index(rng, candidates.size() - k);
        std::swap(candidates[k], candidates[j]);
        pool.indices.push_back(candidates[k]);
    }
    return pool;
}

TargetPool sample_pool(int source_label, const BurstDataset& pool_source,
                       const GenerationConfig& cfg) {
    Rng rng(cfg.seed);
    return sample_pool(source_label, pool_source, cfg.target_case, cfg.pool_size, rng);
}

std::size_t nearest_target(const std::vector<double>& current, const BurstDataset& pool_source,
                           const TargetPool& pool) {
    if (pool.indices.empty()) throw Error(ErrorCode::InsufficientPool, "empty pool");
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    bool found = false;
    for (std::size_t idx : pool.indices) {
        double d = l2_distance(current, pool_source.traces[idx].bursts);
        if (d == 0.0) continue;  // a zero-distance target has no direction to offer
        if (d < best) {
            best = d;
            best_idx = idx;
            found = true;
        }
    }
    if (!found) {
        throw Error(ErrorCode::AllTargetsDegenerate, "every pool member coincides with the source");
    }
    return best_idx;
}

std::size_t nearest_target(const BurstTrace& current, const BurstDataset& pool_source,
                           const TargetPool& pool) {
    return nearest_target(current.bursts, pool_source, pool);
}

std::vector<double> distance_gradient(const std::vector<double>& current,
                                      const std::vector<double>& target) {
    double d = l2_distance(current, target);
    if (d == 0.0) throw Error(ErrorCode::ZeroDistance, "current coincides with target");
    std::vector<double> g(current.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (target[i] - current[i]) / d;
    return g;
}

std::vector<double> perturbation_step(const std::vector<double>& current,
                                      const std::vector<double>& target, double alpha) {
    std::vector<double> g = distance_gradient(current, target);
    for (double& v : g) v = v > 0.0 ? alpha * v : 0.0;
    return g;
}

std::vector<double> perturbation_step(const BurstTrace& current, const BurstTrace& target,
                                      double alpha) {
    return perturbation_step(current.bursts, target.bursts, alpha);
}

DefendedTrace generate(const BurstTrace& source, const DetectorModel& detector,
                       const BurstDataset& pool_source, const GenerationConfig& cfg) {
    check_config(cfg);
    if (source.bursts.size() != detector.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "source width != detector input width");
    }
    if (source.label < 0 || static_cast<std::size_t>(source.label) >= detector.classes()) {
        throw Error(ErrorCode::UnknownClass, "source label " + std::to_string(source.label));
    }

    double scale = detector.normalization_scale;
    std::size_t width = source.bursts.size();
    std::vector<double> start(width);
    for (std::size_t i = 0; i < width; ++i) start[i] = source.bursts[i] / scale;
    std::vector<double> cur = start;

    Rng rng(cfg.seed);
    auto label = static_cast<std::size_t>(source.label);

    DefendedTrace out;
    out.original = source;

    double conf = predict_proba_normalized(detector, cur)[label];
    out.escaped = conf < cfg.tau_c;

    if (!out.escaped) {
        // Draw a pool and pick its nearest member, in normalized space.
        // Fully degenerate pools are redrawn a bounded number of times.
        auto pick_target = [&]() -> std::vector<double> {
            for (int attempt = 0; attempt < 100; ++attempt) {
                TargetPool pool =
                    sample_pool(source.label, pool_source, cfg.target_case, cfg.pool_size, rng);
                std::vector<std::vector<double>> members;
                members.reserve(pool.indices.size());
                TargetPool normed;
                normed.indices.resize(pool.indices.size());
                BurstDataset view;
                view.classes = pool_source.classes;
                for (std::size_t k = 0; k < pool.indices.size(); ++k) {
                    const BurstTrace& m = pool_source.traces[pool.indices[k]];
                    if (m.bursts.size() != width) {
                        throw Error(ErrorCode::DimensionMismatch, "pool trace width mismatch");
                    }
                    BurstTrace nm = m;
                    for (double& b : nm.bursts) b /= scale;
                    view.traces.push_back(std::move(nm));
                    normed.indices[k] = k;
                }
                try {
                    return view.traces[nearest_target(cur, view, normed)].bursts;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::AllTargetsDegenerate) throw;
                }
            }
            throw Error(ErrorCode::AllTargetsDegenerate, "no usable target after 100 pools");
        };

        std::vector<double> target = pick_target();
        std::size_t stall = 0;
        for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
            out.iterations_used = iter;
            if (l2_distance(cur, target) == 0.0) {
                target = pick_target();
                ++out.restarts;
                stall = 0;
            }
            std::vector<double> step = perturbation_step(cur, target, cfg.alpha);
            for (std::size_t i = 0; i < width; ++i) cur[i] += step[i];
            conf = predict_proba_normalized(detector, cur)[label];
            if (conf < cfg.tau_c) {
                out.escaped = true;
                break;
            }
            if (l2_norm(step) < cfg.tau_d) {
                if (++stall >= cfg.stall_window) {
                    target = pick_target();
                    ++out.restarts;
                    stall = 0;
                }
            } else {
                stall = 0;
            }
        }
    }

    out.final_source_confidence = conf;

    // De-normalize the accumulated growth and ceil back to packets. Untouched
    // bursts keep their exact original value.
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

BatchSummary summarize_batch(const std::vector<DefendedTrace>& traces, std::size_t n_failed) {
    BatchSummary s;
    s.n = traces.size();
    s.n_failed = n_failed;
    if (traces.empty()) return s;

    std::vector<double> overheads;
    overheads.reserve(traces.size());
    double iter_sum = 0.0;
    for (const DefendedTrace& t : traces) {
        if (t.escaped) ++s.n_escaped;
        overheads.push_back(t.overhead);
        iter_sum += static_cast<double>(t.iterations_used);
        ++s.restart_histogram[t.restarts];
    }
    double sum = 0.0;
    for (double v : overheads) sum += v;
    s.escape_rate = static_cast<double>(s.n_escaped) / static_cast<double>(s.n);
    s.mean_overhead = sum / static_cast<double>(s.n);
    s.p50_overhead = percentile(overheads, 0.50);
    s.p90_overhead = percentile(overheads, 0.90);
    s.mean_iterations = iter_sum / static_cast<double>(s.n);
    return s;
}

GeneratedBatch generate_batch(const BurstDataset& sources, const DetectorModel& detector,
                              const BurstDataset& pool_source, const GenerationConfig& cfg,
                              int workers) {
    check_config(cfg);
    std::size_t n = sources.traces.size();
    std::vector<DefendedTrace> slots(n);
    std::vector<std::string> errs(n);
    std::vector<char> ok(n, 0);

    parallel_for(n, workers, [&](std::size_t i) {
        GenerationConfig local = cfg;
        local.seed = derive_seed(cfg.seed, i);
        try {
            slots[i] = generate(sources.traces[i], detector, pool_source, local);
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
