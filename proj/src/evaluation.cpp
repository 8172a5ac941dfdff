#include "mockingbird/evaluation.hpp"

#include <algorithm>
#include <set>

#include "mockingbird/error.hpp"
#include "mockingbird/parallel.hpp"

namespace mockingbird {

namespace {

BurstDataset defended_as_dataset(const std::vector<DefendedTrace>& defended,
                                 std::size_t classes) {
    BurstDataset out;
    out.classes = classes;
    for (const DefendedTrace& d : defended) out.traces.push_back(d.defended);
    return out;
}

double mean_overhead_of(const std::vector<DefendedTrace>& defended) {
    double sum = 0.0;
    for (const DefendedTrace& d : defended) sum += d.overhead;
    return defended.empty() ? 0.0 : sum / static_cast<double>(defended.size());
}

void check_labels(const DetectorModel& model, const std::vector<BurstTrace>& traces) {
    for (const BurstTrace& t : traces) {
        if (t.label < 0 || static_cast<std::size_t>(t.label) >= model.classes()) {
            throw Error(ErrorCode::LabelMismatch,
                        "test label " + std::to_string(t.label) + " outside the model's " +
                            std::to_string(model.classes()) + " classes");
        }
    }
}

EvalReport score_defended(const DetectorModel& attacker,
                          const std::vector<DefendedTrace>& defended_test, std::string scenario,
                          int workers) {
    if (defended_test.empty()) throw Error(ErrorCode::EmptyDataset, "empty test set");
    std::vector<BurstTrace> traces;
    traces.reserve(defended_test.size());
    for (const DefendedTrace& d : defended_test) traces.push_back(d.defended);
    EvalReport report;
    report.scenario = std::move(scenario);
    report.top_k = top_k_accuracy(attacker, traces, 0, workers);
    report.mean_overhead = mean_overhead_of(defended_test);
    report.n_test = defended_test.size();
    return report;
}

}  // namespace

std::map<std::size_t, double> top_k_accuracy(const DetectorModel& model,
                                             const std::vector<BurstTrace>& traces,
                                             std::size_t k_max, int workers) {
    if (traces.empty()) throw Error(ErrorCode::EmptyDataset, "no traces to score");
    if (k_max == 0) k_max = std::min<std::size_t>(10, model.classes());
    if (k_max > model.classes()) {
        throw Error(ErrorCode::BadK, "k_max " + std::to_string(k_max) + " exceeds " +
                                         std::to_string(model.classes()) + " classes");
    }
    check_labels(model, traces);

    // Per trace: the deepest k at which the true label appears (0 = never).
    std::vector<std::size_t> hit_depth(traces.size(), 0);
    parallel_for(traces.size(), workers, [&](std::size_t i) {
        std::vector<int> top = top_k_labels(model, traces[i], k_max);
        for (std::size_t k = 0; k < top.size(); ++k) {
            if (top[k] == traces[i].label) {
                hit_depth[i] = k + 1;
                break;
            }
        }
    });

    std::map<std::size_t, double> acc;
    for (std::size_t k = 1; k <= k_max; ++k) acc[k] = 0.0;
    for (std::size_t depth : hit_depth) {
        if (depth == 0) continue;
        for (std::size_t k = depth; k <= k_max; ++k) acc[k] += 1.0;
    }
    for (auto& [k, v] : acc) v /= static_cast<double>(traces.size());
    return acc;
}

EvalReport eval_without_adv_training(const BurstDataset& attacker_train,
                                     const std::vector<DefendedTrace>& defended_test,
                                     const TrainConfig& attacker_cfg, int workers) {
    if (defended_test.empty()) throw Error(ErrorCode::EmptyDataset, "empty test set");
    for (const DefendedTrace& d : defended_test) {
        if (d.defended.label < 0 ||
            static_cast<std::size_t>(d.defended.label) >= attacker_train.classes) {
            throw Error(ErrorCode::LabelMismatch, "defended label outside the training label space");
        }
    }
    DetectorModel attacker = train_detector(attacker_train, attacker_cfg);
    return score_defended(attacker, defended_test, "without_adv_training", workers);
}

EvalReport eval_with_adv_training(const std::vector<DefendedTrace>& defended_train,
                                  const std::vector<DefendedTrace>& defended_test,
                                  const TrainConfig& attacker_cfg, int workers) {
    if (defended_train.empty()) throw Error(ErrorCode::EmptyDataset, "empty training set");
    if (defended_test.empty()) throw Error(ErrorCode::EmptyDataset, "empty test set");
    int max_label = 0;
    for (const DefendedTrace& d : defended_train) max_label = std::max(max_label, d.defended.label);
    auto classes = static_cast<std::size_t>(max_label + 1);
    for (const DefendedTrace& d : defended_test) {
        if (d.defended.label < 0 || static_cast<std::size_t>(d.defended.label) >= classes) {
            throw Error(ErrorCode::LabelMismatch, "defended label outside the training label space");
        }
    }
    DetectorModel attacker =
        train_detector(defended_as_dataset(defended_train, classes), attacker_cfg);
    return score_defended(attacker, defended_test, "with_adv_training", workers);
}

IntersectionResult intersect_label_sets(const std::vector<std::vector<int>>& per_round_top_k,
                                        int true_label) {
    if (per_round_top_k.empty()) {
        throw Error(ErrorCode::EmptyDataset, "intersection needs at least one round");
    }
    std::set<int> current(per_round_top_k.front().begin(), per_round_top_k.front().end());
    for (std::size_t r = 1; r < per_round_top_k.size(); ++r) {
        std::set<int> round(per_round_top_k[r].begin(), per_round_top_k[r].end());
        std::set<int> next;
        for (int v : current) {
            if (round.count(v)) next.insert(v);
        }
        current = std::move(next);
    }

    IntersectionResult res;
    if (current.size() == 1 && *current.begin() == true_label) {
        res.kind = IntersectionResult::Kind::AbsoluteSuccess;
        res.size = 1;
    } else if (current.empty() || !current.count(true_label)) {
        res.kind = IntersectionResult::Kind::AbsoluteFailure;
        res.size = current.size();
    } else {
        res.kind = IntersectionResult::Kind::Intersection;
        res.size = current.size();
    }
    return res;
}

IntersectionResult intersection_attack(const DetectorModel& model,
                                       const std::vector<BurstTrace>& per_round_traces,
                                       std::size_t k) {
    if (per_round_traces.empty()) {
        throw Error(ErrorCode::EmptyDataset, "intersection needs at least one round");
    }
    int label = per_round_traces.front().label;
    for (const BurstTrace& t : per_round_traces) {
        if (t.label != label) {
            throw Error(ErrorCode::MixedLabels, "rounds must share one true label");
        }
    }
    check_labels(model, per_round_traces);
    std::vector<std::vector<int>> tops;
    tops.reserve(per_round_traces.size());
    for (const BurstTrace& t : per_round_traces) {
        tops.push_back(top_k_labels(model, t, std::min(k, model.classes())));
    }
    return intersect_label_sets(tops, label);
}

IntersectionSummary summarize_intersection(const std::vector<IntersectionResult>& results) {
    IntersectionSummary s;
    s.n = results.size();
    if (results.empty()) return s;
    std::size_t success = 0, failure = 0, inter = 0;
    double size_sum = 0.0;
    for (const IntersectionResult& r : results) {
        switch (r.kind) {
            case IntersectionResult::Kind::AbsoluteSuccess: ++success; break;
            case IntersectionResult::Kind::AbsoluteFailure: ++failure; break;
            case IntersectionResult::Kind::Intersection:
                ++inter;
                size_sum += static_cast<double>(r.size);
                break;
        }
    }
    s.success_rate = static_cast<double>(success) / static_cast<double>(s.n);
    s.failure_rate = static_cast<double>(failure) / static_cast<double>(s.n);
    if (inter > 0) s.mean_intersection = size_sum / static_cast<double>(inter);
    return s;
}

}  // namespace mockingbird
