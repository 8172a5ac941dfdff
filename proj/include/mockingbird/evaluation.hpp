#pragma once

// Attack-side evaluation. Top-k accuracy of an attacker model over traces,
// the two training scenarios (attacker fit on clean traces vs. fit on
// defended traces), and the multi-visit intersection attack that narrows a
// user's candidate sites round by round.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/mockingbird.hpp"

namespace mockingbird {

struct EvalReport {
    std::string scenario;                 // "without_adv_training" | "with_adv_training"
    std::map<std::size_t, double> top_k;  // k -> accuracy, k = 1..k_max
    double mean_overhead = 0.0;
    std::size_t n_test = 0;
};

// Fraction of traces whose true label appears among the k most probable
// classes, for each k in 1..k_max. k_max defaults to min(10, classes).
std::map<std::size_t, double> top_k_accuracy(const DetectorModel& model,
                                             const std::vector<BurstTrace>& traces,
                                             std::size_t k_max = 0, int workers = 1);

// Attacker trained on undefended traces, scored on defended ones.
EvalReport eval_without_adv_training(const BurstDataset& attacker_train,
                                     const std::vector<DefendedTrace>& defended_test,
                                     const TrainConfig& attacker_cfg, int workers = 1);

// Attacker trained on defended traces (disjoint sources, fresh seeds),
// scored on independently defended ones.
EvalReport eval_with_adv_training(const std::vector<DefendedTrace>& defended_train,
                                  const std::vector<DefendedTrace>& defended_test,
                                  const TrainConfig& attacker_cfg, int workers = 1);

struct IntersectionResult {
    enum class Kind { AbsoluteSuccess, AbsoluteFailure, Intersection };
    Kind kind = Kind::AbsoluteFailure;
    std::size_t size = 0;  // final candidate-set size, Intersection only
};

// Core recurrence over per-round top-k label lists: L_1 = T_1,
// L_n = T_n intersect L_{n-1}. AbsoluteSuccess when the final set is exactly
// {true_label}; AbsoluteFailure when it is empty or misses the true label.
IntersectionResult intersect_label_sets(const std::vector<std::vector<int>>& per_round_top_k,
                                        int true_label);

// One round per defended visit of the same site, candidates from the
// attacker's top-k on each.
IntersectionResult intersection_attack(const DetectorModel& model,
                                       const std::vector<BurstTrace>& per_round_traces,
                                       std::size_t k = 10);

struct IntersectionSummary {
    std::size_t n = 0;
    double success_rate = 0.0;
    double failure_rate = 0.0;
    // Mean final set size over Intersection outcomes; absent when there are none.
    std::optional<double> mean_intersection;
};

IntersectionSummary summarize_intersection(const std::vector<IntersectionResult>& results);

}  // namespace mockingbird
