#pragma once

// Gradient-attack baselines against the detector. The perturbation is kept
// non-negative through a square-root parameterization: the optimizer descends
// a vector delta whose elementwise square is the burst growth applied each
// step, so bursts can only grow. Three modes:
//   BaseUntargeted  drive the source class out of the argmax; no size cap
//   BaseTargeted    drive a chosen target class into the argmax; no size cap
//   HybridCapped    targeted, with every step passed through scale_cap so the
//                   defended trace never exceeds (1 + M) times the source size
//
// Targets come from the same pool machinery the distance-walk generator uses;
// a run may switch targets a bounded number of times before giving up.

#include <cstdint>
#include <functional>
#include <string>

#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/mockingbird.hpp"

namespace mockingbird {

enum class CwMode { BaseUntargeted, BaseTargeted, HybridCapped };

const char* cw_mode_name(CwMode mode);
CwMode cw_mode_from_name(const std::string& name);

struct CwConfig {
    CwMode mode = CwMode::HybridCapped;
    double max_overhead = 0.5;         // M: growth budget as a fraction of source size
    std::size_t target_changes = 8;    // T: target segments before giving up
    std::size_t iters_per_target = 30; // k: descent steps per segment
    double step_size = 1.0;            // descent rate on the sqrt parameterization
    double init_delta = 0.05;          // initial sqrt-parameter magnitude (normalized units)
    double margin = 0.0;               // extra objective margin required for success
    TargetCase target_case = TargetCase::CaseI;
    std::size_t pool_size = 10;
    std::uint64_t seed = 1;
};

// Objective value for the mode: targeted uses cls as the target class,
// untargeted uses cls as the true class. Negative means the mode's
// misclassification condition holds.
double cw_objective(const DetectorModel& model, const BurstTrace& trace, CwMode mode, int cls);

// Scale a proposed non-negative growth so the trace stays inside the size
// budget: with S = (1+M) * size(source) - size(current), the delta is scaled
// by min(1, max(0, S) / size(raw_delta)).
std::vector<double> scale_cap(const std::vector<double>& source, const std::vector<double>& current,
                              const std::vector<double>& raw_delta, double max_overhead);
std::vector<double> scale_cap(const BurstTrace& source, const BurstTrace& current,
                              const std::vector<double>& raw_delta, double max_overhead);

// Yields the target class for the next segment given the current normalized
// trace. Must return a class distinct from the source class.
using TargetClassProvider = std::function<int(const std::vector<double>& current_norm, Rng& rng)>;

// Standard provider: sample a pool, take the label of its nearest member.
// For CaseII pools (unlabeled open world) the detector's own prediction on
// that member stands in for the class.
TargetClassProvider pool_target_provider(const BurstTrace& source, const DetectorModel& detector,
                                         const BurstDataset& pool_source, const CwConfig& cfg);

// Called once per descent iteration with the objective value measured before
// that iteration's step. Lets callers watch the trajectory (tests, tuning)
// without changing how the run behaves.
using DescentObserver = std::function<void(std::size_t segment, std::size_t iter, double objective)>;

DefendedTrace cw_generate(const BurstTrace& source, const DetectorModel& detector,
                          const CwConfig& cfg, const TargetClassProvider& provider,
                          const DescentObserver& observer = {});
DefendedTrace cw_generate(const BurstTrace& source, const DetectorModel& detector,
                          const BurstDataset& pool_source, const CwConfig& cfg);

GeneratedBatch cw_generate_batch(const BurstDataset& sources, const DetectorModel& detector,
                                 const BurstDataset& pool_source, const CwConfig& cfg,
                                 int workers = 1);

}  // namespace mockingbird
