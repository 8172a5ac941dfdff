#pragma once

// Adversarial trace generation. A source trace is nudged toward the nearest
// of a random pool of target traces until the detector's confidence in the
// source class falls below a threshold. Each step moves along the negative
// gradient of the Euclidean distance to the target, keeping only the
// components that grow bursts: packets can be added, never removed. When
// progress stalls, a fresh pool is drawn and the walk continues from the
// current trace; the iteration budget never resets.
//
// All step geometry lives in normalized space (bursts divided by the
// detector's normalization scale); the finished trace is de-normalized and
// ceil-rounded back to integer packet counts.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/rng.hpp"
#include "mockingbird/trace.hpp"

namespace mockingbird {

// Where target pools come from. CaseI draws from labeled traces of other
// classes (a closed world); CaseII draws from an unmonitored open-world set,
// where labels carry no meaning.
enum class TargetCase { CaseI, CaseII };

struct GenerationConfig {
    double alpha = 5.0;            // step scale along the unit distance gradient
    double tau_c = 0.01;           // escape once source-class confidence drops below this
    double tau_d = 1e-4;           // per-iteration change below this counts as a stall
    std::size_t stall_window = 10; // consecutive stalls before drawing a fresh pool
    std::size_t pool_size = 10;
    std::size_t max_iters = 500;
    TargetCase target_case = TargetCase::CaseI;
    std::uint64_t seed = 1;
};

struct DefendedTrace {
    BurstTrace original;
    BurstTrace defended;
    std::vector<double> delta;  // defended - original, after rounding
    double overhead = 0.0;
    std::size_t iterations_used = 0;
    std::size_t restarts = 0;
    double final_source_confidence = 1.0;
    bool escaped = false;
};

struct TargetPool {
    std::vector<std::size_t> indices;  // into the pool source dataset
};

// Draw pool_size distinct candidates. CaseI excludes the source class.
TargetPool sample_pool(int source_label, const BurstDataset& pool_source, TargetCase target_case,
                       std::size_t pool_size, Rng& rng);
TargetPool sample_pool(int source_label, const BurstDataset& pool_source,
                       const GenerationConfig& cfg);

// Pool member closest to current in L2; zero-distance members are skipped,
// ties break toward the earliest pool position. Returns an index into the
// pool source.
std::size_t nearest_target(const std::vector<double>& current, const BurstDataset& pool_source,
                           const TargetPool& pool);
std::size_t nearest_target(const BurstTrace& current, const BurstDataset& pool_source,
                           const TargetPool& pool);

// Gradient of -distance(current, target) with respect to current:
// (target - current) / distance. The direction of steepest approach.
std::vector<double> distance_gradient(const std::vector<double>& current,
                                      const std::vector<double>& target);

// alpha times the positive part of the distance gradient: components where
// the target is larger grow, everything else stays put.
std::vector<double> perturbation_step(const std::vector<double>& current,
                                      const std::vector<double>& target, double alpha);
std::vector<double> perturbation_step(const BurstTrace& current, const BurstTrace& target,
                                      double alpha);

DefendedTrace generate(const BurstTrace& source, const DetectorModel& detector,
                       const BurstDataset& pool_source, const GenerationConfig& cfg);

struct BatchSummary {
    std::size_t n = 0;
    std::size_t n_escaped = 0;
    std::size_t n_failed = 0;  // traces that raised an error
    double escape_rate = 0.0;
    double mean_overhead = 0.0;
    double p50_overhead = 0.0;
    double p90_overhead = 0.0;
    double mean_iterations = 0.0;
    std::map<std::size_t, std::size_t> restart_histogram;
};

struct GeneratedBatch {
    std::vector<DefendedTrace> traces;                       // successful items, source order
    std::vector<std::pair<std::size_t, std::string>> errors; // (source index, message)
    BatchSummary summary;
};

// Defend every trace in sources. Each item runs with seed ^ index, so the
// result is a pure function of the inputs: any worker count gives identical
// output.
GeneratedBatch generate_batch(const BurstDataset& sources, const DetectorModel& detector,
                              const BurstDataset& pool_source, const GenerationConfig& cfg,
                              int workers = 1);

// Shared by every batch generator: summarizes per-trace outcomes.
BatchSummary summarize_batch(const std::vector<DefendedTrace>& traces, std::size_t n_failed);

}  // namespace mockingbird
