#pragma once

// Labeled trace datasets: text serialization, capture cleanup, the half/half
// adversary-vs-detector split, and a synthetic prototype-plus-noise corpus
// generator for desk-scale experiments.
//
// File formats (LF line endings, single-space separated):
//   directions  <label> <d1> <d2> ...   each d is 1 or -1
//   bursts      <label> <b1> <b2> ...   non-negative magnitudes
// A burst line stores only the logical prefix; loading pads back to the
// configured fixed width. Values are written with shortest round-trip
// precision, so save/load is lossless.

#include <cstdint>
#include <string>
#include <vector>

#include "mockingbird/trace.hpp"

namespace mockingbird {

struct PacketDataset {
    std::size_t classes = 0;
    std::vector<PacketTrace> traces;
};

struct BurstDataset {
    std::size_t classes = 0;
    std::vector<BurstTrace> traces;
};

struct PreprocessReport {
    std::size_t removed_short = 0;
    std::size_t removed_starts_incoming = 0;
    std::size_t kept = 0;
};

struct PreprocessResult {
    PacketDataset dataset;
    PreprocessReport report;
};

// Drop traces shorter than min_packets, then traces whose first packet is
// incoming. The length filter runs first, so a short incoming-first trace
// counts as removed_short.
PreprocessResult preprocess(const PacketDataset& raw, std::size_t min_packets = 50);

template <typename Dataset>
struct SplitResult {
    Dataset adv_set;
    Dataset detector_set;
};

// Seeded per-class shuffle, first half (rounded up) to the adversary side.
// Every class needs at least 2 instances.
SplitResult<BurstDataset> split_half(const BurstDataset& dataset, std::uint64_t seed);
SplitResult<PacketDataset> split_half(const PacketDataset& dataset, std::uint64_t seed);

struct SyntheticSpec {
    std::size_t classes = 20;
    std::size_t instances_per_class = 40;
    std::size_t burst_min = 40;   // bursts per class prototype, inclusive range
    std::size_t burst_max = 180;
    // Prototype magnitude family: "lognormal" (log_mean/log_sigma) or
    // "uniform" (mag_min/mag_max).
    std::string mag_family = "lognormal";
    double log_mean = 2.0;
    double log_sigma = 0.75;
    double mag_min = 1.0;
    double mag_max = 40.0;
    double noise = 0.35;  // per-instance bounded relative jitter
    std::size_t fixed_len = kFixedBurstLen;
    std::uint64_t seed = 1;
};

// Per class: draw a burst-count and a prototype magnitude vector, then emit
// instances as prototype plus bounded noise, clamped to >= 1 packet and
// rounded to integers. Deterministic for a fixed spec.
BurstDataset generate_synthetic(const SyntheticSpec& spec);

void save_directions(const PacketDataset& dataset, const std::string& path);
PacketDataset load_directions(const std::string& path);
void save_bursts(const BurstDataset& dataset, const std::string& path);
BurstDataset load_bursts(const std::string& path, std::size_t fixed_len = kFixedBurstLen);

}  // namespace mockingbird
