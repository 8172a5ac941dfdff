#pragma once

// Burst-sequence trace model. A packet trace is a sign sequence (+1 outgoing,
// -1 incoming); its burst form run-length encodes consecutive same-direction
// packets into a fixed-width vector of magnitudes. Defenses are insertion
// only: a defended trace may grow bursts but never shrink them, because a
// network-level defense can add dummy packets yet cannot drop real ones.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mockingbird {

inline constexpr std::size_t kFixedBurstLen = 750;
inline constexpr std::size_t kDirectionLen = 5000;

struct PacketTrace {
    int label = 0;
    // +1 / -1 per packet; 0 is allowed only as trailing padding after
    // expansion to a fixed attacker input width.
    std::vector<std::int8_t> directions;
};

struct BurstTrace {
    int label = 0;
    std::vector<double> bursts;   // non-negative magnitudes, fixed width
    std::size_t logical_len = 0;  // entries at index >= logical_len are padding
};

// Run-length encode directions into a fixed-width burst vector. The first
// packet must be outgoing. Runs beyond fixed_len are dropped; unused slots
// stay zero. A 0 direction ends the trace (padding terminator).
BurstTrace directions_to_bursts(const PacketTrace& trace, std::size_t fixed_len = kFixedBurstLen);

// Expand bursts back into a direction sequence of width out_len, zero padded
// or truncated. Entries must be non-negative integers. Zero bursts collapse:
// the direction alternates per nonzero burst, starting outgoing.
PacketTrace bursts_to_directions(const BurstTrace& trace, std::size_t out_len = kDirectionLen);

// Total packets in the trace: the sum of burst magnitudes.
double trace_size(const BurstTrace& trace);

// (size(defended) - size(original)) / size(original). Vectors must have equal
// width, original must be nonempty, and defended may never shrink a burst.
double bandwidth_overhead(const BurstTrace& original, const BurstTrace& defended);

// Ceil every magnitude to an integer packet count. Rounding up keeps the
// insertion-only guarantee for any fractional growth.
BurstTrace round_bursts(const BurstTrace& trace);

// Index just past the last nonzero entry; 0 for an all-zero vector.
std::size_t last_nonzero_len(const std::vector<double>& v);

// Euclidean distance between two equal-width magnitude vectors.
double l2_distance(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace mockingbird
