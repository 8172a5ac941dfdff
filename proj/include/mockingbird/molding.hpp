#pragma once

// Deployment-side burst molding, simulated on a deterministic event clock.
// Real packets are forwarded with their original relative timing; a burst is
// closed a fixed timeout after its last packet, at which point dummy packets
// pad it up to the target burst size. Each outgoing burst reserves one of its
// padding packets as a signal announcing the next incoming burst's target
// size (the payload is abstracted to a size annotation). Real packets are
// never dropped or reordered, so the target must dominate the real trace
// burst by burst.

#include <cstdint>
#include <string>
#include <vector>

#include "mockingbird/trace.hpp"

namespace mockingbird {

enum class PacketKind { Real, Dummy, Signal };

const char* packet_kind_name(PacketKind kind);
PacketKind packet_kind_from_name(const std::string& name);

struct PacketEvent {
    double t = 0.0;  // milliseconds
    int dir = 1;     // +1 outgoing, -1 incoming
    PacketKind kind = PacketKind::Real;
    double signal_size = 0.0;  // announced next incoming size, Signal packets only
};

struct MoldingConfig {
    double timeout_ms = 50.0;
    std::size_t signal_overhead = 1;  // padding packets reserved per outgoing burst
};

struct MoldingResult {
    std::vector<PacketEvent> events;
    double added_latency_ms = 0.0;  // one timeout per closed real burst
    std::size_t dummy_count = 0;    // all non-real packets, signals included
};

// Mold real traffic onto the target burst sequence. Zero entries in the
// target collapse, mirroring direction expansion; target bursts beyond the
// real trace are emitted as pure padding. Every burst of the output matches
// the target size, except when a target burst leaves no room for the signal
// reservation, which then rides on top.
MoldingResult mold(const std::vector<PacketEvent>& real_events, const BurstTrace& target,
                   const MoldingConfig& cfg = {});

// Replays the molding postconditions: per-burst sizes against the target,
// signal placement, timestamp order, and that the real packets inside molded
// are exactly real_events in order, each delayed by a bounded amount.
bool verify_molding(const std::vector<PacketEvent>& real_events,
                    const std::vector<PacketEvent>& molded, const BurstTrace& target,
                    const MoldingConfig& cfg = {});

// JSON-lines event streams: {"t": ..., "dir": ..., "kind": ...} per packet.
void save_events(const std::vector<PacketEvent>& events, const std::string& path);
std::vector<PacketEvent> load_events(const std::string& path);

}  // namespace mockingbird
