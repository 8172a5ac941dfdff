#include "mockingbird/molding.hpp"

#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include "mockingbird/error.hpp"
#include "json.hpp"

namespace mockingbird {

namespace {

struct RealBurst {
    int dir = 1;
    std::vector<double> times;
};

std::vector<RealBurst> group_real(const std::vector<PacketEvent>& events) {
    if (events.empty()) throw Error(ErrorCode::EmptyTrace, "no real packets to mold");
    double prev_t = events.front().t;
    if (events.front().dir == -1) {
        throw Error(ErrorCode::StartsIncoming, "real traffic must begin outgoing");
    }
    std::vector<RealBurst> bursts;
    for (const PacketEvent& e : events) {
        if (e.dir != 1 && e.dir != -1) throw Error(ErrorCode::InvalidTrace, "direction must be +1/-1");
        if (e.t < prev_t) throw Error(ErrorCode::UnorderedEvents, "timestamps must be non-decreasing");
        prev_t = e.t;
        if (bursts.empty() || bursts.back().dir != e.dir) {
            bursts.push_back({e.dir, {}});
        }
        bursts.back().times.push_back(e.t);
    }
    return bursts;
}

// Nonzero target entries in order, validated as integer packet counts.
std::vector<std::size_t> collapse_target(const BurstTrace& target) {
    std::vector<std::size_t> sizes;
    for (double b : target.bursts) {
        if (b < 0.0) throw Error(ErrorCode::InvalidTrace, "negative target burst");
        if (std::floor(b) != b) {
            throw Error(ErrorCode::NonIntegerBurst, "target bursts must be integer packet counts");
        }
        if (b == 0.0) continue;
        sizes.push_back(static_cast<std::size_t>(b));
    }
    return sizes;
}

struct BurstPlan {
    int dir = 1;
    std::size_t real_count = 0;
    std::size_t target_size = 0;
    std::size_t signals = 0;
    double signal_size = 0.0;  // announced next incoming size
    std::size_t total() const { return std::max(target_size, real_count + signals); }
};

std::vector<BurstPlan> plan_bursts(const std::vector<RealBurst>& real,
                                   const std::vector<std::size_t>& targets,
                                   const MoldingConfig& cfg) {
    if (targets.size() < real.size()) {
        throw Error(ErrorCode::TargetSmallerThanReal,
                    "target has " + std::to_string(targets.size()) + " bursts, real traffic has " +
                        std::to_string(real.size()));
    }
    std::vector<BurstPlan> plans(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        BurstPlan& p = plans[i];
        p.dir = i % 2 == 0 ? 1 : -1;
        p.target_size = targets[i];
        if (i < real.size()) {
            p.real_count = real[i].times.size();
            if (p.target_size < p.real_count) {
                throw Error(ErrorCode::TargetSmallerThanReal,
                            "burst " + std::to_string(i) + ": target " +
                                std::to_string(p.target_size) + " < real " +
                                std::to_string(p.real_count));
            }
        }
        if (p.dir == 1 && i + 1 < targets.size()) {
            p.signals = cfg.signal_overhead;
            p.signal_size = static_cast<double>(targets[i + 1]);
        }
    }
    return plans;
}

}  // namespace

const char* packet_kind_name(PacketKind kind) {
    switch (kind) {
        case PacketKind::Real: return "real";
        case PacketKind::Dummy: return "dummy";
        case PacketKind::Signal: return "signal";
    }
    return "unknown";
}

PacketKind packet_kind_from_name(const std::string& name) {
    if (name == "real") return PacketKind::Real;
    if (name == "dummy") return PacketKind::Dummy;
    if (name == "signal") return PacketKind::Signal;
    throw Error(ErrorCode::ParseError, "unknown packet kind " + name);
}

MoldingResult mold(const std::vector<PacketEvent>& real_events, const BurstTrace& target,
                   const MoldingConfig& cfg) {
    if (cfg.timeout_ms < 0.0) throw Error(ErrorCode::BadConfig, "timeout must be non-negative");
    std::vector<RealBurst> real = group_real(real_events);
    std::vector<BurstPlan> plans = plan_bursts(real, collapse_target(target), cfg);

    MoldingResult out;
    double shift = 0.0;  // accumulated delay applied to real packets
    // When the previous burst finished dumping. shift is computed as
    // prev_close - first_t, so first_t + shift can round one ulp below
    // prev_close; emissions clamp against a running clock to keep the
    // stream non-decreasing.
    double prev_close = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < plans.size(); ++i) {
        const BurstPlan& p = plans[i];
        double close;
        if (i < real.size()) {
            double entry = shift;
            if (i > 0) entry = std::max(entry, prev_close - real[i].times.front());
            double clock = prev_close;
            for (double t : real[i].times) {
                double at = std::max(t + entry, clock);
                out.events.push_back({at, p.dir, PacketKind::Real, 0.0});
                clock = at;
            }
            close = clock + cfg.timeout_ms;
            out.added_latency_ms += cfg.timeout_ms;
            shift = entry;
        } else {
            close = prev_close;  // pure padding rides the clock without waiting
        }
        std::size_t pad = p.total() - p.real_count;
        for (std::size_t j = 0; j < pad; ++j) {
            bool is_signal = j < p.signals;
            out.events.push_back({close, p.dir, is_signal ? PacketKind::Signal : PacketKind::Dummy,
                                  is_signal ? p.signal_size : 0.0});
        }
        out.dummy_count += pad;
        prev_close = close;
    }
    return out;
}

bool verify_molding(const std::vector<PacketEvent>& real_events,
                    const std::vector<PacketEvent>& molded, const BurstTrace& target,
                    const MoldingConfig& cfg) {
    std::vector<RealBurst> real = group_real(real_events);
    std::vector<BurstPlan> plans = plan_bursts(real, collapse_target(target), cfg);

    // Timestamp order over the whole stream.
    for (std::size_t i = 1; i < molded.size(); ++i) {
        if (molded[i].t < molded[i - 1].t) return false;
    }

    // Burst structure: run lengths, directions, signal placement.
    std::vector<std::vector<const PacketEvent*>> runs;
    for (const PacketEvent& e : molded) {
        if (runs.empty() || runs.back().back()->dir != e.dir) runs.emplace_back();
        runs.back().push_back(&e);
    }
    if (runs.size() != plans.size()) return false;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const BurstPlan& p = plans[i];
        std::size_t reals = 0, signals = 0;
        for (const PacketEvent* e : runs[i]) {
            if (e->dir != p.dir) return false;
            if (e->kind == PacketKind::Real) ++reals;
            if (e->kind == PacketKind::Signal) ++signals;
        }
        if (runs[i].size() != p.total()) return false;
        if (reals != p.real_count) return false;
        if (signals != p.signals) return false;
    }

    // Real packets are exactly the input, in order, delayed by a bounded wait.
    double max_delay = cfg.timeout_ms * static_cast<double>(real.size());
    std::size_t j = 0;
    for (const PacketEvent& e : molded) {
        if (e.kind != PacketKind::Real) continue;
        if (j >= real_events.size()) return false;
        if (e.dir != real_events[j].dir) return false;
        double delay = e.t - real_events[j].t;
        if (delay < 0.0 || delay > max_delay + 1e-9) return false;
        ++j;
    }
    return j == real_events.size();
}

void save_events(const std::vector<PacketEvent>& events, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    for (const PacketEvent& e : events) {
        nlohmann::json line = {{"t", e.t}, {"dir", e.dir}, {"kind", packet_kind_name(e.kind)}};
        out << line.dump() << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

std::vector<PacketEvent> load_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::vector<PacketEvent> events;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            PacketEvent e;
            e.t = j.at("t").get<double>();
            e.dir = j.at("dir").get<int>();
            e.kind = packet_kind_from_name(j.at("kind").get<std::string>());
            if (e.dir != 1 && e.dir != -1) {
                throw Error(ErrorCode::ParseError, "dir must be 1 or -1");
            }
            events.push_back(e);
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::ParseError,
                        path + ":" + std::to_string(lineno) + ": " + ex.what());
        } catch (const Error& ex) {
            throw Error(ErrorCode::ParseError,
                        path + ":" + std::to_string(lineno) + ": " + ex.what());
        }
    }
    return events;
}

}  // namespace mockingbird
