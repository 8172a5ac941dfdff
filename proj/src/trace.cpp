#include "mockingbird/trace.hpp"

#include <cmath>
#include <string>

#include "mockingbird/error.hpp"

namespace mockingbird {

BurstTrace directions_to_bursts(const PacketTrace& trace, std::size_t fixed_len) {
    if (trace.directions.empty() || trace.directions.front() == 0) {
        throw Error(ErrorCode::EmptyTrace, "direction trace has no packets");
    }
    if (trace.directions.front() == -1) {
        throw Error(ErrorCode::StartsIncoming, "direction trace must begin with an outgoing packet");
    }

    BurstTrace out;
    out.label = trace.label;
    out.bursts.assign(fixed_len, 0.0);

    std::size_t run = 0;
    int cur = 0;
    std::size_t nruns = 0;
    for (std::int8_t d : trace.directions) {
        if (d == 0) break;  // padding terminator
        if (d != 1 && d != -1) {
            throw Error(ErrorCode::InvalidTrace,
                        "direction value " + std::to_string(int(d)) + " is not +1/-1");
        }
        if (d == cur) {
            ++run;
            continue;
        }
        if (run > 0) {
            if (nruns < fixed_len) out.bursts[nruns] = static_cast<double>(run);
            ++nruns;
        }
        cur = d;
        run = 1;
    }
    if (run > 0) {
        if (nruns < fixed_len) out.bursts[nruns] = static_cast<double>(run);
        ++nruns;
    }
    out.logical_len = nruns < fixed_len ? nruns : fixed_len;
    return out;
}

PacketTrace bursts_to_directions(const BurstTrace& trace, std::size_t out_len) {
    PacketTrace out;
    out.label = trace.label;
    out.directions.assign(out_len, 0);

    std::size_t pos = 0;
    std::int8_t dir = 1;  // first nonzero burst is outgoing; zeros collapse
    for (double b : trace.bursts) {
        if (b < 0.0) {
            throw Error(ErrorCode::InvalidTrace, "negative burst magnitude");
        }
        double rounded = std::floor(b);
        if (rounded != b) {
            throw Error(ErrorCode::NonIntegerBurst,
                        "burst magnitude " + std::to_string(b) + " is not an integer");
        }
        if (b == 0.0) continue;
        auto n = static_cast<std::size_t>(b);
        for (std::size_t i = 0; i < n && pos < out_len; ++i) {
            out.directions[pos++] = dir;
        }
        dir = static_cast<std::int8_t>(-dir);
        if (pos >= out_len) break;
    }
    return out;
}

double trace_size(const BurstTrace& trace) {
    double total = 0.0;
    for (double b : trace.bursts) total += b;
    return total;
}

double bandwidth_overhead(const BurstTrace& original, const BurstTrace& defended) {
    if (original.bursts.size() != defended.bursts.size()) {
        throw Error(ErrorCode::DimensionMismatch, "original and defended widths differ");
    }
    double orig_size = trace_size(original);
    if (orig_size <= 0.0) {
        throw Error(ErrorCode::ZeroSizeOriginal, "original trace has zero size");
    }
    for (std::size_t i = 0; i < original.bursts.size(); ++i) {
        if (defended.bursts[i] < original.bursts[i]) {
            throw Error(ErrorCode::ShrunkBurst,
                        "burst " + std::to_string(i) + " shrank from " +
                            std::to_string(original.bursts[i]) + " to " +
                            std::to_string(defended.bursts[i]));
        }
    }
    return (trace_size(defended) - orig_size) / orig_size;
}

BurstTrace round_bursts(const BurstTrace& trace) {
    BurstTrace out = trace;
    for (double& b : out.bursts) b = std::ceil(b);
    out.logical_len = last_nonzero_len(out.bursts);
    return out;
}

std::size_t last_nonzero_len(const std::vector<double>& v) {
    std::size_t n = v.size();
    while (n > 0 && v[n - 1] == 0.0) --n;
    return n;
}

double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch, "l2_distance over different widths");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace mockingbird
