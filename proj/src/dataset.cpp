#include "mockingbird/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "mockingbird/error.hpp"
#include "mockingbird/rng.hpp"

namespace mockingbird {

namespace {

constexpr int kMaxLabel = 10'000'000;

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
    throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line) + ": " + what);
}

int parse_label(const std::string& path, std::size_t line, const std::string& tok) {
    int label = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), label);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        parse_fail(path, line, "bad label '" + tok + "'");
    }
    if (label < 0 || label > kMaxLabel) {
        throw Error(ErrorCode::LabelOutOfRange,
                    path + ":" + std::to_string(line) + ": label " + tok);
    }
    return label;
}

double parse_magnitude(const std::string& path, std::size_t line, const std::string& tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        parse_fail(path, line, "bad burst magnitude '" + tok + "'");
    }
    if (v < 0.0) parse_fail(path, line, "negative burst magnitude '" + tok + "'");
    return v;
}

std::string format_magnitude(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    return in;
}

template <typename Dataset>
SplitResult<Dataset> split_half_impl(const Dataset& dataset, std::uint64_t seed) {
    SplitResult<Dataset> out;
    out.adv_set.classes = dataset.classes;
    out.detector_set.classes = dataset.classes;

    Rng rng(seed);
    for (std::size_t c = 0; c < dataset.classes; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < dataset.traces.size(); ++i) {
            if (static_cast<std::size_t>(dataset.traces[i].label) == c) idx.push_back(i);
        }
        if (idx.size() < 2) {
            throw Error(ErrorCode::ClassTooSmall,
                        "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " instances, need at least 2 to split");
        }
        shuffle(idx, rng);
        std::size_t adv_n = (idx.size() + 1) / 2;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto& side = k < adv_n ? out.adv_set : out.detector_set;
            side.traces.push_back(dataset.traces[idx[k]]);
        }
    }
    return out;
}

}  // namespace

PreprocessResult preprocess(const PacketDataset& raw, std::size_t min_packets) {
    PreprocessResult res;
    res.dataset.classes = raw.classes;
    for (const PacketTrace& t : raw.traces) {
        if (t.directions.size() < min_packets) {
            ++res.report.removed_short;
            continue;
        }
        if (t.directions.front() == -1) {
            ++res.report.removed_starts_incoming;
            continue;
        }
        res.dataset.traces.push_back(t);
        ++res.report.kept;
    }
    return res;
}

SplitResult<BurstDataset> split_half(const BurstDataset& dataset, std::uint64_t seed) {
    return split_half_impl(dataset, seed);
}

SplitResult<PacketDataset> split_half(const PacketDataset& dataset, std::uint64_t seed) {
    return split_half_impl(dataset, seed);
}

BurstDataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.classes < 1) throw Error(ErrorCode::BadConfig, "classes must be >= 1");
    if (spec.burst_min < 1 || spec.burst_max < spec.burst_min) {
        throw Error(ErrorCode::BadConfig, "bad burst count range");
    }
    if (spec.burst_max > spec.fixed_len) {
        throw Error(ErrorCode::BadConfig, "burst_max exceeds the fixed trace width");
    }
    bool lognormal = spec.mag_family == "lognormal";
    if (!lognormal && spec.mag_family != "uniform") {
        throw Error(ErrorCode::BadConfig, "unknown magnitude family " + spec.mag_family);
    }

    BurstDataset out;
    out.classes = spec.classes;
    Rng rng(spec.seed);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        std::size_t nbursts =
            spec.burst_min + uniform_index(rng, spec.burst_max - spec.burst_min + 1);
        std::vector<double> proto(nbursts);
        for (double& m : proto) {
            double v = lognormal ? std::exp(normal(rng, spec.log_mean, spec.log_sigma))
                                 : uniform_real(rng, spec.mag_min, spec.mag_max);
            m = std::max(1.0, v);
        }
        for (std::size_t k = 0; k < spec.instances_per_class; ++k) {
            BurstTrace t;
            t.label = static_cast<int>(c);
            t.bursts.assign(spec.fixed_len, 0.0);
            for (std::size_t i = 0; i < nbursts; ++i) {
                double jitter = 1.0 + spec.noise * uniform_real(rng, -1.0, 1.0);
                t.bursts[i] = std::max(1.0, std::round(proto[i] * jitter));
            }
            t.logical_len = nbursts;
            out.traces.push_back(std::move(t));
        }
    }
    return out;
}

void save_directions(const PacketDataset& dataset, const std::string& path) {
    std::ofstream out = open_out(path);
    for (const PacketTrace& t : dataset.traces) {
        out << t.label;
        for (std::int8_t d : t.directions) {
            if (d == 0) break;  // padding is never serialized
            out << ' ' << int(d);
        }
        out << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

PacketDataset load_directions(const std::string& path) {
    std::ifstream in = open_in(path);
    PacketDataset out;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok)) continue;
        PacketTrace t;
        t.label = parse_label(path, lineno, tok);
        max_label = std::max(max_label, t.label);
        while (ss >> tok) {
            if (tok == "1") {
                t.directions.push_back(1);
            } else if (tok == "-1") {
                t.directions.push_back(-1);
            } else {
                parse_fail(path, lineno, "bad direction '" + tok + "'");
            }
        }
        out.traces.push_back(std::move(t));
    }
    out.classes = static_cast<std::size_t>(max_label + 1);
    return out;
}

void save_bursts(const BurstDataset& dataset, const std::string& path) {
    std::ofstream out = open_out(path);
    for (const BurstTrace& t : dataset.traces) {
        out << t.label;
        std::size_t n = last_nonzero_len(t.bursts);
        for (std::size_t i = 0; i < n; ++i) out << ' ' << format_magnitude(t.bursts[i]);
        out << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

BurstDataset load_bursts(const std::string& path, std::size_t fixed_len) {
    std::ifstream in = open_in(path);
    BurstDataset out;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        if (!(ss >> tok)) continue;
        BurstTrace t;
        t.label = parse_label(path, lineno, tok);
        max_label = std::max(max_label, t.label);
        t.bursts.assign(fixed_len, 0.0);
        std::size_t i = 0;
        while (ss >> tok) {
            if (i >= fixed_len) {
                parse_fail(path, lineno,
                           "trace wider than the fixed width " + std::to_string(fixed_len));
            }
            t.bursts[i++] = parse_magnitude(path, lineno, tok);
        }
        t.logical_len = last_nonzero_len(t.bursts);
        out.traces.push_back(std::move(t));
    }
    out.classes = static_cast<std::size_t>(max_label + 1);
    return out;
}

}  // namespace mockingbird
