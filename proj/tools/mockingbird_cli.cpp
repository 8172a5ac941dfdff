// Command-line front end for the pipeline: synthesize or preprocess traces,
// train a detector, generate defended traces, evaluate attackers, run the
// intersection attack, and mold live traffic. Every run writes a manifest
// that pins the resolved config; `rerun --manifest` replays it exactly.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mockingbird/cw.hpp"
#include "mockingbird/dataset.hpp"
#include "mockingbird/detector.hpp"
#include "mockingbird/error.hpp"
#include "mockingbird/evaluation.hpp"
#include "mockingbird/mockingbird.hpp"
#include "mockingbird/molding.hpp"
#include "mockingbird/rng.hpp"
#include "mockingbird/trace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mockingbird;

namespace {

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitInternal = 5;

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::BadConfig:
        case ErrorCode::BadK: return kExitUsage;
        case ErrorCode::IoError:
        case ErrorCode::ParseError:
        case ErrorCode::FormatError: return kExitIo;
        default: return kExitData;
    }
}

std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Config plumbing. Each subcommand lists its fields once; the same list
// merges a --config file under CLI flags, replays a manifest, and writes the
// canonical config object back into the manifest.

struct FieldMerger {
    const json* cfg = nullptr;  // null: nothing to merge
    std::set<std::string> seen;

    template <typename T>
    void operator()(const char* key, const CLI::Option* opt, T& value) {
        seen.insert(key);
        if (cfg != nullptr && cfg->contains(key) && (opt == nullptr || opt->count() == 0)) {
            try {
                cfg->at(key).get_to(value);
            } catch (const json::exception& e) {
                throw Error(ErrorCode::BadConfig,
                            std::string("config key '") + key + "': " + e.what());
            }
        }
    }

    void finish() const {
        if (cfg == nullptr) return;
        for (const auto& item : cfg->items()) {
            if (!seen.count(item.key())) {
                throw Error(ErrorCode::BadConfig, "unknown config key '" + item.key() + "'");
            }
        }
    }
};

struct ConfigWriter {
    json out = json::object();

    template <typename T>
    void operator()(const char* key, const CLI::Option*, const T& value) {
        out[key] = value;
    }
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json();
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
    if (!cfg.is_object()) throw Error(ErrorCode::BadConfig, path + ": config must be an object");
    return cfg;
}

// ---------------------------------------------------------------------------
// Manifests and run directories.

void write_manifest(const fs::path& path, const std::string& subcommand, const json& config,
                    int workers, const std::string& status, const std::string& error = "") {
    json m;
    m["tool"] = "mockingbird";
    m["tool_version"] = kToolVersion;
    m["format_versions"] = {{"dataset", 1}, {"model", 1}, {"report", 1}};
    m["subcommand"] = subcommand;
    m["config"] = config;
    m["config_hash"] = "fnv1a64:" + fnv1a_hex(config.dump());
    m["seed"] = config.contains("seed") ? config["seed"] : json(0);
    m["workers"] = workers;
    m["status"] = status;
    if (!error.empty()) m["error"] = error;
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out << m.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

// Run directories are append-only: a directory that already holds a manifest
// belongs to an earlier run and is refused.
void ensure_fresh_run_dir(const fs::path& dir) {
    if (fs::exists(dir / "manifest.json")) {
        throw Error(ErrorCode::IoError,
                    dir.string() + " already holds a run; use a fresh output directory");
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

// Outputs are computed before this is called; a failure while writing still
// leaves a manifest recording the attempt.
int finish_run_dir(const std::string& subcommand, const json& config, const fs::path& dir,
                   int workers, const std::function<void()>& write_outputs) {
    ensure_fresh_run_dir(dir);
    try {
        write_outputs();
    } catch (const std::exception& e) {
        try {
            write_manifest(dir / "manifest.json", subcommand, config, workers, "failed", e.what());
        } catch (...) {
        }
        throw;
    }
    write_manifest(dir / "manifest.json", subcommand, config, workers, "ok");
    return 0;
}

void ensure_parent_dir(const fs::path& file) {
    fs::path parent = file.parent_path();
    if (parent.empty()) return;
    std::error_code ec;
    fs::create_directories(parent, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create " + parent.string() + ": " + ec.message());
    }
}

// Single-file artifacts are written to a sibling temp file and renamed so a
// failed run never leaves a truncated file behind.
void write_file_atomically(const fs::path& target,
                           const std::function<void(const std::string&)>& writer) {
    ensure_parent_dir(target);
    fs::path tmp = target;
    tmp += ".tmp";
    writer(tmp.string());
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        throw Error(ErrorCode::IoError,
                    "cannot move " + tmp.string() + " to " + target.string() + ": " + ec.message());
    }
}

std::string require_path(const std::string& value, const char* flag, const char* key) {
    if (value.empty()) {
        throw Error(ErrorCode::BadConfig,
                    std::string(flag) + " is required (or config key '" + key + "')");
    }
    return value;
}

TargetCase parse_case(const std::string& name) {
    if (name == "I") return TargetCase::CaseI;
    if (name == "II") return TargetCase::CaseII;
    throw Error(ErrorCode::BadConfig, "case must be I or II, got '" + name + "'");
}

// Full library names plus short aliases for the command line.
CwMode parse_mode(const std::string& name) {
    if (name == "untargeted") return CwMode::BaseUntargeted;
    if (name == "targeted") return CwMode::BaseTargeted;
    if (name == "hybrid") return CwMode::HybridCapped;
    return cw_mode_from_name(name);
}

std::vector<std::size_t> parse_hidden_dims(const std::string& spec) {
    std::vector<std::size_t> dims;
    std::string token;
    std::istringstream ss(spec);
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(token, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != token.size() || v == 0) {
            throw Error(ErrorCode::BadConfig, "bad hidden layer width '" + token + "'");
        }
        dims.push_back(v);
    }
    if (dims.empty()) throw Error(ErrorCode::BadConfig, "hidden layer list is empty");
    return dims;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    SyntheticSpec spec;
};

struct SynthOpts {
    CLI::Option *classes = nullptr, *instances = nullptr, *burst_min = nullptr,
                *burst_max = nullptr, *mag_family = nullptr, *log_mean = nullptr,
                *log_sigma = nullptr, *mag_min = nullptr, *mag_max = nullptr, *noise = nullptr,
                *fixed_len = nullptr, *seed = nullptr;
};

template <typename F>
void synth_fields(SynthArgs& a, const SynthOpts* o, F&& f) {
    f("classes", o ? o->classes : nullptr, a.spec.classes);
    f("instances", o ? o->instances : nullptr, a.spec.instances_per_class);
    f("burst_min", o ? o->burst_min : nullptr, a.spec.burst_min);
    f("burst_max", o ? o->burst_max : nullptr, a.spec.burst_max);
    f("mag_family", o ? o->mag_family : nullptr, a.spec.mag_family);
    f("log_mean", o ? o->log_mean : nullptr, a.spec.log_mean);
    f("log_sigma", o ? o->log_sigma : nullptr, a.spec.log_sigma);
    f("mag_min", o ? o->mag_min : nullptr, a.spec.mag_min);
    f("mag_max", o ? o->mag_max : nullptr, a.spec.mag_max);
    f("noise", o ? o->noise : nullptr, a.spec.noise);
    f("fixed_len", o ? o->fixed_len : nullptr, a.spec.fixed_len);
    f("seed", o ? o->seed : nullptr, a.spec.seed);
}

json synth_config(SynthArgs a) {
    ConfigWriter w;
    synth_fields(a, nullptr, w);
    return w.out;
}

int run_synth(const SynthArgs& a, const std::string& out) {
    BurstDataset data = generate_synthetic(a.spec);
    write_file_atomically(out, [&](const std::string& tmp) { save_bursts(data, tmp); });
    write_manifest(out + ".manifest.json", "synth", synth_config(a), 1, "ok");
    json info = {{"traces", data.traces.size()}, {"classes", data.classes}, {"out", out}};
    std::cout << info.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
    std::string in;
    std::size_t min_packets = 50;
};

struct PreprocessOpts {
    CLI::Option *in = nullptr, *min_packets = nullptr;
};

template <typename F>
void preprocess_fields(PreprocessArgs& a, const PreprocessOpts* o, F&& f) {
    f("in", o ? o->in : nullptr, a.in);
    f("min_packets", o ? o->min_packets : nullptr, a.min_packets);
}

json preprocess_config(PreprocessArgs a) {
    ConfigWriter w;
    preprocess_fields(a, nullptr, w);
    return w.out;
}

int run_preprocess(const PreprocessArgs& a, const std::string& out) {
    PacketDataset raw = load_directions(require_path(a.in, "--in", "in"));
    PreprocessResult res = preprocess(raw, a.min_packets);
    write_file_atomically(out, [&](const std::string& tmp) { save_directions(res.dataset, tmp); });

    json report = {{"removed_short", res.report.removed_short},
                   {"removed_starts_incoming", res.report.removed_starts_incoming},
                   {"kept", res.report.kept}};
    write_manifest(out + ".manifest.json", "preprocess", preprocess_config(a), 1, "ok");
    std::cout << report.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string in;
    std::string hidden = "128";
    std::size_t fixed_len = kFixedBurstLen;
    TrainConfig cfg;
};

struct TrainOpts {
    CLI::Option *in = nullptr, *hidden = nullptr, *fixed_len = nullptr, *epochs = nullptr,
                *batch_size = nullptr, *learning_rate = nullptr, *momentum = nullptr,
                *seed = nullptr;
};

template <typename F>
void train_fields(TrainArgs& a, const TrainOpts* o, F&& f) {
    f("in", o ? o->in : nullptr, a.in);
    f("hidden", o ? o->hidden : nullptr, a.hidden);
    f("fixed_len", o ? o->fixed_len : nullptr, a.fixed_len);
    f("epochs", o ? o->epochs : nullptr, a.cfg.epochs);
    f("batch_size", o ? o->batch_size : nullptr, a.cfg.batch_size);
    f("learning_rate", o ? o->learning_rate : nullptr, a.cfg.learning_rate);
    f("momentum", o ? o->momentum : nullptr, a.cfg.momentum);
    f("seed", o ? o->seed : nullptr, a.cfg.seed);
}

json train_config(TrainArgs a) {
    ConfigWriter w;
    train_fields(a, nullptr, w);
    return w.out;
}

int run_train(const TrainArgs& a, const std::string& out) {
    BurstDataset data = load_bursts(require_path(a.in, "--in", "in"), a.fixed_len);
    TrainConfig cfg = a.cfg;
    cfg.hidden_dims = parse_hidden_dims(a.hidden);
    DetectorModel model = train_detector(data, cfg);
    write_file_atomically(out, [&](const std::string& tmp) { save_model(model, tmp); });
    write_manifest(out + ".manifest.json", "train", train_config(a), 1, "ok");

    json info = {{"train_accuracy", accuracy(model, data)},
                 {"normalization_scale", model.normalization_scale},
                 {"layer_dims", model.layer_dims},
                 {"out", out}};
    std::cout << info.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
    std::string algo = "mockingbird";
    std::string in;
    std::string pool;  // empty: draw targets from the source file
    std::string detector;
    std::string case_name = "I";
    std::string mode = "hybrid_capped";
    std::size_t fixed_len = kFixedBurstLen;
    std::uint64_t seed = 1;
    GenerationConfig g;
    CwConfig c;
    std::size_t pool_size = 10;
};

struct GenerateOpts {
    CLI::Option *algo = nullptr, *in = nullptr, *pool = nullptr, *detector = nullptr,
                *case_name = nullptr, *mode = nullptr, *fixed_len = nullptr, *seed = nullptr,
                *alpha = nullptr, *tau_c = nullptr, *tau_d = nullptr, *lambda = nullptr,
                *iters = nullptr, *pool_size = nullptr, *max_overhead = nullptr,
                *target_changes = nullptr, *iters_per_target = nullptr, *step_size = nullptr,
                *init_delta = nullptr, *margin = nullptr;
};

template <typename F>
void generate_fields(GenerateArgs& a, const GenerateOpts* o, F&& f) {
    f("algo", o ? o->algo : nullptr, a.algo);
    f("in", o ? o->in : nullptr, a.in);
    f("pool", o ? o->pool : nullptr, a.pool);
    f("detector", o ? o->detector : nullptr, a.detector);
    f("case", o ? o->case_name : nullptr, a.case_name);
    f("mode", o ? o->mode : nullptr, a.mode);
    f("fixed_len", o ? o->fixed_len : nullptr, a.fixed_len);
    f("seed", o ? o->seed : nullptr, a.seed);
    f("alpha", o ? o->alpha : nullptr, a.g.alpha);
    f("tau_c", o ? o->tau_c : nullptr, a.g.tau_c);
    f("tau_d", o ? o->tau_d : nullptr, a.g.tau_d);
    f("lambda", o ? o->lambda : nullptr, a.g.stall_window);
    f("iters", o ? o->iters : nullptr, a.g.max_iters);
    f("pool_size", o ? o->pool_size : nullptr, a.pool_size);
    f("max_overhead", o ? o->max_overhead : nullptr, a.c.max_overhead);
    f("target_changes", o ? o->target_changes : nullptr, a.c.target_changes);
    f("iters_per_target", o ? o->iters_per_target : nullptr, a.c.iters_per_target);
    f("step_size", o ? o->step_size : nullptr, a.c.step_size);
    f("init_delta", o ? o->init_delta : nullptr, a.c.init_delta);
    f("margin", o ? o->margin : nullptr, a.c.margin);
}

json generate_config(GenerateArgs a) {
    ConfigWriter w;
    generate_fields(a, nullptr, w);
    return w.out;
}

json report_line(std::size_t index, const DefendedTrace& t, const std::string& mode) {
    json line = {{"index", index},
                 {"label", t.original.label},
                 {"overhead", t.overhead},
                 {"iterations", t.iterations_used},
                 {"restarts", t.restarts},
                 {"escaped", t.escaped},
                 {"final_confidence", t.final_source_confidence}};
    if (!mode.empty()) line["mode"] = mode;
    return line;
}

json summary_json(const GeneratedBatch& batch, const std::string& algo, const std::string& mode) {
    json hist = json::object();
    for (const auto& [restarts, count] : batch.summary.restart_histogram) {
        hist[std::to_string(restarts)] = count;
    }
    json errors = json::array();
    for (const auto& [index, message] : batch.errors) {
        errors.push_back({{"index", index}, {"message", message}});
    }
    json s = {{"algo", algo},
              {"n", batch.summary.n},
              {"n_escaped", batch.summary.n_escaped},
              {"n_failed", batch.summary.n_failed},
              {"escape_rate", batch.summary.escape_rate},
              {"mean_overhead", batch.summary.mean_overhead},
              {"p50_overhead", batch.summary.p50_overhead},
              {"p90_overhead", batch.summary.p90_overhead},
              {"mean_iterations", batch.summary.mean_iterations},
              {"restart_histogram", hist},
              {"errors", errors}};
    s["mode"] = mode.empty() ? json() : json(mode);
    return s;
}

int run_generate(const GenerateArgs& a, const std::string& out, int workers) {
    if (a.algo != "mockingbird" && a.algo != "cw") {
        throw Error(ErrorCode::BadConfig, "algo must be mockingbird or cw, got '" + a.algo + "'");
    }
    TargetCase target_case = parse_case(a.case_name);
    CwMode mode = parse_mode(a.mode);

    BurstDataset sources = load_bursts(require_path(a.in, "--in", "in"), a.fixed_len);
    BurstDataset pool = a.pool.empty() ? sources : load_bursts(a.pool, a.fixed_len);
    DetectorModel detector = load_model(require_path(a.detector, "--detector", "detector"));
    if (sources.traces.empty()) throw Error(ErrorCode::EmptyDataset, "no source traces in " + a.in);
    if (detector.input_dim() != a.fixed_len) {
        throw Error(ErrorCode::DimensionMismatch,
                    "detector expects width " + std::to_string(detector.input_dim()) +
                        ", traces have " + std::to_string(a.fixed_len));
    }

    GeneratedBatch batch;
    std::string mode_name;
    if (a.algo == "mockingbird") {
        GenerationConfig cfg = a.g;
        cfg.pool_size = a.pool_size;
        cfg.target_case = target_case;
        cfg.seed = a.seed;
        batch = generate_batch(sources, detector, pool, cfg, workers);
    } else {
        CwConfig cfg = a.c;
        cfg.mode = mode;
        cfg.pool_size = a.pool_size;
        cfg.target_case = target_case;
        cfg.seed = a.seed;
        mode_name = cw_mode_name(mode);
        batch = cw_generate_batch(sources, detector, pool, cfg, workers);
    }

    // Canonicalize the mode spelling so a rerun sees exactly this run.
    GenerateArgs canon = a;
    canon.mode = cw_mode_name(mode);
    json config = generate_config(canon);
    json summary = summary_json(batch, a.algo, mode_name);

    return finish_run_dir("generate", config, out, workers, [&]() {
        BurstDataset defended;
        defended.classes = sources.classes;
        for (const DefendedTrace& t : batch.traces) defended.traces.push_back(t.defended);
        save_bursts(defended, (fs::path(out) / "defended.bursts").string());

        std::set<std::size_t> failed;
        for (const auto& [index, message] : batch.errors) failed.insert(index);
        std::ofstream rep(fs::path(out) / "report.jsonl");
        if (!rep) throw Error(ErrorCode::IoError, "cannot open report.jsonl for writing");
        std::size_t next = 0;
        for (std::size_t i = 0; i < sources.traces.size(); ++i) {
            if (failed.count(i)) continue;
            rep << report_line(i, batch.traces[next++], mode_name).dump() << '\n';
        }
        if (!rep) throw Error(ErrorCode::IoError, "write failed for report.jsonl");

        std::ofstream sum(fs::path(out) / "summary.json");
        if (!sum) throw Error(ErrorCode::IoError, "cannot open summary.json for writing");
        sum << summary.dump(2) << '\n';
        if (!sum) throw Error(ErrorCode::IoError, "write failed for summary.json");

        std::cout << summary.dump() << '\n';
    });
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
    std::string scenario = "without";  // without | with
    std::string train;                 // clean training set (without)
    std::string defended;              // defended run dir (without)
    std::string defended_train;        // defended run dir (with)
    std::string defended_test;         // defended run dir (with)
    std::string hidden = "64";
    std::size_t fixed_len = kFixedBurstLen;
    TrainConfig cfg;
};

struct EvaluateOpts {
    CLI::Option *scenario = nullptr, *train = nullptr, *defended = nullptr,
                *defended_train = nullptr, *defended_test = nullptr, *hidden = nullptr,
                *fixed_len = nullptr, *epochs = nullptr, *batch_size = nullptr,
                *learning_rate = nullptr, *momentum = nullptr, *seed = nullptr;
};

template <typename F>
void evaluate_fields(EvaluateArgs& a, const EvaluateOpts* o, F&& f) {
    f("scenario", o ? o->scenario : nullptr, a.scenario);
    f("train", o ? o->train : nullptr, a.train);
    f("defended", o ? o->defended : nullptr, a.defended);
    f("defended_train", o ? o->defended_train : nullptr, a.defended_train);
    f("defended_test", o ? o->defended_test : nullptr, a.defended_test);
    f("hidden", o ? o->hidden : nullptr, a.hidden);
    f("fixed_len", o ? o->fixed_len : nullptr, a.fixed_len);
    f("epochs", o ? o->epochs : nullptr, a.cfg.epochs);
    f("batch_size", o ? o->batch_size : nullptr, a.cfg.batch_size);
    f("learning_rate", o ? o->learning_rate : nullptr, a.cfg.learning_rate);
    f("momentum", o ? o->momentum : nullptr, a.cfg.momentum);
    f("seed", o ? o->seed : nullptr, a.cfg.seed);
}

json evaluate_config(EvaluateArgs a) {
    ConfigWriter w;
    evaluate_fields(a, nullptr, w);
    return w.out;
}

// Reads a generate run directory back into defended traces: the burst file
// carries the traces, the report carries per-trace outcomes.
std::vector<DefendedTrace> load_defended_run(const std::string& dir, std::size_t fixed_len) {
    BurstDataset data = load_bursts((fs::path(dir) / "defended.bursts").string(), fixed_len);
    fs::path report_path = fs::path(dir) / "report.jsonl";
    std::ifstream in(report_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + report_path.string());

    std::vector<DefendedTrace> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError,
                        report_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (out.size() >= data.traces.size()) {
            throw Error(ErrorCode::FormatError, dir + ": more report lines than defended traces");
        }
        DefendedTrace d;
        d.defended = data.traces[out.size()];
        d.original = d.defended;  // originals live with the generate run's inputs
        try {
            if (j.at("label").get<int>() != d.defended.label) {
                throw Error(ErrorCode::FormatError,
                            report_path.string() + ":" + std::to_string(lineno) +
                                ": label does not match defended.bursts");
            }
            d.overhead = j.at("overhead").get<double>();
            d.iterations_used = j.at("iterations").get<std::size_t>();
            d.restarts = j.at("restarts").get<std::size_t>();
            d.escaped = j.at("escaped").get<bool>();
            d.final_source_confidence = j.at("final_confidence").get<double>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::FormatError,
                        report_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(d));
    }
    if (out.size() != data.traces.size()) {
        throw Error(ErrorCode::FormatError, dir + ": fewer report lines than defended traces");
    }
    return out;
}

int run_evaluate(const EvaluateArgs& a, const std::string& out, int workers) {
    TrainConfig cfg = a.cfg;
    cfg.hidden_dims = parse_hidden_dims(a.hidden);

    EvalReport report;
    if (a.scenario == "without") {
        BurstDataset train = load_bursts(require_path(a.train, "--train", "train"), a.fixed_len);
        auto defended =
            load_defended_run(require_path(a.defended, "--defended", "defended"), a.fixed_len);
        report = eval_without_adv_training(train, defended, cfg, workers);
    } else if (a.scenario == "with") {
        auto train = load_defended_run(
            require_path(a.defended_train, "--defended-train", "defended_train"), a.fixed_len);
        auto test = load_defended_run(
            require_path(a.defended_test, "--defended-test", "defended_test"), a.fixed_len);
        report = eval_with_adv_training(train, test, cfg, workers);
    } else {
        throw Error(ErrorCode::BadConfig, "scenario must be without or with, got '" + a.scenario + "'");
    }

    json top_k = json::object();
    for (const auto& [k, acc] : report.top_k) top_k[std::to_string(k)] = acc;
    json rj = {{"scenario", report.scenario},
               {"n_test", report.n_test},
               {"mean_overhead", report.mean_overhead},
               {"top_k", top_k}};

    return finish_run_dir("evaluate", evaluate_config(a), out, workers, [&]() {
        std::ofstream rep(fs::path(out) / "report.json");
        if (!rep) throw Error(ErrorCode::IoError, "cannot open report.json for writing");
        rep << rj.dump(2) << '\n';

        std::ofstream csv(fs::path(out) / "topk.csv");
        if (!csv) throw Error(ErrorCode::IoError, "cannot open topk.csv for writing");
        csv << "k,accuracy\n";
        for (const auto& [k, acc] : report.top_k) csv << k << ',' << json(acc).dump() << '\n';
        if (!csv) throw Error(ErrorCode::IoError, "write failed for topk.csv");

        std::cout << rj.dump() << '\n';
    });
}

// ---------------------------------------------------------------------------
// intersect

struct IntersectArgs {
    std::string detector;
    std::string defended;  // defended run dir supplying the per-round visits
    std::size_t rounds = 5;
    std::size_t k = 10;
    std::size_t fixed_len = kFixedBurstLen;
    std::uint64_t seed = 1;
};

struct IntersectOpts {
    CLI::Option *detector = nullptr, *defended = nullptr, *rounds = nullptr, *k = nullptr,
                *fixed_len = nullptr, *seed = nullptr;
};

template <typename F>
void intersect_fields(IntersectArgs& a, const IntersectOpts* o, F&& f) {
    f("detector", o ? o->detector : nullptr, a.detector);
    f("defended", o ? o->defended : nullptr, a.defended);
    f("rounds", o ? o->rounds : nullptr, a.rounds);
    f("k", o ? o->k : nullptr, a.k);
    f("fixed_len", o ? o->fixed_len : nullptr, a.fixed_len);
    f("seed", o ? o->seed : nullptr, a.seed);
}

json intersect_config(IntersectArgs a) {
    ConfigWriter w;
    intersect_fields(a, nullptr, w);
    return w.out;
}

const char* outcome_name(IntersectionResult::Kind kind) {
    switch (kind) {
        case IntersectionResult::Kind::AbsoluteSuccess: return "absolute_success";
        case IntersectionResult::Kind::AbsoluteFailure: return "absolute_failure";
        case IntersectionResult::Kind::Intersection: return "intersection";
    }
    return "unknown";
}

int run_intersect(const IntersectArgs& a, const std::string& out) {
    if (a.rounds < 1) throw Error(ErrorCode::BadConfig, "rounds must be >= 1");
    DetectorModel model = load_model(require_path(a.detector, "--detector", "detector"));
    auto defended =
        load_defended_run(require_path(a.defended, "--defended", "defended"), a.fixed_len);

    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < defended.size(); ++i) {
        by_label[defended[i].defended.label].push_back(i);
    }

    json per_label = json::array();
    json skipped = json::array();
    std::vector<IntersectionResult> results;
    for (auto& [label, indices] : by_label) {
        if (indices.size() < a.rounds) {
            skipped.push_back(label);
            continue;
        }
        // One independent visit per round, drawn without replacement.
        Rng rng(derive_seed(a.seed, static_cast<std::uint64_t>(label)));
        shuffle(indices, rng);
        std::vector<BurstTrace> visits;
        for (std::size_t r = 0; r < a.rounds; ++r) visits.push_back(defended[indices[r]].defended);
        IntersectionResult res = intersection_attack(model, visits, a.k);
        results.push_back(res);
        per_label.push_back(
            {{"label", label}, {"outcome", outcome_name(res.kind)}, {"size", res.size}});
    }
    if (results.empty()) {
        throw Error(ErrorCode::EmptyDataset,
                    "no label has " + std::to_string(a.rounds) + " defended visits");
    }
    IntersectionSummary s = summarize_intersection(results);
    json summary = {{"n", s.n},
                    {"success_rate", s.success_rate},
                    {"failure_rate", s.failure_rate},
                    {"mean_intersection",
                     s.mean_intersection ? json(*s.mean_intersection) : json()}};
    json rj = {{"k", a.k},
               {"rounds", a.rounds},
               {"per_label", per_label},
               {"skipped_labels", skipped},
               {"summary", summary}};

    return finish_run_dir("intersect", intersect_config(a), out, 1, [&]() {
        std::ofstream rep(fs::path(out) / "report.json");
        if (!rep) throw Error(ErrorCode::IoError, "cannot open report.json for writing");
        rep << rj.dump(2) << '\n';
        if (!rep) throw Error(ErrorCode::IoError, "write failed for report.json");
        std::cout << rj.dump() << '\n';
    });
}

// ---------------------------------------------------------------------------
// mold

struct MoldArgs {
    std::string trace;   // real packet events, JSON lines
    std::string target;  // burst file; the first trace is the target
    double timeout_ms = 50.0;
    std::size_t signal_overhead = 1;
    std::size_t fixed_len = kFixedBurstLen;
};

struct MoldOpts {
    CLI::Option *trace = nullptr, *target = nullptr, *timeout_ms = nullptr,
                *signal_overhead = nullptr, *fixed_len = nullptr;
};

template <typename F>
void mold_fields(MoldArgs& a, const MoldOpts* o, F&& f) {
    f("trace", o ? o->trace : nullptr, a.trace);
    f("target", o ? o->target : nullptr, a.target);
    f("timeout_ms", o ? o->timeout_ms : nullptr, a.timeout_ms);
    f("signal_overhead", o ? o->signal_overhead : nullptr, a.signal_overhead);
    f("fixed_len", o ? o->fixed_len : nullptr, a.fixed_len);
}

json mold_config(MoldArgs a) {
    ConfigWriter w;
    mold_fields(a, nullptr, w);
    return w.out;
}

int run_mold(const MoldArgs& a, const std::string& out) {
    std::vector<PacketEvent> real = load_events(require_path(a.trace, "--trace", "trace"));
    BurstDataset targets =
        load_bursts(require_path(a.target, "--target", "target"), a.fixed_len);
    if (targets.traces.empty()) throw Error(ErrorCode::EmptyDataset, "no target trace in " + a.target);

    MoldingConfig cfg;
    cfg.timeout_ms = a.timeout_ms;
    cfg.signal_overhead = a.signal_overhead;
    MoldingResult result = mold(real, targets.traces.front(), cfg);
    bool verified = verify_molding(real, result.events, targets.traces.front(), cfg);

    json stats = {{"events", result.events.size()},
                  {"real_packets", real.size()},
                  {"dummy_count", result.dummy_count},
                  {"added_latency_ms", result.added_latency_ms},
                  {"verified", verified}};

    return finish_run_dir("mold", mold_config(a), out, 1, [&]() {
        save_events(result.events, (fs::path(out) / "molded.jsonl").string());
        std::ofstream st(fs::path(out) / "stats.json");
        if (!st) throw Error(ErrorCode::IoError, "cannot open stats.json for writing");
        st << stats.dump(2) << '\n';
        if (!st) throw Error(ErrorCode::IoError, "write failed for stats.json");
        std::cout << stats.dump() << '\n';
    });
}

// ---------------------------------------------------------------------------
// rerun

int rerun_from_manifest(const std::string& manifest_path, const std::string& out, int workers) {
    std::ifstream in(manifest_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + manifest_path);
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, manifest_path + ": " + e.what());
    }
    std::string sub;
    json config;
    try {
        sub = manifest.at("subcommand").get<std::string>();
        config = manifest.at("config");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::FormatError, manifest_path + ": " + e.what());
    }

    FieldMerger merge{&config, {}};
    if (sub == "synth") {
        SynthArgs a;
        synth_fields(a, nullptr, merge);
        merge.finish();
        return run_synth(a, out);
    }
    if (sub == "preprocess") {
        PreprocessArgs a;
        preprocess_fields(a, nullptr, merge);
        merge.finish();
        return run_preprocess(a, out);
    }
    if (sub == "train") {
        TrainArgs a;
        train_fields(a, nullptr, merge);
        merge.finish();
        return run_train(a, out);
    }
    if (sub == "generate") {
        GenerateArgs a;
        generate_fields(a, nullptr, merge);
        merge.finish();
        return run_generate(a, out, workers);
    }
    if (sub == "evaluate") {
        EvaluateArgs a;
        evaluate_fields(a, nullptr, merge);
        merge.finish();
        return run_evaluate(a, out, workers);
    }
    if (sub == "intersect") {
        IntersectArgs a;
        intersect_fields(a, nullptr, merge);
        merge.finish();
        return run_intersect(a, out);
    }
    if (sub == "mold") {
        MoldArgs a;
        mold_fields(a, nullptr, merge);
        merge.finish();
        return run_mold(a, out);
    }
    throw Error(ErrorCode::FormatError, manifest_path + ": unknown subcommand '" + sub + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial trace defense pipeline: burst-vector datasets, detector training,\n"
                 "defended trace generation, attacker evaluation, and burst molding."};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    app.footer("Exit codes:\n"
               "  0  success\n"
               "  2  usage or configuration error\n"
               "  3  file I/O or file format error\n"
               "  4  data or domain error\n"
               "  5  internal error\n"
               "Every subcommand accepts --config FILE (JSON); command-line flags override\n"
               "config keys of the same name (dashes become underscores). Run directories\n"
               "are append-only: reusing one fails. 'rerun' replays a manifest exactly.");

    int exit_status = 0;

    // synth ------------------------------------------------------------
    SynthArgs synth_args;
    SynthOpts synth_opts;
    std::string synth_cfg_path, synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled burst dataset");
    synth->add_option("--config", synth_cfg_path, "JSON config file");
    synth_opts.classes = synth->add_option("--classes", synth_args.spec.classes, "Number of classes");
    synth_opts.instances =
        synth->add_option("--instances", synth_args.spec.instances_per_class, "Instances per class");
    synth_opts.burst_min =
        synth->add_option("--burst-min", synth_args.spec.burst_min, "Minimum bursts per class");
    synth_opts.burst_max =
        synth->add_option("--burst-max", synth_args.spec.burst_max, "Maximum bursts per class");
    synth_opts.mag_family = synth->add_option("--mag-family", synth_args.spec.mag_family,
                                              "Prototype magnitude family: lognormal | uniform");
    synth_opts.log_mean = synth->add_option("--log-mean", synth_args.spec.log_mean,
                                            "Log-space mean (lognormal family)");
    synth_opts.log_sigma = synth->add_option("--log-sigma", synth_args.spec.log_sigma,
                                             "Log-space sigma (lognormal family)");
    synth_opts.mag_min =
        synth->add_option("--mag-min", synth_args.spec.mag_min, "Minimum magnitude (uniform family)");
    synth_opts.mag_max =
        synth->add_option("--mag-max", synth_args.spec.mag_max, "Maximum magnitude (uniform family)");
    synth_opts.noise =
        synth->add_option("--noise", synth_args.spec.noise, "Per-instance relative jitter bound");
    synth_opts.fixed_len =
        synth->add_option("--fixed-len", synth_args.spec.fixed_len, "Fixed burst vector width");
    synth_opts.seed = synth->add_option("--seed", synth_args.spec.seed, "Generator seed");
    synth->add_option("--out", synth_out, "Output burst file")->required();
    synth->callback([&]() {
        json cfg = load_config_file(synth_cfg_path);
        FieldMerger merge{cfg.is_null() ? nullptr : &cfg, {}};
        synth_fields(synth_args, &synth_opts, merge);
        merge.finish();
        exit_status = run_synth(synth_args, synth_out);
    });

    // preprocess ---------------------------------------------------------
    PreprocessArgs pre_args;
    PreprocessOpts pre_opts;
    std::string pre_cfg_path, pre_out;
    auto* pre = app.add_subcommand("preprocess",
                                   "Filter a raw direction dataset: drop short traces, then "
                                   "traces that start incoming");
    pre->add_option("--config", pre_cfg_path, "JSON config file");
    pre_opts.in = pre->add_option("--in", pre_args.in, "Input direction file");
    pre_opts.min_packets =
        pre->add_option("--min-packets", pre_args.min_packets, "Minimum packets to keep a trace");
    pre->add_option("--out", pre_out, "Output direction file")->required();
    pre->callback([&]() {
        json cfg = load_config_file(pre_cfg_path);
        FieldMerger merge{cfg.is_null() ? nullptr : &cfg, {}};
        preprocess_fields(pre_args, &pre_opts, merge);
        merge.finish();
        exit_status = run_preprocess(pre_args, pre_out);
    });

    // train --------------------------------------------------------------
    TrainArgs train_args;
    TrainOpts train_opts;
    std::string train_cfg_path, train_out;
    auto* train = app.add_subcommand("train", "Train the burst-vector detector");
    train->add_option("--config", train_cfg_path, "JSON config file");
    train_opts.in = train->add_option("--in", train_args.in, "Training burst file");
    train_opts.hidden = train->add_option("--hidden", train_args.hidden,
                                          "Hidden layer widths, comma separated (e.g. 128 or 64,32)");
    train_opts.fixed_len =
        train->add_option("--fixed-len", train_args.fixed_len, "Fixed burst vector width");
    train_opts.epochs = train->add_option("--epochs", train_args.cfg.epochs, "Training epochs");
    train_opts.batch_size =
        train->add_option("--batch-size", train_args.cfg.batch_size, "Mini-batch size");
    train_opts.learning_rate =
        train->add_option("--learning-rate", train_args.cfg.learning_rate, "SGD learning rate");
    train_opts.momentum = train->add_option("--momentum", train_args.cfg.momentum, "SGD momentum");
    train_opts.seed = train->add_option("--seed", train_args.cfg.seed, "Training seed");
    train->add_option("--out", train_out, "Output model file")->required();
    train->callback([&]() {
        json cfg = load_config_file(train_cfg_path);
        FieldMerger merge{cfg.is_null() ? nullptr : &cfg, {}};
        train_fields(train_args, &train_opts, merge);
        merge.finish();
        exit_status = run_train(train_args, train_out);
    });

    // generate -------------------------------------------------------------
    GenerateArgs gen_args;
    GenerateOpts gen_opts;
    std::string gen_cfg_path, gen_out;
    int gen_workers = 1;
    auto* gen = app.add_subcommand("generate", "Generate defended traces against a detector");
    gen->add_option("--config", gen_cfg_path, "JSON config file");
    gen_opts.algo = gen->add_option("--algo", gen_args.algo, "mockingbird | cw");
    gen_opts.in = gen->add_option("--in", gen_args.in, "Source burst file");
    gen_opts.pool =
        gen->add_option("--pool", gen_args.pool, "Target pool burst file (default: the source file)");
    gen_opts.detector = gen->add_option("--detector", gen_args.detector, "Detector model file");
    gen_opts.case_name = gen->add_option("--case", gen_args.case_name,
                                         "Target pool regime: I (other classes) | II (open world)");
    gen_opts.fixed_len =
        gen->add_option("--fixed-len", gen_args.fixed_len, "Fixed burst vector width");
    gen_opts.seed = gen->add_option("--seed", gen_args.seed, "Batch seed; item i runs with seed^i");
    gen_opts.alpha = gen->add_option("--alpha", gen_args.g.alpha, "mockingbird: step scale");
    gen_opts.tau_c =
        gen->add_option("--tau-c", gen_args.g.tau_c, "mockingbird: escape confidence threshold");
    gen_opts.tau_d =
        gen->add_option("--tau-d", gen_args.g.tau_d, "mockingbird: stall step-size threshold");
    gen_opts.lambda = gen->add_option("--lambda", gen_args.g.stall_window,
                                      "mockingbird: consecutive stalls before a fresh pool");
    gen_opts.iters = gen->add_option("--iters", gen_args.g.max_iters, "mockingbird: iteration budget");
    gen_opts.pool_size = gen->add_option("--pool-size", gen_args.pool_size, "Target pool size");
    gen_opts.mode = gen->add_option("--mode", gen_args.mode,
                                    "cw: untargeted | targeted | hybrid (capped)");
    gen_opts.max_overhead =
        gen->add_option("--max-overhead", gen_args.c.max_overhead, "cw hybrid: growth budget M");
    gen_opts.target_changes =
        gen->add_option("--target-changes", gen_args.c.target_changes, "cw: target segments");
    gen_opts.iters_per_target =
        gen->add_option("--iters-per-target", gen_args.c.iters_per_target, "cw: steps per segment");
    gen_opts.step_size = gen->add_option("--step-size", gen_args.c.step_size, "cw: descent rate");
    gen_opts.init_delta =
        gen->add_option("--init-delta", gen_args.c.init_delta, "cw: initial parameter magnitude");
    gen_opts.margin = gen->add_option("--margin", gen_args.c.margin, "cw: required success margin");
    gen->add_option("--workers", gen_workers, "Worker threads; results are identical for any count");
    gen->add_option("--out", gen_out, "Output run directory")->required();
    gen->callback([&]() {
        json cfg = load_config_file(gen_cfg_path);
        FieldMerger merge{cfg.is_null() ? nullptr : &cfg, {}};
        generate_fields(gen_args, &gen_opts, merge);
        merge.finish();
        exit_status = run_generate(gen_args, gen_out, gen_workers);
    });

    // evaluate -------------------------------------------------------------
    EvaluateArgs eval_args;
    EvaluateOpts eval_opts;
    std::string eval_cfg_path, eval_out;
    int eval_workers = 1;
    auto* eval = app.add_subcommand("evaluate", "Train an attacker and score defended traces");
    eval->add_option("--config", eval_cfg_path, "JSON config file");
    eval_opts.scenario = eval->add_option(
        "--scenario", eval_args.scenario,
        "without: attacker trains on clean traces; with: attacker trains on defended traces");
    eval_opts.train = eval->add_option("--train", eval_args.train,
                                       "Clean training burst file (scenario: without)");
    eval_opts.defended = eval->add_option("--defended", eval_args.defended,
                                          "Defended run directory to score (scenario: without)");
    eval_opts.defended_train = eval->add_option("--defended-train", eval_args.defended_train,
                                                "Defended run directory to train on (scenario: with)");
    eval_opts.defended_test = eval->add_option("--defended-test", eval_args.defended_test,
                                               "Defended run directory to score (scenario: with)");
    eval_opts.hidden =
        eval->add_option("--hidden", eval_args.hidden, "Attacker hidden widths, comma separated");
    eval_opts.fixed_len =
        eval->add_option("--fixed-len", eval_args.fixed_len, "Fixed burst vector width");
    eval_opts.epochs = eval->add_option("--epochs", eval_args.cfg.epochs, "Attacker epochs");
    eval_opts.batch_size =
        eval->add_option("--batch-size", eval_args.cfg.batch_size, "Attacker mini-batch size");
    eval_opts.learning_rate =
        eval->add_option("--learning-rate", eval_args.cfg.learning_rate, "Attacker learning rate");
    eval_opts.momentum =
        eval->add_option("--momentum", eval_args.cfg.momentum, "Attacker SGD momentum");
    eval_opts.seed = eval->add_option("--seed", eval_args.cfg.seed, "Attacker training seed");
    eval->add_option("--workers", eval_workers,
                     "Worker threads; results are identical for any count");
    eval->add_option("--out", eval_out, "Output run directory")->required();
    eval->callback([&]() {
        json cfg = load_config_file(eval_cfg_path);
        FieldMerger merge{cfg.is_null() ? nullptr : &cfg, {}};
        evaluate_fields(eval_args, &eval_opts, merge);
        merge.finish();
        exit_status = run_evaluate(eval_args, eval_out, eval_workers);
    });

    // intersect --------------------------------------------------------------
    IntersectArgs int_args;
    IntersectOpts int_opts;
    std::string int_cfg_path, int_out;
    auto* inter = app.add_subcommand("intersect",
                                     "Multi-visit intersection attack over defended traces");
    inter->add_option("--config", int_cfg_path, "JSON config file");
    int_opts.detector = inter->add_option("--detector", int_args.detector, "Attacker model file");
    int_opts.defended =
        inter->add_option("--defended", int_args.defended, "Defended run directory");
    int_opts.rounds = inter->add_option("--rounds", int_args.rounds, "Visits per label");
    int_opts.k = inter->add_option("--k", int_args.k, "Top-k candidate set size per visit");
    int_opts.fixed_len =
        inter->add_option("--fixed-len", int_args.fixed_len, "Fixed burst vector width");
    int_opts.seed = inter->add_option("--seed", int_args.seed, "Visit sampling seed");
    inter->add_option("--out", int_out, "Output run directory")->required();
    inter->callback([&]() {
        json cfg = load_config_file(int_cfg_path);
        FieldMerger merge{cfg.is_null() ? nullptr : &cfg, {}};
        intersect_fields(int_args, &int_opts, merge);
        merge.finish();
        exit_status = run_intersect(int_args, int_out);
    });

    // mold -----------------------------------------------------------------
    MoldArgs mold_args;
    MoldOpts mold_opts;
    std::string mold_cfg_path, mold_out;
    auto* moldc = app.add_subcommand("mold", "Mold a live packet stream onto a target burst trace");
    moldc->add_option("--config", mold_cfg_path, "JSON config file");
    mold_opts.trace = moldc->add_option("--trace", mold_args.trace, "Real packet events, JSON lines");
    mold_opts.target =
        moldc->add_option("--target", mold_args.target, "Target burst file (first trace is used)");
    mold_opts.timeout_ms =
        moldc->add_option("--timeout-ms", mold_args.timeout_ms, "Burst close timeout");
    mold_opts.signal_overhead = moldc->add_option("--signal-overhead", mold_args.signal_overhead,
                                                  "Signal packets per outgoing burst");
    mold_opts.fixed_len =
        moldc->add_option("--fixed-len", mold_args.fixed_len, "Fixed burst vector width");
    moldc->add_option("--out", mold_out, "Output run directory")->required();
    moldc->callback([&]() {
        json cfg = load_config_file(mold_cfg_path);
        FieldMerger merge{cfg.is_null() ? nullptr : &cfg, {}};
        mold_fields(mold_args, &mold_opts, merge);
        merge.finish();
        exit_status = run_mold(mold_args, mold_out);
    });

    // rerun ------------------------------------------------------------------
    std::string rerun_manifest, rerun_out;
    int rerun_workers = 1;
    auto* rerun = app.add_subcommand("rerun", "Replay a recorded run from its manifest");
    rerun->add_option("--manifest", rerun_manifest, "Manifest file of the run to replay")->required();
    rerun->add_option("--out", rerun_out, "Output path (file or run directory, per the subcommand)")
        ->required();
    rerun->add_option("--workers", rerun_workers,
                      "Worker threads; results are identical for any count");
    rerun->callback(
        [&]() { exit_status = rerun_from_manifest(rerun_manifest, rerun_out, rerun_workers); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << e.what() << '\n';
        return exit_code_for(e);
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
    return exit_status;
}
