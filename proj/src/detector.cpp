#include "mockingbird/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mockingbird/error.hpp"
#include "mockingbird/rng.hpp"
#include "json.hpp"

namespace mockingbird {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void affine(const std::vector<double>& w, const std::vector<double>& b,
            const std::vector<double>& x, std::vector<double>& out) {
    std::size_t rows = b.size();
    std::size_t cols = x.size();
    out.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* wr = w.data() + r * cols;
        double acc = b[r];
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
}

void softmax_inplace(std::vector<double>& z) {
    double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : z) v /= sum;
}

void check_model(const DetectorModel& m) {
    if (m.layer_dims.size() < 2 || m.weights.size() != m.layer_dims.size() - 1 ||
        m.biases.size() != m.weights.size()) {
        throw Error(ErrorCode::FormatError, "malformed model");
    }
    if (m.normalization_scale <= 0.0) {
        throw Error(ErrorCode::FormatError, "normalization_scale must be positive");
    }
}

void check_class(const DetectorModel& m, int cls) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= m.classes()) {
        throw Error(ErrorCode::UnknownClass,
                    "class " + std::to_string(cls) + " outside [0, " +
                        std::to_string(m.classes()) + ")");
    }
}

// Forward pass keeping pre-activations for backprop.
struct ForwardState {
    std::vector<std::vector<double>> pre;   // per layer
    std::vector<std::vector<double>> act;   // act[0] = input, act[l+1] = layer l output
    std::vector<double> proba;
};

ForwardState forward(const DetectorModel& m, const std::vector<double>& xnorm) {
    if (xnorm.size() != m.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "input width " + std::to_string(xnorm.size()) + " != model width " +
                        std::to_string(m.input_dim()));
    }
    ForwardState st;
    st.act.push_back(xnorm);
    std::size_t nl = m.weights.size();
    for (std::size_t l = 0; l < nl; ++l) {
        std::vector<double> z;
        affine(m.weights[l], m.biases[l], st.act.back(), z);
        st.pre.push_back(z);
        if (l + 1 < nl) {
            for (double& v : z) v = softplus(v);
        }
        st.act.push_back(std::move(z));
    }
    st.proba = st.act.back();
    softmax_inplace(st.proba);
    return st;
}

// argmax over i != skip; ties toward the lower index.
std::size_t argmax_excluding(const std::vector<double>& p, std::size_t skip) {
    std::size_t best = skip == 0 ? 1 : 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i == skip) continue;
        if (p[i] > p[best]) best = i;
    }
    return best;
}

// d(objective)/d(logits) for the softmax head. For a probability combination
// sum_i c_i F_i the logit gradient is F .* (c - <c, F>).
std::vector<double> logit_gradient(const std::vector<double>& proba, const Objective& obj) {
    std::size_t n = proba.size();
    std::vector<double> coeff(n, 0.0);
    auto cls = static_cast<std::size_t>(obj.cls);
    switch (obj.kind) {
        case Objective::Kind::ProbaOfClass:
            coeff[cls] = 1.0;
            break;
        case Objective::Kind::CwTargeted:
            coeff[argmax_excluding(proba, cls)] = 1.0;
            coeff[cls] -= 1.0;
            break;
        case Objective::Kind::CwUntargeted:
            coeff[cls] = 1.0;
            coeff[argmax_excluding(proba, cls)] -= 1.0;
            break;
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += coeff[i] * proba[i];
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = proba[i] * (coeff[i] - dot);
    return g;
}

std::vector<double> backprop_to_input(const DetectorModel& m, const ForwardState& st,
                                      std::vector<double> grad) {
    std::size_t nl = m.weights.size();
    for (std::size_t l = nl; l-- > 0;) {
        if (l + 1 < nl) {
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= sigmoid(st.pre[l][i]);
        }
        std::size_t rows = m.biases[l].size();
        std::size_t cols = st.act[l].size();
        std::vector<double> down(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* wr = m.weights[l].data() + r * cols;
            double g = grad[r];
            for (std::size_t c = 0; c < cols; ++c) down[c] += wr[c] * g;
        }
        grad = std::move(down);
    }
    return grad;
}

std::vector<double> normalize(const DetectorModel& m, const BurstTrace& trace) {
    std::vector<double> x(trace.bursts.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = trace.bursts[i] / m.normalization_scale;
    return x;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw Error(ErrorCode::FormatError, "truncated model file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos++])) << (8 * i);
    return v;
}

double get_f64(const std::string& in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw Error(ErrorCode::FormatError, "truncated model file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[pos++])) << (8 * i);
    return std::bit_cast<double>(v);
}

}  // namespace

DetectorModel train_detector(const BurstDataset& train, const TrainConfig& cfg) {
    if (train.traces.empty()) throw Error(ErrorCode::EmptyDataset, "no training traces");
    if (train.classes < 2) {
        throw Error(ErrorCode::SingleClassDataset, "need at least 2 classes to train");
    }
    if (cfg.batch_size < 1 || cfg.epochs < 1 || cfg.learning_rate <= 0.0) {
        throw Error(ErrorCode::BadConfig, "bad train config");
    }
    std::size_t input = train.traces.front().bursts.size();
    for (const BurstTrace& t : train.traces) {
        if (t.bursts.size() != input) {
            throw Error(ErrorCode::DimensionMismatch, "inconsistent trace widths in training set");
        }
        if (t.label < 0 || static_cast<std::size_t>(t.label) >= train.classes) {
            throw Error(ErrorCode::UnknownClass, "label " + std::to_string(t.label));
        }
    }

    DetectorModel m;
    m.layer_dims.push_back(input);
    for (std::size_t h : cfg.hidden_dims) m.layer_dims.push_back(h);
    m.layer_dims.push_back(train.classes);

    double mx = 0.0;
    for (const BurstTrace& t : train.traces) {
        for (double b : t.bursts) mx = std::max(mx, b);
    }
    m.normalization_scale = mx > 0.0 ? mx : 1.0;

    Rng rng(cfg.seed);
    std::size_t nl = m.layer_dims.size() - 1;
    for (std::size_t l = 0; l < nl; ++l) {
        std::size_t fan_in = m.layer_dims[l], fan_out = m.layer_dims[l + 1];
        double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::vector<double> w(fan_in * fan_out);
        for (double& v : w) v = uniform_real(rng, -r, r);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(fan_out, 0.0);
    }

    std::vector<std::vector<double>> vel_w, vel_b, grad_w, grad_b;
    for (std::size_t l = 0; l < nl; ++l) {
        vel_w.emplace_back(m.weights[l].size(), 0.0);
        vel_b.emplace_back(m.biases[l].size(), 0.0);
        grad_w.emplace_back(m.weights[l].size(), 0.0);
        grad_b.emplace_back(m.biases[l].size(), 0.0);
    }

    std::vector<std::size_t> order(train.traces.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            for (std::size_t l = 0; l < nl; ++l) {
                std::fill(grad_w[l].begin(), grad_w[l].end(), 0.0);
                std::fill(grad_b[l].begin(), grad_b[l].end(), 0.0);
            }
            for (std::size_t k = start; k < end; ++k) {
                const BurstTrace& t = train.traces[order[k]];
                ForwardState st = forward(m, normalize(m, t));
                // d(cross-entropy)/d(logits) = proba - onehot
                std::vector<double> g = st.proba;
                g[static_cast<std::size_t>(t.label)] -= 1.0;
                for (std::size_t l = nl; l-- > 0;) {
                    if (l + 1 < nl) {
                        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= sigmoid(st.pre[l][i]);
                    }
                    std::size_t rows = m.biases[l].size();
                    std::size_t cols = st.act[l].size();
                    const std::vector<double>& a = st.act[l];
                    for (std::size_t r = 0; r < rows; ++r) {
                        double gr = g[r];
                        grad_b[l][r] += gr;
                        double* gw = grad_w[l].data() + r * cols;
                        for (std::size_t c = 0; c < cols; ++c) gw[c] += gr * a[c];
                    }
                    if (l > 0) {
                        std::vector<double> down(cols, 0.0);
                        for (std::size_t r = 0; r < rows; ++r) {
                            const double* wr = m.weights[l].data() + r * cols;
                            double gr = g[r];
                            for (std::size_t c = 0; c < cols; ++c) down[c] += wr[c] * gr;
                        }
                        g = std::move(down);
                    }
                }
            }
            double inv = 1.0 / static_cast<double>(end - start);
            for (std::size_t l = 0; l < nl; ++l) {
                for (std::size_t i = 0; i < m.weights[l].size(); ++i) {
                    vel_w[l][i] = cfg.momentum * vel_w[l][i] - cfg.learning_rate * grad_w[l][i] * inv;
                    m.weights[l][i] += vel_w[l][i];
                }
                for (std::size_t i = 0; i < m.biases[l].size(); ++i) {
                    vel_b[l][i] = cfg.momentum * vel_b[l][i] - cfg.learning_rate * grad_b[l][i] * inv;
                    m.biases[l][i] += vel_b[l][i];
                }
            }
        }
    }
    return m;
}

std::vector<double> predict_proba(const DetectorModel& model, const BurstTrace& trace) {
    check_model(model);
    return forward(model, normalize(model, trace)).proba;
}

std::vector<double> predict_proba_normalized(const DetectorModel& model,
                                             const std::vector<double>& xnorm) {
    check_model(model);
    return forward(model, xnorm).proba;
}

double objective_value(const DetectorModel& model, const std::vector<double>& xnorm,
                       const Objective& objective) {
    check_model(model);
    check_class(model, objective.cls);
    if (model.classes() < 2) throw Error(ErrorCode::SingleClassDataset, "objective needs >= 2 classes");
    std::vector<double> p = forward(model, xnorm).proba;
    auto cls = static_cast<std::size_t>(objective.cls);
    switch (objective.kind) {
        case Objective::Kind::ProbaOfClass:
            return p[cls];
        case Objective::Kind::CwTargeted:
            return p[argmax_excluding(p, cls)] - p[cls];
        case Objective::Kind::CwUntargeted:
            return p[cls] - p[argmax_excluding(p, cls)];
    }
    return 0.0;
}

std::vector<double> input_gradient_normalized(const DetectorModel& model,
                                              const std::vector<double>& xnorm,
                                              const Objective& objective) {
    check_model(model);
    check_class(model, objective.cls);
    if (model.classes() < 2) throw Error(ErrorCode::SingleClassDataset, "objective needs >= 2 classes");
    ForwardState st = forward(model, xnorm);
    return backprop_to_input(model, st, logit_gradient(st.proba, objective));
}

std::vector<double> input_gradient(const DetectorModel& model, const BurstTrace& trace,
                                   const Objective& objective) {
    return input_gradient_normalized(model, normalize(model, trace), objective);
}

std::vector<int> top_k_from_proba(const std::vector<double>& proba, std::size_t k) {
    if (k < 1 || k > proba.size()) {
        throw Error(ErrorCode::BadK, "k=" + std::to_string(k) + " with " +
                                         std::to_string(proba.size()) + " classes");
    }
    std::vector<int> idx(proba.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (proba[a] != proba[b]) return proba[a] > proba[b];
        return a < b;
    });
    idx.resize(k);
    return idx;
}

std::vector<int> top_k_labels(const DetectorModel& model, const BurstTrace& trace, std::size_t k) {
    return top_k_from_proba(predict_proba(model, trace), k);
}

double accuracy(const DetectorModel& model, const BurstDataset& dataset) {
    if (dataset.traces.empty()) throw Error(ErrorCode::EmptyDataset, "no traces to score");
    std::size_t hit = 0;
    for (const BurstTrace& t : dataset.traces) {
        if (top_k_labels(model, t, 1)[0] == t.label) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(dataset.traces.size());
}

void save_model(const DetectorModel& model, const std::string& path) {
    check_model(model);
    nlohmann::json header = {
        {"arch_id", model.arch_id},
        {"layer_dims", model.layer_dims},
        {"normalization_scale", model.normalization_scale},
        {"activation", "softplus"},
    };
    std::string hdr = header.dump();
    std::string blob = "MBDM";
    put_u32(blob, 1);
    put_u32(blob, static_cast<std::uint32_t>(hdr.size()));
    blob += hdr;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        for (double v : model.weights[l]) put_f64(blob, v);
        for (double v : model.biases[l]) put_f64(blob, v);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

DetectorModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string blob = ss.str();

    if (blob.size() < 12 || blob.compare(0, 4, "MBDM") != 0) {
        throw Error(ErrorCode::FormatError, path + " is not a model file");
    }
    std::size_t pos = 4;
    std::uint32_t version = get_u32(blob, pos);
    if (version != 1) throw Error(ErrorCode::FormatError, "unsupported model version");
    std::uint32_t hdr_len = get_u32(blob, pos);
    if (pos + hdr_len > blob.size()) throw Error(ErrorCode::FormatError, "truncated model header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(pos, hdr_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("bad model header: ") + e.what());
    }
    pos += hdr_len;

    DetectorModel m;
    try {
        m.arch_id = header.at("arch_id").get<std::string>();
        m.layer_dims = header.at("layer_dims").get<std::vector<std::size_t>>();
        m.normalization_scale = header.at("normalization_scale").get<double>();
        if (header.at("activation").get<std::string>() != "softplus") {
            throw Error(ErrorCode::FormatError, "unsupported activation");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("bad model header: ") + e.what());
    }
    if (m.layer_dims.size() < 2) throw Error(ErrorCode::FormatError, "bad layer_dims");

    for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
        std::size_t fan_in = m.layer_dims[l], fan_out = m.layer_dims[l + 1];
        std::vector<double> w(fan_in * fan_out);
        for (double& v : w) v = get_f64(blob, pos);
        std::vector<double> b(fan_out);
        for (double& v : b) v = get_f64(blob, pos);
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    if (pos != blob.size()) throw Error(ErrorCode::FormatError, "trailing bytes in model file");
    check_model(m);
    return m;
}

}  // namespace mockingbird
