#pragma once

// Burst-vector classifier used both as the defender's detector and as the
// simulated attacker. A small MLP: affine layers with softplus hidden
// activations and a softmax head. Softplus keeps the model smooth everywhere,
// so exact input gradients can be validated against finite differences.
//
// Inputs are normalized by the maximum burst magnitude seen at training time
// (normalization_scale); gradients are taken with respect to the normalized
// input vector. Training is plain mini-batch SGD with momentum, run serially
// so a fixed seed reproduces parameters bit for bit.

#include <cstdint>
#include <string>
#include <vector>

#include "mockingbird/dataset.hpp"
#include "mockingbird/trace.hpp"

namespace mockingbird {

struct DetectorModel {
    std::string arch_id = "mlp";
    std::vector<std::size_t> layer_dims;        // input, hidden..., classes
    std::vector<std::vector<double>> weights;   // per layer, row-major out x in
    std::vector<std::vector<double>> biases;    // per layer
    double normalization_scale = 1.0;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t classes() const { return layer_dims.back(); }
};

struct TrainConfig {
    std::vector<std::size_t> hidden_dims = {128};
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    double learning_rate = 0.1;
    double momentum = 0.9;
    std::uint64_t seed = 1;
};

// Scalar objectives over the softmax output F:
//   ProbaOfClass     F_c
//   CwTargeted       max_{i != t} F_i - F_t    (<= 0 once t wins the argmax)
//   CwUntargeted     F_y - max_{i != y} F_i    (<= 0 once y loses the argmax)
struct Objective {
    enum class Kind { ProbaOfClass, CwTargeted, CwUntargeted };
    Kind kind = Kind::ProbaOfClass;
    int cls = 0;
};

inline Objective proba_of_class(int c) { return {Objective::Kind::ProbaOfClass, c}; }
inline Objective cw_targeted(int t) { return {Objective::Kind::CwTargeted, t}; }
inline Objective cw_untargeted(int y) { return {Objective::Kind::CwUntargeted, y}; }

DetectorModel train_detector(const BurstDataset& train, const TrainConfig& cfg);

// Class probabilities; sums to 1. The trace is normalized internally.
std::vector<double> predict_proba(const DetectorModel& model, const BurstTrace& trace);
// Same, for an input already divided by normalization_scale.
std::vector<double> predict_proba_normalized(const DetectorModel& model,
                                             const std::vector<double>& xnorm);

double objective_value(const DetectorModel& model, const std::vector<double>& xnorm,
                       const Objective& objective);

// Exact gradient of the objective with respect to the normalized input.
std::vector<double> input_gradient(const DetectorModel& model, const BurstTrace& trace,
                                   const Objective& objective);
std::vector<double> input_gradient_normalized(const DetectorModel& model,
                                              const std::vector<double>& xnorm,
                                              const Objective& objective);

// The k most probable labels, most probable first; ties break toward the
// lower class id. 1 <= k <= classes.
std::vector<int> top_k_labels(const DetectorModel& model, const BurstTrace& trace, std::size_t k);
std::vector<int> top_k_from_proba(const std::vector<double>& proba, std::size_t k);

double accuracy(const DetectorModel& model, const BurstDataset& dataset);

// Self-describing binary file: magic, version, a JSON header with the
// architecture and normalization scale, then parameters as little-endian
// 64-bit floats. Round-trips bit for bit.
void save_model(const DetectorModel& model, const std::string& path);
DetectorModel load_model(const std::string& path);

}  // namespace mockingbird
