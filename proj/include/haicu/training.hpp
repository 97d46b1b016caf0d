#pragma once

#include "haicu/dataset.hpp"
#include "haicu/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace haicu {

/// beta(i) = start + (end - start) * sigmoid((i - midpoint) / steepness).
/// Negative midpoint/steepness mean "derive from the run length": midpoint
/// at 25% of the total iterations, steepness a tenth of the midpoint.
struct BetaSchedule {
    double start = 0.01;
    double end = 1.0;
    double midpoint = -1.0;
    double steepness = -1.0;

    void validate() const;
    BetaSchedule resolved(long total_iterations) const;
};

double beta_at(long iteration, const BetaSchedule& schedule);

struct TrainingConfig {
    BetaSchedule beta;
    double learning_rate = 1e-3;
    int batch_size = 256;
    int max_epochs = 100;
    int patience = 5;  // epochs without validation ANLL improvement
    std::uint64_t seed = 0;
    double mi_weight = 1.0;
    double grad_clip = 1.0;  // global L2 norm; 0 disables
    AugmentationConfig augmentation;
    int sample_stride = 1;  // keep every n-th eligible timestep per agent
    int val_stride = 1;
    bool double_precision = false;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainingConfig from_json(const nlohmann::json& j);
};

struct LossTerms {
    torch::Tensor loss;            // scalar, negated objective
    torch::Tensor reconstruction;  // batch mean of E_q[log p(y | x, z)]
    torch::Tensor kl;              // batch mean of KL(q || p)
    torch::Tensor mutual_info;     // batch estimate of I_q
};

/// Exact enumeration over all latent values; requires inputs with futures.
LossTerms elbo_loss(HaicuNet& model, const PreparedInputs& in, double beta, double mi_weight = 1.0);

/// Prepares samples in chunks; concatenates along the batch dimension.
PreparedInputs prepare_samples(const std::vector<Scene>& scenes, const ModelConfig& cfg,
                               int horizon_steps, int stride, torch::Dtype dtype);

struct CurvePoint {
    int epoch = 0;
    double train_loss = 0.0;
    double val_ade = 0.0;
    double val_anll = 0.0;
    double beta = 0.0;
    nlohmann::json to_json() const;
};

struct TrainResult {
    std::vector<CurvePoint> curve;
    int best_epoch = 0;
    double best_val_anll = 0.0;
    long iterations = 0;
};

/// Validation ADE (most likely mode) and ANLL at the configured horizon.
std::pair<double, double> validation_metrics(HaicuNet& model, const PreparedInputs& val);

/// Trains in place and leaves the best-validation weights in `model`. Each
/// epoch's curve point is also written as a JSON line to `curve_log` when
/// given. Throws Divergence naming the global batch index on a non-finite loss.
TrainResult train(HaicuNet& model, const std::vector<Scene>& train_scenes,
                  const std::vector<Scene>& val_scenes, const TrainingConfig& cfg,
                  std::ostream* curve_log = nullptr);

}  // namespace haicu
