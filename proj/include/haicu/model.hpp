#pragma once

#include "haicu/batch.hpp"
#include "haicu/dynamics.hpp"

#include <json.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace haicu {

enum class Variant { full_probs, one_hot, multi_head };
enum class DynamicsKind { single_integrator, unicycle };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string to_string(DynamicsKind d);

struct ModelConfig {
    int state_dims = kStateDims;
    int num_classes = 11;
    int history = 20;
    int horizon = 20;
    int node_hidden = 32;
    int edge_hidden = 8;
    int future_hidden = 32;  // per direction
    int decoder_hidden = 128;
    int latent_hidden = 32;  // width of the prior and posterior MLPs
    int latent = 25;         // |Z|
    Variant variant = Variant::full_probs;
    std::vector<std::string> class_names;
    /// Classes decoded with the unicycle head in the multi_head variant.
    std::vector<std::string> vehicle_classes = {"car", "truck", "bus", "vehicle"};
    double dt = kDefaultDt;
    double interaction_radius = kDefaultInteractionRadius;
    bool edge_window_union = true;
    // Fixed input/output normalisation.
    double position_scale = 10.0;     // [m]
    double velocity_scale = 5.0;      // [m/s]
    double acceleration_scale = 3.0;  // [m/s^2]
    double heading_rate_scale = 1.0;  // [rad/s]
    double log_sigma_min = -6.0;
    double log_sigma_max = 3.0;

    void validate() const;
    /// Input width of both recurrent encoders.
    int encoder_input() const;
    int embedding() const { return node_hidden + edge_hidden; }
    int num_heads() const { return variant == Variant::multi_head ? num_classes : 1; }
    DynamicsKind head_dynamics(int head) const;
    BatchOptions batch_options(int horizon_steps, bool require_future) const;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

/// Network inputs derived from an ObservationBatch: positions relative to
/// each agent's current position, fixed scaling, variant-specific class
/// encoding, and the neighbour sum already formed.
struct PreparedInputs {
    torch::Tensor node;        // (B, H+1, F)
    torch::Tensor edge;        // (B, H+1, F)
    torch::Tensor mask;        // (B, H+1) bool
    torch::Tensor origin;      // (B, 2) current position [m]
    torch::Tensor velocity;    // (B, 2) current velocity [m/s]
    torch::Tensor class_now;   // (B, K) current class probabilities
    torch::Tensor future;      // (B, T, 2) relative to origin [m], may be undefined

    int64_t size() const { return node.size(0); }
    PreparedInputs index(const torch::Tensor& rows) const;
    /// Rotates every 2-vector block about the agent's own position.
    PreparedInputs rotated(const torch::Tensor& angles_rad) const;
    PreparedInputs to(torch::Dtype dtype) const;
};

PreparedInputs prepare_inputs(const ObservationBatch& batch, const ModelConfig& cfg);

/// Per-timestep position Gaussian mixture for every row of a batch. A
/// component is one (latent mode, head) pair; weights sum to one per row.
struct TrajectoryDistribution {
    torch::Tensor log_weights;   // (B, M)
    torch::Tensor mean;          // (B, M, T, 2) absolute [m]
    torch::Tensor cov;           // (B, M, T, 2, 2) [m^2], double
    torch::Tensor control_mean;  // (B, M, T, 2)
    torch::Tensor control_cov;   // (B, M, T, 2, 2)
    std::vector<DynamicsKind> component_dynamics;  // (M)
    std::vector<int> component_mode;               // latent index per component
    std::vector<int> component_head;               // head index per component
    torch::Tensor origin;    // (B, 2)
    torch::Tensor velocity;  // (B, 2)
    double dt = kDefaultDt;

    int64_t batch_size() const { return mean.size(0); }
    int64_t num_components() const { return mean.size(1); }
    int64_t horizon() const { return mean.size(2); }
    torch::Tensor weights() const { return log_weights.exp(); }
    /// log of the mixture density of positions `pos` (B, T, 2), per step (B, T).
    torch::Tensor log_density(const torch::Tensor& pos) const;
    /// Mean trajectory of the heaviest component, (B, T, 2).
    torch::Tensor most_likely() const;
    /// Ancestral samples (B, n, T, 2): component, then per-step controls, then integration.
    torch::Tensor sample(int n, std::uint64_t seed) const;
    /// Mixture differential entropy per step (B, T) [nats], deterministic
    /// sigma-point estimate; exact for a single Gaussian component.
    torch::Tensor entropy() const;
    /// Truncates to the first `steps` steps.
    TrajectoryDistribution first_steps(int steps) const;
};

/// Log-density of bivariate Gaussians, broadcasting over leading dims.
torch::Tensor gaussian2_log_prob(const torch::Tensor& x, const torch::Tensor& mean,
                                 const torch::Tensor& cov);

inline constexpr double kCovarianceFloor = 1e-8;

struct DecoderOutput {
    torch::Tensor control_mean;  // (B, Z, T, 2) physical units
    torch::Tensor control_cov;   // (B, Z, T, 2, 2)
    torch::Tensor position_mean; // (B, Z, T, 2) relative to origin
    torch::Tensor position_cov;  // (B, Z, T, 2, 2) floored, always double
};

class HaicuNetImpl : public torch::nn::Module {
public:
    explicit HaicuNetImpl(ModelConfig cfg);

    const ModelConfig& config() const { return cfg_; }

    struct Encoding {
        torch::Tensor ex;      // (B, E)
        torch::Tensor node_h;  // (B, node_hidden)
    };
    Encoding encode(const PreparedInputs& in);
    torch::Tensor prior_logits(const torch::Tensor& ex);
    torch::Tensor posterior_logits(const Encoding& enc, const torch::Tensor& future_rel);
    /// All latent modes of one head over `steps` steps.
    DecoderOutput decode(const Encoding& enc, const PreparedInputs& in, int head, int steps);

    /// Full predictive distribution under the prior.
    TrajectoryDistribution distribution(const PreparedInputs& in, int steps);

private:
    ModelConfig cfg_;
    torch::nn::LSTMCell node_lstm_{nullptr};
    torch::nn::LSTMCell edge_lstm_{nullptr};
    torch::nn::Sequential prior_{nullptr};
    torch::nn::Sequential posterior_{nullptr};
    torch::nn::Linear future_h0_{nullptr};
    torch::nn::Linear future_c0_{nullptr};
    torch::nn::LSTMCell future_fwd_{nullptr};
    torch::nn::LSTMCell future_bwd_{nullptr};
    std::vector<torch::nn::Linear> dec_init_;
    std::vector<torch::nn::GRUCell> dec_gru_;
    std::vector<torch::nn::Linear> dec_out_;
};
TORCH_MODULE(HaicuNet);

/// Builds a model with deterministic initialisation from `seed`.
HaicuNet make_model(const ModelConfig& cfg, std::uint64_t seed);

/// Runs the network without gradients on a raw batch; `steps` defaults to
/// the configured horizon and may exceed it.
TrajectoryDistribution predict(HaicuNet& model, const ObservationBatch& batch,
                               std::optional<int> steps = std::nullopt);

int64_t count_parameters(HaicuNet& model);
/// 2 x multiply-accumulates over one inference pass for a scene with
/// `n_nodes` agents and `n_edges` undirected edges.
double count_flops(const ModelConfig& cfg, int64_t n_nodes, int64_t n_edges);

}  // namespace haicu
