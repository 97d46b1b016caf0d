#pragma once

#include "haicu/model.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace haicu {

enum class OverrideMode { keep, uniform, one_hot, custom, interpolate };
enum class InterpolationPath { simplex, logit };

std::string to_string(OverrideMode m);
OverrideMode override_mode_from_string(const std::string& s);

/// Replacement rule for one agent's class probabilities. `agent_id` "*"
/// matches every agent.
struct AgentOverride {
    std::string agent_id;
    OverrideMode mode = OverrideMode::keep;
    int class_index = 0;              // one_hot
    std::vector<double> probs;        // custom, or the interpolation target
    double lambda = 0.0;              // interpolate: 0 keeps the original
    InterpolationPath path = InterpolationPath::simplex;
    std::vector<int> timesteps;       // absolute timesteps to touch; empty = whole history
};

struct CounterfactualSpec {
    std::vector<AgentOverride> overrides;

    /// Checks simplex vectors, class indices and lambda against K classes.
    void validate(int num_classes) const;
    nlohmann::json to_json(const std::vector<std::string>& class_names) const;
    /// `class` may be a name from `class_names` or an index.
    static CounterfactualSpec from_json(const nlohmann::json& j, const std::vector<std::string>& class_names);
};

/// Interpolated probability vector; exact endpoints at lambda 0 and 1.
std::vector<double> interpolate_probs(const std::vector<double>& from, const std::vector<double>& to,
                                      double lambda, InterpolationPath path);

/// Copy of `batch` with class probabilities replaced for every ego and
/// neighbour row of the named agents. Throws NotFound for an agent absent
/// from the batch and SimplexViolation for an invalid vector.
ObservationBatch apply_counterfactual(const ObservationBatch& batch, const CounterfactualSpec& spec);

struct ProbePoint {
    double lambda = 0.0;
    double divergence = 0.0;   // mean mode-mean displacement [m] + weight total variation
    double uncertainty = 0.0;  // mean mixture differential entropy per step [nats]
};

/// Interpolates `agent_id` toward `target` over `lambdas` and compares each
/// prediction of that agent with the lambda = 0 prediction.
std::vector<ProbePoint> probe_smoothness(HaicuNet& model, const ObservationBatch& batch,
                                         const std::string& agent_id, const std::vector<double>& target,
                                         const std::vector<double>& lambdas,
                                         InterpolationPath path = InterpolationPath::simplex,
                                         std::optional<int> steps = std::nullopt);

/// Max over consecutive segments of the divergence slope divided by the
/// steepest other segment. A jump discontinuity shows up far above 1.
double jump_ratio(const std::vector<ProbePoint>& curve);

/// n evenly spaced values on [0, 1].
std::vector<double> lambda_grid(int n);

}  // namespace haicu
