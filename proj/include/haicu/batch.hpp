#pragma once

#include "haicu/scene.hpp"

#include <torch/torch.h>

#include <span>
#include <string>
#include <vector>

namespace haicu {

struct BatchOptions {
    int history = 20;  // H; histories hold H + 1 steps ending at the prediction time
    int horizon = 20;  // T
    double interaction_radius = kDefaultInteractionRadius;
    /// true: neighbours are every agent adjacent at some history step and only
    /// contribute at the steps where they are adjacent. false: neighbours are
    /// frozen at the prediction time and contribute whenever observed.
    bool edge_window_union = true;
    bool require_future = true;
};

/// One prediction problem: agent `track` of scene `scene` at time `timestep`.
struct SampleRef {
    std::size_t scene = 0;
    std::size_t track = 0;
    int timestep = 0;
};

/// Every (agent, timestep) with the agent observed at the timestep and, when
/// require_future is set, observed at each of the next `horizon` steps.
/// `stride` keeps every stride-th eligible timestep per agent.
std::vector<SampleRef> enumerate_samples(const std::vector<Scene>& scenes,
                                         const BatchOptions& opts, int stride = 1);

/// Tensorized histories. All tensors are double precision in scene
/// coordinates. Missing history steps are front-padded with zeros and masked.
struct ObservationBatch {
    torch::Tensor states;  // (B, H+1, 6)  px py vx vy ax ay
    torch::Tensor probs;   // (B, H+1, K)
    torch::Tensor mask;    // (B, H+1) bool

    torch::Tensor neighbor_states;  // (M, H+1, 6)
    torch::Tensor neighbor_probs;   // (M, H+1, K)
    torch::Tensor neighbor_mask;    // (M, H+1) bool, step contributes to the edge sum
    torch::Tensor neighbor_owner;   // (M) int64 index of the ego row

    torch::Tensor future;  // (B, T, 2) absolute positions; undefined without futures

    std::vector<std::string> scene_ids;
    std::vector<std::string> agent_ids;
    std::vector<std::string> neighbor_ids;
    std::vector<int> timesteps;
    std::vector<int> first_timesteps;  // earliest observed history step per row
    std::vector<int> modal_classes;    // modal argmax class of each ego track
    std::vector<std::string> class_names;
    double dt = kDefaultDt;

    int64_t size() const { return states.defined() ? states.size(0) : 0; }
    int history_steps() const { return static_cast<int>(states.size(1)); }
    int num_classes() const { return static_cast<int>(probs.size(2)); }
    bool has_future() const { return future.defined(); }
    /// Rows of this batch in order, neighbours re-indexed accordingly.
    ObservationBatch select(std::span<const int64_t> rows) const;
};

ObservationBatch make_batch(const std::vector<Scene>& scenes, std::span<const SampleRef> samples,
                            const BatchOptions& opts);

/// Batch for every agent observed at `timestep` in one scene (no futures).
ObservationBatch make_scene_batch(const Scene& scene, int timestep, const BatchOptions& opts);

}  // namespace haicu
