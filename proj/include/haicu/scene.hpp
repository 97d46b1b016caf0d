#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace haicu {

using Vec2 = Eigen::Vector2d;

/// Number of scalar state dimensions: position, velocity, acceleration.
inline constexpr int kStateDims = 6;
inline constexpr double kDefaultDt = 0.1;
inline constexpr double kDefaultInteractionRadius = 10.0;

struct AgentState {
    Vec2 position = Vec2::Zero();      // [m]
    Vec2 velocity = Vec2::Zero();      // [m/s]
    Vec2 acceleration = Vec2::Zero();  // [m/s^2]
    int timestep = 0;

    bool finite() const;
    /// (px, py, vx, vy, ax, ay)
    std::array<double, kStateDims> as_array() const;
};

/// A point on the (K-1)-simplex.
///
/// Inputs whose sum is within 1e-3 of one are renormalized; anything further
/// off, negative, or non-finite throws SimplexViolation.
class ClassProbVector {
public:
    static constexpr double kSumTolerance = 1e-6;
    static constexpr double kRenormTolerance = 1e-3;

    ClassProbVector() = default;
    explicit ClassProbVector(std::vector<double> probs);

    static ClassProbVector uniform(int num_classes);
    static ClassProbVector one_hot(int num_classes, int cls);

    int size() const { return static_cast<int>(probs_.size()); }
    double operator[](int k) const { return probs_[static_cast<std::size_t>(k)]; }
    std::span<const double> values() const { return probs_; }

    /// Ties go to the lowest class index.
    int argmax() const;
    bool is_one_hot() const;

    friend bool operator==(const ClassProbVector&, const ClassProbVector&) = default;

private:
    std::vector<double> probs_;
};

/// -sum_k p_k ln p_k with 0 ln 0 := 0, in nats.
double class_entropy(const ClassProbVector& c);

struct AgentTrack {
    std::string agent_id;
    std::vector<AgentState> states;  // sorted by timestep
    std::vector<ClassProbVector> class_probs;
    std::optional<int> true_class;

    bool empty() const { return states.empty(); }
    int first_timestep() const { return states.front().timestep; }
    int last_timestep() const { return states.back().timestep; }

    /// Index into states/class_probs for timestep t.
    std::optional<std::size_t> index_of(int timestep) const;

    /// Half-open [begin, end) index ranges of contiguous timesteps.
    std::vector<std::pair<std::size_t, std::size_t>> segments() const;

    /// Per-timestep argmax classes.
    std::vector<int> argmax_sequence() const;

    /// Most frequent argmax class over the track, lowest index on ties.
    int modal_class() const;
};

struct Scene {
    std::string scene_id;
    double dt = kDefaultDt;
    std::vector<std::string> class_names;
    std::vector<AgentTrack> tracks;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    const AgentTrack* find_track(const std::string& agent_id) const;

    int first_timestep() const;
    int last_timestep() const;

    /// (track index, state index) for every agent present at `timestep`.
    std::vector<std::pair<std::size_t, std::size_t>> present_at(int timestep) const;
    /// N(t).
    std::size_t num_agents_at(int timestep) const { return present_at(timestep).size(); }
};

/// Throws InvariantViolation naming the agent and timestep on the first
/// broken invariant (unsorted or duplicate timesteps, mismatched lengths,
/// non-finite states, K disagreement, true_class out of range).
void validate_scene(const Scene& scene);

/// Recomputes velocities and/or accelerations by finite differences of the
/// positions (central differences inside a segment, one-sided at its ends).
void finite_difference_derivatives(AgentTrack& track, double dt, bool velocities,
                                   bool accelerations);

struct SceneGraph {
    int timestep = 0;
    double distance_threshold = kDefaultInteractionRadius;
    std::vector<std::string> nodes;
    /// Unordered pairs stored with first < second.
    std::vector<std::pair<std::string, std::string>> edges;

    bool has_edge(const std::string& a, const std::string& b) const;
    std::vector<std::string> neighbors(const std::string& agent_id) const;
};

/// Undirected edge (i, j) iff ||p_i - p_j|| <= d at `timestep`.
SceneGraph build_scene_graph(const Scene& scene, int timestep,
                             double d = kDefaultInteractionRadius);

}  // namespace haicu
