#pragma once

#include "haicu/scene.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace haicu {

// ---------------------------------------------------------------------------
// Scene files: one JSON object per line.

struct RejectedScene {
    enum class Kind { simplex, invariant };
    std::size_t line = 0;
    std::string scene_id;
    Kind kind = Kind::invariant;
    std::string reason;
};

struct SceneLoad {
    std::vector<Scene> scenes;
    std::vector<RejectedScene> rejected;
};

/// Parses line-delimited scene records. Malformed JSON or schema errors throw
/// ParseError; scenes that parse but break an invariant are collected in
/// `rejected` and skipped.
SceneLoad parse_scenes(std::istream& in);

/// Strict loader: throws on the first rejected scene (SimplexViolation or
/// InvariantViolation) in addition to the ParseError cases.
std::vector<Scene> load_scenes(const std::filesystem::path& path);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

void write_scenes(std::ostream& out, const std::vector<Scene>& scenes);
void write_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes);

// ---------------------------------------------------------------------------
// Synthetic data.

/// Surrogate for an onboard classifier. The perceived mode of each track is
/// drawn from the confusion row of its true class and resampled to a
/// different class with probability `switch_rate` per step. Each step's
/// probability vector is a Dirichlet draw centred on the confusion row of the
/// current mode. `ambiguity` (per track, uniform in [min, max]) blends both
/// the mode distribution and the Dirichlet centre toward uniform, so that
/// vague vectors are also less reliable ones.
struct PerceptionNoiseModel {
    std::vector<std::vector<double>> confusion;
    /// Dirichlet concentration; infinity puts every vector on its centre.
    double concentration = 50.0;
    double switch_rate = 0.0;
    double ambiguity_min = 0.0;
    double ambiguity_max = 0.0;
    /// Fraction of tracks that receive exactly one additional forced switch.
    double planted_switch_fraction = 0.0;

    static PerceptionNoiseModel identity(int num_classes);
    void validate(int num_classes) const;
};

struct ClassKinematics {
    std::string name;
    double speed_min = 1.0;          // [m/s]
    double speed_max = 2.0;          // [m/s]
    double speed_noise = 0.2;        // std of longitudinal acceleration [m/s^2]
    double heading_rate_std = 0.1;   // stationary std of the heading rate [rad/s]
    double heading_rate_tau = 1.0;   // correlation time of the heading rate [s]
    double frequency = 1.0;          // relative class frequency
};

struct GeneratorConfig {
    std::vector<ClassKinematics> classes;
    int num_scenes = 10;
    int agents_min = 4;
    int agents_max = 8;
    int scene_length = 60;        // timesteps
    int min_track_length = 25;    // timesteps
    double dt = kDefaultDt;
    double arena_half_width = 25.0;  // [m]

    std::vector<std::string> class_names() const;
    void validate() const;
};

GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json generator_config_to_json(const GeneratorConfig& cfg);
PerceptionNoiseModel noise_model_from_json(const nlohmann::json& j, int num_classes);
nlohmann::json noise_model_to_json(const PerceptionNoiseModel& noise);

/// Deterministic in `seed`.
std::vector<Scene> generate_synthetic(const GeneratorConfig& cfg,
                                      const PerceptionNoiseModel& noise, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Splits and augmentation.

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
};

/// Shuffles by seed, then train = floor(0.7 n), val = max(1, floor(0.15 n)),
/// test = remainder; train is capped at n - 2 so every part is nonempty.
DatasetSplit split_scenes(const std::vector<Scene>& scenes, std::uint64_t seed);

struct AugmentationConfig {
    double rotation_step = 15.0;  // degrees
    bool enabled = true;

    void validate() const;
    /// 0, step, 2 step, ... < 360.
    std::vector<double> angles() const;
};

/// Rotates every position, velocity and acceleration by `gamma_deg` about the
/// scene origin.
Scene rotate_scene(const Scene& scene, double gamma_deg);

// ---------------------------------------------------------------------------
// Uncertainty statistics.

struct ClassSwitch {
    int timestep = 0;
    int from_class = 0;
    int to_class = 0;
};

struct SwitchReport {
    int count = 0;
    std::vector<ClassSwitch> switches;
    int distinct_classes = 0;
};

/// A switch is recorded wherever the argmax class differs from the previous
/// observation's. Tracks with fewer than two observations yield an empty
/// report.
SwitchReport detect_class_switches(const AgentTrack& track);

/// Centred majority vote over argmax classes, truncated at segment
/// boundaries. Ties go to the centre's own class when it is among the tied
/// winners, otherwise to the lowest class index. Each probability vector is
/// replaced by the one-hot of its vote winner.
AgentTrack majority_vote_smooth(const AgentTrack& track, int window = 5);

struct ClassStatistics {
    std::string name;
    long count = 0;
    double percent = 0.0;
    double mean_entropy = 0.0;  // mean over agents of per-agent mean S_probs [nats]
};

struct DatasetStatistics {
    long num_scenes = 0;
    long num_agents = 0;
    long num_observations = 0;
    double mean_entropy = 0.0;
    std::vector<ClassStatistics> classes;  // agents grouped by modal argmax class
    double switching_agent_fraction = 0.0;
    long total_switches = 0;
    /// Switches that survive 5-step majority-vote smoothing.
    long switches_after_smoothing = 0;
    std::map<std::string, long> switch_histogram;  // "from->to"
    /// Mean probability of the most likely class, indexed by track age.
    std::vector<double> max_prob_by_age;
    /// Per-timestep rate of argmax changes over all consecutive observation pairs.
    double switch_rate_per_step = 0.0;

    nlohmann::json to_json() const;
};

DatasetStatistics dataset_statistics(const std::vector<Scene>& scenes);

struct ConfusionReport {
    std::vector<std::vector<double>> matrix;  // rows: true class, cols: predicted
    std::vector<long> row_counts;
    std::vector<double> top_k;  // top_k[k-1], k = 1..min(5, K)

    nlohmann::json to_json() const;
};

/// Per-track prediction is the modal argmax class; top-k ranks classes by the
/// track's mean probability vector.
ConfusionReport confusion_and_topk(const std::vector<AgentTrack>& tracks, int num_classes);

}  // namespace haicu
