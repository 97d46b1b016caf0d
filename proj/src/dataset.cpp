#include "haicu/dataset.hpp"

#include "haicu/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace haicu {

using nlohmann::json;

namespace {

// Parse failures inside one record; converted to ParseError with a line number.
struct SchemaError {
    std::string reason;
};

const json& require(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError{std::string("missing field '") + key + "'"};
    return *it;
}

double number(const json& v, const char* key) {
    if (!v.is_number()) throw SchemaError{std::string("field '") + key + "' is not a number"};
    return v.get<double>();
}

std::string opaque_id(const json& v, const char* key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw SchemaError{std::string("field '") + key + "' is not a string"};
}

Scene read_scene_record(const json& j) {
    if (!j.is_object()) throw SchemaError{"record is not an object"};
    Scene scene;
    scene.scene_id = opaque_id(require(j, "scene_id"), "scene_id");
    if (auto it = j.find("dt"); it != j.end()) scene.dt = number(*it, "dt");
    const auto& names = require(j, "class_names");
    if (!names.is_array() || names.empty()) throw SchemaError{"class_names must be a nonempty array"};
    for (const auto& n : names) {
        if (!n.is_string()) throw SchemaError{"class_names entries must be strings"};
        scene.class_names.push_back(n.get<std::string>());
    }
    const auto k = scene.class_names.size();
    const auto& agents = require(j, "agents");
    if (!agents.is_array()) throw SchemaError{"agents must be an array"};
    for (const auto& a : agents) {
        if (!a.is_object()) throw SchemaError{"agent is not an object"};
        AgentTrack track;
        track.agent_id = opaque_id(require(a, "agent_id"), "agent_id");
        if (auto it = a.find("true_class"); it != a.end() && !it->is_null()) {
            if (!it->is_number_integer()) throw SchemaError{"true_class must be an integer"};
            track.true_class = it->get<int>();
        }
        const auto& steps = require(a, "steps");
        if (!steps.is_array()) throw SchemaError{"steps must be an array"};
        bool have_vel = true;
        bool have_acc = true;
        std::vector<std::pair<AgentState, std::vector<double>>> rows;
        for (const auto& s : steps) {
            if (!s.is_object()) throw SchemaError{"step is not an object"};
            AgentState st;
            const auto& t = require(s, "t");
            if (!t.is_number_integer()) throw SchemaError{"field 't' must be an integer"};
            st.timestep = t.get<int>();
            st.position = {number(require(s, "px"), "px"), number(require(s, "py"), "py")};
            if (s.contains("vx") && s.contains("vy")) {
                st.velocity = {number(s["vx"], "vx"), number(s["vy"], "vy")};
            } else {
                have_vel = false;
            }
            if (s.contains("ax") && s.contains("ay")) {
                st.acceleration = {number(s["ax"], "ax"), number(s["ay"], "ay")};
            } else {
                have_acc = false;
            }
            const auto& probs = require(s, "probs");
            if (!probs.is_array()) throw SchemaError{"probs must be an array"};
            std::vector<double> p;
            for (const auto& v : probs) p.push_back(number(v, "probs"));
            if (p.size() != k) {
                throw SchemaError{"agent " + track.agent_id + ", t=" +
                                  std::to_string(st.timestep) + ": expected " +
                                  std::to_string(k) + " probabilities"};
            }
            rows.emplace_back(st, std::move(p));
        }
        std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
            return x.first.timestep < y.first.timestep;
        });
        for (auto& [st, p] : rows) {
            try {
                track.class_probs.emplace_back(std::move(p));
            } catch (const SimplexViolation& e) {
                throw SimplexViolation("agent " + track.agent_id + ", timestep " +
                                       std::to_string(st.timestep) + ": " + e.what());
            }
            track.states.push_back(st);
        }
        if (!have_vel || !have_acc) {
            finite_difference_derivatives(track, scene.dt, !have_vel, !have_vel || !have_acc);
        }
        scene.tracks.push_back(std::move(track));
    }
    return scene;
}

}  // namespace

Scene scene_from_json(const json& j) {
    try {
        return read_scene_record(j);
    } catch (const SchemaError& e) {
        throw ParseError(0, e.reason);
    }
}

SceneLoad parse_scenes(std::istream& in) {
    SceneLoad out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(lineno, e.what());
        }
        std::string id = j.is_object() && j.contains("scene_id") ? j["scene_id"].dump() : "?";
        try {
            Scene scene = read_scene_record(j);
            validate_scene(scene);
            out.scenes.push_back(std::move(scene));
        } catch (const SchemaError& e) {
            throw ParseError(lineno, e.reason);
        } catch (const SimplexViolation& e) {
            out.rejected.push_back({lineno, id, RejectedScene::Kind::simplex, e.what()});
        } catch (const InvariantViolation& e) {
            out.rejected.push_back({lineno, id, RejectedScene::Kind::invariant, e.what()});
        }
    }
    return out;
}

std::vector<Scene> load_scenes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFound("scene file not found: " + path.string());
    SceneLoad load = parse_scenes(in);
    if (!load.rejected.empty()) {
        const auto& r = load.rejected.front();
        const std::string msg = "line " + std::to_string(r.line) + ", scene " + r.scene_id +
                                ": " + r.reason;
        if (r.kind == RejectedScene::Kind::simplex) throw SimplexViolation(msg);
        throw InvariantViolation(msg);
    }
    return std::move(load.scenes);
}

json scene_to_json(const Scene& scene) {
    json agents = json::array();
    for (const auto& track : scene.tracks) {
        json steps = json::array();
        for (std::size_t i = 0; i < track.states.size(); ++i) {
            const auto& s = track.states[i];
            steps.push_back({{"t", s.timestep},
                             {"px", s.position.x()},
                             {"py", s.position.y()},
                             {"vx", s.velocity.x()},
                             {"vy", s.velocity.y()},
                             {"ax", s.acceleration.x()},
                             {"ay", s.acceleration.y()},
                             {"probs", std::vector<double>(track.class_probs[i].values().begin(),
                                                           track.class_probs[i].values().end())}});
        }
        json a = {{"agent_id", track.agent_id}, {"steps", std::move(steps)}};
        if (track.true_class) a["true_class"] = *track.true_class;
        agents.push_back(std::move(a));
    }
    return {{"scene_id", scene.scene_id},
            {"dt", scene.dt},
            {"class_names", scene.class_names},
            {"agents", std::move(agents)}};
}

void write_scenes(std::ostream& out, const std::vector<Scene>& scenes) {
    for (const auto& s : scenes) out << scene_to_json(s).dump() << '\n';
}

void write_scenes(const std::filesystem::path& path, const std::vector<Scene>& scenes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidParameter("cannot write " + path.string());
    write_scenes(out, scenes);
}

// ---------------------------------------------------------------------------

PerceptionNoiseModel PerceptionNoiseModel::identity(int num_classes) {
    PerceptionNoiseModel m;
    m.confusion.assign(static_cast<std::size_t>(num_classes),
                       std::vector<double>(static_cast<std::size_t>(num_classes), 0.0));
    for (int k = 0; k < num_classes; ++k) m.confusion[k][k] = 1.0;
    m.concentration = std::numeric_limits<double>::infinity();
    return m;
}

void PerceptionNoiseModel::validate(int num_classes) const {
    if (static_cast<int>(confusion.size()) != num_classes) {
        throw InvalidParameter("confusion matrix must be K x K");
    }
    for (const auto& row : confusion) {
        if (static_cast<int>(row.size()) != num_classes) {
            throw InvalidParameter("confusion matrix must be K x K");
        }
        double sum = 0.0;
        for (double v : row) {
            if (!(v >= 0.0)) throw InvalidParameter("confusion entries must be nonnegative");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw InvalidParameter("confusion rows must sum to 1");
    }
    if (!(concentration > 0.0)) throw InvalidParameter("concentration must be positive");
    if (!(switch_rate >= 0.0 && switch_rate <= 1.0)) {
        throw InvalidParameter("switch_rate must lie in [0, 1]");
    }
    if (!(ambiguity_min >= 0.0 && ambiguity_max <= 1.0 && ambiguity_min <= ambiguity_max)) {
        throw InvalidParameter("ambiguity range must satisfy 0 <= min <= max <= 1");
    }
    if (!(planted_switch_fraction >= 0.0 && planted_switch_fraction <= 1.0)) {
        throw InvalidParameter("planted_switch_fraction must lie in [0, 1]");
    }
}

std::vector<std::string> GeneratorConfig::class_names() const {
    std::vector<std::string> out;
    for (const auto& c : classes) out.push_back(c.name);
    return out;
}

void GeneratorConfig::validate() const {
    if (classes.empty()) throw InvalidParameter("generator needs at least one class");
    for (const auto& c : classes) {
        if (c.name.empty()) throw InvalidParameter("class name must be nonempty");
        if (!(c.speed_min >= 0.0 && c.speed_max >= c.speed_min)) {
            throw InvalidParameter("class " + c.name + ": invalid speed range");
        }
        if (!(c.speed_noise >= 0.0 && c.heading_rate_std >= 0.0 && c.heading_rate_tau > 0.0 &&
              c.frequency > 0.0)) {
            throw InvalidParameter("class " + c.name + ": invalid kinematic parameters");
        }
    }
    if (num_scenes < 1 || agents_min < 1 || agents_max < agents_min || scene_length < 2 ||
        min_track_length < 1 || min_track_length > scene_length || !(dt > 0.0) ||
        !(arena_half_width > 0.0)) {
        throw InvalidParameter("generator counts and lengths must be positive and consistent");
    }
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

GeneratorConfig generator_config_from_json(const json& j) {
    GeneratorConfig cfg;
    if (!j.contains("classes") || !j["classes"].is_array()) {
        throw InvalidParameter("generator spec needs a 'classes' array");
    }
    for (const auto& c : j["classes"]) {
        ClassKinematics k;
        k.name = c.at("name").get<std::string>();
        read_opt(c, "speed_min", k.speed_min);
        read_opt(c, "speed_max", k.speed_max);
        read_opt(c, "speed_noise", k.speed_noise);
        read_opt(c, "heading_rate_std", k.heading_rate_std);
        read_opt(c, "heading_rate_tau", k.heading_rate_tau);
        read_opt(c, "frequency", k.frequency);
        cfg.classes.push_back(k);
    }
    read_opt(j, "num_scenes", cfg.num_scenes);
    read_opt(j, "agents_min", cfg.agents_min);
    read_opt(j, "agents_max", cfg.agents_max);
    read_opt(j, "scene_length", cfg.scene_length);
    read_opt(j, "min_track_length", cfg.min_track_length);
    read_opt(j, "dt", cfg.dt);
    read_opt(j, "arena_half_width", cfg.arena_half_width);
    cfg.validate();
    return cfg;
}

json generator_config_to_json(const GeneratorConfig& cfg) {
    json classes = json::array();
    for (const auto& c : cfg.classes) {
        classes.push_back({{"name", c.name},
                           {"speed_min", c.speed_min},
                           {"speed_max", c.speed_max},
                           {"speed_noise", c.speed_noise},
                           {"heading_rate_std", c.heading_rate_std},
                           {"heading_rate_tau", c.heading_rate_tau},
                           {"frequency", c.frequency}});
    }
    return {{"classes", classes},
            {"num_scenes", cfg.num_scenes},
            {"agents_min", cfg.agents_min},
            {"agents_max", cfg.agents_max},
            {"scene_length", cfg.scene_length},
            {"min_track_length", cfg.min_track_length},
            {"dt", cfg.dt},
            {"arena_half_width", cfg.arena_half_width}};
}

PerceptionNoiseModel noise_model_from_json(const json& j, int num_classes) {
    PerceptionNoiseModel m = PerceptionNoiseModel::identity(num_classes);
    read_opt(j, "confusion", m.confusion);
    if (auto it = j.find("concentration"); it != j.end()) {
        m.concentration = it->is_string() && it->get<std::string>() == "inf"
                              ? std::numeric_limits<double>::infinity()
                              : it->get<double>();
    }
    read_opt(j, "switch_rate", m.switch_rate);
    read_opt(j, "ambiguity_min", m.ambiguity_min);
    read_opt(j, "ambiguity_max", m.ambiguity_max);
    read_opt(j, "planted_switch_fraction", m.planted_switch_fraction);
    m.validate(num_classes);
    return m;
}

json noise_model_to_json(const PerceptionNoiseModel& m) {
    json conc = std::isinf(m.concentration) ? json("inf") : json(m.concentration);
    return {{"confusion", m.confusion},
            {"concentration", conc},
            {"switch_rate", m.switch_rate},
            {"ambiguity_min", m.ambiguity_min},
            {"ambiguity_max", m.ambiguity_max},
            {"planted_switch_fraction", m.planted_switch_fraction}};
}

namespace {

using Rng = std::mt19937_64;

std::vector<double> blend_uniform(const std::vector<double>& row, double a) {
    std::vector<double> out(row.size());
    const double u = 1.0 / static_cast<double>(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = (1.0 - a) * row[i] + a * u;
    return out;
}

int sample_categorical(const std::vector<double>& w, Rng& rng) {
    std::discrete_distribution<int> dist(w.begin(), w.end());
    return dist(rng);
}

int sample_switch_target(const std::vector<double>& base, int current, Rng& rng) {
    std::vector<double> w = base;
    w[static_cast<std::size_t>(current)] = 0.0;
    if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) {
        std::fill(w.begin(), w.end(), 1.0);
        w[static_cast<std::size_t>(current)] = 0.0;
    }
    return sample_categorical(w, rng);
}

std::vector<double> sample_dirichlet(const std::vector<double>& centre, double concentration,
                                     Rng& rng) {
    if (std::isinf(concentration)) return centre;
    std::vector<double> g(centre.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < centre.size(); ++i) {
        if (centre[i] <= 0.0) continue;
        std::gamma_distribution<double> gamma(concentration * centre[i], 1.0);
        g[i] = gamma(rng);
        sum += g[i];
    }
    if (!(sum > 0.0)) return centre;
    for (double& v : g) v /= sum;
    return g;
}

}  // namespace

std::vector<Scene> generate_synthetic(const GeneratorConfig& cfg,
                                      const PerceptionNoiseModel& noise, std::uint64_t seed) {
    cfg.validate();
    const int k = static_cast<int>(cfg.classes.size());
    noise.validate(k);
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> freq;
    for (const auto& c : cfg.classes) freq.push_back(c.frequency);

    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(cfg.num_scenes));
    for (int s = 0; s < cfg.num_scenes; ++s) {
        Scene scene;
        scene.scene_id = "synthetic_" + std::to_string(s);
        scene.dt = cfg.dt;
        scene.class_names = cfg.class_names();
        const int n_agents =
            std::uniform_int_distribution<int>(cfg.agents_min, cfg.agents_max)(rng);
        for (int a = 0; a < n_agents; ++a) {
            AgentTrack track;
            track.agent_id = "agent_" + std::to_string(a);
            const int cls = sample_categorical(freq, rng);
            track.true_class = cls;
            const auto& kin = cfg.classes[static_cast<std::size_t>(cls)];

            const int len =
                std::uniform_int_distribution<int>(cfg.min_track_length, cfg.scene_length)(rng);
            const int start = std::uniform_int_distribution<int>(0, cfg.scene_length - len)(rng);

            Vec2 pos(cfg.arena_half_width * (2.0 * unif(rng) - 1.0),
                     cfg.arena_half_width * (2.0 * unif(rng) - 1.0));
            double heading = 2.0 * std::numbers::pi * unif(rng);
            const double target = kin.speed_min + (kin.speed_max - kin.speed_min) * unif(rng);
            double speed = target;
            double omega = kin.heading_rate_std * normal(rng);
            const double decay = std::exp(-cfg.dt / kin.heading_rate_tau);
            const double drive = kin.heading_rate_std * std::sqrt(1.0 - decay * decay);

            // Perception surrogate state.
            const double ambiguity =
                noise.ambiguity_min + (noise.ambiguity_max - noise.ambiguity_min) * unif(rng);
            const auto mode_dist =
                blend_uniform(noise.confusion[static_cast<std::size_t>(cls)], ambiguity);
            int mode = sample_categorical(mode_dist, rng);
            const bool planted = unif(rng) < noise.planted_switch_fraction;
            const int planted_step =
                len > 1 ? std::uniform_int_distribution<int>(1, len - 1)(rng) : -1;

            for (int i = 0; i < len; ++i) {
                if (i > 0) {
                    omega = decay * omega + drive * normal(rng);
                    const double accel = (target - speed) + kin.speed_noise * normal(rng);
                    speed = std::max(0.0, speed + accel * cfg.dt);
                    heading += omega * cfg.dt;
                }
                AgentState st;
                st.timestep = start + i;
                st.velocity = speed * Vec2(std::cos(heading), std::sin(heading));
                if (i > 0) pos += st.velocity * cfg.dt;
                st.position = pos;
                track.states.push_back(st);

                if (i > 0) {
                    const bool natural = unif(rng) < noise.switch_rate;
                    if (natural || (planted && i == planted_step)) {
                        mode = sample_switch_target(mode_dist, mode, rng);
                    }
                }
                const auto centre =
                    blend_uniform(noise.confusion[static_cast<std::size_t>(mode)], ambiguity);
                track.class_probs.emplace_back(sample_dirichlet(centre, noise.concentration, rng));
            }
            finite_difference_derivatives(track, cfg.dt, false, true);
            scene.tracks.push_back(std::move(track));
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

// ---------------------------------------------------------------------------

DatasetSplit split_scenes(const std::vector<Scene>& scenes, std::uint64_t seed) {
    const std::size_t n = scenes.size();
    if (n < 3) throw InvalidParameter("need at least 3 scenes to split");
    std::vector<std::string> ids;
    for (const auto& s : scenes) ids.push_back(s.scene_id);
    Rng rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t n_train = std::min(n * 7 / 10, n - 2);
    const std::size_t n_val = std::max<std::size_t>(1, n * 15 / 100);
    DatasetSplit split;
    split.seed = seed;
    split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                     ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    return split;
}

void AugmentationConfig::validate() const {
    if (!(rotation_step > 0.0)) throw InvalidParameter("rotation_step must be positive");
    const double r = std::fmod(360.0, rotation_step);
    if (r > 1e-9 && rotation_step - r > 1e-9) {
        throw InvalidParameter("rotation_step must divide 360");
    }
}

std::vector<double> AugmentationConfig::angles() const {
    validate();
    std::vector<double> out;
    if (!enabled) return {0.0};
    const int n = static_cast<int>(std::lround(360.0 / rotation_step));
    for (int i = 0; i < n; ++i) out.push_back(i * rotation_step);
    return out;
}

Scene rotate_scene(const Scene& scene, double gamma_deg) {
    const double g = gamma_deg * std::numbers::pi / 180.0;
    Eigen::Matrix2d r;
    r << std::cos(g), -std::sin(g), std::sin(g), std::cos(g);
    Scene out = scene;
    for (auto& track : out.tracks) {
        for (auto& s : track.states) {
            s.position = r * s.position;
            s.velocity = r * s.velocity;
            s.acceleration = r * s.acceleration;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

SwitchReport detect_class_switches(const AgentTrack& track) {
    SwitchReport report;
    if (track.class_probs.size() < 2) return report;
    const auto seq = track.argmax_sequence();
    for (std::size_t i = 1; i < seq.size(); ++i) {
        if (seq[i] != seq[i - 1]) {
            report.switches.push_back({track.states[i].timestep, seq[i - 1], seq[i]});
        }
    }
    report.count = static_cast<int>(report.switches.size());
    auto sorted = seq;
    std::sort(sorted.begin(), sorted.end());
    report.distinct_classes =
        static_cast<int>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    return report;
}

AgentTrack majority_vote_smooth(const AgentTrack& track, int window) {
    if (window < 1 || window % 2 == 0) {
        throw InvalidParameter("majority-vote window must be odd and positive");
    }
    AgentTrack out = track;
    if (track.class_probs.empty()) return out;
    const int k = track.class_probs.front().size();
    const auto seq = track.argmax_sequence();
    const std::size_t half = static_cast<std::size_t>(window / 2);
    for (auto [b, e] : track.segments()) {
        for (std::size_t i = b; i < e; ++i) {
            const std::size_t lo = (i - b >= half) ? i - half : b;
            const std::size_t hi = std::min(e, i + half + 1);
            std::vector<int> votes(static_cast<std::size_t>(k), 0);
            for (std::size_t j = lo; j < hi; ++j) ++votes[static_cast<std::size_t>(seq[j])];
            const int best = *std::max_element(votes.begin(), votes.end());
            int winner = seq[i];
            if (votes[static_cast<std::size_t>(winner)] != best) {
                winner = static_cast<int>(std::find(votes.begin(), votes.end(), best) -
                                          votes.begin());
            }
            out.class_probs[i] = ClassProbVector::one_hot(k, winner);
        }
    }
    return out;
}

json DatasetStatistics::to_json() const {
    json classes_j = json::array();
    for (const auto& c : classes) {
        classes_j.push_back({{"class", c.name},
                             {"count", c.count},
                             {"percent", c.percent},
                             {"S_probs", c.mean_entropy}});
    }
    return {{"num_scenes", num_scenes},
            {"num_agents", num_agents},
            {"num_observations", num_observations},
            {"S_probs", mean_entropy},
            {"classes", classes_j},
            {"switching_agent_fraction", switching_agent_fraction},
            {"total_switches", total_switches},
            {"switches_after_smoothing", switches_after_smoothing},
            {"switch_rate_per_step", switch_rate_per_step},
            {"switch_histogram", switch_histogram},
            {"max_prob_by_age", max_prob_by_age}};
}

DatasetStatistics dataset_statistics(const std::vector<Scene>& scenes) {
    if (scenes.empty()) throw InvalidParameter("dataset is empty");
    DatasetStatistics st;
    const auto& names = scenes.front().class_names;
    const std::size_t k = names.size();
    std::vector<long> counts(k, 0);
    std::vector<double> entropy_sum(k, 0.0);
    std::vector<double> age_sum;
    std::vector<long> age_n;
    long switching_agents = 0;
    long pairs = 0;
    double entropy_total = 0.0;

    for (const auto& scene : scenes) {
        if (scene.class_names != names) {
            throw InvalidParameter("scene " + scene.scene_id + " has different class names");
        }
        ++st.num_scenes;
        for (const auto& track : scene.tracks) {
            if (track.empty()) continue;
            ++st.num_agents;
            st.num_observations += static_cast<long>(track.states.size());
            double h = 0.0;
            for (std::size_t i = 0; i < track.class_probs.size(); ++i) {
                const auto& c = track.class_probs[i];
                h += class_entropy(c);
                const auto age =
                    static_cast<std::size_t>(track.states[i].timestep - track.first_timestep());
                if (age >= age_sum.size()) {
                    age_sum.resize(age + 1, 0.0);
                    age_n.resize(age + 1, 0);
                }
                age_sum[age] += c[c.argmax()];
                ++age_n[age];
            }
            h /= static_cast<double>(track.class_probs.size());
            entropy_total += h;
            const auto cls = static_cast<std::size_t>(track.modal_class());
            ++counts[cls];
            entropy_sum[cls] += h;

            const auto sw = detect_class_switches(track);
            if (sw.count > 0) ++switching_agents;
            st.total_switches += sw.count;
            pairs += static_cast<long>(track.class_probs.size()) - 1;
            for (const auto& e : sw.switches) {
                ++st.switch_histogram[names[static_cast<std::size_t>(e.from_class)] + "->" +
                                      names[static_cast<std::size_t>(e.to_class)]];
            }
            st.switches_after_smoothing += detect_class_switches(majority_vote_smooth(track)).count;
        }
    }
    if (st.num_agents == 0) throw InvalidParameter("dataset has no agents");
    for (std::size_t c = 0; c < k; ++c) {
        ClassStatistics cs;
        cs.name = names[c];
        cs.count = counts[c];
        cs.percent = 100.0 * static_cast<double>(counts[c]) / static_cast<double>(st.num_agents);
        cs.mean_entropy = counts[c] > 0 ? entropy_sum[c] / static_cast<double>(counts[c]) : 0.0;
        st.classes.push_back(cs);
    }
    st.mean_entropy = entropy_total / static_cast<double>(st.num_agents);
    st.switching_agent_fraction =
        static_cast<double>(switching_agents) / static_cast<double>(st.num_agents);
    st.switch_rate_per_step =
        pairs > 0 ? static_cast<double>(st.total_switches) / static_cast<double>(pairs) : 0.0;
    for (std::size_t a = 0; a < age_sum.size(); ++a) {
        st.max_prob_by_age.push_back(age_n[a] > 0 ? age_sum[a] / static_cast<double>(age_n[a])
                                                  : 0.0);
    }
    return st;
}

json ConfusionReport::to_json() const {
    return {{"matrix", matrix}, {"row_counts", row_counts}, {"top_k", top_k}};
}

ConfusionReport confusion_and_topk(const std::vector<AgentTrack>& tracks, int num_classes) {
    if (num_classes < 1) throw InvalidParameter("num_classes must be positive");
    const auto k = static_cast<std::size_t>(num_classes);
    ConfusionReport r;
    r.matrix.assign(k, std::vector<double>(k, 0.0));
    r.row_counts.assign(k, 0);
    const std::size_t max_k = std::min<std::size_t>(5, k);
    std::vector<long> hits(max_k, 0);
    long n = 0;
    for (const auto& track : tracks) {
        if (!track.true_class) {
            throw InvalidParameter("track " + track.agent_id + " has no true_class");
        }
        if (track.class_probs.empty()) continue;
        const auto truth = static_cast<std::size_t>(*track.true_class);
        if (truth >= k) throw InvalidParameter("true_class out of range");
        const auto pred = static_cast<std::size_t>(track.modal_class());
        r.matrix[truth][pred] += 1.0;
        ++r.row_counts[truth];

        std::vector<double> mean(k, 0.0);
        for (const auto& c : track.class_probs) {
            for (std::size_t i = 0; i < k; ++i) mean[i] += c[static_cast<int>(i)];
        }
        std::vector<std::size_t> order(k);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
        const auto rank = static_cast<std::size_t>(
            std::find(order.begin(), order.end(), truth) - order.begin());
        for (std::size_t j = rank; j < max_k; ++j) ++hits[j];
        ++n;
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (r.row_counts[i] == 0) continue;
        for (double& v : r.matrix[i]) v /= static_cast<double>(r.row_counts[i]);
    }
    for (std::size_t j = 0; j < max_k; ++j) {
        r.top_k.push_back(n > 0 ? static_cast<double>(hits[j]) / static_cast<double>(n) : 0.0);
    }
    return r;
}

}  // namespace haicu
