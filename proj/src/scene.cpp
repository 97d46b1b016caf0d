#include "haicu/scene.hpp"

#include "haicu/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace haicu {

bool AgentState::finite() const {
    return position.allFinite() && velocity.allFinite() && acceleration.allFinite();
}

std::array<double, kStateDims> AgentState::as_array() const {
    return {position.x(), position.y(), velocity.x(), velocity.y(), acceleration.x(),
            acceleration.y()};
}

ClassProbVector::ClassProbVector(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw SimplexViolation("class probability vector is empty");
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0 + kRenormTolerance) {
            throw SimplexViolation("class probability " + std::to_string(p) +
                                   " outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kRenormTolerance) {
        throw SimplexViolation("class probabilities sum to " + std::to_string(sum));
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        for (double& p : probs_) p /= sum;
    }
}

ClassProbVector ClassProbVector::uniform(int num_classes) {
    if (num_classes < 1) throw InvalidParameter("num_classes must be positive");
    return ClassProbVector(std::vector<double>(static_cast<std::size_t>(num_classes),
                                               1.0 / num_classes));
}

ClassProbVector ClassProbVector::one_hot(int num_classes, int cls) {
    if (cls < 0 || cls >= num_classes) throw InvalidParameter("class index out of range");
    std::vector<double> v(static_cast<std::size_t>(num_classes), 0.0);
    v[static_cast<std::size_t>(cls)] = 1.0;
    return ClassProbVector(std::move(v));
}

int ClassProbVector::argmax() const {
    // max_element returns the first maximum, i.e. the lowest index on ties.
    return static_cast<int>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

bool ClassProbVector::is_one_hot() const {
    return std::count(probs_.begin(), probs_.end(), 1.0) == 1 &&
           std::count(probs_.begin(), probs_.end(), 0.0) ==
               static_cast<std::ptrdiff_t>(probs_.size()) - 1;
}

double class_entropy(const ClassProbVector& c) {
    double h = 0.0;
    for (double p : c.values()) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

std::optional<std::size_t> AgentTrack::index_of(int timestep) const {
    auto it = std::lower_bound(states.begin(), states.end(), timestep,
                               [](const AgentState& s, int t) { return s.timestep < t; });
    if (it == states.end() || it->timestep != timestep) return std::nullopt;
    return static_cast<std::size_t>(it - states.begin());
}

std::vector<std::pair<std::size_t, std::size_t>> AgentTrack::segments() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= states.size(); ++i) {
        if (i == states.size() || states[i].timestep != states[i - 1].timestep + 1) {
            if (i > begin) out.emplace_back(begin, i);
            begin = i;
        }
    }
    return out;
}

std::vector<int> AgentTrack::argmax_sequence() const {
    std::vector<int> out;
    out.reserve(class_probs.size());
    for (const auto& c : class_probs) out.push_back(c.argmax());
    return out;
}

int AgentTrack::modal_class() const {
    if (class_probs.empty()) throw InvalidParameter("track has no class probabilities");
    std::vector<int> counts(static_cast<std::size_t>(class_probs.front().size()), 0);
    for (int c : argmax_sequence()) ++counts[static_cast<std::size_t>(c)];
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

const AgentTrack* Scene::find_track(const std::string& agent_id) const {
    for (const auto& t : tracks) {
        if (t.agent_id == agent_id) return &t;
    }
    return nullptr;
}

int Scene::first_timestep() const {
    int first = 0;
    bool any = false;
    for (const auto& t : tracks) {
        if (t.empty()) continue;
        first = any ? std::min(first, t.first_timestep()) : t.first_timestep();
        any = true;
    }
    if (!any) throw EmptyScene("scene " + scene_id + " has no observations");
    return first;
}

int Scene::last_timestep() const {
    int last = 0;
    bool any = false;
    for (const auto& t : tracks) {
        if (t.empty()) continue;
        last = any ? std::max(last, t.last_timestep()) : t.last_timestep();
        any = true;
    }
    if (!any) throw EmptyScene("scene " + scene_id + " has no observations");
    return last;
}

std::vector<std::pair<std::size_t, std::size_t>> Scene::present_at(int timestep) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        if (auto idx = tracks[i].index_of(timestep)) out.emplace_back(i, *idx);
    }
    return out;
}

void validate_scene(const Scene& scene) {
    const int k = scene.num_classes();
    if (k < 1) throw InvariantViolation("scene " + scene.scene_id + ": no class names");
    if (!(scene.dt > 0.0)) throw InvariantViolation("scene " + scene.scene_id + ": dt <= 0");
    std::vector<std::string> ids;
    for (const auto& track : scene.tracks) {
        auto where = [&](int t) {
            return "scene " + scene.scene_id + ", agent " + track.agent_id + ", timestep " +
                   std::to_string(t);
        };
        ids.push_back(track.agent_id);
        if (track.states.size() != track.class_probs.size()) {
            throw InvariantViolation("scene " + scene.scene_id + ", agent " + track.agent_id +
                                     ": states and class_probs differ in length");
        }
        if (track.true_class && (*track.true_class < 0 || *track.true_class >= k)) {
            throw InvariantViolation("scene " + scene.scene_id + ", agent " + track.agent_id +
                                     ": true_class out of range");
        }
        for (std::size_t i = 0; i < track.states.size(); ++i) {
            const auto& s = track.states[i];
            if (i > 0 && s.timestep <= track.states[i - 1].timestep) {
                throw InvariantViolation(where(s.timestep) + ": timesteps not increasing");
            }
            if (!s.finite()) throw InvariantViolation(where(s.timestep) + ": non-finite state");
            if (track.class_probs[i].size() != k) {
                throw InvariantViolation(where(s.timestep) + ": expected " + std::to_string(k) +
                                         " class probabilities");
            }
        }
    }
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw InvariantViolation("scene " + scene.scene_id + ": duplicate agent id");
    }
}

void finite_difference_derivatives(AgentTrack& track, double dt, bool velocities,
                                   bool accelerations) {
    if (!(dt > 0.0)) throw InvalidParameter("dt must be positive");
    auto diff = [&](auto get, auto set) {
        for (auto [b, e] : track.segments()) {
            const std::size_t n = e - b;
            if (n == 1) {
                set(track.states[b], Vec2::Zero());
                continue;
            }
            std::vector<Vec2> d(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t lo = (i == 0) ? 0 : i - 1;
                const std::size_t hi = (i + 1 == n) ? n - 1 : i + 1;
                d[i] = (get(track.states[b + hi]) - get(track.states[b + lo])) /
                       (dt * static_cast<double>(hi - lo));
            }
            for (std::size_t i = 0; i < n; ++i) set(track.states[b + i], d[i]);
        }
    };
    if (velocities) {
        diff([](const AgentState& s) -> Vec2 { return s.position; },
             [](AgentState& s, const Vec2& v) { s.velocity = v; });
    }
    if (accelerations) {
        diff([](const AgentState& s) -> Vec2 { return s.velocity; },
             [](AgentState& s, const Vec2& a) { s.acceleration = a; });
    }
}

bool SceneGraph::has_edge(const std::string& a, const std::string& b) const {
    const auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    return std::binary_search(edges.begin(), edges.end(), key);
}

std::vector<std::string> SceneGraph::neighbors(const std::string& agent_id) const {
    std::vector<std::string> out;
    for (const auto& [a, b] : edges) {
        if (a == agent_id) out.push_back(b);
        if (b == agent_id) out.push_back(a);
    }
    return out;
}

SceneGraph build_scene_graph(const Scene& scene, int timestep, double d) {
    if (!(d > 0.0)) throw InvalidParameter("distance threshold must be positive");
    const auto present = scene.present_at(timestep);
    if (present.empty()) {
        throw EmptyScene("scene " + scene.scene_id + " has no agents at timestep " +
                         std::to_string(timestep));
    }
    SceneGraph g;
    g.timestep = timestep;
    g.distance_threshold = d;
    for (auto [ti, si] : present) g.nodes.push_back(scene.tracks[ti].agent_id);
    for (std::size_t a = 0; a < present.size(); ++a) {
        const Vec2& pa = scene.tracks[present[a].first].states[present[a].second].position;
        for (std::size_t b = a + 1; b < present.size(); ++b) {
            const Vec2& pb = scene.tracks[present[b].first].states[present[b].second].position;
            if ((pa - pb).norm() <= d) {
                const auto& ia = g.nodes[a];
                const auto& ib = g.nodes[b];
                g.edges.push_back(ia < ib ? std::make_pair(ia, ib) : std::make_pair(ib, ia));
            }
        }
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

}  // namespace haicu
