#include "haicu/batch.hpp"

#include "haicu/errors.hpp"

#include <algorithm>

namespace haicu {

namespace {

void check_options(const BatchOptions& opts) {
    if (opts.history < 0) throw InvalidParameter("history must be >= 0");
    if (opts.horizon < 1) throw InvalidParameter("horizon must be >= 1");
    if (!(opts.interaction_radius > 0.0)) throw InvalidParameter("interaction radius must be positive");
}

bool future_available(const AgentTrack& track, std::size_t idx, int horizon) {
    const std::size_t last = idx + static_cast<std::size_t>(horizon);
    if (last >= track.states.size()) return false;
    return track.states[last].timestep - track.states[idx].timestep == horizon;
}

struct RowBuilder {
    int steps;
    int k;
    std::vector<double> states;
    std::vector<double> probs;
    std::vector<uint8_t> mask;

    RowBuilder(int steps_, int k_) : steps(steps_), k(k_) {}

    std::size_t add_row() {
        const std::size_t row = mask.size() / static_cast<std::size_t>(steps);
        states.resize(states.size() + static_cast<std::size_t>(steps * kStateDims), 0.0);
        probs.resize(probs.size() + static_cast<std::size_t>(steps * k), 0.0);
        mask.resize(mask.size() + static_cast<std::size_t>(steps), 0);
        return row;
    }

    void set(std::size_t row, int step, const AgentState& s, const ClassProbVector& c, bool on) {
        const auto base = (row * static_cast<std::size_t>(steps) + static_cast<std::size_t>(step));
        const auto a = s.as_array();
        std::copy(a.begin(), a.end(), states.begin() + static_cast<std::ptrdiff_t>(base * kStateDims));
        auto vals = c.values();
        std::copy(vals.begin(), vals.end(), probs.begin() + static_cast<std::ptrdiff_t>(base * k));
        mask[base] = on ? 1 : 0;
    }

    void finish(torch::Tensor& s, torch::Tensor& p, torch::Tensor& m) const {
        const int64_t rows = static_cast<int64_t>(mask.size()) / steps;
        auto f64 = torch::TensorOptions().dtype(torch::kDouble);
        if (rows == 0) {
            s = torch::zeros({0, steps, kStateDims}, f64);
            p = torch::zeros({0, steps, k}, f64);
            m = torch::zeros({0, steps}, torch::kBool);
            return;
        }
        s = torch::from_blob(const_cast<double*>(states.data()), {rows, steps, kStateDims}, f64).clone();
        p = torch::from_blob(const_cast<double*>(probs.data()), {rows, steps, k}, f64).clone();
        m = torch::from_blob(const_cast<uint8_t*>(mask.data()), {rows, steps},
                             torch::TensorOptions().dtype(torch::kUInt8))
                .clone()
                .to(torch::kBool);
    }
};

}  // namespace

std::vector<SampleRef> enumerate_samples(const std::vector<Scene>& scenes,
                                         const BatchOptions& opts, int stride) {
    check_options(opts);
    if (stride < 1) throw InvalidParameter("stride must be >= 1");
    std::vector<SampleRef> out;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        const auto& tracks = scenes[s].tracks;
        for (std::size_t a = 0; a < tracks.size(); ++a) {
            int eligible = 0;
            for (std::size_t i = 0; i < tracks[a].states.size(); ++i) {
                if (opts.require_future && !future_available(tracks[a], i, opts.horizon)) continue;
                if (eligible++ % stride == 0) out.push_back({s, a, tracks[a].states[i].timestep});
            }
        }
    }
    return out;
}

ObservationBatch make_batch(const std::vector<Scene>& scenes, std::span<const SampleRef> samples,
                            const BatchOptions& opts) {
    check_options(opts);
    if (samples.empty()) throw InvalidParameter("empty sample list");
    const int steps = opts.history + 1;
    const Scene& first = scenes.at(samples.front().scene);
    const int k = first.num_classes();
    const double d2 = opts.interaction_radius * opts.interaction_radius;

    ObservationBatch b;
    b.class_names = first.class_names;
    b.dt = first.dt;
    RowBuilder ego(steps, k);
    RowBuilder nbr(steps, k);
    std::vector<int64_t> owner;
    std::vector<double> future;

    for (const auto& ref : samples) {
        const Scene& scene = scenes.at(ref.scene);
        if (scene.num_classes() != k || scene.class_names != b.class_names) {
            throw ShapeMismatch("scenes in one batch must share class names");
        }
        const AgentTrack& track = scene.tracks.at(ref.track);
        const auto now = track.index_of(ref.timestep);
        if (!now) throw InvalidParameter("agent " + track.agent_id + " not observed at the sample time");
        if (opts.require_future && !future_available(track, *now, opts.horizon)) {
            throw InvalidParameter("agent " + track.agent_id + " lacks a full future");
        }
        const int t0 = ref.timestep - opts.history;
        const auto row = ego.add_row();
        std::vector<std::optional<std::size_t>> ego_idx(static_cast<std::size_t>(steps));
        int first_seen = ref.timestep;
        for (int j = 0; j < steps; ++j) {
            ego_idx[static_cast<std::size_t>(j)] = track.index_of(t0 + j);
            if (auto i = ego_idx[static_cast<std::size_t>(j)]) {
                ego.set(row, j, track.states[*i], track.class_probs[*i], true);
                first_seen = std::min(first_seen, t0 + j);
            }
        }
        const Vec2 ego_now = track.states[*now].position;

        for (std::size_t o = 0; o < scene.tracks.size(); ++o) {
            if (o == ref.track) continue;
            const AgentTrack& other = scene.tracks[o];
            if (other.empty() || other.last_timestep() < t0 || other.first_timestep() > ref.timestep) continue;
            std::vector<std::optional<std::size_t>> idx(static_cast<std::size_t>(steps));
            std::vector<uint8_t> use(static_cast<std::size_t>(steps), 0);
            bool any = false;
            if (opts.edge_window_union) {
                for (int j = 0; j < steps; ++j) {
                    const auto ju = static_cast<std::size_t>(j);
                    idx[ju] = other.index_of(t0 + j);
                    if (!idx[ju] || !ego_idx[ju]) continue;
                    const Vec2 diff = other.states[*idx[ju]].position -
                                      track.states[*ego_idx[ju]].position;
                    if (diff.squaredNorm() <= d2) {
                        use[ju] = 1;
                        any = true;
                    }
                }
            } else {
                const auto o_now = other.index_of(ref.timestep);
                if (!o_now || (other.states[*o_now].position - ego_now).squaredNorm() > d2) continue;
                for (int j = 0; j < steps; ++j) {
                    const auto ju = static_cast<std::size_t>(j);
                    idx[ju] = other.index_of(t0 + j);
                    if (idx[ju]) {
                        use[ju] = 1;
                        any = true;
                    }
                }
            }
            if (!any) continue;
            const auto nrow = nbr.add_row();
            for (int j = 0; j < steps; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (use[ju]) nbr.set(nrow, j, other.states[*idx[ju]], other.class_probs[*idx[ju]], true);
            }
            owner.push_back(static_cast<int64_t>(b.agent_ids.size()));
            b.neighbor_ids.push_back(other.agent_id);
        }

        if (opts.require_future) {
            for (int j = 1; j <= opts.horizon; ++j) {
                const auto& p = track.states[*now + static_cast<std::size_t>(j)].position;
                future.push_back(p.x());
                future.push_back(p.y());
            }
        }
        b.scene_ids.push_back(scene.scene_id);
        b.agent_ids.push_back(track.agent_id);
        b.timesteps.push_back(ref.timestep);
        b.first_timesteps.push_back(first_seen);
        b.modal_classes.push_back(track.modal_class());
    }

    ego.finish(b.states, b.probs, b.mask);
    nbr.finish(b.neighbor_states, b.neighbor_probs, b.neighbor_mask);
    b.neighbor_owner = torch::tensor(owner, torch::kLong);
    if (owner.empty()) b.neighbor_owner = torch::zeros({0}, torch::kLong);
    if (opts.require_future) {
        b.future = torch::tensor(future, torch::kDouble)
                       .reshape({static_cast<int64_t>(samples.size()), opts.horizon, 2});
    }
    return b;
}

ObservationBatch make_scene_batch(const Scene& scene, int timestep, const BatchOptions& opts) {
    auto present = scene.present_at(timestep);
    if (present.empty()) {
        throw EmptyScene("no agents in scene " + scene.scene_id + " at timestep " +
                         std::to_string(timestep));
    }
    std::vector<Scene> one{scene};
    std::vector<SampleRef> refs;
    for (const auto& [track, state] : present) {
        (void)state;
        refs.push_back({0, track, timestep});
    }
    BatchOptions o = opts;
    o.require_future = false;
    return make_batch(one, refs, o);
}

ObservationBatch ObservationBatch::select(std::span<const int64_t> rows) const {
    ObservationBatch out;
    auto idx = torch::tensor(std::vector<int64_t>(rows.begin(), rows.end()), torch::kLong);
    out.states = states.index_select(0, idx);
    out.probs = probs.index_select(0, idx);
    out.mask = mask.index_select(0, idx);
    if (future.defined()) out.future = future.index_select(0, idx);

    std::vector<int64_t> keep;
    std::vector<int64_t> new_owner;
    auto own = neighbor_owner.accessor<int64_t, 1>();
    // Neighbour rows are grouped by owner; emit them in the new row order.
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int64_t m = 0; m < neighbor_owner.size(0); ++m) {
            if (own[m] == rows[i]) {
                keep.push_back(m);
                new_owner.push_back(static_cast<int64_t>(i));
            }
        }
    }
    auto kidx = torch::tensor(keep, torch::kLong);
    if (keep.empty()) kidx = torch::zeros({0}, torch::kLong);
    out.neighbor_states = neighbor_states.index_select(0, kidx);
    out.neighbor_probs = neighbor_probs.index_select(0, kidx);
    out.neighbor_mask = neighbor_mask.index_select(0, kidx);
    out.neighbor_owner = new_owner.empty() ? torch::zeros({0}, torch::kLong)
                                           : torch::tensor(new_owner, torch::kLong);
    for (auto m : keep) out.neighbor_ids.push_back(neighbor_ids[static_cast<std::size_t>(m)]);
    for (auto r : rows) {
        const auto ru = static_cast<std::size_t>(r);
        out.scene_ids.push_back(scene_ids.at(ru));
        out.agent_ids.push_back(agent_ids.at(ru));
        out.timesteps.push_back(timesteps.at(ru));
        out.first_timesteps.push_back(first_timesteps.at(ru));
        out.modal_classes.push_back(modal_classes.at(ru));
    }
    out.class_names = class_names;
    out.dt = dt;
    return out;
}

}  // namespace haicu
