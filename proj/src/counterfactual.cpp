#include "haicu/counterfactual.hpp"

#include "haicu/errors.hpp"

#include <algorithm>
#include <cmath>

namespace haicu {

using torch::indexing::Slice;

std::string to_string(OverrideMode m) {
    switch (m) {
        case OverrideMode::keep: return "keep";
        case OverrideMode::uniform: return "uniform";
        case OverrideMode::one_hot: return "one_hot";
        case OverrideMode::custom: return "custom";
        case OverrideMode::interpolate: return "interpolate";
    }
    return "keep";
}

OverrideMode override_mode_from_string(const std::string& s) {
    for (auto m : {OverrideMode::keep, OverrideMode::uniform, OverrideMode::one_hot, OverrideMode::custom,
                   OverrideMode::interpolate}) {
        if (to_string(m) == s) return m;
    }
    throw InvalidParameter("unknown override mode '" + s + "'");
}

void CounterfactualSpec::validate(int num_classes) const {
    for (const auto& o : overrides) {
        if (o.agent_id.empty()) throw InvalidParameter("override without an agent id");
        switch (o.mode) {
            case OverrideMode::keep:
            case OverrideMode::uniform:
                break;
            case OverrideMode::one_hot:
                if (o.class_index < 0 || o.class_index >= num_classes) {
                    throw InvalidParameter("one_hot class index out of range for agent " + o.agent_id);
                }
                break;
            case OverrideMode::custom:
            case OverrideMode::interpolate:
                if (static_cast<int>(o.probs.size()) != num_classes) {
                    throw SimplexViolation("probability vector for agent " + o.agent_id + " has " +
                                           std::to_string(o.probs.size()) + " entries, expected " +
                                           std::to_string(num_classes));
                }
                (void)ClassProbVector(o.probs);
                if (o.mode == OverrideMode::interpolate && !(o.lambda >= 0.0 && o.lambda <= 1.0)) {
                    throw InvalidParameter("lambda must lie in [0, 1]");
                }
                break;
        }
    }
}

nlohmann::json CounterfactualSpec::to_json(const std::vector<std::string>& class_names) const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& o : overrides) {
        nlohmann::json j = {{"agent_id", o.agent_id}, {"mode", to_string(o.mode)}};
        if (o.mode == OverrideMode::one_hot) {
            const auto c = static_cast<std::size_t>(o.class_index);
            if (c < class_names.size()) {
                j["class"] = class_names[c];
            } else {
                j["class"] = o.class_index;
            }
        }
        if (o.mode == OverrideMode::custom) j["probs"] = o.probs;
        if (o.mode == OverrideMode::interpolate) {
            j["target"] = o.probs;
            j["lambda"] = o.lambda;
            j["path"] = o.path == InterpolationPath::logit ? "logit" : "simplex";
        }
        if (!o.timesteps.empty()) j["timesteps"] = o.timesteps;
        list.push_back(j);
    }
    return {{"overrides", list}};
}

CounterfactualSpec CounterfactualSpec::from_json(const nlohmann::json& j, const std::vector<std::string>& class_names) {
    CounterfactualSpec spec;
    try {
        const auto& list = j.is_array() ? j : j.at("overrides");
        for (const auto& item : list) {
            AgentOverride o;
            o.agent_id = item.at("agent_id").get<std::string>();
            o.mode = override_mode_from_string(item.value("mode", std::string("keep")));
            if (o.mode == OverrideMode::one_hot) {
                const auto& c = item.at("class");
                if (c.is_string()) {
                    auto it = std::find(class_names.begin(), class_names.end(), c.get<std::string>());
                    if (it == class_names.end()) throw InvalidParameter("unknown class '" + c.get<std::string>() + "'");
                    o.class_index = static_cast<int>(it - class_names.begin());
                } else {
                    o.class_index = c.get<int>();
                }
            }
            if (o.mode == OverrideMode::custom) o.probs = item.at("probs").get<std::vector<double>>();
            if (o.mode == OverrideMode::interpolate) {
                o.probs = item.at("target").get<std::vector<double>>();
                o.lambda = item.at("lambda").get<double>();
                const auto path = item.value("path", std::string("simplex"));
                if (path != "simplex" && path != "logit") throw InvalidParameter("unknown interpolation path '" + path + "'");
                o.path = path == "logit" ? InterpolationPath::logit : InterpolationPath::simplex;
            }
            if (item.contains("timesteps")) o.timesteps = item.at("timesteps").get<std::vector<int>>();
            spec.overrides.push_back(std::move(o));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameter(std::string("malformed counterfactual spec: ") + e.what());
    }
    spec.validate(static_cast<int>(class_names.size()));
    return spec;
}

std::vector<double> interpolate_probs(const std::vector<double>& from, const std::vector<double>& to,
                                      double lambda, InterpolationPath path) {
    if (from.size() != to.size()) throw ShapeMismatch("interpolation endpoints differ in size");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("lambda must lie in [0, 1]");
    if (lambda == 0.0) return from;
    if (lambda == 1.0) return to;
    std::vector<double> out(from.size());
    if (path == InterpolationPath::simplex) {
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - lambda) * from[k] + lambda * to[k];
        return out;
    }
    constexpr double kFloor = 1e-12;
    double peak = -INFINITY;
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = (1.0 - lambda) * std::log(std::max(from[k], kFloor)) + lambda * std::log(std::max(to[k], kFloor));
        peak = std::max(peak, out[k]);
    }
    double total = 0.0;
    for (auto& v : out) total += (v = std::exp(v - peak));
    for (auto& v : out) v /= total;
    return out;
}

namespace {

std::vector<double> replacement(const AgentOverride& o, const std::vector<double>& original) {
    const auto k = static_cast<int>(original.size());
    switch (o.mode) {
        case OverrideMode::keep: return original;
        case OverrideMode::uniform: return std::vector<double>(original.size(), 1.0 / k);
        case OverrideMode::one_hot: {
            std::vector<double> v(original.size(), 0.0);
            v[static_cast<std::size_t>(o.class_index)] = 1.0;
            return v;
        }
        case OverrideMode::custom: return o.probs;
        case OverrideMode::interpolate: return interpolate_probs(original, o.probs, o.lambda, o.path);
    }
    return original;
}

// probs: (R, H+1, K) double, edited in place for rows whose id matches.
void override_rows(torch::Tensor& probs, const std::vector<std::string>& ids, const std::vector<int>& end_steps,
                   const AgentOverride& o, bool& hit) {
    if (!probs.defined() || probs.size(0) == 0) return;
    const auto rows = probs.size(0);
    const auto steps = probs.size(1);
    const auto k = probs.size(2);
    auto a = probs.accessor<double, 3>();
    std::vector<double> original(static_cast<std::size_t>(k));
    for (int64_t r = 0; r < rows; ++r) {
        if (o.agent_id != "*" && ids[static_cast<std::size_t>(r)] != o.agent_id) continue;
        hit = true;
        for (int64_t j = 0; j < steps; ++j) {
            const int abs_t = end_steps[static_cast<std::size_t>(r)] - static_cast<int>(steps - 1 - j);
            if (!o.timesteps.empty() && std::find(o.timesteps.begin(), o.timesteps.end(), abs_t) == o.timesteps.end()) {
                continue;
            }
            double total = 0.0;
            for (int64_t c = 0; c < k; ++c) total += (original[static_cast<std::size_t>(c)] = a[r][j][c]);
            if (total < 0.5) continue;  // step not observed
            const auto v = replacement(o, original);
            for (int64_t c = 0; c < k; ++c) a[r][j][c] = v[static_cast<std::size_t>(c)];
        }
    }
}

}  // namespace

ObservationBatch apply_counterfactual(const ObservationBatch& batch, const CounterfactualSpec& spec) {
    spec.validate(batch.num_classes());
    ObservationBatch out = batch;
    const auto dtype = batch.probs.scalar_type();
    out.probs = batch.probs.to(torch::kDouble).clone();
    out.neighbor_probs = batch.neighbor_probs.defined() ? batch.neighbor_probs.to(torch::kDouble).clone()
                                                        : batch.neighbor_probs;
    std::vector<int> neighbor_end;
    if (out.neighbor_probs.defined()) {
        auto owner = batch.neighbor_owner.contiguous();
        for (int64_t m = 0; m < owner.size(0); ++m) {
            neighbor_end.push_back(batch.timesteps[static_cast<std::size_t>(owner[m].item<int64_t>())]);
        }
    }
    for (const auto& o : spec.overrides) {
        bool hit = false;
        override_rows(out.probs, batch.agent_ids, batch.timesteps, o, hit);
        override_rows(out.neighbor_probs, batch.neighbor_ids, neighbor_end, o, hit);
        if (!hit && o.agent_id != "*") throw NotFound("agent '" + o.agent_id + "' is not in the batch");
    }
    out.probs = out.probs.to(dtype);
    if (out.neighbor_probs.defined()) out.neighbor_probs = out.neighbor_probs.to(dtype);
    return out;
}

std::vector<double> lambda_grid(int n) {
    if (n < 1) throw InvalidParameter("lambda grid needs at least one point");
    if (n == 1) return {0.0};
    std::vector<double> out;
    for (int i = 0; i < n; ++i) out.push_back(static_cast<double>(i) / (n - 1));
    out.back() = 1.0;
    return out;
}

std::vector<ProbePoint> probe_smoothness(HaicuNet& model, const ObservationBatch& batch, const std::string& agent_id,
                                         const std::vector<double>& target, const std::vector<double>& lambdas,
                                         InterpolationPath path, std::optional<int> steps) {
    if (lambdas.empty()) throw InvalidParameter("empty lambda grid");
    if (model->config().variant == Variant::one_hot) {
        throw InvalidParameter("probing needs a model that reads full class probabilities");
    }
    auto row_it = std::find(batch.agent_ids.begin(), batch.agent_ids.end(), agent_id);
    if (row_it == batch.agent_ids.end()) throw NotFound("agent '" + agent_id + "' is not in the batch");
    const auto row = static_cast<int64_t>(row_it - batch.agent_ids.begin());

    auto predict_at = [&](double lambda) {
        CounterfactualSpec spec;
        spec.overrides.push_back({agent_id, OverrideMode::interpolate, 0, target, lambda, path, {}});
        auto d = predict(model, apply_counterfactual(batch, spec), steps);
        return d;
    };
    const auto base = predict_at(0.0);
    auto base_mean = base.mean[row];
    auto base_w = base.weights()[row];

    std::vector<ProbePoint> out;
    for (double lambda : lambdas) {
        const auto d = lambda == 0.0 ? base : predict_at(lambda);
        ProbePoint p;
        p.lambda = lambda;
        const double shift = (d.mean[row] - base_mean).norm(2, -1).mean().item<double>();
        const double tv = 0.5 * (d.weights()[row] - base_w).abs().sum().item<double>();
        p.divergence = shift + tv;
        p.uncertainty = d.entropy()[row].mean().item<double>();
        out.push_back(p);
    }
    return out;
}

double jump_ratio(const std::vector<ProbePoint>& curve) {
    std::vector<double> slopes;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double dl = curve[i].lambda - curve[i - 1].lambda;
        if (dl <= 0.0) throw InvalidParameter("lambda grid must be increasing");
        slopes.push_back(std::abs(curve[i].divergence - curve[i - 1].divergence) / dl);
    }
    if (slopes.size() < 2) return 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < slopes.size(); ++i) {
        double others = 0.0;
        for (std::size_t j = 0; j < slopes.size(); ++j) {
            if (j != i) others = std::max(others, slopes[j]);
        }
        if (slopes[i] == 0.0) continue;
        worst = std::max(worst, others > 0.0 ? slopes[i] / others : INFINITY);
    }
    return worst;
}

}  // namespace haicu
