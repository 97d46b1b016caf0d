#include "haicu/model.hpp"

#include "haicu/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

namespace haicu {

namespace nn = torch::nn;
using torch::indexing::Slice;

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full_probs: return "full_probs";
        case Variant::one_hot: return "one_hot";
        case Variant::multi_head: return "multi_head";
    }
    return "full_probs";
}

Variant variant_from_string(const std::string& s) {
    if (s == "full_probs") return Variant::full_probs;
    if (s == "one_hot") return Variant::one_hot;
    if (s == "multi_head") return Variant::multi_head;
    throw InvalidParameter("unknown variant '" + s + "'");
}

std::string to_string(DynamicsKind d) {
    return d == DynamicsKind::unicycle ? "unicycle" : "single_integrator";
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw InvalidParameter(std::string(name) + " must be >= 1");
    };
    positive(state_dims, "state_dims");
    positive(num_classes, "num_classes");
    positive(horizon, "horizon");
    positive(node_hidden, "node_hidden");
    positive(edge_hidden, "edge_hidden");
    positive(future_hidden, "future_hidden");
    positive(decoder_hidden, "decoder_hidden");
    positive(latent_hidden, "latent_hidden");
    positive(latent, "latent");
    if (history < 0) throw InvalidParameter("history must be >= 0");
    if (state_dims != kStateDims) throw InvalidParameter("state_dims must be 6");
    if (!class_names.empty() && static_cast<int>(class_names.size()) != num_classes) {
        throw InvalidParameter("class_names must list num_classes names");
    }
    if (!(dt > 0.0) || !(interaction_radius > 0.0)) throw InvalidParameter("dt and interaction_radius must be positive");
    if (!(position_scale > 0.0) || !(velocity_scale > 0.0) || !(acceleration_scale > 0.0) ||
        !(heading_rate_scale > 0.0)) {
        throw InvalidParameter("normalisation scales must be positive");
    }
    if (!(log_sigma_min < log_sigma_max)) throw InvalidParameter("log_sigma_min must be below log_sigma_max");
}

int ModelConfig::encoder_input() const {
    return variant == Variant::multi_head ? state_dims : state_dims + num_classes;
}

DynamicsKind ModelConfig::head_dynamics(int head) const {
    if (variant != Variant::multi_head || class_names.empty()) return DynamicsKind::single_integrator;
    std::string name = class_names.at(static_cast<std::size_t>(head));
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (const auto& v : vehicle_classes) {
        if (v == name) return DynamicsKind::unicycle;
    }
    return DynamicsKind::single_integrator;
}

BatchOptions ModelConfig::batch_options(int horizon_steps, bool require_future) const {
    BatchOptions o;
    o.history = history;
    o.horizon = horizon_steps;
    o.interaction_radius = interaction_radius;
    o.edge_window_union = edge_window_union;
    o.require_future = require_future;
    return o;
}

nlohmann::json ModelConfig::to_json() const {
    return {{"state_dims", state_dims},
            {"num_classes", num_classes},
            {"history", history},
            {"horizon", horizon},
            {"node_hidden", node_hidden},
            {"edge_hidden", edge_hidden},
            {"future_hidden", future_hidden},
            {"decoder_hidden", decoder_hidden},
            {"latent_hidden", latent_hidden},
            {"latent", latent},
            {"variant", to_string(variant)},
            {"class_names", class_names},
            {"vehicle_classes", vehicle_classes},
            {"dt", dt},
            {"interaction_radius", interaction_radius},
            {"edge_window_union", edge_window_union},
            {"position_scale", position_scale},
            {"velocity_scale", velocity_scale},
            {"acceleration_scale", acceleration_scale},
            {"heading_rate_scale", heading_rate_scale},
            {"log_sigma_min", log_sigma_min},
            {"log_sigma_max", log_sigma_max}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("state_dims", c.state_dims);
    get("num_classes", c.num_classes);
    get("history", c.history);
    get("horizon", c.horizon);
    get("node_hidden", c.node_hidden);
    get("edge_hidden", c.edge_hidden);
    get("future_hidden", c.future_hidden);
    get("decoder_hidden", c.decoder_hidden);
    get("latent_hidden", c.latent_hidden);
    get("latent", c.latent);
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    get("class_names", c.class_names);
    get("vehicle_classes", c.vehicle_classes);
    get("dt", c.dt);
    get("interaction_radius", c.interaction_radius);
    get("edge_window_union", c.edge_window_union);
    get("position_scale", c.position_scale);
    get("velocity_scale", c.velocity_scale);
    get("acceleration_scale", c.acceleration_scale);
    get("heading_rate_scale", c.heading_rate_scale);
    get("log_sigma_min", c.log_sigma_min);
    get("log_sigma_max", c.log_sigma_max);
    if (!c.class_names.empty() && !j.contains("num_classes")) {
        c.num_classes = static_cast<int>(c.class_names.size());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Inputs

namespace {

torch::Tensor encode_classes(const torch::Tensor& probs, Variant variant) {
    if (variant == Variant::one_hot) {
        return torch::one_hot(probs.argmax(-1), probs.size(-1)).to(probs.scalar_type());
    }
    return probs;
}

torch::Tensor state_features(const torch::Tensor& states, const torch::Tensor& origin,
                             const ModelConfig& cfg) {
    auto rel = states.index({"...", Slice(0, 2)}) - origin;
    return torch::cat({rel / cfg.position_scale,
                       states.index({"...", Slice(2, 4)}) / cfg.velocity_scale,
                       states.index({"...", Slice(4, 6)}) / cfg.acceleration_scale},
                      -1);
}

torch::Tensor features(const torch::Tensor& states, const torch::Tensor& probs,
                       const torch::Tensor& origin, const ModelConfig& cfg) {
    auto s = state_features(states, origin, cfg);
    if (cfg.variant == Variant::multi_head) return s;
    return torch::cat({s, encode_classes(probs, cfg.variant)}, -1);
}

// Sum over each row's neighbours. Contributions are sorted per element before
// summation so the result does not depend on neighbour order.
torch::Tensor sum_neighbours(const torch::Tensor& feats, const torch::Tensor& owner, int64_t rows) {
    const auto steps = feats.size(1);
    const auto width = feats.size(2);
    if (feats.size(0) == 0) return torch::zeros({rows, steps, width}, feats.options());
    std::vector<int64_t> count(static_cast<std::size_t>(rows), 0);
    std::vector<int64_t> flat(static_cast<std::size_t>(owner.size(0)));
    auto own = owner.accessor<int64_t, 1>();
    int64_t widest = 0;
    for (int64_t m = 0; m < owner.size(0); ++m) {
        widest = std::max(widest, ++count[static_cast<std::size_t>(own[m])]);
    }
    std::fill(count.begin(), count.end(), 0);
    for (int64_t m = 0; m < owner.size(0); ++m) {
        const auto o = own[m];
        flat[static_cast<std::size_t>(m)] = o * widest + count[static_cast<std::size_t>(o)]++;
    }
    auto idx = torch::tensor(flat, torch::kLong);
    auto padded = torch::zeros({rows * widest, steps, width}, feats.options()).index_copy(0, idx, feats);
    padded = padded.view({rows, widest, steps, width});
    return std::get<0>(padded.sort(1)).sum(1);
}

torch::Tensor rotate_pairs(const torch::Tensor& t, const torch::Tensor& cos_a, const torch::Tensor& sin_a,
                           int pairs) {
    std::vector<torch::Tensor> parts;
    for (int p = 0; p < pairs; ++p) {
        auto x = t.select(-1, 2 * p);
        auto y = t.select(-1, 2 * p + 1);
        parts.push_back(cos_a * x - sin_a * y);
        parts.push_back(sin_a * x + cos_a * y);
    }
    auto rotated = torch::stack(parts, -1);
    if (t.size(-1) == 2 * pairs) return rotated;
    return torch::cat({rotated, t.index({"...", Slice(2 * pairs, torch::indexing::None)})}, -1);
}

}  // namespace

PreparedInputs prepare_inputs(const ObservationBatch& batch, const ModelConfig& cfg) {
    const int steps = cfg.history + 1;
    if (batch.size() == 0) throw InvalidParameter("empty batch");
    if (batch.history_steps() != steps) throw ShapeMismatch("batch history length does not match the model");
    if (batch.num_classes() != cfg.num_classes) throw ShapeMismatch("batch class count does not match the model");
    if (!torch::isfinite(batch.states).all().item<bool>() ||
        !torch::isfinite(batch.probs).all().item<bool>()) {
        throw InvalidParameter("non-finite values in batch");
    }
    PreparedInputs in;
    const auto now = cfg.history;
    in.origin = batch.states.index({Slice(), now, Slice(0, 2)});
    in.velocity = batch.states.index({Slice(), now, Slice(2, 4)});
    in.class_now = batch.probs.index({Slice(), now});
    in.mask = batch.mask;

    auto m = batch.mask.unsqueeze(-1).to(batch.states.scalar_type());
    in.node = features(batch.states, batch.probs, in.origin.unsqueeze(1), cfg) * m;

    auto nbr_origin = in.origin.index_select(0, batch.neighbor_owner).unsqueeze(1);
    auto nm = batch.neighbor_mask.unsqueeze(-1).to(batch.states.scalar_type());
    auto nf = features(batch.neighbor_states, batch.neighbor_probs, nbr_origin, cfg) * nm;
    in.edge = sum_neighbours(nf, batch.neighbor_owner, batch.size());

    if (batch.has_future()) in.future = batch.future - in.origin.unsqueeze(1);
    return in;
}

PreparedInputs PreparedInputs::index(const torch::Tensor& rows) const {
    PreparedInputs out;
    out.node = node.index_select(0, rows);
    out.edge = edge.index_select(0, rows);
    out.mask = mask.index_select(0, rows);
    out.origin = origin.index_select(0, rows);
    out.velocity = velocity.index_select(0, rows);
    out.class_now = class_now.index_select(0, rows);
    if (future.defined()) out.future = future.index_select(0, rows);
    return out;
}

PreparedInputs PreparedInputs::rotated(const torch::Tensor& angles_rad) const {
    auto a = angles_rad.to(node.scalar_type());
    auto c2 = torch::cos(a).view({-1, 1});
    auto s2 = torch::sin(a).view({-1, 1});
    auto c1 = c2.view({-1});
    auto s1 = s2.view({-1});
    PreparedInputs out = *this;
    out.node = rotate_pairs(node, c2, s2, 3);
    out.edge = rotate_pairs(edge, c2, s2, 3);
    out.velocity = rotate_pairs(velocity, c1, s1, 1);
    if (future.defined()) out.future = rotate_pairs(future, c2, s2, 1);
    return out;
}

PreparedInputs PreparedInputs::to(torch::Dtype dtype) const {
    PreparedInputs out = *this;
    out.node = node.to(dtype);
    out.edge = edge.to(dtype);
    out.origin = origin.to(dtype);
    out.velocity = velocity.to(dtype);
    out.class_now = class_now.to(dtype);
    if (future.defined()) out.future = future.to(dtype);
    return out;
}

// ---------------------------------------------------------------------------
// Distribution

torch::Tensor gaussian2_log_prob(const torch::Tensor& x, const torch::Tensor& mean,
                                 const torch::Tensor& cov) {
    auto d = x - mean;
    auto dx = d.select(-1, 0);
    auto dy = d.select(-1, 1);
    auto a = cov.select(-1, 0).select(-1, 0);
    auto b = cov.select(-1, 1).select(-1, 0);
    auto c = cov.select(-1, 1).select(-1, 1);
    auto det = a * c - b * b;
    auto quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    return -std::log(2.0 * std::numbers::pi) - 0.5 * torch::log(det) - 0.5 * quad;
}

namespace {

// Lower Cholesky factor of (..., 2, 2) covariances.
torch::Tensor cholesky2(const torch::Tensor& cov) {
    auto a = cov.select(-1, 0).select(-1, 0);
    auto b = cov.select(-1, 1).select(-1, 0);
    auto c = cov.select(-1, 1).select(-1, 1);
    auto l00 = torch::sqrt(a);
    auto l10 = torch::where(l00 > 0, b / torch::clamp_min(l00, 1e-300), torch::zeros_like(b));
    auto l11 = torch::sqrt(torch::clamp_min(c - l10 * l10, 0.0));
    auto zero = torch::zeros_like(a);
    return torch::stack({torch::stack({l00, zero}, -1), torch::stack({l10, l11}, -1)}, -2);
}

}  // namespace

torch::Tensor TrajectoryDistribution::log_density(const torch::Tensor& pos) const {
    auto lp = gaussian2_log_prob(pos.unsqueeze(1), mean, cov);  // (B, M, T)
    return torch::logsumexp(log_weights.unsqueeze(-1) + lp, 1);
}

torch::Tensor TrajectoryDistribution::most_likely() const {
    auto best = log_weights.argmax(1);
    return mean.index({torch::arange(batch_size()), best});
}

torch::Tensor TrajectoryDistribution::sample(int n, std::uint64_t seed) const {
    if (n < 1) throw InvalidParameter("number of samples must be >= 1");
    torch::NoGradGuard no_grad;
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    const auto b = batch_size();
    const auto steps = horizon();
    auto opts = mean.options();
    auto comp = torch::multinomial(weights().to(torch::kDouble), n, true, gen);  // (B, n)
    auto rows = torch::arange(b).unsqueeze(1).expand({b, n});
    auto mu = control_mean.index({rows, comp});        // (B, n, T, 2)
    auto chol = cholesky2(control_cov.index({rows, comp}));
    auto z = torch::randn({b, n, steps, 2, 1}, gen, opts);
    auto u = mu + torch::matmul(chol, z).squeeze(-1);

    auto start = origin.view({b, 1, 1, 2});
    auto out = start + dt * torch::cumsum(u, 2);
    bool any_unicycle = std::any_of(component_dynamics.begin(), component_dynamics.end(),
                                    [](DynamicsKind k) { return k == DynamicsKind::unicycle; });
    if (any_unicycle) {
        auto heading = torch::atan2(velocity.select(-1, 1), velocity.select(-1, 0));
        auto speed = velocity.norm(2, -1);
        auto state = torch::stack({origin.select(-1, 0), origin.select(-1, 1), heading, speed}, -1)
                         .unsqueeze(1)
                         .expand({b, n, 4})
                         .reshape({b * n, 4});
        auto flat_u = u.reshape({b * n, steps, 2});
        std::vector<torch::Tensor> path;
        for (int64_t t = 0; t < steps; ++t) {
            state = unicycle_step(state, flat_u.select(1, t), dt);
            path.push_back(state.index({Slice(), Slice(0, 2)}));
        }
        auto uni = torch::stack(path, 1).view({b, n, steps, 2});
        std::vector<uint8_t> is_uni;
        for (auto k : component_dynamics) is_uni.push_back(k == DynamicsKind::unicycle);
        auto lookup = torch::tensor(std::vector<int64_t>(is_uni.begin(), is_uni.end()), torch::kLong);
        auto pick = lookup.index({comp}).to(torch::kBool).view({b, n, 1, 1});
        out = torch::where(pick, uni, out);
    }
    return out;
}

torch::Tensor TrajectoryDistribution::entropy() const {
    torch::NoGradGuard no_grad;
    const auto m_count = num_components();
    auto chol = cholesky2(cov);  // (B, M, T, 2, 2)
    const double spread = std::sqrt(3.0);
    const std::array<double, 5> w = {1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
    auto total = torch::zeros({batch_size(), horizon()}, mean.options());
    auto pi = weights();
    for (int64_t m = 0; m < m_count; ++m) {
        auto mu = mean.select(1, m);     // (B, T, 2)
        auto l = chol.select(1, m);      // (B, T, 2, 2)
        auto col0 = l.select(-1, 0) * spread;
        auto col1 = l.select(-1, 1) * spread;
        std::array<torch::Tensor, 5> pts = {mu, mu + col0, mu - col0, mu + col1, mu - col1};
        auto acc = torch::zeros_like(total);
        for (std::size_t i = 0; i < pts.size(); ++i) acc = acc + w[i] * log_density(pts[i]);
        total = total - pi.select(1, m).unsqueeze(-1) * acc;
    }
    return total;
}

TrajectoryDistribution TrajectoryDistribution::first_steps(int steps) const {
    if (steps < 1 || steps > horizon()) throw InvalidParameter("requested steps exceed the decoded horizon");
    TrajectoryDistribution out = *this;
    auto s = Slice(0, steps);
    out.mean = mean.index({Slice(), Slice(), s});
    out.cov = cov.index({Slice(), Slice(), s});
    out.control_mean = control_mean.index({Slice(), Slice(), s});
    out.control_cov = control_cov.index({Slice(), Slice(), s});
    return out;
}

// ---------------------------------------------------------------------------
// Network

HaicuNetImpl::HaicuNetImpl(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int in = cfg_.encoder_input();
    const int e = cfg_.embedding();
    const int z = cfg_.latent;
    node_lstm_ = register_module("node_lstm", nn::LSTMCell(in, cfg_.node_hidden));
    edge_lstm_ = register_module("edge_lstm", nn::LSTMCell(in, cfg_.edge_hidden));
    prior_ = register_module("prior", nn::Sequential(nn::Linear(e, cfg_.latent_hidden), nn::ReLU(),
                                                     nn::Linear(cfg_.latent_hidden, z)));
    posterior_ = register_module(
        "posterior", nn::Sequential(nn::Linear(e + 2 * cfg_.future_hidden, cfg_.latent_hidden),
                                    nn::ReLU(), nn::Linear(cfg_.latent_hidden, z)));
    future_h0_ = register_module("future_h0", nn::Linear(cfg_.node_hidden, cfg_.future_hidden));
    future_c0_ = register_module("future_c0", nn::Linear(cfg_.node_hidden, cfg_.future_hidden));
    future_fwd_ = register_module("future_fwd", nn::LSTMCell(2, cfg_.future_hidden));
    future_bwd_ = register_module("future_bwd", nn::LSTMCell(2, cfg_.future_hidden));
    for (int h = 0; h < cfg_.num_heads(); ++h) {
        const auto tag = std::to_string(h);
        dec_init_.push_back(register_module("dec_init" + tag, nn::Linear(e + z, cfg_.decoder_hidden)));
        dec_gru_.push_back(register_module("dec_gru" + tag, nn::GRUCell(e + z + 2, cfg_.decoder_hidden)));
        dec_out_.push_back(register_module("dec_out" + tag, nn::Linear(cfg_.decoder_hidden, 5)));
    }
}

HaicuNetImpl::Encoding HaicuNetImpl::encode(const PreparedInputs& in) {
    const auto b = in.size();
    const auto steps = in.node.size(1);
    if (in.node.size(2) != cfg_.encoder_input()) throw ShapeMismatch("encoder input width mismatch");
    auto opts = in.node.options();
    auto h = torch::zeros({b, cfg_.node_hidden}, opts);
    auto c = torch::zeros_like(h);
    auto eh = torch::zeros({b, cfg_.edge_hidden}, opts);
    auto ec = torch::zeros_like(eh);
    for (int64_t t = 0; t < steps; ++t) {
        auto [h2, c2] = node_lstm_->forward(in.node.select(1, t), std::make_tuple(h, c));
        auto m = in.mask.select(1, t).unsqueeze(1);
        h = torch::where(m, h2, h);
        c = torch::where(m, c2, c);
        std::tie(eh, ec) = edge_lstm_->forward(in.edge.select(1, t), std::make_tuple(eh, ec));
    }
    return {torch::cat({h, eh}, 1), h};
}

torch::Tensor HaicuNetImpl::prior_logits(const torch::Tensor& ex) { return prior_->forward(ex); }

torch::Tensor HaicuNetImpl::posterior_logits(const Encoding& enc, const torch::Tensor& future_rel) {
    const auto steps = future_rel.size(1);
    auto prev = torch::cat({torch::zeros_like(future_rel.index({Slice(), Slice(0, 1)})),
                            future_rel.index({Slice(), Slice(0, steps - 1)})},
                           1);
    auto vel = (future_rel - prev) / (cfg_.dt * cfg_.velocity_scale);
    auto h0 = future_h0_->forward(enc.node_h);
    auto c0 = future_c0_->forward(enc.node_h);
    auto hf = h0, cf = c0, hb = h0, cb = c0;
    for (int64_t t = 0; t < steps; ++t) {
        std::tie(hf, cf) = future_fwd_->forward(vel.select(1, t), std::make_tuple(hf, cf));
        std::tie(hb, cb) = future_bwd_->forward(vel.select(1, steps - 1 - t), std::make_tuple(hb, cb));
    }
    return posterior_->forward(torch::cat({enc.ex, hf, hb}, 1));
}

DecoderOutput HaicuNetImpl::decode(const Encoding& enc, const PreparedInputs& in, int head, int steps) {
    if (steps < 1) throw InvalidParameter("decode horizon must be >= 1");
    const auto b = enc.ex.size(0);
    const int z = cfg_.latent;
    const auto hu = static_cast<std::size_t>(head);
    auto opts = enc.ex.options();
    const auto dyn = cfg_.head_dynamics(head);

    auto ex = enc.ex.repeat_interleave(z, 0);                                  // (B Z, E)
    auto codes = torch::eye(z, opts).repeat({b, 1});                          // (B Z, Z)
    auto ctx = torch::cat({ex, codes}, 1);
    auto h = dec_init_[hu]->forward(ctx);

    torch::Tensor scale;
    torch::Tensor prev;
    if (dyn == DynamicsKind::unicycle) {
        scale = torch::tensor({cfg_.heading_rate_scale, cfg_.acceleration_scale}, opts);
        prev = torch::zeros({b * z, 2}, opts);
    } else {
        scale = torch::tensor({cfg_.velocity_scale, cfg_.velocity_scale}, opts);
        prev = (in.velocity / cfg_.velocity_scale).repeat_interleave(z, 0);
    }

    std::vector<torch::Tensor> mus, sigmas, rhos;
    for (int t = 0; t < steps; ++t) {
        h = dec_gru_[hu]->forward(torch::cat({ctx, prev}, 1), h);
        auto o = dec_out_[hu]->forward(h);
        auto mu = o.index({Slice(), Slice(0, 2)});
        auto log_sigma = torch::clamp(o.index({Slice(), Slice(2, 4)}), cfg_.log_sigma_min, cfg_.log_sigma_max);
        mus.push_back(mu * scale);
        sigmas.push_back(torch::exp(log_sigma) * scale);
        rhos.push_back(0.99 * torch::tanh(o.select(1, 4)));
        prev = mu;
    }
    auto mean = torch::stack(mus, 1).view({b, z, steps, 2});
    auto sigma = torch::stack(sigmas, 1).view({b, z, steps, 2});
    auto rho = torch::stack(rhos, 1).view({b, z, steps});
    auto sx = sigma.select(-1, 0);
    auto sy = sigma.select(-1, 1);
    auto off = rho * sx * sy;
    auto cov = torch::stack({torch::stack({sx * sx, off}, -1), torch::stack({off, sy * sy}, -1)}, -2);

    DecoderOutput out;
    out.control_mean = mean;
    out.control_cov = cov;
    PositionGaussians pos;
    if (dyn == DynamicsKind::unicycle) {
        // Near-stationary agents give nearly rank-one position covariances,
        // which single precision cannot keep positive definite.
        const auto wide = opts.dtype(torch::kDouble);
        auto vel = in.velocity.to(torch::kDouble);
        UnicycleInit init;
        init.position = torch::zeros({b, z, 2}, wide);
        init.heading = torch::atan2(vel.select(1, 1), vel.select(1, 0)).unsqueeze(1).expand({b, z});
        init.speed = vel.norm(2, 1).unsqueeze(1).expand({b, z});
        pos = unicycle_integrate(mean.to(torch::kDouble), cov.to(torch::kDouble), init, cfg_.dt);
        pos.mean = pos.mean.to(opts.dtype());
    } else {
        pos = integrate_single_integrator(mean, cov, torch::zeros({b, z, 2}, opts), cfg_.dt);
    }
    out.position_mean = pos.mean;
    out.position_cov = pos.cov.to(torch::kDouble) + kCovarianceFloor * torch::eye(2, opts.dtype(torch::kDouble));
    return out;
}

TrajectoryDistribution HaicuNetImpl::distribution(const PreparedInputs& in, int steps) {
    auto enc = encode(in);
    auto log_prior = torch::log_softmax(prior_logits(enc.ex), 1);
    const auto b = in.size();
    TrajectoryDistribution d;
    std::vector<torch::Tensor> means, covs, cmeans, ccovs, logw;
    for (int head = 0; head < cfg_.num_heads(); ++head) {
        auto dec = decode(enc, in, head, steps);
        means.push_back(dec.position_mean);
        covs.push_back(dec.position_cov);
        cmeans.push_back(dec.control_mean);
        ccovs.push_back(dec.control_cov);
        if (cfg_.variant == Variant::multi_head) {
            logw.push_back(log_prior + torch::log(in.class_now.select(1, head)).unsqueeze(1));
        } else {
            logw.push_back(log_prior);
        }
        for (int zi = 0; zi < cfg_.latent; ++zi) {
            d.component_dynamics.push_back(cfg_.head_dynamics(head));
            d.component_mode.push_back(zi);
            d.component_head.push_back(head);
        }
    }
    d.log_weights = torch::cat(logw, 1);
    d.mean = torch::cat(means, 1) + in.origin.view({b, 1, 1, 2});
    d.cov = torch::cat(covs, 1);
    d.control_mean = torch::cat(cmeans, 1);
    d.control_cov = torch::cat(ccovs, 1);
    d.origin = in.origin;
    d.velocity = in.velocity;
    d.dt = cfg_.dt;
    return d;
}

HaicuNet make_model(const ModelConfig& cfg, std::uint64_t seed) {
    torch::manual_seed(seed);
    return HaicuNet(cfg);
}

TrajectoryDistribution predict(HaicuNet& model, const ObservationBatch& batch, std::optional<int> steps) {
    torch::NoGradGuard no_grad;
    model->eval();
    const auto dtype = model->parameters().front().scalar_type();
    auto in = prepare_inputs(batch, model->config()).to(dtype);
    return model->distribution(in, steps.value_or(model->config().horizon));
}

int64_t count_parameters(HaicuNet& model) {
    int64_t n = 0;
    for (const auto& p : model->parameters()) n += p.numel();
    return n;
}

double count_flops(const ModelConfig& cfg, int64_t n_nodes, int64_t n_edges) {
    const double in = cfg.encoder_input();
    const double nh = cfg.node_hidden;
    const double eh = cfg.edge_hidden;
    const double e = cfg.embedding();
    const double z = cfg.latent;
    const double dh = cfg.decoder_hidden;
    const double lh = cfg.latent_hidden;
    const double steps = cfg.history + 1;
    const double horizon = cfg.horizon;

    const double encoder = steps * (4.0 * nh * (in + nh) + 4.0 * eh * (in + eh));
    const double prior = e * lh + lh * z;
    const double per_mode = (e + z) * dh + horizon * (3.0 * dh * (e + z + 2.0 + dh) + 5.0 * dh);
    const double decoder = cfg.num_heads() * z * per_mode;
    const double per_node_mac = encoder + prior + decoder;
    // Each undirected edge adds one neighbour input to both endpoints per step.
    const double edge_adds = 2.0 * static_cast<double>(n_edges) * steps * in;
    return 2.0 * per_node_mac * static_cast<double>(n_nodes) + edge_adds;
}

}  // namespace haicu
