#include "haicu/training.hpp"

#include "haicu/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

namespace haicu {

void BetaSchedule::validate() const {
    if (!(start >= 0.0) || !(end >= start)) throw InvalidParameter("beta schedule must satisfy 0 <= start <= end");
}

BetaSchedule BetaSchedule::resolved(long total_iterations) const {
    BetaSchedule b = *this;
    if (b.midpoint < 0.0) b.midpoint = 0.25 * static_cast<double>(std::max(total_iterations, 1L));
    if (b.steepness <= 0.0) b.steepness = std::max(b.midpoint / 10.0, 1e-9);
    return b;
}

double beta_at(long iteration, const BetaSchedule& schedule) {
    if (iteration < 0) throw InvalidParameter("iteration must be >= 0");
    schedule.validate();
    if (schedule.midpoint < 0.0 || schedule.steepness <= 0.0) {
        throw InvalidParameter("beta schedule midpoint and steepness must be resolved first");
    }
    const double x = (static_cast<double>(iteration) - schedule.midpoint) / schedule.steepness;
    return schedule.start + (schedule.end - schedule.start) / (1.0 + std::exp(-x));
}

void TrainingConfig::validate() const {
    beta.validate();
    if (!(learning_rate > 0.0)) throw InvalidParameter("learning_rate must be positive");
    if (batch_size < 1 || max_epochs < 1 || patience < 1) {
        throw InvalidParameter("batch_size, max_epochs and patience must be >= 1");
    }
    if (sample_stride < 1 || val_stride < 1) throw InvalidParameter("strides must be >= 1");
    if (mi_weight < 0.0 || grad_clip < 0.0) throw InvalidParameter("mi_weight and grad_clip must be >= 0");
    augmentation.validate();
}

nlohmann::json TrainingConfig::to_json() const {
    return {{"beta_start", beta.start},
            {"beta_end", beta.end},
            {"beta_midpoint", beta.midpoint},
            {"beta_steepness", beta.steepness},
            {"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"patience", patience},
            {"seed", seed},
            {"mi_weight", mi_weight},
            {"grad_clip", grad_clip},
            {"augment", augmentation.enabled},
            {"rotation_step", augmentation.rotation_step},
            {"sample_stride", sample_stride},
            {"val_stride", val_stride},
            {"double_precision", double_precision}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& j) {
    TrainingConfig c;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("beta_start", c.beta.start);
    get("beta_end", c.beta.end);
    get("beta_midpoint", c.beta.midpoint);
    get("beta_steepness", c.beta.steepness);
    get("learning_rate", c.learning_rate);
    get("batch_size", c.batch_size);
    get("max_epochs", c.max_epochs);
    get("patience", c.patience);
    get("seed", c.seed);
    get("mi_weight", c.mi_weight);
    get("grad_clip", c.grad_clip);
    get("augment", c.augmentation.enabled);
    get("rotation_step", c.augmentation.rotation_step);
    get("sample_stride", c.sample_stride);
    get("val_stride", c.val_stride);
    get("double_precision", c.double_precision);
    c.validate();
    return c;
}

nlohmann::json CurvePoint::to_json() const {
    return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_ADE", val_ade}, {"val_ANLL", val_anll}, {"beta", beta}};
}

LossTerms elbo_loss(HaicuNet& model, const PreparedInputs& in, double beta, double mi_weight) {
    if (!in.future.defined()) throw InvalidParameter("loss needs ground-truth futures");
    const auto& cfg = model->config();
    const int steps = static_cast<int>(in.future.size(1));
    auto enc = model->encode(in);
    auto log_p = torch::log_softmax(model->prior_logits(enc.ex), 1);
    auto log_q = torch::log_softmax(model->posterior_logits(enc, in.future), 1);
    auto q = log_q.exp();
    if (log_p.size(1) != cfg.latent) throw ShapeMismatch("latent cardinality mismatch");

    auto target = in.future.unsqueeze(1);  // (B, 1, T, 2)
    std::vector<torch::Tensor> per_head;
    for (int h = 0; h < cfg.num_heads(); ++h) {
        auto dec = model->decode(enc, in, h, steps);
        auto ll = gaussian2_log_prob(target, dec.position_mean, dec.position_cov).sum(-1);  // (B, Z)
        if (cfg.variant == Variant::multi_head) {
            ll = ll + torch::log(in.class_now.select(1, h)).unsqueeze(1);
        }
        per_head.push_back(ll);
    }
    auto log_lik = per_head.size() == 1 ? per_head.front() : torch::logsumexp(torch::stack(per_head, 0), 0);

    LossTerms t;
    t.reconstruction = (q * log_lik).sum(1).mean();
    t.kl = (q * (log_q - log_p)).sum(1).mean();
    auto p = log_p.exp();
    auto marginal = p.mean(0);
    auto marginal_entropy = -(marginal * torch::log(marginal)).sum();
    auto conditional_entropy = -(p * log_p).sum(1).mean();
    t.mutual_info = marginal_entropy - conditional_entropy;
    t.loss = -(t.reconstruction - beta * t.kl) - mi_weight * t.mutual_info;
    return t;
}

namespace {

PreparedInputs concat(const std::vector<PreparedInputs>& parts) {
    auto cat = [&parts](auto member) {
        std::vector<torch::Tensor> ts;
        for (const auto& p : parts) ts.push_back(p.*member);
        return torch::cat(ts, 0);
    };
    PreparedInputs out;
    out.node = cat(&PreparedInputs::node);
    out.edge = cat(&PreparedInputs::edge);
    out.mask = cat(&PreparedInputs::mask);
    out.origin = cat(&PreparedInputs::origin);
    out.velocity = cat(&PreparedInputs::velocity);
    out.class_now = cat(&PreparedInputs::class_now);
    if (parts.front().future.defined()) out.future = cat(&PreparedInputs::future);
    return out;
}

void clip_gradients(HaicuNet& model, double max_norm) {
    if (max_norm <= 0.0) return;
    torch::nn::utils::clip_grad_norm_(model->parameters(), max_norm);
}

std::vector<torch::Tensor> snapshot(HaicuNet& model) {
    std::vector<torch::Tensor> out;
    for (const auto& p : model->parameters()) out.push_back(p.detach().clone());
    return out;
}

void restore(HaicuNet& model, const std::vector<torch::Tensor>& weights) {
    torch::NoGradGuard g;
    auto params = model->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(weights[i]);
}

}  // namespace

PreparedInputs prepare_samples(const std::vector<Scene>& scenes, const ModelConfig& cfg,
                               int horizon_steps, int stride, torch::Dtype dtype) {
    const auto opts = cfg.batch_options(horizon_steps, true);
    const auto refs = enumerate_samples(scenes, opts, stride);
    if (refs.empty()) throw InvalidParameter("no samples with a full history window and future");
    std::vector<PreparedInputs> parts;
    const std::size_t chunk = 2048;
    for (std::size_t i = 0; i < refs.size(); i += chunk) {
        std::span<const SampleRef> part(refs.data() + i, std::min(chunk, refs.size() - i));
        parts.push_back(prepare_inputs(make_batch(scenes, part, opts), cfg).to(dtype));
    }
    return concat(parts);
}

std::pair<double, double> validation_metrics(HaicuNet& model, const PreparedInputs& val) {
    torch::NoGradGuard no_grad;
    model->eval();
    const int steps = static_cast<int>(val.future.size(1));
    double ade_sum = 0.0;
    double nll_sum = 0.0;
    const int64_t n = val.size();
    const int64_t chunk = 1024;
    for (int64_t i = 0; i < n; i += chunk) {
        auto rows = torch::arange(i, std::min(n, i + chunk));
        auto part = val.index(rows);
        auto dist = model->distribution(part, steps);
        auto gt = part.future + part.origin.unsqueeze(1);
        ade_sum += (dist.most_likely() - gt).norm(2, -1).mean(1).sum().item<double>();
        nll_sum += (-dist.log_density(gt)).mean(1).sum().item<double>();
    }
    model->train();
    return {ade_sum / static_cast<double>(n), nll_sum / static_cast<double>(n)};
}

TrainResult train(HaicuNet& model, const std::vector<Scene>& train_scenes,
                  const std::vector<Scene>& val_scenes, const TrainingConfig& cfg,
                  std::ostream* curve_log) {
    cfg.validate();
    if (train_scenes.empty() || val_scenes.empty()) throw InvalidParameter("train and validation splits must be nonempty");
    const auto& mcfg = model->config();
    const auto dtype = cfg.double_precision ? torch::kDouble : torch::kFloat;
    model->to(dtype);
    torch::manual_seed(cfg.seed);
    std::mt19937_64 rng(cfg.seed);

    auto data = prepare_samples(train_scenes, mcfg, mcfg.horizon, cfg.sample_stride, dtype);
    auto val = prepare_samples(val_scenes, mcfg, mcfg.horizon, cfg.val_stride, dtype);
    const int64_t n = data.size();
    const long per_epoch = static_cast<long>((n + cfg.batch_size - 1) / cfg.batch_size);
    const auto schedule = cfg.beta.resolved(per_epoch * cfg.max_epochs);
    const auto angles = cfg.augmentation.angles();
    std::uniform_int_distribution<std::size_t> pick_angle(0, angles.size() - 1);

    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
    TrainResult result;
    result.best_val_anll = std::numeric_limits<double>::infinity();
    std::vector<torch::Tensor> best = snapshot(model);
    int stale = 0;
    std::vector<int64_t> order(static_cast<std::size_t>(n));
    model->train();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        auto perm = torch::tensor(order, torch::kLong);
        double loss_sum = 0.0;
        double beta = 0.0;
        for (long b = 0; b < per_epoch; ++b) {
            const int64_t lo = b * cfg.batch_size;
            const int64_t hi = std::min<int64_t>(n, lo + cfg.batch_size);
            auto batch = data.index(perm.slice(0, lo, hi));
            if (cfg.augmentation.enabled) {
                const double gamma = angles[pick_angle(rng)] * std::numbers::pi / 180.0;
                batch = batch.rotated(torch::full({hi - lo}, gamma, torch::kDouble));
            }
            beta = beta_at(result.iterations, schedule);
            auto terms = elbo_loss(model, batch, beta, cfg.mi_weight);
            const double value = terms.loss.item<double>();
            if (!std::isfinite(value)) {
                throw Divergence(result.iterations, "non-finite loss at batch " + std::to_string(result.iterations) +
                                                        " (epoch " + std::to_string(epoch) + ")");
            }
            opt.zero_grad();
            terms.loss.backward();
            clip_gradients(model, cfg.grad_clip);
            opt.step();
            loss_sum += value * static_cast<double>(hi - lo);
            ++result.iterations;
        }
        CurvePoint pt;
        pt.epoch = epoch;
        pt.train_loss = loss_sum / static_cast<double>(n);
        std::tie(pt.val_ade, pt.val_anll) = validation_metrics(model, val);
        pt.beta = beta;
        result.curve.push_back(pt);
        if (curve_log) {
            *curve_log << pt.to_json().dump() << '\n';
            curve_log->flush();
        }
        if (pt.val_anll < result.best_val_anll) {
            result.best_val_anll = pt.val_anll;
            result.best_epoch = epoch;
            best = snapshot(model);
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    restore(model, best);
    model->eval();
    return result;
}

}  // namespace haicu
