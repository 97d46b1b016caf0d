#include "haicu/metrics.hpp"

#include "haicu/errors.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>

namespace haicu {

using torch::indexing::Slice;

namespace {

void check_horizon(const torch::Tensor& pred, const torch::Tensor& gt, int horizon) {
    if (horizon < 1) throw InvalidParameter("horizon must be >= 1");
    if (pred.size(-2) < horizon || gt.size(-2) < horizon) {
        throw ShapeMismatch("trajectories shorter than the requested horizon");
    }
}

torch::Tensor step_errors(const torch::Tensor& pred, const torch::Tensor& gt, int horizon) {
    check_horizon(pred, gt, horizon);
    auto p = pred.index({"...", Slice(0, horizon), Slice()});
    auto g = gt.index({"...", Slice(0, horizon), Slice()});
    return (p - g).norm(2, -1);
}

torch::Tensor to_tensor(std::span<const Vec2> traj) {
    auto t = torch::empty({static_cast<int64_t>(traj.size()), 2}, torch::kDouble);
    auto a = t.accessor<double, 2>();
    for (std::size_t i = 0; i < traj.size(); ++i) {
        a[static_cast<int64_t>(i)][0] = traj[i].x();
        a[static_cast<int64_t>(i)][1] = traj[i].y();
    }
    return t;
}

}  // namespace

torch::Tensor ade(const torch::Tensor& pred, const torch::Tensor& gt, int horizon) {
    return step_errors(pred, gt, horizon).mean(-1);
}

torch::Tensor fde(const torch::Tensor& pred, const torch::Tensor& gt, int horizon) {
    return step_errors(pred, gt, horizon).select(-1, horizon - 1);
}

double ade(std::span<const Vec2> pred, std::span<const Vec2> gt, int horizon) {
    return ade(to_tensor(pred), to_tensor(gt), horizon).item<double>();
}

double fde(std::span<const Vec2> pred, std::span<const Vec2> gt, int horizon) {
    return fde(to_tensor(pred), to_tensor(gt), horizon).item<double>();
}

torch::Tensor nll(const TrajectoryDistribution& dist, const torch::Tensor& gt, int horizon, NllMode mode) {
    check_horizon(dist.mean, gt, horizon);
    auto d = dist.first_steps(horizon);
    auto lp = d.log_density(gt.index({Slice(), Slice(0, horizon)}).to(d.mean.scalar_type()));
    return mode == NllMode::average ? -lp.mean(1) : -lp.select(1, horizon - 1);
}

MinDisplacement min_ade_fde(const TrajectoryDistribution& dist, const torch::Tensor& gt, int n_samples,
                            int horizon, std::uint64_t seed) {
    if (n_samples < 1) throw InvalidParameter("n_samples must be >= 1");
    check_horizon(dist.mean, gt, horizon);
    auto s = dist.first_steps(horizon).sample(n_samples, seed);  // (B, n, T, 2)
    auto g = gt.index({Slice(), Slice(0, horizon)}).unsqueeze(1).to(s.scalar_type());
    auto err = (s - g).norm(2, -1);  // (B, n, T)
    return {std::get<0>(err.mean(-1).min(1)), std::get<0>(err.select(-1, horizon - 1).min(1))};
}

MetricSummary summarize(std::span<const double> values) {
    MetricSummary s;
    s.n = static_cast<long>(values.size());
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.se = std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    }
    return s;
}

WelchTest welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw InvalidParameter("t-test needs at least two values per group");
    const auto sa = summarize(a);
    const auto sb = summarize(b);
    const double va = sa.se * sa.se;  // variance of the mean
    const double vb = sb.se * sb.se;
    WelchTest w;
    if (va + vb == 0.0) {
        w.t = sa.mean == sb.mean ? 0.0 : std::copysign(INFINITY, sa.mean - sb.mean);
        w.df = static_cast<double>(a.size() + b.size() - 2);
        w.p = sa.mean == sb.mean ? 1.0 : 0.0;
        return w;
    }
    w.t = (sa.mean - sb.mean) / std::sqrt(va + vb);
    w.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(sa.n - 1) + vb * vb / static_cast<double>(sb.n - 1));
    boost::math::students_t dist(w.df);
    w.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(w.t)));
    return w;
}

const MetricSeries& EvalReport::find(const std::string& metric, double horizon_s, const std::string& group) const {
    for (const auto& s : series) {
        if (s.metric == metric && std::abs(s.horizon_s - horizon_s) < 1e-9 && s.group == group) return s;
    }
    throw NotFound("no " + metric + " values for group " + group);
}

MetricSummary EvalReport::summary(const std::string& metric, double horizon_s, const std::string& group) const {
    return summarize(find(metric, horizon_s, group).values);
}

namespace {

nlohmann::json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"se", s.se}, {"n", s.n}}; }

const std::vector<std::string> kMetrics = {"ADE", "FDE", "ANLL", "FNLL", "minADE", "minFDE"};

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    std::vector<std::string> groups = {"all"};
    groups.insert(groups.end(), class_names.begin(), class_names.end());
    for (const auto& g : groups) {
        for (double h : horizons_s) {
            nlohmann::json row = {{"class", g}, {"horizon_s", h}};
            bool any = false;
            for (const auto& m : kMetrics) {
                for (const auto& s : series) {
                    if (s.metric == m && s.group == g && std::abs(s.horizon_s - h) < 1e-9) {
                        row[m] = summary_json(summarize(s.values));
                        any = true;
                    }
                }
            }
            if (any) rows.push_back(row);
        }
    }
    return {{"model", model_id},
            {"units", {{"ADE", "m"}, {"FDE", "m"}, {"minADE", "m"}, {"minFDE", "m"}, {"ANLL", "nats"}, {"FNLL", "nats"}}},
            {"sampling_unit", "agent-timestep"},
            {"rows", rows}};
}

std::vector<Comparison> compare(const EvalReport& a, const EvalReport& b) {
    std::vector<Comparison> out;
    for (const auto& sa : a.series) {
        for (const auto& sb : b.series) {
            if (sa.metric != sb.metric || sa.group != sb.group || std::abs(sa.horizon_s - sb.horizon_s) > 1e-9) continue;
            if (sa.values.size() < 2 || sb.values.size() < 2) continue;
            Comparison c;
            c.metric = sa.metric;
            c.horizon_s = sa.horizon_s;
            c.group = sa.group;
            c.a = summarize(sa.values);
            c.b = summarize(sb.values);
            c.test = welch_t_test(sa.values, sb.values);
            out.push_back(c);
        }
    }
    return out;
}

nlohmann::json comparisons_to_json(const std::vector<Comparison>& rows, const std::string& a_id,
                                   const std::string& b_id) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : rows) {
        out.push_back({{"a", a_id},
                       {"b", b_id},
                       {"metric", c.metric},
                       {"horizon_s", c.horizon_s},
                       {"class", c.group},
                       {"mean_a", c.a.mean},
                       {"mean_b", c.b.mean},
                       {"t", c.test.t},
                       {"df", c.test.df},
                       {"p", c.test.p}});
    }
    return out;
}

EvalReport evaluate(HaicuNet& model, const std::vector<Scene>& scenes, const EvalOptions& opts) {
    if (scenes.empty()) throw InvalidParameter("no scenes to evaluate");
    if (opts.batch_size < 1 || opts.stride < 1) throw InvalidParameter("batch_size and stride must be >= 1");
    const auto& cfg = model->config();
    EvalReport report;
    report.class_names = scenes.front().class_names;
    report.horizons_s = opts.horizons_s;
    const std::size_t k = report.class_names.size();

    for (double h_s : opts.horizons_s) {
        const int steps = static_cast<int>(std::lround(h_s / cfg.dt));
        if (steps < 1) throw InvalidParameter("horizon shorter than one step");
        const auto bopts = cfg.batch_options(steps, true);
        const auto refs = enumerate_samples(scenes, bopts, opts.stride);
        if (refs.empty()) {
            throw InvalidParameter("no agent has a " + std::to_string(h_s) + " s future to evaluate");
        }
        std::vector<std::vector<std::vector<double>>> values(
            kMetrics.size(), std::vector<std::vector<double>>(k + 1));  // [metric][group]
        for (std::size_t i = 0; i < refs.size(); i += static_cast<std::size_t>(opts.batch_size)) {
            const auto len = std::min(static_cast<std::size_t>(opts.batch_size), refs.size() - i);
            auto batch = make_batch(scenes, std::span<const SampleRef>(refs.data() + i, len), bopts);
            auto dist = predict(model, batch, steps);
            auto gt = batch.future.to(dist.mean.scalar_type());
            auto best = dist.most_likely();
            auto mins = min_ade_fde(dist, gt, opts.n_samples, steps, opts.seed + i);
            std::array<torch::Tensor, 6> cols = {ade(best, gt, steps), fde(best, gt, steps),
                                                 nll(dist, gt, steps, NllMode::average),
                                                 nll(dist, gt, steps, NllMode::final), mins.min_ade, mins.min_fde};
            for (std::size_t m = 0; m < cols.size(); ++m) {
                auto c = cols[m].to(torch::kDouble).contiguous();
                const double* p = c.data_ptr<double>();
                for (std::size_t r = 0; r < len; ++r) {
                    values[m][0].push_back(p[r]);
                    const auto cls = static_cast<std::size_t>(batch.modal_classes[r]);
                    if (cls < k) values[m][cls + 1].push_back(p[r]);
                }
            }
        }
        for (std::size_t m = 0; m < kMetrics.size(); ++m) {
            for (std::size_t g = 0; g <= k; ++g) {
                if (values[m][g].empty()) continue;
                report.series.push_back({kMetrics[m], h_s, g == 0 ? "all" : report.class_names[g - 1],
                                         std::move(values[m][g])});
            }
        }
    }
    return report;
}

}  // namespace haicu
