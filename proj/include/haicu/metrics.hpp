#pragma once

#include "haicu/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace haicu {

// Batched metrics take (B, T, 2) trajectories and score the first `horizon`
// steps; they return one value per row.

torch::Tensor ade(const torch::Tensor& pred, const torch::Tensor& gt, int horizon);
torch::Tensor fde(const torch::Tensor& pred, const torch::Tensor& gt, int horizon);
double ade(std::span<const Vec2> pred, std::span<const Vec2> gt, int horizon);
double fde(std::span<const Vec2> pred, std::span<const Vec2> gt, int horizon);

enum class NllMode { average, final };

/// -ln sum_z pi_z N(gt_t; mu_zt, Sigma_zt), averaged over the first `horizon`
/// steps or taken at the last of them [nats].
torch::Tensor nll(const TrajectoryDistribution& dist, const torch::Tensor& gt, int horizon, NllMode mode);

struct MinDisplacement {
    torch::Tensor min_ade;  // (B)
    torch::Tensor min_fde;  // (B)
};

/// Best of `n_samples` ancestral samples; ADE and FDE minimised separately.
MinDisplacement min_ade_fde(const TrajectoryDistribution& dist, const torch::Tensor& gt, int n_samples,
                            int horizon, std::uint64_t seed);

struct MetricSummary {
    double mean = 0.0;
    double se = 0.0;  // sample stdev / sqrt(n)
    long n = 0;
};

MetricSummary summarize(std::span<const double> values);

struct WelchTest {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-tailed
};

/// Unpaired two-sample t-test without the equal-variance assumption.
WelchTest welch_t_test(std::span<const double> a, std::span<const double> b);

struct MetricSeries {
    std::string metric;  // ADE, FDE, ANLL, FNLL, minADE, minFDE
    double horizon_s = 0.0;
    std::string group;   // "all" or a class name
    std::vector<double> values;  // one per evaluated (agent, timestep)
};

struct EvalReport {
    std::string model_id;
    std::vector<std::string> class_names;
    std::vector<double> horizons_s;
    std::vector<MetricSeries> series;

    const MetricSeries& find(const std::string& metric, double horizon_s, const std::string& group = "all") const;
    MetricSummary summary(const std::string& metric, double horizon_s, const std::string& group = "all") const;
    nlohmann::json to_json() const;
};

struct Comparison {
    std::string metric;
    double horizon_s = 0.0;
    std::string group;
    MetricSummary a;
    MetricSummary b;
    WelchTest test;
};

/// Every shared (metric, horizon, group) of two reports.
std::vector<Comparison> compare(const EvalReport& a, const EvalReport& b);
nlohmann::json comparisons_to_json(const std::vector<Comparison>& rows, const std::string& a_id,
                                   const std::string& b_id);

struct EvalOptions {
    std::vector<double> horizons_s = {1.0, 2.0, 3.0};
    int n_samples = 20;
    std::uint64_t seed = 0;
    int stride = 1;
    int batch_size = 512;
};

/// Evaluates every (agent, timestep) with a full future at each horizon.
/// Rows are grouped by the agent's modal argmax class. Throws
/// InvalidParameter when no agent is eligible at some horizon.
EvalReport evaluate(HaicuNet& model, const std::vector<Scene>& scenes, const EvalOptions& opts);

}  // namespace haicu
