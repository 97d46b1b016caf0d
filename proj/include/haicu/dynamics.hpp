#pragma once

#include "haicu/scene.hpp"

#include <torch/torch.h>

#include <span>
#include <vector>

namespace haicu {

/// Per-step position distribution from integrating Gaussian controls.
struct PositionGaussians {
    torch::Tensor mean;  // (..., T, 2) [m]
    torch::Tensor cov;   // (..., T, 2, 2) [m^2]
};

/// Single integrator, u = velocity. Controls are independent across steps, so
///   mean_t = p0 + dt * sum_{s<=t} mean(u_s)
///   cov_t  = dt^2 * sum_{s<=t} cov(u_s)
/// control_mean: (..., T, 2), control_cov: (..., T, 2, 2), p0: (..., 2).
PositionGaussians integrate_single_integrator(const torch::Tensor& control_mean,
                                              const torch::Tensor& control_cov,
                                              const torch::Tensor& p0, double dt);

/// Heading rate below which the unicycle step uses its straight-line limit.
inline constexpr double kUnicycleStraightThreshold = 1e-3;

struct UnicycleInit {
    torch::Tensor position;  // (..., 2)
    torch::Tensor heading;   // (...)   [rad]
    torch::Tensor speed;     // (...)   [m/s]
};

/// Dynamically-extended unicycle with controls u = (heading rate, longitudinal
/// acceleration), held constant over each step and integrated exactly. The
/// covariance of the (x, y, heading, speed) state is propagated by first-order
/// linearization about the mean.
PositionGaussians unicycle_integrate(const torch::Tensor& control_mean,
                                     const torch::Tensor& control_cov, const UnicycleInit& init,
                                     double dt);

/// One exact unicycle step for a batch of (x, y, heading, speed) states,
/// shape (N, 4), under controls (N, 2). Used for sampling.
torch::Tensor unicycle_step(const torch::Tensor& state, const torch::Tensor& control, double dt);

// Plain-value overloads.

struct Gaussian2 {
    Vec2 mean = Vec2::Zero();
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
};

struct UnicyclePose {
    Vec2 position = Vec2::Zero();
    double heading = 0.0;
    double speed = 0.0;
};

/// Throws InvalidParameter for dt <= 0 or a control covariance that is not
/// symmetric positive semi-definite.
std::vector<Gaussian2> integrate_single_integrator(std::span<const Gaussian2> controls,
                                                   const Vec2& p0, double dt);
std::vector<Gaussian2> unicycle_integrate(std::span<const Gaussian2> controls,
                                          const UnicyclePose& init, double dt);

}  // namespace haicu
