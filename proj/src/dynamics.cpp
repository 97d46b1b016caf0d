#include "haicu/dynamics.hpp"

#include "haicu/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace haicu {

namespace {

void require_positive_dt(double dt) {
    if (!(dt > 0.0)) throw InvalidParameter("dt must be positive");
}

void require_psd(const Eigen::Matrix2d& cov) {
    if (!cov.allFinite() || std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * (1.0 + cov.norm())) {
        throw InvalidParameter("control covariance is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
    if (eig.eigenvalues().minCoeff() < -1e-12 * (1.0 + cov.norm())) {
        throw InvalidParameter("control covariance is not positive semi-definite");
    }
}

// Row-major 4x4 from 16 tensors of shape (N).
torch::Tensor stack_matrix(const std::vector<torch::Tensor>& entries, int rows, int cols) {
    auto flat = torch::stack(entries, -1);
    auto sizes = flat.sizes().vec();
    sizes.pop_back();
    sizes.push_back(rows);
    sizes.push_back(cols);
    return flat.reshape(sizes);
}

}  // namespace

PositionGaussians integrate_single_integrator(const torch::Tensor& control_mean,
                                              const torch::Tensor& control_cov,
                                              const torch::Tensor& p0, double dt) {
    require_positive_dt(dt);
    if (control_mean.size(-1) != 2 || control_cov.size(-1) != 2 || control_cov.size(-2) != 2 ||
        p0.size(-1) != 2) {
        throw ShapeMismatch("single integrator expects 2-D controls and positions");
    }
    PositionGaussians out;
    out.mean = p0.unsqueeze(-2) + dt * torch::cumsum(control_mean, -2);
    out.cov = (dt * dt) * torch::cumsum(control_cov, -3);
    return out;
}

torch::Tensor unicycle_step(const torch::Tensor& state, const torch::Tensor& control, double dt) {
    auto x = state.select(-1, 0);
    auto y = state.select(-1, 1);
    auto th = state.select(-1, 2);
    auto v = state.select(-1, 3);
    auto w = control.select(-1, 0);
    auto a = control.select(-1, 1);

    auto straight = w.abs() < kUnicycleStraightThreshold;
    auto w_safe = torch::where(straight, torch::full_like(w, kUnicycleStraightThreshold), w);
    auto th1 = th + w_safe * dt;
    auto v1 = v + a * dt;
    auto s0 = torch::sin(th), c0 = torch::cos(th), s1 = torch::sin(th1), c1 = torch::cos(th1);
    auto dx_turn = (v1 * s1 - v * s0) / w_safe + a * (c1 - c0) / (w_safe * w_safe);
    auto dy_turn = (-v1 * c1 + v * c0) / w_safe + a * (s1 - s0) / (w_safe * w_safe);

    auto len = v * dt + 0.5 * a * dt * dt;
    auto bend = a * w * (dt * dt * dt / 12.0);
    auto mid = th + 0.5 * w * dt;
    auto sm = torch::sin(mid), cm = torch::cos(mid);
    auto dx = torch::where(straight, len * cm - bend * sm, dx_turn);
    auto dy = torch::where(straight, len * sm + bend * cm, dy_turn);
    return torch::stack({x + dx, y + dy, th + w * dt, v1}, -1);
}

PositionGaussians unicycle_integrate(const torch::Tensor& control_mean,
                                     const torch::Tensor& control_cov, const UnicycleInit& init,
                                     double dt) {
    require_positive_dt(dt);
    if (control_mean.size(-1) != 2 || control_cov.size(-1) != 2) {
        throw ShapeMismatch("unicycle expects (heading rate, acceleration) controls");
    }
    const auto steps = control_mean.size(-2);
    auto lead = control_mean.sizes().vec();
    lead.resize(lead.size() - 2);
    const auto opts = control_mean.options();

    auto x = init.position.select(-1, 0).expand(lead);
    auto y = init.position.select(-1, 1).expand(lead);
    auto th = init.heading.expand(lead).to(opts.dtype());
    auto v = init.speed.expand(lead).to(opts.dtype());
    x = x.to(opts.dtype());
    y = y.to(opts.dtype());

    auto p_sizes = lead;
    p_sizes.push_back(4);
    p_sizes.push_back(4);
    auto cov = torch::zeros(p_sizes, opts);
    auto zero = torch::zeros_like(x);
    auto one = torch::ones_like(x);
    auto dt_t = torch::full_like(x, dt);

    std::vector<torch::Tensor> means;
    std::vector<torch::Tensor> covs;
    for (int64_t t = 0; t < steps; ++t) {
        auto u = control_mean.select(-2, t);
        auto su = control_cov.select(-3, t);
        auto w = u.select(-1, 0);
        auto a = u.select(-1, 1);
        auto straight = w.abs() < kUnicycleStraightThreshold;
        auto ws = torch::where(straight, torch::full_like(w, kUnicycleStraightThreshold), w);
        auto th1 = th + ws * dt;
        auto v1 = v + a * dt;
        auto s0 = torch::sin(th), c0 = torch::cos(th), s1 = torch::sin(th1), c1 = torch::cos(th1);
        auto w2 = ws * ws;
        auto w3 = w2 * ws;

        // Exact integration for |w| >= threshold.
        auto fx = (v1 * s1 - v * s0) / ws + a * (c1 - c0) / w2;
        auto fy = (-v1 * c1 + v * c0) / ws + a * (s1 - s0) / w2;
        auto fx_th = (v1 * c1 - v * c0) / ws + a * (s0 - s1) / w2;
        auto fy_th = fx;
        auto fx_v = (s1 - s0) / ws;
        auto fy_v = (c0 - c1) / ws;
        auto fx_w = v1 * c1 * dt / ws - (v1 * s1 - v * s0) / w2 - a * s1 * dt / w2 -
                    2.0 * a * (c1 - c0) / w3;
        auto fy_w = v1 * s1 * dt / ws - (-v1 * c1 + v * c0) / w2 + a * c1 * dt / w2 -
                    2.0 * a * (s1 - s0) / w3;
        auto fx_a = dt * s1 / ws + (c1 - c0) / w2;
        auto fy_a = -dt * c1 / ws + (s1 - s0) / w2;

        // Small heading rate: expansion about the mid-step heading, first order in w.
        const double c3 = dt * dt * dt / 12.0;
        auto len = v * dt + 0.5 * a * dt * dt;
        auto bend = a * w * c3;
        auto mid = th + 0.5 * w * dt;
        auto sm = torch::sin(mid), cm = torch::cos(mid);
        auto gx = len * cm - bend * sm;
        auto gy = len * sm + bend * cm;

        fx = torch::where(straight, gx, fx);
        fy = torch::where(straight, gy, fy);
        fx_th = torch::where(straight, -gy, fx_th);
        fy_th = torch::where(straight, gx, fy_th);
        fx_v = torch::where(straight, dt * cm, fx_v);
        fy_v = torch::where(straight, dt * sm, fy_v);
        fx_w = torch::where(straight, -gy * 0.5 * dt - a * c3 * sm, fx_w);
        fy_w = torch::where(straight, gx * 0.5 * dt + a * c3 * cm, fy_w);
        fx_a = torch::where(straight, 0.5 * dt * dt * cm - w * c3 * sm, fx_a);
        fy_a = torch::where(straight, 0.5 * dt * dt * sm + w * c3 * cm, fy_a);

        auto jac_state = stack_matrix({one, zero, fx_th, fx_v,
                                       zero, one, fy_th, fy_v,
                                       zero, zero, one, zero,
                                       zero, zero, zero, one}, 4, 4);
        auto jac_control = stack_matrix({fx_w, fx_a,
                                         fy_w, fy_a,
                                         dt_t, zero,
                                         zero, dt_t}, 4, 2);
        cov = torch::matmul(torch::matmul(jac_state, cov), jac_state.transpose(-1, -2)) +
              torch::matmul(torch::matmul(jac_control, su), jac_control.transpose(-1, -2));

        x = x + fx;
        y = y + fy;
        th = th + w * dt;
        v = v1;
        means.push_back(torch::stack({x, y}, -1));
        covs.push_back(cov.index({"...", torch::indexing::Slice(0, 2),
                                  torch::indexing::Slice(0, 2)}));
    }
    PositionGaussians out;
    out.mean = torch::stack(means, -2);
    out.cov = torch::stack(covs, -3);
    return out;
}

namespace {

std::pair<torch::Tensor, torch::Tensor> to_tensors(std::span<const Gaussian2> controls) {
    const auto n = static_cast<int64_t>(controls.size());
    auto mean = torch::zeros({n, 2}, torch::kDouble);
    auto cov = torch::zeros({n, 2, 2}, torch::kDouble);
    auto m = mean.accessor<double, 2>();
    auto c = cov.accessor<double, 3>();
    for (int64_t i = 0; i < n; ++i) {
        const auto& g = controls[static_cast<std::size_t>(i)];
        require_psd(g.cov);
        for (int r = 0; r < 2; ++r) {
            m[i][r] = g.mean(r);
            for (int k = 0; k < 2; ++k) c[i][r][k] = g.cov(r, k);
        }
    }
    return {mean, cov};
}

std::vector<Gaussian2> from_tensors(const PositionGaussians& p) {
    std::vector<Gaussian2> out(static_cast<std::size_t>(p.mean.size(0)));
    auto m = p.mean.accessor<double, 2>();
    auto c = p.cov.accessor<double, 3>();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto t = static_cast<int64_t>(i);
        out[i].mean = {m[t][0], m[t][1]};
        out[i].cov << c[t][0][0], c[t][0][1], c[t][1][0], c[t][1][1];
    }
    return out;
}

}  // namespace

std::vector<Gaussian2> integrate_single_integrator(std::span<const Gaussian2> controls,
                                                   const Vec2& p0, double dt) {
    require_positive_dt(dt);
    if (controls.empty()) return {};
    torch::NoGradGuard no_grad;
    auto [mean, cov] = to_tensors(controls);
    auto origin = torch::tensor({p0.x(), p0.y()}, torch::kDouble);
    return from_tensors(integrate_single_integrator(mean, cov, origin, dt));
}

std::vector<Gaussian2> unicycle_integrate(std::span<const Gaussian2> controls,
                                          const UnicyclePose& init, double dt) {
    require_positive_dt(dt);
    if (controls.empty()) return {};
    torch::NoGradGuard no_grad;
    auto [mean, cov] = to_tensors(controls);
    UnicycleInit u;
    u.position = torch::tensor({init.position.x(), init.position.y()}, torch::kDouble);
    u.heading = torch::tensor(init.heading, torch::kDouble);
    u.speed = torch::tensor(init.speed, torch::kDouble);
    return from_tensors(unicycle_integrate(mean, cov, u, dt));
}

}  // namespace haicu
