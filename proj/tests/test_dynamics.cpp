#include "haicu/dynamics.hpp"
#include "haicu/errors.hpp"
#include "oracles.hpp"

#undef CHECK
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace haicu;

namespace {

const auto kF64 = torch::TensorOptions().dtype(torch::kDouble);

torch::Tensor final_position(const torch::Tensor& controls, const torch::Tensor& start, double dt) {
    auto state = start.unsqueeze(0);
    for (int64_t t = 0; t < controls.size(0); ++t) {
        state = unicycle_step(state, controls[t].unsqueeze(0), dt);
    }
    return state[0].slice(0, 0, 2);
}

// Central-difference Jacobian of the final position w.r.t. all controls.
torch::Tensor fd_jacobian(const torch::Tensor& controls, const torch::Tensor& start, double dt) {
    const double eps = 1e-6;
    const auto n = controls.numel();
    auto jac = torch::zeros({2, n}, kF64);
    auto flat = controls.reshape({n});
    for (int64_t i = 0; i < n; ++i) {
        auto up = flat.clone();
        auto down = flat.clone();
        up[i] += eps;
        down[i] -= eps;
        auto d = (final_position(up.reshape(controls.sizes()), start, dt) -
                  final_position(down.reshape(controls.sizes()), start, dt)) / (2 * eps);
        jac.select(1, i).copy_(d);
    }
    return jac;
}

}  // namespace

TEST_CASE("single integrator with zero controls stays put") {
    auto mean = torch::zeros({20, 2}, kF64);
    auto cov = torch::zeros({20, 2, 2}, kF64);
    auto p0 = torch::tensor({3.0, -1.0}, kF64);
    auto out = integrate_single_integrator(mean, cov, p0, 0.1);
    CHECK(torch::allclose(out.mean, p0.expand({20, 2})));
    CHECK(out.cov.abs().max().item<double>() == 0.0);
}

TEST_CASE("single integrator closed forms") {
    std::vector<Gaussian2> u(20);
    for (auto& g : u) {
        g.mean = {1.0, 0.0};
        g.cov = 0.01 * Eigen::Matrix2d::Identity();
    }
    const Vec2 p0(2.0, 5.0);
    const auto out = integrate_single_integrator(u, p0, 0.1);
    REQUIRE(out.size() == 20);
    CHECK((out.back().mean - (p0 + Vec2(2.0, 0.0))).norm() < 1e-12);
    CHECK((out.back().cov - 0.002 * Eigen::Matrix2d::Identity()).norm() < 1e-12);
    CHECK((out[9].mean - (p0 + Vec2(1.0, 0.0))).norm() < 1e-12);
}

TEST_CASE("single integrator matches Monte Carlo") {
    const auto tally = haicu::testing::single_integrator_vs_monte_carlo(50, 100000, 5);
    CHECK(tally.checks == 250);
    // At 3 sigma about 0.7 excursions are expected by chance.
    CHECK(tally.excursions <= 5);
}

TEST_CASE("unicycle straight line") {
    std::vector<Gaussian2> u(30);
    UnicyclePose start{{1.0, 2.0}, 0.0, 4.0};
    const auto out = unicycle_integrate(u, start, 0.1);
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double elapsed = 0.1 * static_cast<double>(t + 1);
        CHECK(out[t].mean.x() == doctest::Approx(1.0 + 4.0 * elapsed).epsilon(1e-12));
        CHECK(out[t].mean.y() == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("unicycle quarter circle") {
    CHECK(haicu::testing::quarter_circle_error() < 1e-6);
}

TEST_CASE("unicycle small heading rate approaches straight line") {
    std::vector<Gaussian2> tiny(20);
    std::vector<Gaussian2> zero(20);
    for (auto& g : tiny) g.mean = {1e-9, 0.5};
    for (auto& g : zero) g.mean = {0.0, 0.5};
    const UnicyclePose start{{0.0, 0.0}, 0.3, 2.0};
    const auto a = unicycle_integrate(tiny, start, 0.1);
    const auto b = unicycle_integrate(zero, start, 0.1);
    for (std::size_t t = 0; t < a.size(); ++t) CHECK((a[t].mean - b[t].mean).norm() < 1e-6);

    // Either side of the threshold agrees closely.
    std::vector<Gaussian2> below(20);
    std::vector<Gaussian2> above(20);
    for (auto& g : below) g.mean = {kUnicycleStraightThreshold - 1e-10, 0.5};
    for (auto& g : above) g.mean = {kUnicycleStraightThreshold + 1e-10, 0.5};
    const auto lo = unicycle_integrate(below, start, 0.1);
    const auto hi = unicycle_integrate(above, start, 0.1);
    CHECK((lo.back().mean - hi.back().mean).norm() < 1e-8);
}

TEST_CASE("unicycle covariance equals finite-difference linearization") {
    torch::manual_seed(23);
    const double dt = 0.1;
    for (int trial = 0; trial < 12; ++trial) {
        const int64_t steps = 6;
        auto controls = torch::empty({steps, 2}, kF64).uniform_(-1.5, 1.5);
        if (trial % 3 == 0) controls.select(1, 0).zero_();  // straight-line branch
        auto start = torch::tensor({0.5, -0.2, 0.7 * trial, 1.0 + 0.3 * trial}, kF64);
        auto diag = torch::empty({steps, 2}, kF64).uniform_(0.01, 0.2);
        auto cov = torch::diag_embed(diag);

        UnicycleInit init{start.slice(0, 0, 2), start[2], start[3]};
        auto analytic = unicycle_integrate(controls, cov, init, dt);
        auto jac = fd_jacobian(controls, start, dt);
        auto expected = torch::matmul(jac * diag.reshape({1, -1}), jac.t());
        auto got = analytic.cov[steps - 1];
        const double err = (got - expected).abs().max().item<double>();
        CHECK(err < 1e-7 * (1.0 + expected.abs().max().item<double>()));

        auto mean_direct = final_position(controls, start, dt);
        CHECK(torch::allclose(analytic.mean[steps - 1], mean_direct, 1e-12, 1e-12));
    }
}

TEST_CASE("unicycle gradients are finite at zero heading rate") {
    auto controls = torch::zeros({5, 2}, kF64).requires_grad_(true);
    auto cov = (0.1 * torch::eye(2, kF64)).expand({5, 2, 2});
    UnicycleInit init{torch::zeros({2}, kF64), torch::tensor(0.0, kF64), torch::tensor(1.0, kF64)};
    auto out = unicycle_integrate(controls, cov, init, 0.1);
    (out.mean.sum() + out.cov.sum()).backward();
    CHECK(torch::isfinite(controls.grad()).all().item<bool>());
}

TEST_CASE("plain-value integrators reject bad input") {
    std::vector<Gaussian2> u(3);
    u[1].cov << 1.0, 0.0, 0.0, -0.5;
    CHECK_THROWS_AS(integrate_single_integrator(u, Vec2::Zero(), 0.1), InvalidParameter);
    CHECK_THROWS_AS(unicycle_integrate(u, UnicyclePose{}, 0.1), InvalidParameter);
    u[1].cov << 1.0, 0.3, 0.0, 1.0;
    CHECK_THROWS_AS(integrate_single_integrator(u, Vec2::Zero(), 0.1), InvalidParameter);
    std::vector<Gaussian2> ok(3);
    CHECK_THROWS_AS(integrate_single_integrator(ok, Vec2::Zero(), 0.0), InvalidParameter);
    CHECK(integrate_single_integrator(std::span<const Gaussian2>{}, Vec2::Zero(), 0.1).empty());
}
