#include "haicu/checkpoint.hpp"
#include "haicu/errors.hpp"
#include "haicu/model.hpp"
#include "support.hpp"

#undef CHECK
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace haicu;
using haicu::testing::small_scenes;
using haicu::testing::tiny_config;

namespace {

AgentTrack straight_track(const std::string& id, Vec2 start, Vec2 vel, int steps,
                          const ClassProbVector& probs) {
    AgentTrack t;
    t.agent_id = id;
    for (int i = 0; i < steps; ++i) {
        AgentState s;
        s.timestep = i;
        s.position = start + 0.1 * i * vel;
        s.velocity = vel;
        t.states.push_back(s);
        t.class_probs.push_back(probs);
    }
    return t;
}

Scene crowd_scene(const std::vector<std::pair<Vec2, ClassProbVector>>& agents) {
    Scene s;
    s.scene_id = "crowd";
    s.class_names = {"car", "pedestrian", "bicycle"};
    int i = 0;
    for (const auto& [pos, probs] : agents) {
        s.tracks.push_back(straight_track("a" + std::to_string(i), pos, {1.0 + 0.3 * i, -0.5 * i}, 12, probs));
        ++i;
    }
    return s;
}

void copy_weights(HaicuNet& from, HaicuNet& to) {
    torch::NoGradGuard g;
    auto src = from->named_parameters();
    for (auto& p : to->named_parameters()) p.value().copy_(src[p.key()]);
}

ObservationBatch sample_batch(const std::vector<Scene>& scenes, const ModelConfig& cfg, int limit) {
    auto opts = cfg.batch_options(cfg.horizon, true);
    auto refs = enumerate_samples(scenes, opts, 3);
    if (static_cast<int>(refs.size()) > limit) refs.resize(static_cast<std::size_t>(limit));
    return make_batch(scenes, refs, opts);
}

}  // namespace

TEST_CASE("neighbour order does not change the embedding") {
    auto cfg = tiny_config();
    auto model = make_model(cfg, 1);
    model->to(torch::kDouble);
    const auto u = ClassProbVector({0.5, 0.3, 0.2});
    auto scene = crowd_scene({{{0, 0}, u}, {{2, 1}, u}, {{-1, 3}, ClassProbVector({0.1, 0.8, 0.1})},
                              {{3, -2}, ClassProbVector({0.2, 0.2, 0.6})}});
    auto b = make_scene_batch(scene, 8, cfg.batch_options(cfg.horizon, false));
    auto first = b.select(std::vector<int64_t>{0});
    REQUIRE(first.neighbor_ids.size() == 3);

    auto permuted = first;
    auto perm = torch::tensor({2, 0, 1}, torch::kLong);
    permuted.neighbor_states = first.neighbor_states.index_select(0, perm);
    permuted.neighbor_probs = first.neighbor_probs.index_select(0, perm);
    permuted.neighbor_mask = first.neighbor_mask.index_select(0, perm);

    torch::NoGradGuard g;
    auto a = model->encode(prepare_inputs(first, cfg)).ex;
    auto p = model->encode(prepare_inputs(permuted, cfg)).ex;
    CHECK(torch::equal(a, p));
}

TEST_CASE("empty neighbourhood gives the zero-input edge response") {
    auto cfg = tiny_config();
    auto model = make_model(cfg, 2);
    model->to(torch::kDouble);
    const auto u = ClassProbVector::uniform(3);
    auto solo = crowd_scene({{{0, 0}, u}});
    auto far = crowd_scene({{{0, 0}, u}, {{200, 200}, u}});
    auto opts = cfg.batch_options(cfg.horizon, false);
    auto bs = make_scene_batch(solo, 8, opts);
    auto bf = make_scene_batch(far, 8, opts).select(std::vector<int64_t>{0});
    CHECK(bs.neighbor_ids.empty());
    CHECK(bf.neighbor_ids.empty());

    torch::NoGradGuard g;
    auto in = prepare_inputs(bs, cfg);
    CHECK(in.edge.abs().max().item<double>() == 0.0);
    auto ex = model->encode(in).ex;
    CHECK(torch::equal(ex, model->encode(prepare_inputs(bf, cfg)).ex));
    CHECK(torch::isfinite(ex).all().item<bool>());
}

TEST_CASE("one_hot and full_probs agree on one-hot data") {
    auto scenes = small_scenes(4, 5, true);
    auto full_cfg = tiny_config(Variant::full_probs);
    auto hot_cfg = tiny_config(Variant::one_hot);
    auto full = make_model(full_cfg, 3);
    auto hot = make_model(hot_cfg, 99);
    full->to(torch::kDouble);
    hot->to(torch::kDouble);
    copy_weights(full, hot);
    auto batch = sample_batch(scenes, full_cfg, 40);
    auto a = predict(full, batch);
    auto b = predict(hot, batch);
    CHECK(torch::equal(a.mean, b.mean));
    CHECK(torch::equal(a.cov, b.cov));
    CHECK(torch::equal(a.log_weights, b.log_weights));

    // Same seed gives the same initial weights across these two variants.
    auto seeded = make_model(hot_cfg, 3);
    seeded->to(torch::kDouble);
    auto c = predict(seeded, batch);
    CHECK(torch::equal(a.mean, c.mean));
}

TEST_CASE("multi_head with certain class equals that head alone") {
    auto cfg = tiny_config(Variant::multi_head);
    auto model = make_model(cfg, 4);
    model->to(torch::kDouble);
    CHECK(cfg.head_dynamics(0) == DynamicsKind::unicycle);
    CHECK(cfg.head_dynamics(1) == DynamicsKind::single_integrator);

    auto scene = crowd_scene({{{0, 0}, ClassProbVector::one_hot(3, 0)},
                              {{3, 1}, ClassProbVector({0.3, 0.3, 0.4})}});
    auto batch = make_scene_batch(scene, 8, cfg.batch_options(cfg.horizon, false)).select(std::vector<int64_t>{0});
    torch::NoGradGuard g;
    auto dist = predict(model, batch);
    CHECK(dist.num_components() == 3 * cfg.latent);

    auto in = prepare_inputs(batch, cfg);
    auto enc = model->encode(in);
    auto car = model->decode(enc, in, 0, cfg.horizon);
    auto log_prior = torch::log_softmax(model->prior_logits(enc.ex), 1);
    TrajectoryDistribution head;
    head.log_weights = log_prior;
    head.mean = car.position_mean + in.origin.view({1, 1, 1, 2});
    head.cov = car.position_cov;

    auto probe = dist.mean.index({torch::indexing::Slice(), 1}) + 0.4;
    CHECK(torch::allclose(dist.log_density(probe), head.log_density(probe), 0.0, 1e-12));
    CHECK(torch::equal(dist.most_likely(), head.most_likely()));
    CHECK(dist.weights().index({0, torch::indexing::Slice(cfg.latent, torch::indexing::None)}).sum().item<double>() == 0.0);
}

TEST_CASE("mixture weights normalise and covariances stay PSD") {
    for (auto v : {Variant::full_probs, Variant::one_hot, Variant::multi_head}) {
        auto cfg = tiny_config(v);
        auto model = make_model(cfg, 7);
        model->to(torch::kDouble);
        auto batch = sample_batch(small_scenes(3, 21), cfg, 60);
        auto d = predict(model, batch, 15);
        auto sums = d.weights().sum(1);
        CHECK((sums - 1.0).abs().max().item<double>() < 1e-6);
        auto eig = torch::linalg_eigvalsh(d.cov);
        CHECK(eig.min().item<double>() > 0.0);
        CHECK(torch::allclose(d.cov, d.cov.transpose(-1, -2)));
        CHECK(d.horizon() == 15);
    }
}

TEST_CASE("forced single mode makes most_likely the mode mean") {
    TrajectoryDistribution d;
    d.mean = torch::randn({2, 3, 5, 2}, torch::kDouble);
    d.cov = torch::eye(2, torch::kDouble).expand({2, 3, 5, 2, 2}).clone();
    d.log_weights = torch::log(torch::tensor({{1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}}, torch::kDouble));
    CHECK(torch::equal(d.most_likely(), d.mean.select(1, 0)));
}

TEST_CASE("samples reproduce the analytic mixture covariance") {
    auto cfg = tiny_config();
    auto model = make_model(cfg, 8);
    model->to(torch::kDouble);
    auto batch = sample_batch(small_scenes(2, 4), cfg, 3);
    auto d = predict(model, batch);
    const int n = 100000;
    auto s = d.sample(n, 12);  // (B, n, T, 2)
    auto w = d.weights().view({d.batch_size(), -1, 1, 1});
    auto mbar = (w * d.mean).sum(1);
    auto second = (w.unsqueeze(-1) * (d.cov + d.mean.unsqueeze(-1) * d.mean.unsqueeze(-2))).sum(1);
    auto analytic = second - mbar.unsqueeze(-1) * mbar.unsqueeze(-2);
    auto centred = s - s.mean(1, true);
    auto empirical = (centred.unsqueeze(-1) * centred.unsqueeze(-2)).sum(1) / (n - 1);
    auto rel = (empirical - analytic).pow(2).sum({-1, -2}).sqrt() / analytic.pow(2).sum({-1, -2}).sqrt();
    CHECK(rel.max().item<double>() < 0.03);
    CHECK(torch::allclose(s.mean(1), mbar, 0.0, 0.05));
    CHECK(torch::equal(d.sample(50, 3), d.sample(50, 3)));
}

TEST_CASE("sigma-point entropy is exact for one Gaussian") {
    TrajectoryDistribution d;
    d.mean = torch::zeros({1, 1, 2, 2}, torch::kDouble);
    d.cov = torch::tensor({{{2.0, 0.3}, {0.3, 0.5}}, {{1.0, 0.0}, {0.0, 1.0}}}, torch::kDouble).view({1, 1, 2, 2, 2});
    d.log_weights = torch::zeros({1, 1}, torch::kDouble);
    auto h = d.entropy();
    const double det0 = 2.0 * 0.5 - 0.09;
    CHECK(h[0][0].item<double>() == doctest::Approx(1.0 + std::log(2 * M_PI) + 0.5 * std::log(det0)).epsilon(1e-12));
    CHECK(h[0][1].item<double>() == doctest::Approx(1.0 + std::log(2 * M_PI)).epsilon(1e-12));
}

TEST_CASE("parameter and FLOP counts") {
    ModelConfig full_size;
    full_size.num_classes = 11;
    auto model = make_model(full_size, 0);
    const auto n = count_parameters(model);
    CHECK(n >= static_cast<int64_t>(0.8 * 117389));
    CHECK(n <= static_cast<int64_t>(1.5 * 117389));

    auto wider = full_size;
    wider.decoder_hidden = 256;
    auto big = make_model(wider, 0);
    CHECK(count_parameters(big) > n);

    // Linear in node count at a fixed edge count.
    const double f1 = count_flops(full_size, 1, 40);
    const double f10 = count_flops(full_size, 10, 40);
    const double f75 = count_flops(full_size, 75, 40);
    const double slope = (f10 - f1) / 9.0;
    CHECK(f75 == doctest::Approx(f1 + 74.0 * slope).epsilon(1e-12));
    CHECK(count_flops(full_size, 75, 41) > f75);
}

TEST_CASE("config JSON round trip and validation") {
    auto cfg = tiny_config(Variant::multi_head);
    auto back = ModelConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    auto bad = cfg.to_json();
    bad["latent"] = 0;
    CHECK_THROWS_AS(ModelConfig::from_json(bad), InvalidParameter);
    bad = cfg.to_json();
    bad["variant"] = "two_heads";
    CHECK_THROWS_AS(ModelConfig::from_json(bad), InvalidParameter);
}

TEST_CASE("checkpoint round trip") {
    auto cfg = tiny_config();
    auto model = make_model(cfg, 9);
    const auto dir = std::filesystem::temp_directory_path() / "haicu_test_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "m.safetensors";
    save_checkpoint(path, model, {{"seed", 9}, {"epoch", 3}});
    auto loaded = load_checkpoint(path);
    CHECK(loaded.run.at("epoch") == 3);
    CHECK(loaded.id.size() == 16);
    auto batch = sample_batch(small_scenes(2, 1), cfg, 5);
    auto a = predict(model, batch);
    auto b = predict(loaded.model, batch);
    CHECK(torch::equal(a.mean, b.mean));
    CHECK(torch::equal(a.cov, b.cov));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.safetensors"), NotFound);
    {
        std::ofstream junk(dir / "junk.safetensors");
        junk << "not a checkpoint";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.safetensors"), ParseError);
}

TEST_CASE("input validation") {
    auto cfg = tiny_config();
    auto model = make_model(cfg, 1);
    auto batch = sample_batch(small_scenes(2, 1), cfg, 4);
    auto wrong = tiny_config();
    wrong.history = 5;
    CHECK_THROWS_AS(prepare_inputs(batch, wrong), ShapeMismatch);
    auto nan = batch;
    nan.states = batch.states.clone();
    nan.states[0][3][0] = NAN;
    CHECK_THROWS_AS(prepare_inputs(nan, cfg), InvalidParameter);
}
