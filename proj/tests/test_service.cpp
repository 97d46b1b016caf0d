#include "haicu/dataset.hpp"
#include "haicu/errors.hpp"
#include "haicu/service.hpp"
#include "support.hpp"

#include <httplib.h>

#undef CHECK
#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <thread>

using namespace haicu;
using haicu::testing::small_scenes;
using haicu::testing::tiny_config;

namespace {

struct Fixture {
    std::vector<Scene> scenes;
    std::string scene_id;
    int timestep = 0;
    std::unique_ptr<Service> service;

    explicit Fixture(std::ostream* log = nullptr) {
        scenes = small_scenes(2, 21);
        auto odd = small_scenes(1, 22)[0];
        odd.scene_id = "four_classes";
        odd.class_names.push_back("tram");
        for (auto& t : odd.tracks) {
            for (auto& p : t.class_probs) {
                std::vector<double> v(p.values().begin(), p.values().end());
                v.push_back(0.0);
                p = ClassProbVector(v);
            }
        }
        scenes.push_back(odd);
        scene_id = scenes[0].scene_id;
        timestep = scenes[0].first_timestep() + 15;
        auto model = make_model(tiny_config(), 3);
        auto path = std::filesystem::temp_directory_path() / "haicu_service_test.safetensors";
        save_checkpoint(path, model, {{"note", "service test"}});
        ServiceOptions opts;
        opts.access_log = log;
        service = std::make_unique<Service>(load_checkpoint(path), scenes, opts);
        std::filesystem::remove(path);
    }

    nlohmann::json request(double horizon_s = 0.6) const {
        return {{"scene_id", scene_id}, {"timestep", timestep}, {"horizon_s", horizon_s}};
    }
};

int post_status(Service& s, const std::string& path, const nlohmann::json& body) {
    return s.handle("POST", path, body.dump()).status;
}

}  // namespace

TEST_CASE("health and scene listing") {
    Fixture f;
    auto h = f.service->handle("GET", "/health", "");
    CHECK(h.status == 200);
    CHECK(h.body["status"] == "ok");
    CHECK(h.body["checkpoint_id"] == f.service->checkpoint_id());

    auto list = f.service->handle("GET", "/scenes", "");
    CHECK(list.status == 200);
    CHECK(list.body.size() == 3);
    auto one = f.service->handle("GET", "/scenes/" + f.scene_id, "");
    CHECK(one.status == 200);
    CHECK(scene_to_json(scene_from_json(one.body)) == scene_to_json(f.scenes[0]));
    CHECK(f.service->handle("GET", "/scenes/nope", "").status == 404);
    CHECK(f.service->handle("GET", "/nowhere", "").status == 404);
}

TEST_CASE("predict payload") {
    Fixture f;
    auto r = f.service->handle("POST", "/predict", f.request().dump());
    REQUIRE(r.status == 200);
    CHECK(r.body["horizon_steps"] == 6);
    REQUIRE(!r.body["agents"].empty());
    for (const auto& a : r.body["agents"]) {
        double total = 0.0;
        for (const auto& m : a["modes"]) {
            total += m["weight"].get<double>();
            CHECK(m["mean"].size() == 6);
            for (const auto& c : m["cov"]) {
                const double sxx = c[0][0], sxy = c[0][1], syy = c[1][1];
                CHECK(sxx > 0.0);
                CHECK(sxx * syy - sxy * sxy > 0.0);
            }
        }
        CHECK(std::abs(total - 1.0) < 1e-6);
        CHECK(a["most_likely"].size() == 6);
        CHECK(a["class_probs"].size() == 3);
    }
    auto again = f.service->handle("POST", "/predict", f.request().dump());
    CHECK(again.body.dump() == r.body.dump());

    auto req = f.request(3.0);
    CHECK(f.service->handle("POST", "/predict", req.dump()).body["agents"][0]["most_likely"].size() == 30);

    auto pick = f.request();
    const auto id = r.body["agents"][0]["agent_id"].get<std::string>();
    pick["agent_ids"] = {id};
    pick["n_samples"] = 4;
    pick["seed"] = 5;
    auto s1 = f.service->handle("POST", "/predict", pick.dump());
    REQUIRE(s1.status == 200);
    CHECK(s1.body["agents"].size() == 1);
    CHECK(s1.body["agents"][0]["samples"].size() == 4);
    CHECK(f.service->handle("POST", "/predict", pick.dump()).body.dump() == s1.body.dump());
}

TEST_CASE("predict errors") {
    Fixture f;
    auto req = f.request();
    req["scene_id"] = "missing";
    CHECK(post_status(*f.service, "/predict", req) == 404);
    CHECK(post_status(*f.service, "/predict", f.request(0.0)) == 422);
    CHECK(post_status(*f.service, "/predict", f.request(100.0)) == 422);
    req = f.request();
    req["timestep"] = 100000;
    CHECK(post_status(*f.service, "/predict", req) == 422);
    req = f.request();
    req["scene_id"] = "four_classes";
    req["timestep"] = f.scenes.back().first_timestep() + 10;
    CHECK(post_status(*f.service, "/predict", req) == 422);
    req = f.request();
    req["agent_ids"] = {"ghost"};
    CHECK(post_status(*f.service, "/predict", req) == 404);
    req = f.request();
    req.erase("timestep");
    CHECK(post_status(*f.service, "/predict", req) == 422);
    CHECK(f.service->handle("POST", "/predict", "{not json").status == 400);
}

TEST_CASE("whatif and sweep") {
    Fixture f;
    auto req = f.request();
    req["spec"] = {{"overrides", {{{"agent_id", "*"}, {"mode", "keep"}}}}};
    auto keep = f.service->handle("POST", "/whatif", req.dump());
    REQUIRE(keep.status == 200);
    CHECK(keep.body["baseline"] == keep.body["counterfactual"]);

    req["spec"] = {{"overrides", {{{"agent_id", "*"}, {"mode", "uniform"}}}}};
    auto uni = f.service->handle("POST", "/whatif", req.dump());
    REQUIRE(uni.status == 200);
    for (const auto& a : uni.body["counterfactual"]) {
        for (const auto& p : a["class_probs"]) CHECK(p.get<double>() == doctest::Approx(1.0 / 3.0));
    }

    req["spec"] = {{"overrides", {{{"agent_id", "ghost"}, {"mode", "uniform"}}}}};
    CHECK(post_status(*f.service, "/whatif", req) == 404);
    req["spec"] = {{"overrides", {{{"agent_id", "*"}, {"mode", "custom"}, {"probs", {0.9, 0.9, 0.1}}}}}};
    CHECK(post_status(*f.service, "/whatif", req) == 422);

    auto sw = f.request();
    sw["agent_id"] = keep.body["baseline"][0]["agent_id"];
    sw["target_probs"] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    sw["n_lambdas"] = 5;
    auto curve = f.service->handle("POST", "/whatif/sweep", sw.dump());
    REQUIRE(curve.status == 200);
    REQUIRE(curve.body["curve"].size() == 5);
    CHECK(curve.body["curve"][0]["divergence"] == 0.0);
    CHECK(curve.body["curve"][4]["lambda"] == 1.0);
    sw["n_lambdas"] = 0;
    CHECK(post_status(*f.service, "/whatif/sweep", sw) == 422);
    sw["n_lambdas"] = 3;
    sw["target_probs"] = {0.5, 0.5};
    CHECK(post_status(*f.service, "/whatif/sweep", sw) == 422);
}

TEST_CASE("session drafts") {
    Fixture f;
    CHECK(f.service->handle("GET", "/sessions/s1/draft", "").status == 404);
    nlohmann::json spec = {{"overrides", {{{"agent_id", "a0"}, {"mode", "one_hot"}, {"class", "bicycle"}}}}};
    CHECK(f.service->handle("PUT", "/sessions/s1/draft", spec.dump()).status == 200);
    auto back = f.service->handle("GET", "/sessions/s1/draft", "");
    CHECK(back.status == 200);
    CHECK(back.body["overrides"][0]["class"] == "bicycle");
}

TEST_CASE("HTTP round trip with concurrent clients and an access log") {
    std::ostringstream log;
    Fixture f(&log);
    httplib::Server server;
    f.service->attach(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto body = f.request().dump();
    std::vector<std::string> replies(4);
    std::vector<int> statuses(4, 0);
    std::vector<std::thread> clients;
    for (std::size_t i = 0; i < replies.size(); ++i) {
        clients.emplace_back([&, i] {
            httplib::Client c("127.0.0.1", port);
            auto res = c.Post("/predict", body, "application/json");
            if (res) {
                statuses[i] = res->status;
                replies[i] = res->body;
            }
        });
    }
    for (auto& c : clients) c.join();
    httplib::Client c("127.0.0.1", port);
    auto health = c.Get("/health");
    auto missing = c.Get("/scenes/none");
    server.stop();
    th.join();

    for (std::size_t i = 0; i < replies.size(); ++i) {
        CHECK(statuses[i] == 200);
        CHECK(replies[i] == replies[0]);
    }
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(nlohmann::json::parse(health->body)["status"] == "ok");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    std::istringstream lines(log.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        auto j = nlohmann::json::parse(line);
        CHECK(j.contains("status"));
        CHECK(j.contains("path"));
        ++n;
    }
    CHECK(n == 6);
}
