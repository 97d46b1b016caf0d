#include "haicu/service.hpp"

#include "haicu/dataset.hpp"
#include "haicu/errors.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <ctime>

namespace haicu {

namespace {

nlohmann::json points(const torch::Tensor& t) {  // (T, 2)
    auto c = t.to(torch::kDouble).contiguous();
    auto a = c.accessor<double, 2>();
    nlohmann::json out = nlohmann::json::array();
    for (int64_t i = 0; i < c.size(0); ++i) out.push_back({a[i][0], a[i][1]});
    return out;
}

nlohmann::json matrices(const torch::Tensor& t) {  // (T, 2, 2)
    auto c = t.to(torch::kDouble).contiguous();
    auto a = c.accessor<double, 3>();
    nlohmann::json out = nlohmann::json::array();
    for (int64_t i = 0; i < c.size(0); ++i) out.push_back({{a[i][0][0], a[i][0][1]}, {a[i][1][0], a[i][1][1]}});
    return out;
}

std::string dynamics_name(DynamicsKind k) {
    return k == DynamicsKind::unicycle ? "unicycle" : "single_integrator";
}

struct HttpError : Error {
    HttpError(int s, const std::string& what) : Error(what), status(s) {}
    int status;
};

}  // namespace

nlohmann::json prediction_to_json(const ObservationBatch& batch, const TrajectoryDistribution& dist) {
    auto weights = dist.weights().to(torch::kDouble);
    auto best = dist.most_likely();
    auto entropy = dist.entropy().to(torch::kDouble);
    auto current = batch.probs.select(1, batch.history_steps() - 1).to(torch::kDouble);
    nlohmann::json agents = nlohmann::json::array();
    for (int64_t r = 0; r < dist.batch_size(); ++r) {
        nlohmann::json modes = nlohmann::json::array();
        for (int64_t m = 0; m < dist.num_components(); ++m) {
            const auto mi = static_cast<std::size_t>(m);
            modes.push_back({{"weight", weights[r][m].item<double>()},
                             {"latent", dist.component_mode[mi]},
                             {"head", dist.component_head[mi]},
                             {"dynamics", dynamics_name(dist.component_dynamics[mi])},
                             {"mean", points(dist.mean[r][m])},
                             {"cov", matrices(dist.cov[r][m])}});
        }
        std::vector<double> probs(static_cast<std::size_t>(current.size(1)));
        for (std::size_t k = 0; k < probs.size(); ++k) probs[k] = current[r][static_cast<int64_t>(k)].item<double>();
        agents.push_back({{"agent_id", batch.agent_ids[static_cast<std::size_t>(r)]},
                          {"class_probs", probs},
                          {"modes", modes},
                          {"most_likely", points(best[r])},
                          {"mean_entropy", entropy[r].mean().item<double>()}});
    }
    return agents;
}

Service::Service(LoadedCheckpoint checkpoint, std::vector<Scene> scenes, ServiceOptions options)
    : checkpoint_(std::move(checkpoint)),
      scenes_(std::make_shared<const std::vector<Scene>>(std::move(scenes))),
      options_(options) {
    for (std::size_t i = 0; i < scenes_->size(); ++i) scene_index_[(*scenes_)[i].scene_id] = i;
    checkpoint_.model->eval();
}

const Scene& Service::scene(const std::string& id) const {
    auto it = scene_index_.find(id);
    if (it == scene_index_.end()) throw NotFound("unknown scene '" + id + "'");
    return (*scenes_)[it->second];
}

int Service::horizon_steps(const nlohmann::json& req) const {
    const double h = req.value("horizon_s", checkpoint_.model->config().horizon * checkpoint_.model->config().dt);
    const int steps = static_cast<int>(std::lround(h / checkpoint_.model->config().dt));
    if (!std::isfinite(h) || steps < 1 || steps > options_.max_horizon_steps) {
        throw HttpError(422, "horizon_s must cover between 1 and " + std::to_string(options_.max_horizon_steps) +
                                 " steps");
    }
    return steps;
}

ObservationBatch Service::batch_for(const nlohmann::json& req, int steps) const {
    const auto& s = scene(req.at("scene_id").get<std::string>());
    const auto& cfg = checkpoint_.model->config();
    if (s.num_classes() != cfg.num_classes) {
        throw HttpError(422, "scene has " + std::to_string(s.num_classes()) + " classes, checkpoint expects " +
                                 std::to_string(cfg.num_classes));
    }
    if (!cfg.class_names.empty() && cfg.class_names != s.class_names) {
        throw HttpError(422, "scene class names differ from the checkpoint's");
    }
    const int t = req.at("timestep").get<int>();
    auto batch = make_scene_batch(s, t, cfg.batch_options(steps, false));
    if (!req.contains("agent_ids")) return batch;
    std::vector<int64_t> rows;
    for (const auto& id : req.at("agent_ids").get<std::vector<std::string>>()) {
        auto it = std::find(batch.agent_ids.begin(), batch.agent_ids.end(), id);
        if (it == batch.agent_ids.end()) {
            throw NotFound("agent '" + id + "' is not present at timestep " + std::to_string(t));
        }
        rows.push_back(it - batch.agent_ids.begin());
    }
    return batch.select(rows);
}

TrajectoryDistribution Service::infer(const ObservationBatch& batch, int steps) {
    std::lock_guard lock(model_mutex_);
    return predict(checkpoint_.model, batch, steps);
}

Service::Reply Service::health() const {
    return {200, {{"status", "ok"}, {"checkpoint_id", checkpoint_.id}, {"scenes", scenes_->size()}}};
}

Service::Reply Service::list_scenes() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : *scenes_) {
        out.push_back({{"scene_id", s.scene_id},
                       {"num_agents", s.tracks.size()},
                       {"first_timestep", s.first_timestep()},
                       {"last_timestep", s.last_timestep()},
                       {"dt", s.dt},
                       {"class_names", s.class_names}});
    }
    return {200, out};
}

Service::Reply Service::get_scene(const std::string& id) const { return {200, scene_to_json(scene(id))}; }

namespace {

nlohmann::json envelope(const nlohmann::json& req, int steps, double dt, const std::string& ckpt) {
    return {{"scene_id", req.at("scene_id")},
            {"timestep", req.at("timestep")},
            {"horizon_steps", steps},
            {"dt", dt},
            {"checkpoint_id", ckpt},
            {"units", {{"position", "m"}, {"cov", "m^2"}, {"entropy", "nats"}, {"dt", "s"}}}};
}

}  // namespace

Service::Reply Service::predict_request(const nlohmann::json& req) {
    const int steps = horizon_steps(req);
    auto batch = batch_for(req, steps);
    auto dist = infer(batch, steps);
    auto out = envelope(req, steps, dist.dt, checkpoint_.id);
    out["agents"] = prediction_to_json(batch, dist);
    const int n = req.value("n_samples", 0);
    if (n < 0 || n > 1000) throw HttpError(422, "n_samples must lie in [0, 1000]");
    if (n > 0) {
        auto s = dist.sample(n, req.value("seed", std::uint64_t{0}));
        for (int64_t r = 0; r < dist.batch_size(); ++r) {
            nlohmann::json tracks = nlohmann::json::array();
            for (int i = 0; i < n; ++i) tracks.push_back(points(s[r][i]));
            out["agents"][static_cast<std::size_t>(r)]["samples"] = tracks;
        }
    }
    return {200, out};
}

Service::Reply Service::whatif(const nlohmann::json& req) {
    const int steps = horizon_steps(req);
    auto batch = batch_for(req, steps);
    auto spec = CounterfactualSpec::from_json(req.at("spec"), batch.class_names);
    auto altered = apply_counterfactual(batch, spec);
    auto base = infer(batch, steps);
    auto cf = infer(altered, steps);
    auto out = envelope(req, steps, base.dt, checkpoint_.id);
    out["spec"] = spec.to_json(batch.class_names);
    out["baseline"] = prediction_to_json(batch, base);
    out["counterfactual"] = prediction_to_json(altered, cf);
    return {200, out};
}

Service::Reply Service::sweep(const nlohmann::json& req) {
    const int steps = horizon_steps(req);
    auto batch = batch_for(req, steps);
    const auto agent = req.at("agent_id").get<std::string>();
    const auto target = req.at("target_probs").get<std::vector<double>>();
    if (static_cast<int>(target.size()) != batch.num_classes()) {
        throw SimplexViolation("target_probs must have " + std::to_string(batch.num_classes()) + " entries");
    }
    (void)ClassProbVector(target);
    const int n = req.value("n_lambdas", 11);
    if (n < 1 || n > options_.max_lambdas) {
        throw HttpError(422, "n_lambdas must lie in [1, " + std::to_string(options_.max_lambdas) + "]");
    }
    const auto path_name = req.value("path", std::string("simplex"));
    if (path_name != "simplex" && path_name != "logit") throw InvalidParameter("unknown interpolation path");
    const auto path = path_name == "logit" ? InterpolationPath::logit : InterpolationPath::simplex;
    std::vector<ProbePoint> curve;
    {
        std::lock_guard lock(model_mutex_);
        curve = probe_smoothness(checkpoint_.model, batch, agent, target, lambda_grid(n), path, steps);
    }
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : curve) {
        pts.push_back({{"lambda", p.lambda}, {"divergence", p.divergence}, {"uncertainty", p.uncertainty}});
    }
    auto out = envelope(req, steps, batch.dt, checkpoint_.id);
    out["agent_id"] = agent;
    out["curve"] = pts;
    out["units"]["divergence"] = "m + total variation";
    out["units"]["uncertainty"] = "nats";
    return {200, out};
}

Service::Reply Service::get_draft(const std::string& session) const {
    std::lock_guard lock(draft_mutex_);
    auto it = drafts_.find(session);
    if (it == drafts_.end()) throw NotFound("no draft for session '" + session + "'");
    return {200, it->second};
}

Service::Reply Service::put_draft(const std::string& session, const nlohmann::json& req) {
    const auto& names = scenes_->empty() ? checkpoint_.model->config().class_names : scenes_->front().class_names;
    auto spec = CounterfactualSpec::from_json(req, names);
    std::lock_guard lock(draft_mutex_);
    drafts_[session] = spec.to_json(names);
    return {200, drafts_[session]};
}

Service::Reply Service::handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
        auto parse = [&body] {
            try {
                return nlohmann::json::parse(body);
            } catch (const nlohmann::json::exception& e) {
                throw HttpError(400, std::string("malformed JSON body: ") + e.what());
            }
        };
        const std::string scenes_prefix = "/scenes/";
        const std::string session_prefix = "/sessions/";
        if (method == "GET" && path == "/health") return health();
        if (method == "GET" && path == "/scenes") return list_scenes();
        if (method == "GET" && path.rfind(scenes_prefix, 0) == 0 && path.size() > scenes_prefix.size()) {
            return get_scene(path.substr(scenes_prefix.size()));
        }
        if (method == "POST" && path == "/predict") return predict_request(parse());
        if (method == "POST" && path == "/whatif") return whatif(parse());
        if (method == "POST" && path == "/whatif/sweep") return sweep(parse());
        if (path.rfind(session_prefix, 0) == 0 && path.size() > session_prefix.size() + 6 &&
            path.substr(path.size() - 6) == "/draft") {
            const auto session = path.substr(session_prefix.size(), path.size() - session_prefix.size() - 6);
            if (method == "GET") return get_draft(session);
            if (method == "PUT") return put_draft(session, parse());
        }
        return {404, {{"error", "no route for " + method + " " + path}, {"status", 404}}};
    } catch (const HttpError& e) {
        return {e.status, {{"error", e.what()}, {"status", e.status}}};
    } catch (const NotFound& e) {
        return {404, {{"error", e.what()}, {"status", 404}}};
    } catch (const nlohmann::json::exception& e) {
        return {422, {{"error", std::string("bad request field: ") + e.what()}, {"status", 422}}};
    } catch (const Error& e) {
        return {422, {{"error", e.what()}, {"status", 422}}};
    } catch (const std::exception& e) {
        return {500, {{"error", e.what()}, {"status", 500}}};
    }
}

void Service::attach(httplib::Server& server) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        auto reply = handle(req.method, req.path, req.body);
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
    };
    const std::string any = R"(/.*)";
    server.Get(any, handler);
    server.Post(any, handler);
    server.Put(any, handler);
    if (options_.access_log) {
        auto log_mutex = std::make_shared<std::mutex>();
        server.set_logger([this, log_mutex](const httplib::Request& req, const httplib::Response& res) {
            const auto now = std::chrono::system_clock::now();
            const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
            nlohmann::json line = {{"ts_ms", ms},
                                   {"method", req.method},
                                   {"path", req.path},
                                   {"status", res.status},
                                   {"request_bytes", req.body.size()},
                                   {"response_bytes", res.body.size()},
                                   {"remote", req.remote_addr}};
            std::lock_guard lock(*log_mutex);
            *options_.access_log << line.dump() << '\n';
            options_.access_log->flush();
        });
    }
}

void Service::listen(const std::string& host, int port) {
    httplib::Server server;
    attach(server);
    if (!server.listen(host, port)) throw InvalidParameter("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace haicu
