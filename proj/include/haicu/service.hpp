#pragma once

#include "haicu/checkpoint.hpp"
#include "haicu/counterfactual.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace haicu {

/// Per-agent mixture payload: modes with weights, mean tracks and 2x2
/// covariances per step, plus the most likely track and mean entropy.
nlohmann::json prediction_to_json(const ObservationBatch& batch, const TrajectoryDistribution& dist);

struct ServiceOptions {
    int max_horizon_steps = 60;
    int max_lambdas = 101;
    std::ostream* access_log = nullptr;  // one JSON object per request
};

/// HTTP facade over one loaded checkpoint and an immutable scene set.
class Service {
public:
    Service(LoadedCheckpoint checkpoint, std::vector<Scene> scenes, ServiceOptions options = {});

    struct Reply {
        int status = 200;
        nlohmann::json body;
    };

    /// Dispatches one request without any network I/O.
    Reply handle(const std::string& method, const std::string& path, const std::string& body);

    /// Installs every route and the access logger on `server`.
    void attach(httplib::Server& server);

    /// Blocks serving on host:port until the server is stopped.
    void listen(const std::string& host, int port);

    const std::string& checkpoint_id() const { return checkpoint_.id; }

private:
    Reply health() const;
    Reply list_scenes() const;
    Reply get_scene(const std::string& id) const;
    Reply predict_request(const nlohmann::json& req);
    Reply whatif(const nlohmann::json& req);
    Reply sweep(const nlohmann::json& req);
    Reply get_draft(const std::string& session) const;
    Reply put_draft(const std::string& session, const nlohmann::json& req);

    const Scene& scene(const std::string& id) const;
    int horizon_steps(const nlohmann::json& req) const;
    ObservationBatch batch_for(const nlohmann::json& req, int steps) const;
    TrajectoryDistribution infer(const ObservationBatch& batch, int steps);

    LoadedCheckpoint checkpoint_;
    std::shared_ptr<const std::vector<Scene>> scenes_;
    std::map<std::string, std::size_t> scene_index_;
    ServiceOptions options_;
    std::mutex model_mutex_;
    mutable std::mutex draft_mutex_;
    std::map<std::string, nlohmann::json> drafts_;
};

}  // namespace haicu
