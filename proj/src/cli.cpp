#include "haicu/cli.hpp"

#include "haicu/checkpoint.hpp"
#include "haicu/dataset.hpp"
#include "haicu/errors.hpp"
#include "haicu/metrics.hpp"
#include "haicu/service.hpp"
#include "haicu/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

namespace haicu {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("file not found: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& path) {
    const auto text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(1, path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidParameter("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::vector<Scene> subset(const std::vector<Scene>& scenes, const std::vector<std::string>& ids) {
    std::set<std::string> keep(ids.begin(), ids.end());
    std::vector<Scene> out;
    for (const auto& s : scenes) {
        if (keep.count(s.scene_id)) out.push_back(s);
    }
    return out;
}

const Scene& find_scene(const std::vector<Scene>& scenes, const std::string& id) {
    for (const auto& s : scenes) {
        if (s.scene_id == id) return s;
    }
    throw NotFound("unknown scene '" + id + "'");
}

// Timestep with the most agents present, earliest on ties.
int busiest_timestep(const Scene& s) {
    int best = s.first_timestep();
    std::size_t most = 0;
    for (int t = s.first_timestep(); t <= s.last_timestep(); ++t) {
        std::size_t n = 0;
        for (const auto& tr : s.tracks) n += tr.index_of(t).has_value();
        if (n > most) {
            most = n;
            best = t;
        }
    }
    return best;
}

std::vector<double> parse_horizons(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || !(v > 0.0)) {
            throw InvalidParameter("horizons must be positive seconds separated by commas, got '" + text + "'");
        }
        out.push_back(v);
    }
    if (out.empty()) throw InvalidParameter("no horizons given");
    return out;
}

json service_call(Service& service, const std::string& path, const json& body) {
    auto reply = service.handle("POST", path, body.dump());
    if (reply.status == 404) throw NotFound(reply.body.value("error", std::string("not found")));
    if (reply.status != 200) throw InvalidParameter(reply.body.value("error", std::string("request failed")));
    return reply.body;
}

void print_table(std::ostream& out, const EvalReport& r) {
    out << std::left << std::setw(12) << "class" << std::setw(8) << "metric";
    for (double h : r.horizons_s) {
        std::ostringstream head;
        head << h << " s";
        out << std::setw(20) << head.str();
    }
    out << '\n';
    std::vector<std::string> groups = {"all"};
    groups.insert(groups.end(), r.class_names.begin(), r.class_names.end());
    for (const auto& g : groups) {
        for (const auto* m : {"ADE", "FDE", "ANLL", "FNLL", "minADE", "minFDE"}) {
            bool any = false;
            std::ostringstream row;
            row << std::left << std::setw(12) << g << std::setw(8) << m;
            for (double h : r.horizons_s) {
                std::ostringstream cell;
                try {
                    auto s = r.summary(m, h, g);
                    cell << std::fixed << std::setprecision(3) << s.mean << " +/- " << s.se;
                    any = true;
                } catch (const Error&) {
                    cell << "-";
                }
                row << std::setw(20) << cell.str();
            }
            if (any) out << row.str() << '\n';
        }
    }
}

struct Shared {
    std::uint64_t seed = 0;
    int verbosity = 0;
};

// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string spec, out;
};

void run_generate(const GenerateArgs& a, const Shared& g, std::ostream& out) {
    const auto j = read_json(a.spec);
    const auto& gen_j = j.contains("generator") ? j.at("generator") : j;
    auto gen = generator_config_from_json(gen_j);
    gen.validate();
    const int k = static_cast<int>(gen.classes.size());
    auto noise = j.contains("noise") ? noise_model_from_json(j.at("noise"), k) : PerceptionNoiseModel::identity(k);
    noise.validate(k);
    auto scenes = generate_synthetic(gen, noise, g.seed);
    write_scenes(fs::path(a.out), scenes);
    if (g.verbosity > 0) out << "wrote " << scenes.size() << " scenes to " << a.out << '\n';
}

struct AnalyzeArgs {
    std::string input, report;
};

void run_analyze(const AnalyzeArgs& a, const Shared&, std::ostream& out) {
    auto scenes = load_scenes(a.input);
    if (scenes.empty()) throw InvalidParameter("no scenes in " + a.input);
    auto stats = dataset_statistics(scenes);
    json report = {{"statistics", stats.to_json()}, {"class_names", scenes.front().class_names}};

    std::vector<AgentTrack> labelled;
    bool all_labelled = true;
    for (const auto& s : scenes) {
        for (const auto& t : s.tracks) {
            if (t.true_class) {
                labelled.push_back(t);
            } else {
                all_labelled = false;
            }
        }
    }
    if (all_labelled && !labelled.empty()) {
        report["confusion"] = confusion_and_topk(labelled, scenes.front().num_classes()).to_json();
    }
    write_json(a.report, report);

    out << "scenes " << stats.num_scenes << ", agents " << stats.num_agents << ", observations "
        << stats.num_observations << ", mean entropy " << std::fixed << std::setprecision(3) << stats.mean_entropy
        << " nats\n";
    out << std::left << std::setw(14) << "class" << std::setw(10) << "agents" << std::setw(10) << "percent"
        << "entropy\n";
    for (const auto& c : stats.classes) {
        out << std::setw(14) << c.name << std::setw(10) << c.count << std::setw(10) << std::setprecision(1)
            << c.percent << std::setprecision(3) << c.mean_entropy << '\n';
    }
    out << "switching agents " << std::setprecision(3) << stats.switching_agent_fraction << ", switches "
        << stats.total_switches << " (" << stats.switches_after_smoothing << " after smoothing)\n";
}

struct TrainArgs {
    std::string data, out, curve;
    std::string variant = "full_probs";
    int history = 20, horizon = 20;
    int node_hidden = 32, edge_hidden = 8, future_hidden = 32, decoder_hidden = 128, latent_hidden = 32, latent = 25;
    double lr = 1e-3, beta_start = 0.01, beta_end = 1.0, mi_weight = 1.0, grad_clip = 1.0, rotation_step = 15.0;
    int batch_size = 256, epochs = 100, patience = 5, stride = 1, val_stride = 1;
    bool no_augment = false, double_precision = false;
};

void run_train(const TrainArgs& a, const Shared& g, std::ostream& out, std::ostream& err) {
    const auto bytes = read_file(a.data);
    auto scenes = load_scenes(a.data);
    if (scenes.size() < 3) throw InvalidParameter("training needs at least 3 scenes");

    ModelConfig cfg;
    cfg.class_names = scenes.front().class_names;
    cfg.num_classes = static_cast<int>(cfg.class_names.size());
    cfg.variant = variant_from_string(a.variant);
    cfg.history = a.history;
    cfg.horizon = a.horizon;
    cfg.node_hidden = a.node_hidden;
    cfg.edge_hidden = a.edge_hidden;
    cfg.future_hidden = a.future_hidden;
    cfg.decoder_hidden = a.decoder_hidden;
    cfg.latent_hidden = a.latent_hidden;
    cfg.latent = a.latent;
    cfg.dt = scenes.front().dt;
    cfg.validate();

    TrainingConfig tc;
    tc.beta.start = a.beta_start;
    tc.beta.end = a.beta_end;
    tc.learning_rate = a.lr;
    tc.batch_size = a.batch_size;
    tc.max_epochs = a.epochs;
    tc.patience = a.patience;
    tc.seed = g.seed;
    tc.mi_weight = a.mi_weight;
    tc.grad_clip = a.grad_clip;
    tc.augmentation.rotation_step = a.rotation_step;
    tc.augmentation.enabled = !a.no_augment;
    tc.sample_stride = a.stride;
    tc.val_stride = a.val_stride;
    tc.double_precision = a.double_precision;
    tc.validate();

    const auto split = split_scenes(scenes, g.seed);
    auto model = make_model(cfg, g.seed);
    std::unique_ptr<std::ofstream> curve;
    std::ostream* log = nullptr;
    if (!a.curve.empty()) {
        curve = std::make_unique<std::ofstream>(a.curve, std::ios::app);
        if (!*curve) throw InvalidParameter("cannot write " + a.curve);
        log = curve.get();
    } else if (g.verbosity > 0) {
        log = &err;
    }
    auto result = train(model, subset(scenes, split.train), subset(scenes, split.val), tc, log);

    json run = {{"seed", g.seed},
                {"dataset", fs::path(a.data).filename().string()},
                {"dataset_hash", fingerprint(bytes)},
                {"training", tc.to_json()},
                {"epochs", result.curve.size()},
                {"best_epoch", result.best_epoch},
                {"best_val_anll", result.best_val_anll},
                {"iterations", result.iterations},
                {"split", {{"train", split.train.size()}, {"val", split.val.size()}, {"test", split.test.size()}}}};
    save_checkpoint(a.out, model, run);
    out << "trained " << to_string(cfg.variant) << " for " << result.curve.size() << " epochs, best epoch "
        << result.best_epoch << ", val ANLL " << std::fixed << std::setprecision(4) << result.best_val_anll
        << ", saved " << a.out << '\n';
}

struct EvalArgs {
    std::vector<std::string> ckpts;
    std::string data, report, horizons = "1,2,3", split = "test";
    int n_samples = 20, stride = 1;
};

void run_eval(const EvalArgs& a, const Shared& g, bool explicit_seed, std::ostream& out) {
    std::vector<LoadedCheckpoint> ckpts;
    for (const auto& p : a.ckpts) ckpts.push_back(load_checkpoint(p));
    auto scenes = load_scenes(a.data);

    EvalOptions opts;
    opts.horizons_s = parse_horizons(a.horizons);
    opts.n_samples = a.n_samples;
    opts.seed = g.seed;
    opts.stride = a.stride;

    std::vector<EvalReport> reports;
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
        auto& c = ckpts[i];
        auto part = scenes;
        if (a.split == "test") {
            // The training seed decides the split unless --seed is given.
            std::uint64_t split_seed = g.seed;
            if (!explicit_seed && c.run.contains("seed")) split_seed = c.run.at("seed").get<std::uint64_t>();
            part = subset(scenes, split_scenes(scenes, split_seed).test);
        }
        auto r = evaluate(c.model, part, opts);
        r.model_id = fs::path(a.ckpts[i]).filename().string() + "@" + c.id;
        out << "== " << r.model_id << " (" << to_string(c.model->config().variant) << ")\n";
        print_table(out, r);
        reports.push_back(std::move(r));
    }

    json j;
    if (reports.size() == 1) {
        j = reports.front().to_json();
    } else {
        j["reports"] = json::array();
        for (const auto& r : reports) j["reports"].push_back(r.to_json());
        j["comparisons"] = json::array();
        for (std::size_t i = 1; i < reports.size(); ++i) {
            j["comparisons"].push_back(
                comparisons_to_json(compare(reports[0], reports[i]), reports[0].model_id, reports[i].model_id));
        }
    }
    write_json(a.report, j);
}

struct PredictArgs {
    std::string ckpt, data, scene, out, agents;
    int timestep = -1, samples = 0;
    double horizon_s = 0.0;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void run_predict(const PredictArgs& a, const Shared& g, std::ostream& out) {
    auto ckpt = load_checkpoint(a.ckpt);
    auto scenes = load_scenes(a.data);
    const auto& s = find_scene(scenes, a.scene);
    json req = {{"scene_id", a.scene},
                {"timestep", a.timestep >= 0 ? a.timestep : busiest_timestep(s)},
                {"n_samples", a.samples},
                {"seed", g.seed}};
    if (a.horizon_s > 0.0) req["horizon_s"] = a.horizon_s;
    if (!a.agents.empty()) req["agent_ids"] = split_list(a.agents);
    Service service(std::move(ckpt), std::move(scenes));
    auto body = service_call(service, "/predict", req);
    write_json(a.out, body);
    out << "predicted " << body["agents"].size() << " agents at timestep " << body["timestep"] << '\n';
}

struct WhatifArgs {
    std::string ckpt, scene, scene_id, spec, out;
    int timestep = -1;
    double horizon_s = 0.0;
};

void run_whatif(const WhatifArgs& a, const Shared&, std::ostream& out) {
    auto ckpt = load_checkpoint(a.ckpt);
    auto scenes = load_scenes(a.scene);
    if (scenes.empty()) throw InvalidParameter("no scenes in " + a.scene);
    const auto& s = a.scene_id.empty() ? scenes.front() : find_scene(scenes, a.scene_id);
    auto spec = read_json(a.spec);

    json req = {{"scene_id", s.scene_id}, {"timestep", a.timestep >= 0 ? a.timestep : busiest_timestep(s)}};
    if (a.horizon_s > 0.0) req["horizon_s"] = a.horizon_s;
    json sweep;
    if (spec.is_object() && spec.contains("sweep")) {
        sweep = spec.at("sweep");
        spec.erase("sweep");
    }
    req["spec"] = spec;
    Service service(std::move(ckpt), std::move(scenes));
    auto body = service_call(service, "/whatif", req);
    if (!sweep.is_null()) {
        auto sreq = sweep;
        for (const auto* k : {"scene_id", "timestep", "horizon_s"}) {
            if (req.contains(k)) sreq[k] = req[k];
        }
        body["sweep"] = service_call(service, "/whatif/sweep", sreq);
    }
    write_json(a.out, body);
    out << "counterfactual for " << body["counterfactual"].size() << " agents at timestep " << body["timestep"]
        << '\n';
}

struct ServeArgs {
    std::string ckpt, data, host = "127.0.0.1", access_log;
    int port = 8080;
};

void run_serve(const ServeArgs& a, const Shared&, std::ostream& out, std::ostream& err) {
    auto ckpt = load_checkpoint(a.ckpt);
    auto scenes = load_scenes(a.data);
    std::unique_ptr<std::ofstream> file;
    ServiceOptions opts;
    if (a.access_log.empty()) {
        opts.access_log = &err;
    } else if (a.access_log != "none") {
        file = std::make_unique<std::ofstream>(a.access_log, std::ios::app);
        if (!*file) throw InvalidParameter("cannot write " + a.access_log);
        opts.access_log = file.get();
    }
    Service service(std::move(ckpt), std::move(scenes), opts);
    out << "serving checkpoint " << service.checkpoint_id() << " on " << a.host << ':' << a.port << std::endl;
    service.listen(a.host, a.port);
}

struct CountArgs {
    std::string ckpt, variant = "full_probs";
    int classes = 11, history = 20, horizon = 20;
    int node_hidden = 32, edge_hidden = 8, future_hidden = 32, decoder_hidden = 128, latent_hidden = 32, latent = 25;
    long nodes = 0, edges = 0;
};

void run_count(const CountArgs& a, const Shared&, std::ostream& out) {
    HaicuNet model{nullptr};
    if (!a.ckpt.empty()) {
        model = load_checkpoint(a.ckpt).model;
    } else {
        ModelConfig cfg;
        cfg.num_classes = a.classes;
        cfg.variant = variant_from_string(a.variant);
        cfg.history = a.history;
        cfg.horizon = a.horizon;
        cfg.node_hidden = a.node_hidden;
        cfg.edge_hidden = a.edge_hidden;
        cfg.future_hidden = a.future_hidden;
        cfg.decoder_hidden = a.decoder_hidden;
        cfg.latent_hidden = a.latent_hidden;
        cfg.latent = a.latent;
        cfg.validate();
        model = make_model(cfg, 0);
    }
    out << "parameters " << count_parameters(model) << '\n';
    if (a.nodes > 0) {
        out << "flops " << std::setprecision(6) << count_flops(model->config(), a.nodes, a.edges) << '\n';
    }
}

// Unsectioned keys that are not top-level options go to the chosen subcommand.
class SubcommandConfig : public CLI::ConfigINI {
public:
    explicit SubcommandConfig(const CLI::App& app) : app_(app) {}

    std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
        auto items = CLI::ConfigINI::from_config(in);
        const auto subs = app_.get_subcommands();
        if (subs.empty()) return items;
        for (auto& item : items) {
            if (item.parents.empty() && item.name != "++" && item.name != "--" &&
                app_.get_option_no_throw("--" + item.name) == nullptr) {
                item.parents = {subs.front()->get_name()};
            }
        }
        return items;
    }

private:
    const CLI::App& app_;
};

void add_model_dims(CLI::App* app, int& node, int& edge, int& future, int& decoder, int& latent_hidden, int& latent,
                    int& history, int& horizon, std::string& variant) {
    app->add_option("--variant", variant, "full_probs, one_hot or multi_head")->capture_default_str();
    app->add_option("--node-hidden", node, "Node history encoder width")->capture_default_str();
    app->add_option("--edge-hidden", edge, "Edge encoder width")->capture_default_str();
    app->add_option("--future-hidden", future, "Future encoder width per direction")->capture_default_str();
    app->add_option("--decoder-hidden", decoder, "Decoder width")->capture_default_str();
    app->add_option("--latent-hidden", latent_hidden, "Prior and posterior MLP width")->capture_default_str();
    app->add_option("--latent", latent, "Number of latent values")->capture_default_str();
    app->add_option("--history", history, "History length in steps")->capture_default_str();
    app->add_option("--horizon", horizon, "Training horizon in steps")->capture_default_str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Trajectory forecasting with class-probability inputs", "haicu"};
    app.require_subcommand(1);
    app.allow_extras(false);
    app.fallthrough();
    app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
    app.config_formatter(std::make_shared<SubcommandConfig>(app));

    Shared shared;
    app.add_option("--seed", shared.seed, "Seed for every random draw")->capture_default_str();
    app.add_flag("-v,--verbose", shared.verbosity, "Increase verbosity");

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Generate a synthetic scene file");
    c_gen->add_option("--spec", gen.spec, "Generator JSON")->required();
    c_gen->add_option("--out", gen.out, "Output scene file")->required();

    AnalyzeArgs an;
    auto* c_an = app.add_subcommand("analyze", "Uncertainty statistics of a scene file");
    c_an->add_option("--input", an.input, "Scene file")->required();
    c_an->add_option("--report", an.report, "Output report JSON")->required();

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train a model");
    c_tr->add_option("--data", tr.data, "Scene file")->required();
    c_tr->add_option("--out", tr.out, "Output checkpoint")->required();
    c_tr->add_option("--curve", tr.curve, "Append the training curve to this file");
    add_model_dims(c_tr, tr.node_hidden, tr.edge_hidden, tr.future_hidden, tr.decoder_hidden, tr.latent_hidden,
                   tr.latent, tr.history, tr.horizon, tr.variant);
    c_tr->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
    c_tr->add_option("--batch-size", tr.batch_size, "Minibatch size")->capture_default_str();
    c_tr->add_option("--epochs", tr.epochs, "Maximum epochs")->capture_default_str();
    c_tr->add_option("--patience", tr.patience, "Early stopping patience in epochs")->capture_default_str();
    c_tr->add_option("--beta-start", tr.beta_start, "Initial KL weight")->capture_default_str();
    c_tr->add_option("--beta-end", tr.beta_end, "Final KL weight")->capture_default_str();
    c_tr->add_option("--mi-weight", tr.mi_weight, "Mutual information weight")->capture_default_str();
    c_tr->add_option("--grad-clip", tr.grad_clip, "Global gradient norm limit, 0 disables")->capture_default_str();
    c_tr->add_option("--rotation-step", tr.rotation_step, "Augmentation angle step in degrees")->capture_default_str();
    c_tr->add_flag("--no-augment", tr.no_augment, "Disable rotation augmentation");
    c_tr->add_option("--stride", tr.stride, "Keep every n-th training timestep")->capture_default_str();
    c_tr->add_option("--val-stride", tr.val_stride, "Keep every n-th validation timestep")->capture_default_str();
    c_tr->add_flag("--double", tr.double_precision, "Train in double precision");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate checkpoints");
    c_ev->add_option("--ckpt", ev.ckpts, "Checkpoint, repeat to compare")->required();
    c_ev->add_option("--data", ev.data, "Scene file")->required();
    c_ev->add_option("--report", ev.report, "Output report JSON")->required();
    c_ev->add_option("--horizons", ev.horizons, "Horizons in seconds")->capture_default_str();
    c_ev->add_option("--split", ev.split, "Scenes to evaluate")->check(CLI::IsMember({"all", "test"}))
        ->capture_default_str();
    c_ev->add_option("--n-samples", ev.n_samples, "Samples for minADE and minFDE")->capture_default_str();
    c_ev->add_option("--stride", ev.stride, "Keep every n-th timestep")->capture_default_str();

    PredictArgs pr;
    auto* c_pr = app.add_subcommand("predict", "Predict one scene at one timestep");
    c_pr->add_option("--ckpt", pr.ckpt, "Checkpoint")->required();
    c_pr->add_option("--data", pr.data, "Scene file")->required();
    c_pr->add_option("--scene", pr.scene, "Scene id")->required();
    c_pr->add_option("--timestep", pr.timestep, "Current timestep, default the busiest one");
    c_pr->add_option("--horizon-s", pr.horizon_s, "Horizon in seconds, default the training horizon");
    c_pr->add_option("--agents", pr.agents, "Comma separated agent ids");
    c_pr->add_option("--samples", pr.samples, "Trajectory samples per agent")->capture_default_str();
    c_pr->add_option("--out", pr.out, "Output JSON")->required();

    WhatifArgs wi;
    auto* c_wi = app.add_subcommand("whatif", "Apply a counterfactual class override");
    c_wi->add_option("--ckpt", wi.ckpt, "Checkpoint")->required();
    c_wi->add_option("--scene", wi.scene, "Scene file")->required();
    c_wi->add_option("--scene-id", wi.scene_id, "Scene id, default the first scene");
    c_wi->add_option("--timestep", wi.timestep, "Current timestep, default the busiest one");
    c_wi->add_option("--horizon-s", wi.horizon_s, "Horizon in seconds, default the training horizon");
    c_wi->add_option("--spec", wi.spec, "Counterfactual spec JSON")->required();
    c_wi->add_option("--out", wi.out, "Output JSON for visualisation")->required();

    ServeArgs sv;
    auto* c_sv = app.add_subcommand("serve", "Serve predictions over HTTP");
    c_sv->add_option("--ckpt", sv.ckpt, "Checkpoint")->required();
    c_sv->add_option("--data", sv.data, "Scene file")->required();
    c_sv->add_option("--port", sv.port, "Port")->capture_default_str();
    c_sv->add_option("--host", sv.host, "Bind address")->capture_default_str();
    c_sv->add_option("--access-log", sv.access_log, "Access log file, 'none' to disable, default stderr");

    CountArgs ct;
    auto* c_ct = app.add_subcommand("count-params", "Count parameters and FLOPs");
    c_ct->add_option("--ckpt", ct.ckpt, "Checkpoint, overrides the dimension flags");
    add_model_dims(c_ct, ct.node_hidden, ct.edge_hidden, ct.future_hidden, ct.decoder_hidden, ct.latent_hidden,
                   ct.latent, ct.history, ct.horizon, ct.variant);
    c_ct->add_option("--classes", ct.classes, "Number of classes")->capture_default_str();
    c_ct->add_option("--nodes", ct.nodes, "Agents for the FLOP count");
    c_ct->add_option("--edges", ct.edges, "Edges for the FLOP count");

    for (auto* sub : app.get_subcommands({})) {
        sub->allow_extras(false);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 2;
    }

    try {
        if (*c_gen) run_generate(gen, shared, out);
        else if (*c_an) run_analyze(an, shared, out);
        else if (*c_tr) run_train(tr, shared, out, err);
        else if (*c_ev) run_eval(ev, shared, app.count("--seed") > 0, out);
        else if (*c_pr) run_predict(pr, shared, out);
        else if (*c_wi) run_whatif(wi, shared, out);
        else if (*c_sv) run_serve(sv, shared, out, err);
        else if (*c_ct) run_count(ct, shared, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace haicu
