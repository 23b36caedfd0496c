#include <charconv>
#include <fstream>
#include <sstream>

#include "trackcast/errors.hpp"
#include "trackcast/pipeline.hpp"

namespace trackcast {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& key) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config: bad number '" + v + "' for " + key);
    return d;
}

long to_long(const std::string& v, const std::string& key) {
    const double d = to_double(v, key);
    const long l = static_cast<long>(d);
    if (static_cast<double>(l) != d)
        throw ConfigError("config: expected integer for " + key + ", got '" + v + "'");
    return l;
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: expected bool for " + key + ", got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!trim(item).empty()) out.push_back(static_cast<int>(to_long(trim(item), key)));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

synth::Behavior to_behavior(const std::string& v) {
    if (v == "constant_velocity") return synth::Behavior::constant_velocity;
    if (v == "turn") return synth::Behavior::turn;
    if (v == "intersection") return synth::Behavior::intersection;
    throw ConfigError("config: unknown scenario.behavior '" + v + "'");
}

SampleMode to_mode(const std::string& v) {
    if (v == "iid") return SampleMode::iid;
    if (v == "learned") return SampleMode::learned_sampler;
    if (v == "greedy") return SampleMode::greedy_map_over_iid;
    throw ConfigError("config: unknown forecast mode '" + v + "'");
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
    auto u = [&](const std::string& k) { return static_cast<std::size_t>(to_long(value, k)); };

    if (key == "model.feature_width") c.gnn.feature_width = u(key);
    else if (key == "model.message_width") c.gnn.message_width = u(key);
    else if (key == "model.gnn_layers") c.gnn.layers = u(key);
    else if (key == "model.history") { c.gnn.history_len = u(key); c.forecast.history_len = u(key); }
    else if (key == "model.radius_m") c.gnn.radius_m = to_double(value, key);
    else if (key == "model.latent_width") c.forecast.latent_width = u(key);
    else if (key == "model.samples") c.forecast.num_samples = u(key);
    else if (key == "model.horizon") c.forecast.horizon = u(key);
    else if (key == "model.hidden") c.forecast.hidden = u(key);
    else if (key == "model.sigma_d") c.forecast.sigma_d = to_double(value, key);
    else if (key == "model.rho") c.forecast.rho = to_double(value, key);
    else if (key == "model.quality_radius") c.forecast.quality_radius = to_double(value, key);
    else if (key == "model.beta") c.forecast.beta = to_double(value, key);
    else if (key == "model.affinity_hidden") c.mot.affinity_hidden = u(key);

    else if (key == "train.epochs") c.epochs = static_cast<int>(to_long(value, key));
    else if (key == "train.lr") c.lr = to_double(value, key);
    else if (key == "train.stage2_epochs") c.stage2_epochs = static_cast<int>(to_long(value, key));
    else if (key == "train.stage2_lr") c.stage2_lr = to_double(value, key);
    else if (key == "train.w_assoc") c.w_assoc = to_double(value, key);
    else if (key == "train.w_forecast") c.w_forecast = to_double(value, key);
    else if (key == "train.anchor_weight") c.anchor_weight = to_double(value, key);
    else if (key == "train.fresh_track_prob") c.fresh_track_prob = to_double(value, key);
    else if (key == "train.episodes") c.episodes = static_cast<int>(to_long(value, key));

    else if (key == "track.min_hits") c.mot.min_hits = static_cast<int>(to_long(value, key));
    else if (key == "track.max_age") c.mot.max_age = static_cast<int>(to_long(value, key));
    else if (key == "track.threshold") c.mot.affinity_threshold = to_double(value, key);
    else if (key == "track.emit_coasting") c.mot.emit_coasting = to_bool(value, key);
    else if (key == "track.with_forecasts") c.with_forecasts = to_bool(value, key);
    else if (key == "track.forecast_mode") c.forecast_mode = to_mode(value);

    else if (key == "eval.iou_min") c.iou_min = to_double(value, key);
    else if (key == "eval.recall_levels") c.recall_levels = static_cast<int>(to_long(value, key));
    else if (key == "eval.horizons") c.horizons = to_int_list(value, key);
    else if (key == "eval.category") c.category = value;
    else if (key == "eval.gt_dir") c.gt_dir = value;
    else if (key == "eval.results_dir") c.results_dir = value;
    else if (key == "eval.forecasts_dir") c.forecasts_dir = value;
    else if (key == "eval.meta_dir") c.meta_dir = value;

    else if (key == "scenario.agents") c.scenario.num_agents = static_cast<int>(to_long(value, key));
    else if (key == "scenario.frames") c.scenario.num_frames = static_cast<int>(to_long(value, key));
    else if (key == "scenario.behavior") c.scenario.behavior = to_behavior(value);
    else if (key == "scenario.p_left") c.scenario.p_left = to_double(value, key);
    else if (key == "scenario.p_straight") c.scenario.p_straight = to_double(value, key);
    else if (key == "scenario.p_right") c.scenario.p_right = to_double(value, key);
    else if (key == "scenario.sigma") c.scenario.noise_sigma = to_double(value, key);
    else if (key == "scenario.dropout") c.scenario.dropout_rate = to_double(value, key);
    else if (key == "scenario.fp_rate") c.scenario.false_positive_rate = to_double(value, key);
    else if (key == "scenario.seed") c.scenario.seed = static_cast<std::uint64_t>(to_long(value, key));
    else if (key == "scenario.min_speed") c.scenario.min_speed = to_double(value, key);
    else if (key == "scenario.max_speed") c.scenario.max_speed = to_double(value, key);

    else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_long(value, key));
    else if (key == "out") c.out_dir = value;
    else if (key == "checkpoint") c.checkpoint_path = value;
    else if (key == "data.dir") c.data_dir = value;

    else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& name) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(name + ":" + std::to_string(line_no) + ": empty key or value");
        apply_key(cfg, key, value);
    }
    if (cfg.gnn.history_len != cfg.forecast.history_len)
        cfg.forecast.history_len = cfg.gnn.history_len;
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path);
}

ParamStore init_params(const RunConfig& cfg) {
    ParamStore store(cfg.seed);
    ensure_gnn_params(store, cfg.gnn);
    ensure_affinity_params(store, cfg.gnn, cfg.mot);
    ensure_forecast_params(store, cfg.gnn, cfg.forecast);
    return store;
}

}  // namespace trackcast
