#include "trackcast/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "trackcast/errors.hpp"

namespace trackcast {

namespace fs = std::filesystem;

namespace {

constexpr int kDetectionNodeBase = 1 << 20;  // keeps detection ids above track ids

double ms_since(std::chrono::steady_clock::time_point t0,
                std::chrono::steady_clock::time_point t1) {
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

AgentNode node_of_track(const Track& track) {
    AgentNode node;
    node.id = track.id;
    node.source = NodeSource::existing_track;
    node.state.x = track.kf.x[0];
    node.state.y = track.kf.x[1];
    node.state.z = track.kf.x[2];
    node.state.yaw = track.kf.x[3];
    node.state.l = track.kf.x[4];
    node.state.w = track.kf.x[5];
    node.state.h = track.kf.x[6];
    node.state.vx = track.kf.x[7];
    node.state.vy = track.kf.x[8];
    node.state.vz = track.kf.x[9];
    node.history = track.history;
    return node;
}

AgentNode node_of_detection(const kitti::DetectionRecord& det, int index) {
    AgentNode node;
    node.id = kDetectionNodeBase + index;
    node.source = NodeSource::new_detection;
    node.state.x = det.x;
    node.state.y = det.y;
    node.state.z = det.z;
    node.state.yaw = det.rotation_y;
    node.state.l = det.l;
    node.state.w = det.w;
    node.state.h = det.h;
    node.history = {{det.x, det.y, det.z}};
    return node;
}

// History plus the node's current position, in ground-plane coordinates.
PastTrajectory past_of_node(const AgentNode& node) {
    PastTrajectory past;
    past.agent_id = node.id;
    for (const auto& p : node.history) past.points.push_back({p[0], p[2]});
    past.points.push_back({node.state.x, node.state.z});
    return past;
}

}  // namespace

TrackerState make_tracker_state(const RunConfig& cfg, int sequence_id) {
    TrackerState s;
    s.rng = Rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(sequence_id) + 0x7ac5));
    return s;
}

FrameResult step_frame(TrackerState& state, const std::vector<kitti::DetectionRecord>& detections,
                       const ParamStore& store, const RunConfig& cfg,
                       const AssignmentCorrupter& corrupt) {
    FrameResult result;
    const auto t0 = std::chrono::steady_clock::now();

    for (Track& t : state.tracks) kalman_predict(t.kf, 1.0, cfg.mot);

    std::vector<AgentNode> nodes;
    nodes.reserve(state.tracks.size() + detections.size());
    for (const Track& t : state.tracks) nodes.push_back(node_of_track(t));
    for (std::size_t j = 0; j < detections.size(); ++j)
        nodes.push_back(node_of_detection(detections[j], static_cast<int>(j)));
    AgentGraph graph = build_graph(std::move(nodes), cfg.gnn.radius_m);
    const auto t1 = std::chrono::steady_clock::now();

    Tape tape;
    run_gnn(tape, store, cfg.gnn, graph);
    const auto t2 = std::chrono::steady_clock::now();

    // Forecast eligibility is fixed before association so this frame's
    // assignment can never leak into the forecasting head.
    struct Pending {
        int track_id;
        int feature;
        PastTrajectory past;
    };
    std::vector<Pending> pending;
    if (cfg.with_forecasts) {
        for (std::size_t i = 0; i < state.tracks.size(); ++i) {
            const Track& t = state.tracks[i];
            if (t.status == TrackStatus::confirmed && t.age < cfg.mot.max_age)
                pending.push_back({t.id, graph.nodes[i].feature, past_of_node(graph.nodes[i])});
        }
    }

    AffinityMatrix aff = affinity(tape, store, cfg.gnn, cfg.mot, graph);
    Assignment assign = associate(aff, cfg.mot.affinity_threshold);
    if (corrupt) corrupt(assign);
    for (std::size_t i = 0; i < state.tracks.size(); ++i)
        state.tracks[i].feature = tape.value(graph.nodes[i].feature);
    LifecycleResult life = lifecycle_step(state.tracks, assign, detections, cfg.mot,
                                          state.frame_index, state.next_track_id);
    result.emitted = std::move(life.emitted);
    std::sort(result.emitted.begin(), result.emitted.end(),
              [](const auto& a, const auto& b) { return a.track_id < b.track_id; });
    const auto t3 = std::chrono::steady_clock::now();

    for (const Pending& p : pending) {
        const int ctx = forecast_context(tape, p.feature, p.past, cfg.forecast);
        TrackForecast fc;
        fc.track_id = p.track_id;
        fc.samples = sample_forecast(tape, store, cfg.forecast, ctx, p.past, cfg.forecast_mode,
                                     cfg.forecast.num_samples, state.rng);
        result.forecasts.push_back(std::move(fc));
    }
    const auto t4 = std::chrono::steady_clock::now();

    result.graph_ms = ms_since(t0, t1);
    result.gnn_ms = ms_since(t1, t2);
    result.mot_ms = ms_since(t2, t3);
    result.forecast_ms = ms_since(t3, t4);
    result.total_ms = result.graph_ms + result.gnn_ms + result.mot_ms + result.forecast_ms;
    state.frame_index += 1;
    return result;
}

std::string forecast_rows_text(const std::vector<ForecastRow>& rows) {
    std::string out;
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d %d %d %d %.17g %.17g\n", r.frame, r.agent_id,
                      r.sample_idx, r.t, r.x, r.z);
        out += buf;
    }
    return out;
}

std::vector<ForecastRow> parse_forecast_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open forecast file " + path);
    std::vector<ForecastRow> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ForecastRow r{};
        if (!(ss >> r.frame >> r.agent_id >> r.sample_idx >> r.t >> r.x >> r.z))
            throw ParseError(path, line_no, "malformed forecast row");
        rows.push_back(r);
    }
    return rows;
}

void track_sequence(const RunConfig& cfg, const ParamStore& store, int sequence_id,
                    const kitti::DetectionSequence& detections,
                    std::vector<kitti::TrackletRecord>& results_out, std::string& forecast_text_out,
                    std::vector<FrameResult>* frame_results, const AssignmentCorrupter& corrupt) {
    TrackerState state = make_tracker_state(cfg, sequence_id);
    const int last_frame = detections.frames.empty() ? -1 : detections.frames.rbegin()->first;

    std::vector<ForecastRow> rows;
    for (int f = 0; f <= last_frame; ++f) {
        static const std::vector<kitti::DetectionRecord> kNone;
        const auto it = detections.frames.find(f);
        FrameResult r = step_frame(state, it == detections.frames.end() ? kNone : it->second,
                                   store, cfg, corrupt);
        for (const auto& rec : r.emitted) results_out.push_back(rec);
        for (const auto& fc : r.forecasts) {
            for (std::size_t k = 0; k < fc.samples.size(); ++k) {
                const auto& traj = fc.samples.trajectories[k];
                for (std::size_t t = 0; t < traj.points.size(); ++t)
                    rows.push_back({f, fc.track_id, static_cast<int>(k), static_cast<int>(t) + 1,
                                    traj.points[t][0], traj.points[t][1]});
            }
        }
        if (frame_results) frame_results->push_back(std::move(r));
    }
    forecast_text_out = forecast_rows_text(rows);
}

std::vector<int> list_sequence_ids(const std::string& dir) {
    std::vector<int> ids;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() == 8 && name.ends_with(".txt")) {
            bool digits = true;
            for (int i = 0; i < 4; ++i)
                digits = digits && std::isdigit(static_cast<unsigned char>(name[static_cast<std::size_t>(i)]));
            if (digits) ids.push_back(std::stoi(name.substr(0, 4)));
        }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

void cmd_synth(const RunConfig& cfg) {
    for (int e = 0; e < cfg.episodes; ++e) {
        synth::ScenarioConfig sc = cfg.scenario;
        sc.seed = cfg.episodes == 1 ? sc.seed : Rng::mix(sc.seed, static_cast<std::uint64_t>(e));
        auto [log, detections] = synth::generate(sc);
        synth::export_scenario(log, detections, cfg.out_dir, e);
    }
}

namespace {

ParamStore load_checkpoint_or_throw(const RunConfig& cfg) {
    if (cfg.checkpoint_path.empty())
        throw ConfigError("no checkpoint given; set --checkpoint or the 'checkpoint' key");
    return ParamStore::load(cfg.checkpoint_path);
}

struct NamedSequence {
    int id;
    kitti::TrackletSequence gt;  // may be empty for track-only flows
    kitti::DetectionSequence detections;
};

std::vector<NamedSequence> input_sequences(const RunConfig& cfg, bool need_gt) {
    std::vector<NamedSequence> out;
    if (!cfg.data_dir.empty()) {
        const fs::path base(cfg.data_dir);
        for (int id : list_sequence_ids((base / "det").string())) {
            NamedSequence seq;
            seq.id = id;
            const std::string name = kitti::sequence_file_name(id);
            kitti::LoadedSequence loaded = kitti::load_sequence((base / "label" / name).string(),
                                                                (base / "det" / name).string(),
                                                                cfg.category);
            seq.gt = std::move(loaded.ground_truth);
            seq.detections = std::move(loaded.detections);
            out.push_back(std::move(seq));
        }
    } else {
        for (int e = 0; e < cfg.episodes; ++e) {
            synth::ScenarioConfig sc = cfg.scenario;
            sc.seed = cfg.episodes == 1 ? sc.seed : Rng::mix(sc.seed, static_cast<std::uint64_t>(e));
            auto [log, detections] = synth::generate(sc);
            NamedSequence seq;
            seq.id = e;
            seq.gt = log.to_tracklets();
            seq.detections = std::move(detections);
            out.push_back(std::move(seq));
        }
    }
    if (need_gt)
        for (const auto& seq : out)
            if (seq.gt.empty()) throw IoError("sequence " + std::to_string(seq.id) + " has no labels");
    return out;
}

}  // namespace

void cmd_track(const RunConfig& cfg) {
    const ParamStore store = load_checkpoint_or_throw(cfg);
    const std::vector<NamedSequence> sequences = input_sequences(cfg, false);
    fs::create_directories(fs::path(cfg.out_dir) / "results");
    if (cfg.with_forecasts) fs::create_directories(fs::path(cfg.out_dir) / "forecasts");

    // Sequences are independent: private tracker state, private tape.
    std::vector<std::future<void>> jobs;
    for (const auto& seq : sequences) {
        jobs.push_back(std::async(std::launch::async, [&cfg, &store, &seq]() {
            std::vector<kitti::TrackletRecord> results;
            std::string forecast_text;
            track_sequence(cfg, store, seq.id, seq.detections, results, forecast_text);
            std::stable_sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
                return a.frame != b.frame ? a.frame < b.frame : a.track_id < b.track_id;
            });
            const std::string name = kitti::sequence_file_name(seq.id);
            kitti::write_tracklet_file((fs::path(cfg.out_dir) / "results" / name).string(), results);
            if (cfg.with_forecasts) {
                std::ofstream out(fs::path(cfg.out_dir) / "forecasts" / name);
                if (!out) throw IoError("cannot write forecasts for sequence " + name);
                out << forecast_text;
            }
        }));
    }
    for (auto& job : jobs) job.get();
}

void cmd_forecast(const RunConfig& cfg) {
    const ParamStore store = load_checkpoint_or_throw(cfg);
    const std::vector<NamedSequence> sequences = input_sequences(cfg, true);
    fs::create_directories(fs::path(cfg.out_dir) / "forecasts");

    const int horizon = static_cast<int>(cfg.forecast.horizon);
    for (const auto& seq : sequences) {
        Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(seq.id) + 0x0f0f));
        std::vector<ForecastRow> rows;
        const int last_frame = seq.gt.frames.empty() ? -1 : seq.gt.frames.rbegin()->first;
        for (int f = 0; f + horizon <= last_frame; ++f) {
            const auto it = seq.gt.frames.find(f);
            if (it == seq.gt.frames.end() || it->second.empty()) continue;

            // Ground-truth-driven graph: every labelled agent becomes a
            // track node with finite-difference velocity and true history.
            std::vector<AgentNode> nodes;
            for (const auto& rec : it->second) {
                AgentNode node;
                node.id = rec.track_id;
                node.source = NodeSource::existing_track;
                node.state.x = rec.x;
                node.state.y = rec.y;
                node.state.z = rec.z;
                node.state.yaw = rec.rotation_y;
                node.state.l = rec.l;
                node.state.w = rec.w;
                node.state.h = rec.h;
                for (int h = f - static_cast<int>(cfg.gnn.history_len) + 1; h < f; ++h) {
                    const auto hit = seq.gt.frames.find(h);
                    if (hit == seq.gt.frames.end()) continue;
                    for (const auto& hrec : hit->second)
                        if (hrec.track_id == rec.track_id)
                            node.history.push_back({hrec.x, hrec.y, hrec.z});
                }
                if (!node.history.empty()) {
                    const auto& prev = node.history.back();
                    node.state.vx = (rec.x - prev[0]) * cfg.scenario.frame_rate;
                    node.state.vy = (rec.y - prev[1]) * cfg.scenario.frame_rate;
                    node.state.vz = (rec.z - prev[2]) * cfg.scenario.frame_rate;
                }
                nodes.push_back(std::move(node));
            }
            std::sort(nodes.begin(), nodes.end(),
                      [](const AgentNode& a, const AgentNode& b) { return a.id < b.id; });

            Tape tape;
            AgentGraph graph = build_graph(std::move(nodes), cfg.gnn.radius_m);
            run_gnn(tape, store, cfg.gnn, graph);
            for (const AgentNode& node : graph.nodes) {
                const PastTrajectory past = past_of_node(node);
                const int ctx = forecast_context(tape, node.feature, past, cfg.forecast);
                const TrajectorySet set =
                    sample_forecast(tape, store, cfg.forecast, ctx, past, cfg.forecast_mode,
                                    cfg.forecast.num_samples, rng);
                for (std::size_t k = 0; k < set.size(); ++k)
                    for (std::size_t t = 0; t < set.trajectories[k].points.size(); ++t)
                        rows.push_back({f, node.id, static_cast<int>(k), static_cast<int>(t) + 1,
                                        set.trajectories[k].points[t][0],
                                        set.trajectories[k].points[t][1]});
            }
        }
        std::ofstream out(fs::path(cfg.out_dir) / "forecasts" / kitti::sequence_file_name(seq.id));
        if (!out) throw IoError("cannot write forecasts for sequence " + std::to_string(seq.id));
        out << forecast_rows_text(rows);
    }
}

void cmd_train(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    ParamStore store = init_params(cfg);
    const std::vector<TrainSequence> data = training_sequences(cfg);
    train(cfg, store, data, (fs::path(cfg.out_dir) / "train_log.txt").string());
    store.save((fs::path(cfg.out_dir) / "checkpoint.txt").string());
}

}  // namespace trackcast
