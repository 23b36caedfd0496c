#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "trackcast/errors.hpp"
#include "trackcast/pipeline.hpp"

namespace trackcast {

namespace {

constexpr int kDetectionNodeBase = 1 << 20;

struct ForecastExample {
    std::size_t node_index;
    PastTrajectory past;
    FutureTrajectory future;
};

// One frame transition t-1 -> t: ground-truth boxes propagated to t act as
// the existing tracks, detections at t as the new observations.
struct PairExample {
    std::vector<AgentNode> track_nodes;
    std::vector<kitti::DetectionRecord> detections;
    std::vector<std::pair<int, int>> gt_pairs;  // (track row, detection col)
    std::vector<ForecastExample> forecasts;
};

PastTrajectory past_of_node(const AgentNode& node) {
    PastTrajectory past;
    past.agent_id = node.id;
    for (const auto& p : node.history) past.points.push_back({p[0], p[2]});
    past.points.push_back({node.state.x, node.state.z});
    return past;
}

const kitti::TrackletRecord* find_in_frame(const kitti::TrackletSequence& seq, int frame, int id) {
    const auto it = seq.frames.find(frame);
    if (it == seq.frames.end()) return nullptr;
    for (const auto& rec : it->second)
        if (rec.track_id == id) return &rec;
    return nullptr;
}

std::vector<PairExample> build_pair_examples(const RunConfig& cfg, const TrainSequence& seq) {
    std::vector<PairExample> out;
    if (seq.ground_truth.frames.empty()) return out;
    const int last_frame = seq.ground_truth.frames.rbegin()->first;
    const double dt = 1.0 / cfg.scenario.frame_rate;
    const int horizon = static_cast<int>(cfg.forecast.horizon);

    for (int t = 1; t <= last_frame; ++t) {
        const auto prev_it = seq.ground_truth.frames.find(t - 1);
        if (prev_it == seq.ground_truth.frames.end() || prev_it->second.empty()) continue;

        PairExample ex;
        for (const auto& rec : prev_it->second) {
            AgentNode node;
            node.id = rec.track_id;
            node.source = NodeSource::existing_track;
            node.state.yaw = rec.rotation_y;
            node.state.l = rec.l;
            node.state.w = rec.w;
            node.state.h = rec.h;
            const kitti::TrackletRecord* before = find_in_frame(seq.ground_truth, t - 2, rec.track_id);
            if (before) {
                node.state.vx = (rec.x - before->x) / dt;
                node.state.vy = (rec.y - before->y) / dt;
                node.state.vz = (rec.z - before->z) / dt;
            }
            // propagate to frame t, mirroring kalman_predict at inference
            node.state.x = rec.x + node.state.vx * dt;
            node.state.y = rec.y + node.state.vy * dt;
            node.state.z = rec.z + node.state.vz * dt;
            for (int h = t - 1 - static_cast<int>(cfg.gnn.history_len) + 1; h <= t - 1; ++h) {
                const kitti::TrackletRecord* hrec = find_in_frame(seq.ground_truth, h, rec.track_id);
                if (hrec) node.history.push_back({hrec->x, hrec->y, hrec->z});
            }
            ex.track_nodes.push_back(std::move(node));
        }
        std::sort(ex.track_nodes.begin(), ex.track_nodes.end(),
                  [](const AgentNode& a, const AgentNode& b) { return a.id < b.id; });

        const auto det_it = seq.detections.frames.find(t);
        if (det_it != seq.detections.frames.end()) ex.detections = det_it->second;

        // Provenance by proximity: a detection belongs to the ground-truth
        // agent whose frame-t box center is nearest, gated at 2 m.
        const auto cur_it = seq.ground_truth.frames.find(t);
        if (cur_it != seq.ground_truth.frames.end() && !ex.detections.empty()) {
            std::vector<std::vector<double>> cost(ex.track_nodes.size(),
                                                  std::vector<double>(ex.detections.size()));
            for (std::size_t i = 0; i < ex.track_nodes.size(); ++i) {
                const kitti::TrackletRecord* cur =
                    find_in_frame(seq.ground_truth, t, ex.track_nodes[i].id);
                for (std::size_t j = 0; j < ex.detections.size(); ++j) {
                    if (!cur) {
                        cost[i][j] = kAssignmentSentinel;
                        continue;
                    }
                    const double dx = cur->x - ex.detections[j].x;
                    const double dy = cur->y - ex.detections[j].y;
                    const double dz = cur->z - ex.detections[j].z;
                    const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
                    cost[i][j] = d <= 2.0 ? d : kAssignmentSentinel;
                }
            }
            const Assignment match = hungarian(cost);
            for (const auto& [i, j] : match.matches)
                if (cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] <
                    kAssignmentSentinel)
                    ex.gt_pairs.push_back({i, j});
        }

        if (t + horizon <= last_frame) {
            for (std::size_t i = 0; i < ex.track_nodes.size(); ++i) {
                FutureTrajectory future;
                bool complete = true;
                for (int h = t + 1; h <= t + horizon; ++h) {
                    const kitti::TrackletRecord* rec =
                        find_in_frame(seq.ground_truth, h, ex.track_nodes[i].id);
                    if (!rec) {
                        complete = false;
                        break;
                    }
                    future.points.push_back({rec->x, rec->z});
                }
                if (complete)
                    ex.forecasts.push_back({i, past_of_node(ex.track_nodes[i]), std::move(future)});
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<AgentNode> augmented_nodes(const PairExample& ex, double fresh_prob, Rng& rng) {
    std::vector<AgentNode> nodes = ex.track_nodes;
    for (AgentNode& node : nodes) {
        if (rng.uniform() < fresh_prob) {
            // fresh-track conditions: velocity unknown, no history yet
            node.state.vx = node.state.vy = node.state.vz = 0;
            node.history = {{node.state.x, node.state.y, node.state.z}};
        }
    }
    return nodes;
}

int min_over_k_mse(Tape& tape, const TrajectorySet& set, const FutureTrajectory& target,
                   std::size_t horizon) {
    std::vector<double> flat;
    flat.reserve(2 * target.points.size());
    for (const auto& p : target.points) {
        flat.push_back(p[0]);
        flat.push_back(p[1]);
    }
    const int target_id = tape.constant(Tensor::row(flat));
    int best = -1;
    for (int traj : set.traj_ids) {
        const int diff = ops::sub(tape, traj, target_id);
        const int mse = ops::scale(tape, ops::reduce_sum(tape, ops::square(tape, diff)),
                                   1.0 / static_cast<double>(horizon));
        best = best < 0 ? mse : ops::min2(tape, best, mse);
    }
    return best;
}

}  // namespace

std::vector<TrainSequence> training_sequences(const RunConfig& cfg) {
    std::vector<TrainSequence> out;
    if (!cfg.data_dir.empty()) {
        namespace fs = std::filesystem;
        const fs::path base(cfg.data_dir);
        for (int id : list_sequence_ids((base / "label").string())) {
            const std::string name = kitti::sequence_file_name(id);
            kitti::LoadedSequence loaded = kitti::load_sequence((base / "label" / name).string(),
                                                                (base / "det" / name).string(),
                                                                cfg.category);
            out.push_back({std::move(loaded.ground_truth), std::move(loaded.detections)});
        }
    } else {
        for (int e = 0; e < cfg.episodes; ++e) {
            synth::ScenarioConfig sc = cfg.scenario;
            sc.seed = cfg.episodes == 1 ? sc.seed : Rng::mix(sc.seed, static_cast<std::uint64_t>(e));
            auto [log, detections] = synth::generate(sc);
            out.push_back({log.to_tracklets(), std::move(detections)});
        }
    }
    return out;
}

TrainStats train(const RunConfig& cfg, ParamStore& store, const std::vector<TrainSequence>& data,
                 const std::string& log_path) {
    TrainStats stats;
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw IoError("cannot write training log " + log_path);
    }

    std::vector<std::vector<PairExample>> examples;
    examples.reserve(data.size());
    for (const TrainSequence& seq : data) examples.push_back(build_pair_examples(cfg, seq));

    Rng rng(Rng::mix(store.seed(), 0x7e57));
    long step = 0;

    // Stage 1: shared GNN feature plus both heads, joint loss.
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        long batches = 0;
        for (const auto& seq_examples : examples) {
            for (const PairExample& ex : seq_examples) {
                Tape tape;
                std::vector<AgentNode> nodes = augmented_nodes(ex, cfg.fresh_track_prob, rng);
                const std::size_t n_tracks = nodes.size();
                for (std::size_t j = 0; j < ex.detections.size(); ++j) {
                    AgentNode det_node;
                    const auto& det = ex.detections[j];
                    det_node.id = kDetectionNodeBase + static_cast<int>(j);
                    det_node.source = NodeSource::new_detection;
                    det_node.state.x = det.x;
                    det_node.state.y = det.y;
                    det_node.state.z = det.z;
                    det_node.state.yaw = det.rotation_y;
                    det_node.state.l = det.l;
                    det_node.state.w = det.w;
                    det_node.state.h = det.h;
                    det_node.history = {{det.x, det.y, det.z}};
                    nodes.push_back(std::move(det_node));
                }
                AgentGraph graph = build_graph(std::move(nodes), cfg.gnn.radius_m);
                run_gnn(tape, store, cfg.gnn, graph);

                const AffinityMatrix aff = affinity(tape, store, cfg.gnn, cfg.mot, graph);
                int loss = ops::scale(tape, association_loss(tape, aff, ex.gt_pairs), cfg.w_assoc);

                if (!ex.forecasts.empty() && cfg.w_forecast != 0.0) {
                    std::vector<int> terms;
                    for (const ForecastExample& fe : ex.forecasts) {
                        const int feature = graph.nodes[fe.node_index].feature;
                        const int ctx = forecast_context(tape, feature, fe.past, cfg.forecast);
                        terms.push_back(cvae_loss(tape, store, cfg.forecast, fe.past, fe.future,
                                                  ctx, cfg.forecast.beta, rng));
                    }
                    const int mean_cvae = ops::reduce_mean(tape, ops::concat(tape, terms));
                    loss = ops::add(tape, loss, ops::scale(tape, mean_cvae, cfg.w_forecast));
                }
                (void)n_tracks;

                const double loss_value = tape.value(loss).item();
                if (!std::isfinite(loss_value))
                    throw NumericalError("training diverged at step " + std::to_string(step));
                epoch_loss += loss_value;
                ++batches;
                ++step;
                adam_step(store, tape.backward(loss), cfg.lr);
            }
        }
        epoch_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
        stats.stage1_epoch_loss.push_back(epoch_loss);
        if (log) log << "stage1 epoch " << epoch << " loss " << epoch_loss << "\n";
    }

    // Stage 2: freeze everything but the sampling network and push the
    // sample set apart while a min-over-K anchor keeps it accurate.
    for (int epoch = 0; epoch < cfg.stage2_epochs; ++epoch) {
        double epoch_loss = 0.0;
        long batches = 0;
        for (const auto& seq_examples : examples) {
            for (const PairExample& ex : seq_examples) {
                if (ex.forecasts.empty()) continue;
                Tape tape;
                std::vector<AgentNode> nodes = ex.track_nodes;
                AgentGraph graph = build_graph(std::move(nodes), cfg.gnn.radius_m);
                run_gnn(tape, store, cfg.gnn, graph);

                std::vector<int> terms;
                for (const ForecastExample& fe : ex.forecasts) {
                    const int feature = graph.nodes[fe.node_index].feature;
                    const int ctx = forecast_context(tape, feature, fe.past, cfg.forecast);
                    const TrajectorySet set =
                        sample_forecast(tape, store, cfg.forecast, ctx, fe.past,
                                        SampleMode::learned_sampler, cfg.forecast.num_samples, rng);
                    int term = diversity_loss(tape, set, cfg.forecast);
                    if (cfg.anchor_weight != 0.0) {
                        const int anchor =
                            min_over_k_mse(tape, set, fe.future, cfg.forecast.horizon);
                        term = ops::add(tape, term, ops::scale(tape, anchor, cfg.anchor_weight));
                    }
                    terms.push_back(term);
                }
                const int loss = ops::reduce_mean(tape, ops::concat(tape, terms));
                const double loss_value = tape.value(loss).item();
                if (!std::isfinite(loss_value))
                    throw NumericalError("stage-2 training diverged at step " + std::to_string(step));
                epoch_loss += loss_value;
                ++batches;
                ++step;
                adam_step_subset(store, tape.backward(loss), cfg.stage2_lr, "samp.");
            }
        }
        epoch_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
        stats.stage2_epoch_loss.push_back(epoch_loss);
        if (log) log << "stage2 epoch " << epoch << " loss " << epoch_loss << "\n";
    }
    return stats;
}

}  // namespace trackcast
