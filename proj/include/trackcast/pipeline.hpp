#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trackcast/forecast.hpp"
#include "trackcast/metrics.hpp"
#include "trackcast/mot.hpp"
#include "trackcast/param_store.hpp"
#include "trackcast/scene_graph.hpp"
#include "trackcast/synth.hpp"

namespace trackcast {

struct RunConfig {
    GnnConfig gnn;
    ForecastConfig forecast;
    MotConfig mot;
    synth::ScenarioConfig scenario;

    // training
    int epochs = 25;
    double lr = 3e-3;
    int stage2_epochs = 20;
    double stage2_lr = 3e-3;
    double w_assoc = 1.0;
    double w_forecast = 1.0;
    double anchor_weight = 1.0;
    double fresh_track_prob = 0.25;
    int episodes = 1;  // synthesized training sequences

    // evaluation
    double iou_min = 0.25;
    int recall_levels = 40;
    std::vector<int> horizons = {10, 30};
    std::string category = "Car";
    std::string gt_dir, results_dir, forecasts_dir, meta_dir;

    // io
    std::string data_dir;  // when set, sequences are loaded instead of synthesized
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string checkpoint_path;

    bool with_forecasts = true;
    SampleMode forecast_mode = SampleMode::learned_sampler;
};

// Flat key=value text with section prefixes (model.*, train.*, track.*,
// eval.*, scenario.*); '#' starts a comment. Unknown keys are errors.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& name = "<config>");

// Fresh parameter store with every model parameter materialized.
ParamStore init_params(const RunConfig& cfg);

// --- per-frame tracking + forecasting -----------------------------------

struct TrackerState {
    std::vector<Track> tracks;
    int next_track_id = 0;
    int frame_index = 0;
    Rng rng{0};
};

TrackerState make_tracker_state(const RunConfig& cfg, int sequence_id);

struct TrackForecast {
    int track_id = -1;
    TrajectorySet samples;
};

struct FrameResult {
    std::vector<kitti::TrackletRecord> emitted;
    std::vector<TrackForecast> forecasts;
    // stage timings; parts sum to total by construction
    double graph_ms = 0, gnn_ms = 0, mot_ms = 0, forecast_ms = 0, total_ms = 0;
};

using AssignmentCorrupter = std::function<void(Assignment&)>;

// One frame: predict tracks, build the shared graph, run the GNN once, then
// feed the two heads in parallel. Forecasts read only post-GNN features and
// the pre-assignment track set, never the current frame's assignment.
FrameResult step_frame(TrackerState& state, const std::vector<kitti::DetectionRecord>& detections,
                       const ParamStore& store, const RunConfig& cfg,
                       const AssignmentCorrupter& corrupt = nullptr);

// --- training -------------------------------------------------------------

struct TrainSequence {
    kitti::TrackletSequence ground_truth;
    kitti::DetectionSequence detections;
};

std::vector<TrainSequence> training_sequences(const RunConfig& cfg);

struct TrainStats {
    std::vector<double> stage1_epoch_loss;
    std::vector<double> stage2_epoch_loss;
};

// Stage 1 jointly trains GNN, affinity and CVAE on association + forecast
// losses; stage 2 freezes them and trains the sampling network on the DPP
// diversity objective plus a min-over-K reconstruction anchor.
TrainStats train(const RunConfig& cfg, ParamStore& store,
                 const std::vector<TrainSequence>& data, const std::string& log_path = "");

// --- batch commands (the CLI surface) --------------------------------------

void cmd_synth(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_track(const RunConfig& cfg);
void cmd_forecast(const RunConfig& cfg);
metrics::MetricReport cmd_evaluate(const RunConfig& cfg);
std::string render_report(const metrics::MetricReport& report);

// Helpers shared by commands and tests.
std::vector<int> list_sequence_ids(const std::string& dir);
void track_sequence(const RunConfig& cfg, const ParamStore& store, int sequence_id,
                    const kitti::DetectionSequence& detections,
                    std::vector<kitti::TrackletRecord>& results_out, std::string& forecast_text_out,
                    std::vector<FrameResult>* frame_results = nullptr,
                    const AssignmentCorrupter& corrupt = nullptr);

struct ForecastRow {
    int frame, agent_id, sample_idx, t;
    double x, z;
};
std::string forecast_rows_text(const std::vector<ForecastRow>& rows);
std::vector<ForecastRow> parse_forecast_file(const std::string& path);

}  // namespace trackcast
