#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "trackcast/kitti.hpp"
#include "trackcast/linalg.hpp"
#include "trackcast/scene_graph.hpp"
#include "trackcast/tape.hpp"
#include "trackcast/tensor.hpp"

namespace trackcast {

// Track x detection scores in [0,1]; tape ids retained per entry so the
// association loss can differentiate through the matrix.
struct AffinityMatrix {
    std::size_t rows = 0;  // existing tracks
    std::size_t cols = 0;  // current detections
    std::vector<double> values;
    std::vector<int> tape_ids;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    int tape_at(std::size_t r, std::size_t c) const { return tape_ids[r * cols + c]; }
};

struct Assignment {
    std::vector<std::pair<int, int>> matches;  // (row, col), ascending rows
    std::vector<int> unmatched_rows;
    std::vector<int> unmatched_cols;
    double cost = 0.0;  // sum over matched real pairs, row order
};

struct MotConfig {
    int min_hits = 3;
    int max_age = 2;
    double affinity_threshold = 0.5;
    bool emit_coasting = true;
    double process_noise_vel = 1e-2;  // Q, velocity block
    double observation_noise = 1e-1;  // R
    std::size_t affinity_hidden = 32;
    double coast_score_decay = 0.9;
};

// Rectangular matrices are padded internally to square with this sentinel;
// sentinel matches are reported as unmatched.
constexpr double kAssignmentSentinel = 1e6;

// Minimum-total-cost one-to-one assignment. Among equal-cost optima the
// (row, col) pair sequence is lexicographically smallest.
// NaN entries are rejected.
Assignment hungarian(const std::vector<std::vector<double>>& cost);

// hungarian on cost = 1 - affinity; matches below `threshold` are demoted
// to unmatched on both sides.
Assignment associate(const AffinityMatrix& aff, double threshold);

// --- learned affinity ------------------------------------------------------

void ensure_affinity_params(ParamStore& store, const GnnConfig& gnn, const MotConfig& cfg);

// entry(i,j) = sigmoid(MLP([h_track_i ; h_det_j])) over the post-GNN graph.
// Rows iterate track nodes, columns detection nodes, each in graph order.
AffinityMatrix affinity(Tape& tape, const ParamStore& store, const GnnConfig& gnn,
                        const MotConfig& cfg, const AgentGraph& graph);

// Mean binary cross-entropy against {0,1} targets; probabilities are clamped
// to [1e-7, 1-1e-7] before the log. Empty matrices yield a constant 0.
int association_loss(Tape& tape, const AffinityMatrix& aff,
                     const std::vector<std::pair<int, int>>& gt_pairs);

// --- constant-velocity Kalman filter ---------------------------------------

// State layout: x, y, z, yaw, l, w, h, vx, vy, vz. Observations are the
// first seven components.
struct KalmanState {
    std::array<double, 10> x{};
    linalg::Mat P{10, 10};
};

KalmanState kalman_init(const std::array<double, 7>& obs);
void kalman_predict(KalmanState& s, double dt_frames, const MotConfig& cfg);
void kalman_update(KalmanState& s, const std::array<double, 7>& obs, const MotConfig& cfg);

// --- track lifecycle --------------------------------------------------------

enum class TrackStatus { tentative, confirmed, dead };

struct Track {
    int id = -1;
    KalmanState kf;
    Tensor feature;  // last post-GNN feature (numeric copy)
    int hits = 1;    // consecutive-match count
    int age = 0;     // frames since last match
    TrackStatus status = TrackStatus::tentative;
    std::vector<std::array<double, 3>> history;  // oldest -> newest
    double score = 0.0;
    kitti::DetectionRecord last_detection;  // pass-through fields (bbox2d, category)
    bool matched_this_frame = false;
};

struct LifecycleResult {
    std::vector<kitti::TrackletRecord> emitted;
    std::vector<int> spawned_track_ids;
};

// Applies one frame's assignment: matched tracks are measurement-updated,
// unmatched tracks age (dead past max_age), unmatched detections spawn
// tentative tracks with fresh ids. Only confirmed tracks are emitted; during
// the first min_hits frames of a sequence new tracks confirm immediately so
// a clean start is not penalized.
LifecycleResult lifecycle_step(std::vector<Track>& tracks, const Assignment& assignment,
                               const std::vector<kitti::DetectionRecord>& detections,
                               const MotConfig& cfg, int frame_index, int& next_track_id);

kitti::TrackletRecord track_to_record(const Track& track, int frame);

}  // namespace trackcast
