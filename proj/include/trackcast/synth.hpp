#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trackcast/kitti.hpp"

namespace trackcast::synth {

enum class Behavior { constant_velocity, turn, intersection };
enum class Branch { left = 0, straight = 1, right = 2 };

struct ScenarioConfig {
    int num_agents = 8;
    int num_frames = 200;
    Behavior behavior = Behavior::constant_velocity;
    double p_left = 1.0 / 3.0;
    double p_straight = 1.0 / 3.0;
    double p_right = 1.0 / 3.0;
    double noise_sigma = 0.3;          // meters, detection center noise
    double dropout_rate = 0.05;        // per (agent, frame)
    double false_positive_rate = 0.05; // per frame
    std::uint64_t seed = 1;

    double frame_rate = 10.0;  // Hz
    double min_speed = 5.0, max_speed = 15.0;       // m/s
    double min_turn_radius = 8.0, max_turn_radius = 20.0;
    double scene_bound = 50.0;  // +-meters, false-positive placement

    void validate() const;  // throws ConfigError
};

// Kinematic snapshot used to roll counterfactual branches.
struct AgentPose {
    double x = 0, z = 0;
    double heading = 0;  // radians in the ground plane
    double speed = 0;    // m/s
};

struct AgentTruth {
    int id = 0;
    double l = 4.2, w = 1.8, h = 1.6;
    std::vector<std::array<double, 3>> positions;  // per frame (x, y, z)
    std::vector<double> yaws;
    // intersection scenarios only
    Branch branch = Branch::straight;
    int decision_frame = -1;       // last frame before the turn begins
    AgentPose decision_pose;
    double turn_radius = 0;
};

struct GroundTruthLog {
    ScenarioConfig config;
    std::vector<AgentTruth> agents;

    kitti::TrackletSequence to_tracklets() const;
};

// Integrates agents at the configured rate and derives detections as ground
// truth plus Gaussian center noise, minus dropouts, plus uniform false
// positives. Fully determined by the seed.
std::pair<GroundTruthLog, kitti::DetectionSequence> generate(const ScenarioConfig& config);

// Rolls `steps` future positions from a pose under one branch choice; this
// is how a scenario's counterfactual endpoints are produced for evaluation.
std::vector<std::array<double, 2>> simulate_branch(const AgentPose& pose, Branch branch,
                                                   double turn_radius, int steps, double dt);

// Writes label/<seq>.txt, det/<seq>.txt and meta/<seq>.txt under `dir`,
// readable by kitti::load_sequence. Round trips are value-exact.
void export_scenario(const GroundTruthLog& log, const kitti::DetectionSequence& detections,
                     const std::string& dir, int sequence_id);

struct AgentMeta {
    int agent_id = 0;
    Branch branch = Branch::straight;
    int decision_frame = -1;
    AgentPose decision_pose;
    double turn_radius = 0;
};

std::vector<AgentMeta> read_meta_file(const std::string& path);

// Converts one agent's true yaw to the KITTI record convention.
double heading_to_rotation_y(double heading);

}  // namespace trackcast::synth
