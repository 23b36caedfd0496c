#include "trackcast/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trackcast/errors.hpp"
#include "trackcast/rng.hpp"

namespace trackcast::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

void step_pose(AgentPose& pose, double omega, double dt) {
    pose.x += pose.speed * dt * std::cos(pose.heading);
    pose.z += pose.speed * dt * std::sin(pose.heading);
    pose.heading += omega * dt;
}

Branch sample_branch(Rng& rng, const ScenarioConfig& cfg) {
    const double u = rng.uniform();
    if (u < cfg.p_left) return Branch::left;
    if (u < cfg.p_left + cfg.p_straight) return Branch::straight;
    return Branch::right;
}

const char* branch_name(Branch b) {
    switch (b) {
        case Branch::left: return "left";
        case Branch::straight: return "straight";
        case Branch::right: return "right";
    }
    return "?";
}

Branch branch_of(const std::string& name) {
    if (name == "left") return Branch::left;
    if (name == "straight") return Branch::straight;
    if (name == "right") return Branch::right;
    throw Error("unknown branch '" + name + "'");
}

kitti::DetectionRecord base_record(const AgentTruth& agent, int frame) {
    kitti::DetectionRecord rec;
    rec.frame = frame;
    rec.category = "Car";
    rec.h = agent.h;
    rec.w = agent.w;
    rec.l = agent.l;
    rec.x = agent.positions[static_cast<std::size_t>(frame)][0];
    rec.y = agent.positions[static_cast<std::size_t>(frame)][1];
    rec.z = agent.positions[static_cast<std::size_t>(frame)][2];
    rec.rotation_y = kitti::wrap_angle(agent.yaws[static_cast<std::size_t>(frame)]);
    rec.alpha = kitti::wrap_angle(rec.rotation_y - std::atan2(rec.x, rec.z));
    return rec;
}

}  // namespace

double heading_to_rotation_y(double heading) { return kitti::wrap_angle(-heading); }

void ScenarioConfig::validate() const {
    if (num_agents < 1) throw ConfigError("scenario: num_agents must be positive");
    if (num_frames < 1) throw ConfigError("scenario: num_frames must be positive");
    if (noise_sigma < 0) throw ConfigError("scenario: noise sigma must be >= 0");
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!rate_ok(dropout_rate) || !rate_ok(false_positive_rate))
        throw ConfigError("scenario: rates must lie in [0,1]");
    if (behavior == Behavior::intersection) {
        const double sum = p_left + p_straight + p_right;
        if (std::fabs(sum - 1.0) > 1e-9)
            throw ConfigError("scenario: branch probabilities must sum to 1");
        if (p_left < 0 || p_straight < 0 || p_right < 0)
            throw ConfigError("scenario: branch probabilities must be >= 0");
    }
    if (min_speed <= 0 || max_speed < min_speed) throw ConfigError("scenario: bad speed range");
    if (frame_rate <= 0) throw ConfigError("scenario: frame rate must be positive");
}

std::vector<std::array<double, 2>> simulate_branch(const AgentPose& start, Branch branch,
                                                   double turn_radius, int steps, double dt) {
    AgentPose pose = start;
    double turned = 0.0;
    std::vector<std::array<double, 2>> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        double omega = 0.0;
        if (branch != Branch::straight && std::fabs(turned) < kPi / 2.0) {
            omega = (branch == Branch::left ? 1.0 : -1.0) * pose.speed / turn_radius;
            turned += omega * dt;
        }
        step_pose(pose, omega, dt);
        out.push_back({pose.x, pose.z});
    }
    return out;
}

std::pair<GroundTruthLog, kitti::DetectionSequence> generate(const ScenarioConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const double dt = 1.0 / config.frame_rate;

    GroundTruthLog log;
    log.config = config;

    for (int i = 0; i < config.num_agents; ++i) {
        AgentTruth agent;
        agent.id = i;
        agent.l = rng.uniform(3.8, 4.6);
        agent.w = rng.uniform(1.6, 2.0);
        agent.h = rng.uniform(1.4, 1.8);

        AgentPose pose;
        double omega = 0.0;
        int decision_frame = -1;
        double turned = 0.0;

        const double entry = 2.0 * kPi * i / config.num_agents + rng.uniform(-0.15, 0.15);
        const double speed = rng.uniform(config.min_speed, config.max_speed);
        switch (config.behavior) {
            case Behavior::constant_velocity: {
                // Inbound spokes with lane offsets: paths cross near the
                // center at staggered times.
                const double dist = rng.uniform(18.0, 42.0);
                const double lateral = rng.uniform(-4.0, 4.0);
                pose.heading = entry;
                pose.speed = speed;
                pose.x = -dist * std::cos(entry) - lateral * std::sin(entry);
                pose.z = -dist * std::sin(entry) + lateral * std::cos(entry);
                break;
            }
            case Behavior::turn: {
                const double dist = rng.uniform(18.0, 42.0);
                pose.heading = entry;
                pose.speed = speed;
                pose.x = -dist * std::cos(entry);
                pose.z = -dist * std::sin(entry);
                agent.turn_radius = rng.uniform(config.min_turn_radius, config.max_turn_radius);
                omega = (rng.uniform() < 0.5 ? 1.0 : -1.0) * pose.speed / agent.turn_radius;
                break;
            }
            case Behavior::intersection: {
                // Straight approach to the origin; the branch choice becomes
                // visible only after the decision frame.
                pose.speed = rng.uniform(8.0, 12.0);
                pose.heading = entry;
                decision_frame = rng.uniform_int(7, 13);
                const double dist = pose.speed * dt * decision_frame;
                pose.x = -dist * std::cos(entry);
                pose.z = -dist * std::sin(entry);
                agent.turn_radius = rng.uniform(8.0, 14.0);
                agent.branch = sample_branch(rng, config);
                agent.decision_frame = decision_frame;
                break;
            }
        }

        for (int f = 0; f < config.num_frames; ++f) {
            agent.positions.push_back({pose.x, 0.0, pose.z});
            agent.yaws.push_back(heading_to_rotation_y(pose.heading));
            if (config.behavior == Behavior::intersection && f == decision_frame)
                agent.decision_pose = pose;

            double step_omega = 0.0;
            if (config.behavior == Behavior::turn) {
                step_omega = omega;
            } else if (config.behavior == Behavior::intersection && f >= decision_frame &&
                       agent.branch != Branch::straight && std::fabs(turned) < kPi / 2.0) {
                step_omega =
                    (agent.branch == Branch::left ? 1.0 : -1.0) * pose.speed / agent.turn_radius;
                turned += step_omega * dt;
            }
            step_pose(pose, step_omega, dt);
        }
        log.agents.push_back(std::move(agent));
    }

    kitti::DetectionSequence detections;
    for (int f = 0; f < config.num_frames; ++f) {
        detections.frames[f];  // frame exists even when empty
        for (const AgentTruth& agent : log.agents) {
            const double u_drop = rng.uniform();
            const double nx = rng.normal(0.0, config.noise_sigma);
            const double ny = rng.normal(0.0, config.noise_sigma);
            const double nz = rng.normal(0.0, config.noise_sigma);
            const double score = rng.uniform(0.6, 1.0);
            if (u_drop < config.dropout_rate) continue;
            kitti::DetectionRecord rec = base_record(agent, f);
            rec.x += nx;
            rec.y += ny;
            rec.z += nz;
            rec.score = score;
            detections.frames[f].push_back(std::move(rec));
        }
        if (rng.uniform() < config.false_positive_rate) {
            kitti::DetectionRecord fp;
            fp.frame = f;
            fp.category = "Car";
            fp.x = rng.uniform(-config.scene_bound, config.scene_bound);
            fp.y = 0.0;
            fp.z = rng.uniform(-config.scene_bound, config.scene_bound);
            fp.l = rng.uniform(3.8, 4.6);
            fp.w = rng.uniform(1.6, 2.0);
            fp.h = rng.uniform(1.4, 1.8);
            fp.rotation_y = kitti::wrap_angle(rng.uniform(-kPi, kPi));
            fp.alpha = kitti::wrap_angle(fp.rotation_y - std::atan2(fp.x, fp.z));
            fp.score = rng.uniform(0.1, 0.7);
            detections.frames[f].push_back(std::move(fp));
        }
    }
    return {std::move(log), std::move(detections)};
}

kitti::TrackletSequence GroundTruthLog::to_tracklets() const {
    kitti::TrackletSequence seq;
    for (int f = 0; f < config.num_frames; ++f) {
        seq.frames[f];
        for (const AgentTruth& agent : agents) {
            kitti::TrackletRecord rec;
            static_cast<kitti::DetectionRecord&>(rec) = base_record(agent, f);
            rec.track_id = agent.id;
            rec.score = 1.0;
            seq.frames[f].push_back(std::move(rec));
        }
    }
    return seq;
}

void export_scenario(const GroundTruthLog& log, const kitti::DetectionSequence& detections,
                     const std::string& dir, int sequence_id) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "label");
    fs::create_directories(fs::path(dir) / "det");
    fs::create_directories(fs::path(dir) / "meta");
    const std::string name = kitti::sequence_file_name(sequence_id);

    {
        std::ofstream out(fs::path(dir) / "label" / name);
        if (!out) throw IoError("cannot write labels under " + dir);
        const kitti::TrackletSequence gt = log.to_tracklets();
        for (const auto& [f, records] : gt.frames)
            for (const auto& rec : records) out << kitti::serialize_tracklet(rec) << '\n';
    }
    {
        std::ofstream out(fs::path(dir) / "det" / name);
        if (!out) throw IoError("cannot write detections under " + dir);
        for (const auto& [f, records] : detections.frames)
            for (const auto& rec : records) out << kitti::serialize_detection(rec) << '\n';
    }
    {
        std::ofstream out(fs::path(dir) / "meta" / name);
        if (!out) throw IoError("cannot write meta under " + dir);
        char buf[256];
        for (const AgentTruth& agent : log.agents) {
            std::snprintf(buf, sizeof(buf),
                          "agent %d branch %s decision_frame %d x %.17g z %.17g heading %.17g "
                          "speed %.17g turn_radius %.17g\n",
                          agent.id, branch_name(agent.branch), agent.decision_frame,
                          agent.decision_pose.x, agent.decision_pose.z,
                          agent.decision_pose.heading, agent.decision_pose.speed,
                          agent.turn_radius);
            out << buf;
        }
    }
}

std::vector<AgentMeta> read_meta_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open meta " + path);
    std::vector<AgentMeta> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string k_agent, branch, k2, k3, k4, k5, k6, k7;
        AgentMeta meta;
        std::string branch_value;
        if (!(ss >> k_agent >> meta.agent_id >> k2 >> branch_value >> k3 >> meta.decision_frame >>
              k4 >> meta.decision_pose.x >> k5 >> meta.decision_pose.z >> k6 >>
              meta.decision_pose.heading >> k7 >> meta.decision_pose.speed >> branch >>
              meta.turn_radius))
            throw ParseError(path, line_no, "malformed meta line");
        meta.branch = branch_of(branch_value);
        out.push_back(meta);
    }
    return out;
}

}  // namespace trackcast::synth
