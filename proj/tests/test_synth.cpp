#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "trackcast/errors.hpp"
#include "trackcast/kitti.hpp"
#include "trackcast/synth.hpp"

using namespace trackcast;
namespace fs = std::filesystem;

namespace {

synth::ScenarioConfig base_config() {
    synth::ScenarioConfig cfg;
    cfg.num_agents = 4;
    cfg.num_frames = 40;
    cfg.seed = 11;
    return cfg;
}

}  // namespace

TEST_CASE("generate determinism and seed sensitivity") {
    const auto [log_a, det_a] = synth::generate(base_config());
    const auto [log_b, det_b] = synth::generate(base_config());
    REQUIRE(log_a.agents.size() == log_b.agents.size());
    for (std::size_t i = 0; i < log_a.agents.size(); ++i) {
        CHECK(log_a.agents[i].positions == log_b.agents[i].positions);
        CHECK(log_a.agents[i].yaws == log_b.agents[i].yaws);
    }
    for (const auto& [f, records] : det_a.frames) {
        const auto& other = det_b.frames.at(f);
        REQUIRE(records.size() == other.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            CHECK(records[i].x == other[i].x);
            CHECK(records[i].score == other[i].score);
        }
    }

    synth::ScenarioConfig reseeded = base_config();
    reseeded.seed = 12;
    const auto [log_c, det_c] = synth::generate(reseeded);
    bool any_diff = false;
    for (std::size_t i = 0; i < log_a.agents.size(); ++i)
        any_diff = any_diff || log_a.agents[i].positions != log_c.agents[i].positions;
    CHECK(any_diff);
}

TEST_CASE("noise-free generation reproduces ground truth exactly") {
    synth::ScenarioConfig cfg = base_config();
    cfg.noise_sigma = 0;
    cfg.dropout_rate = 0;
    cfg.false_positive_rate = 0;
    const auto [log, detections] = synth::generate(cfg);
    for (const auto& [f, records] : detections.frames) {
        REQUIRE(records.size() == log.agents.size());
        for (const auto& rec : records) {
            bool found = false;
            for (const auto& agent : log.agents) {
                const auto& p = agent.positions[static_cast<std::size_t>(f)];
                if (rec.x == p[0] && rec.y == p[1] && rec.z == p[2]) found = true;
            }
            CHECK(found);
        }
    }
}

TEST_CASE("full dropout leaves no true detections") {
    synth::ScenarioConfig cfg = base_config();
    cfg.dropout_rate = 1.0;
    cfg.false_positive_rate = 0.0;
    const auto [log, detections] = synth::generate(cfg);
    for (const auto& [f, records] : detections.frames) CHECK(records.empty());
}

TEST_CASE("empirical detection noise matches the configured sigma within 5%") {
    synth::ScenarioConfig cfg = base_config();
    cfg.num_agents = 10;
    cfg.num_frames = 400;  // 10k noise samples per axis
    cfg.noise_sigma = 0.3;
    cfg.dropout_rate = 0;
    cfg.false_positive_rate = 0;
    const auto [log, detections] = synth::generate(cfg);

    double sq_sum = 0;
    long n = 0;
    for (const auto& [f, records] : detections.frames) {
        REQUIRE(records.size() == log.agents.size());
        for (std::size_t a = 0; a < records.size(); ++a) {
            // agents are emitted in id order when nothing is dropped
            const auto& p = log.agents[a].positions[static_cast<std::size_t>(f)];
            const double dev[3] = {records[a].x - p[0], records[a].y - p[1], records[a].z - p[2]};
            for (double d : dev) sq_sum += d * d;
            n += 3;
        }
    }
    const double sigma_hat = std::sqrt(sq_sum / static_cast<double>(n));
    CHECK(n >= 10000);
    CHECK(sigma_hat == doctest::Approx(cfg.noise_sigma).epsilon(0.05));
}

TEST_CASE("intersection branch frequencies sit inside 3-sigma binomial bounds") {
    synth::ScenarioConfig cfg;
    cfg.behavior = synth::Behavior::intersection;
    cfg.num_agents = 2;
    cfg.num_frames = 50;
    cfg.noise_sigma = 0;
    cfg.dropout_rate = 0;
    cfg.false_positive_rate = 0;

    std::map<synth::Branch, int> counts;
    int total = 0;
    for (int episode = 0; episode < 400; ++episode) {
        cfg.seed = 1000 + static_cast<std::uint64_t>(episode);
        const auto [log, det] = synth::generate(cfg);
        for (const auto& agent : log.agents) {
            counts[agent.branch] += 1;
            ++total;
        }
    }
    const double p = 1.0 / 3.0;
    const double bound = 3.0 * std::sqrt(p * (1 - p) * total);
    for (const auto branch :
         {synth::Branch::left, synth::Branch::straight, synth::Branch::right}) {
        CAPTURE(static_cast<int>(branch));
        CHECK(std::fabs(counts[branch] - p * total) <= bound);
    }
}

TEST_CASE("intersection counterfactual rollout matches the realized branch") {
    synth::ScenarioConfig cfg;
    cfg.behavior = synth::Behavior::intersection;
    cfg.num_agents = 3;
    cfg.num_frames = 60;
    cfg.noise_sigma = 0;
    cfg.dropout_rate = 0;
    cfg.false_positive_rate = 0;
    cfg.seed = 77;
    const auto [log, det] = synth::generate(cfg);
    for (const auto& agent : log.agents) {
        REQUIRE(agent.decision_frame >= 0);
        const int steps = cfg.num_frames - agent.decision_frame - 1;
        const auto rolled = synth::simulate_branch(agent.decision_pose, agent.branch,
                                                   agent.turn_radius, steps, 0.1);
        for (int s = 0; s < steps; ++s) {
            const auto& truth = agent.positions[static_cast<std::size_t>(agent.decision_frame + 1 + s)];
            CHECK(rolled[static_cast<std::size_t>(s)][0] == doctest::Approx(truth[0]).epsilon(1e-12));
            CHECK(rolled[static_cast<std::size_t>(s)][1] == doctest::Approx(truth[2]).epsilon(1e-12));
        }
    }
}

TEST_CASE("branch endpoints separate by several meters at a 3 s horizon") {
    synth::AgentPose pose;
    pose.x = 0;
    pose.z = 0;
    pose.heading = 0.5;
    pose.speed = 10.0;
    const int steps = 30;
    const auto left = synth::simulate_branch(pose, synth::Branch::left, 10.0, steps, 0.1);
    const auto straight = synth::simulate_branch(pose, synth::Branch::straight, 10.0, steps, 0.1);
    const auto right = synth::simulate_branch(pose, synth::Branch::right, 10.0, steps, 0.1);
    auto dist = [](const std::array<double, 2>& a, const std::array<double, 2>& b) {
        return std::hypot(a[0] - b[0], a[1] - b[1]);
    };
    CHECK(dist(left.back(), straight.back()) > 8.0);
    CHECK(dist(right.back(), straight.back()) > 8.0);
    CHECK(dist(left.back(), right.back()) > 8.0);
}

TEST_CASE("export round trips through the kitti loader") {
    const fs::path dir = fs::temp_directory_path() / "trackcast_synth_export";
    fs::remove_all(dir);
    synth::ScenarioConfig cfg = base_config();
    cfg.behavior = synth::Behavior::intersection;
    const auto [log, detections] = synth::generate(cfg);
    synth::export_scenario(log, detections, dir.string(), 3);

    const std::string name = kitti::sequence_file_name(3);
    CHECK(name == "0003.txt");
    const kitti::LoadedSequence loaded = kitti::load_sequence(
        (dir / "label" / name).string(), (dir / "det" / name).string(), "Car");

    const kitti::TrackletSequence gt = log.to_tracklets();
    REQUIRE(loaded.ground_truth.record_count() == gt.record_count());
    for (const auto& [f, records] : gt.frames) {
        if (records.empty()) continue;
        const auto& got = loaded.ground_truth.frames.at(f);
        REQUIRE(got.size() == records.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            CHECK(got[i].x == records[i].x);  // value-exact round trip
            CHECK(got[i].z == records[i].z);
            CHECK(got[i].rotation_y == records[i].rotation_y);
            CHECK(got[i].track_id == records[i].track_id);
        }
    }
    CHECK(loaded.detections.record_count() == detections.record_count());

    const auto meta = synth::read_meta_file((dir / "meta" / name).string());
    REQUIRE(meta.size() == log.agents.size());
    for (std::size_t i = 0; i < meta.size(); ++i) {
        CHECK(meta[i].agent_id == log.agents[i].id);
        CHECK(meta[i].branch == log.agents[i].branch);
        CHECK(meta[i].decision_pose.x == log.agents[i].decision_pose.x);
        CHECK(meta[i].turn_radius == log.agents[i].turn_radius);
    }
    fs::remove_all(dir);
}

TEST_CASE("invalid configurations are rejected") {
    synth::ScenarioConfig cfg = base_config();
    cfg.dropout_rate = 1.5;
    CHECK_THROWS_AS(synth::generate(cfg), ConfigError);
    cfg = base_config();
    cfg.behavior = synth::Behavior::intersection;
    cfg.p_left = 0.9;
    cfg.p_straight = 0.9;
    cfg.p_right = 0.9;
    CHECK_THROWS_AS(synth::generate(cfg), ConfigError);
    cfg = base_config();
    cfg.num_frames = 0;
    CHECK_THROWS_AS(synth::generate(cfg), ConfigError);
}
