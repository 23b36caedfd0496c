#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "trackcast/errors.hpp"
#include "trackcast/pipeline.hpp"

using namespace trackcast;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
    RunConfig cfg;
    cfg.gnn.feature_width = 8;
    cfg.gnn.message_width = 8;
    cfg.gnn.layers = 1;
    cfg.gnn.history_len = 3;
    cfg.forecast.history_len = 3;
    cfg.forecast.latent_width = 2;
    cfg.forecast.num_samples = 4;
    cfg.forecast.horizon = 5;
    cfg.forecast.hidden = 8;
    cfg.scenario.num_agents = 3;
    cfg.scenario.num_frames = 30;
    cfg.scenario.noise_sigma = 0.1;
    cfg.scenario.dropout_rate = 0;
    cfg.scenario.false_positive_rate = 0;
    cfg.scenario.seed = 5;
    cfg.seed = 5;
    cfg.forecast_mode = SampleMode::iid;
    return cfg;
}

std::vector<kitti::DetectionRecord> detections_at(const kitti::DetectionSequence& seq, int frame) {
    const auto it = seq.frames.find(frame);
    return it == seq.frames.end() ? std::vector<kitti::DetectionRecord>{} : it->second;
}

}  // namespace

TEST_CASE("config file parsing") {
    SUBCASE("keys land in the right places") {
        const RunConfig cfg = parse_config_text(
            "# comment\n"
            "model.feature_width = 16\n"
            "model.horizon = 20\n"
            "train.epochs = 3\n"
            "track.threshold = 0.7\n"
            "eval.horizons = 10,20\n"
            "scenario.behavior = intersection\n"
            "seed = 42\n");
        CHECK(cfg.gnn.feature_width == 16);
        CHECK(cfg.forecast.horizon == 20);
        CHECK(cfg.epochs == 3);
        CHECK(cfg.mot.affinity_threshold == 0.7);
        CHECK(cfg.horizons == std::vector<int>{10, 20});
        CHECK(cfg.scenario.behavior == synth::Behavior::intersection);
        CHECK(cfg.seed == 42);
    }
    SUBCASE("unknown keys and malformed lines are rejected") {
        CHECK_THROWS_AS(parse_config_text("model.bogus = 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("no equals sign\n"), ConfigError);
        CHECK_THROWS_AS(parse_config_text("train.epochs = abc\n"), ConfigError);
    }
}

TEST_CASE("step_frame basics") {
    const RunConfig cfg = small_config();
    const ParamStore store = init_params(cfg);
    auto [log, detections] = synth::generate(cfg.scenario);

    SUBCASE("zero detections age the tracks and forecast nothing new") {
        TrackerState state = make_tracker_state(cfg, 0);
        step_frame(state, detections_at(detections, 0), store, cfg);
        REQUIRE(state.tracks.size() == 3);
        const FrameResult r = step_frame(state, {}, store, cfg);
        CHECK(r.emitted.size() == 3);  // warm-up confirmed, coasting emission
        for (const Track& t : state.tracks) CHECK(t.age == 1);
    }
    SUBCASE("deterministic given state, detections and seed") {
        auto run = [&] {
            TrackerState state = make_tracker_state(cfg, 0);
            std::vector<std::string> out;
            for (int f = 0; f < 10; ++f) {
                const FrameResult r = step_frame(state, detections_at(detections, f), store, cfg);
                for (const auto& rec : r.emitted) out.push_back(kitti::serialize_tracklet(rec));
                for (const auto& fc : r.forecasts)
                    for (const auto& traj : fc.samples.trajectories)
                        for (const auto& p : traj.points)
                            out.push_back(std::to_string(p[0]) + "," + std::to_string(p[1]));
            }
            return out;
        };
        CHECK(run() == run());
    }
    SUBCASE("timing parts sum to the reported total") {
        TrackerState state = make_tracker_state(cfg, 0);
        const FrameResult r = step_frame(state, detections_at(detections, 0), store, cfg);
        CHECK(r.total_ms ==
              doctest::Approx(r.graph_ms + r.gnn_ms + r.mot_ms + r.forecast_ms).epsilon(1e-9));
    }
    SUBCASE("every forecast belongs to an emitted track") {
        TrackerState state = make_tracker_state(cfg, 0);
        for (int f = 0; f < 12; ++f) {
            const FrameResult r = step_frame(state, detections_at(detections, f), store, cfg);
            for (const auto& fc : r.forecasts) {
                const bool emitted =
                    std::any_of(r.emitted.begin(), r.emitted.end(),
                                [&](const auto& rec) { return rec.track_id == fc.track_id; });
                CHECK(emitted);
            }
        }
    }
}

TEST_CASE("parallel-head isolation: corrupting the assignment leaves forecasts intact") {
    const RunConfig cfg = small_config();
    const ParamStore store = init_params(cfg);
    auto [log, detections] = synth::generate(cfg.scenario);

    const AssignmentCorrupter swap_all = [](Assignment& a) {
        // rotate the matched columns: every track gets the wrong detection
        if (a.matches.size() < 2) return;
        const int first_col = a.matches.front().second;
        for (std::size_t i = 0; i + 1 < a.matches.size(); ++i)
            a.matches[i].second = a.matches[i + 1].second;
        a.matches.back().second = first_col;
    };

    TrackerState clean = make_tracker_state(cfg, 0);
    int differing_frames = 0;
    int compared_frames = 0;
    for (int f = 0; f < 20; ++f) {
        const auto& dets = detections_at(detections, f);
        TrackerState corrupted = clean;  // same entry state
        corrupted.rng = clean.rng;
        const FrameResult clean_result = step_frame(clean, dets, store, cfg);
        const FrameResult corrupted_result = step_frame(corrupted, dets, store, cfg, swap_all);

        REQUIRE(clean_result.forecasts.size() == corrupted_result.forecasts.size());
        bool identical = true;
        for (std::size_t i = 0; i < clean_result.forecasts.size(); ++i) {
            identical = identical &&
                        clean_result.forecasts[i].track_id == corrupted_result.forecasts[i].track_id;
            for (std::size_t k = 0; k < clean_result.forecasts[i].samples.size(); ++k)
                identical = identical && clean_result.forecasts[i].samples.trajectories[k].points ==
                                             corrupted_result.forecasts[i].samples.trajectories[k].points;
        }
        if (!identical) ++differing_frames;
        if (!clean_result.forecasts.empty()) ++compared_frames;

        // the corruption must actually change what is emitted, once tracks exist
        if (f > 4) {
            const auto serial = [](const std::vector<kitti::TrackletRecord>& v) {
                std::string s;
                for (const auto& rec : v) s += kitti::serialize_tracklet(rec) + "\n";
                return s;
            };
            if (clean_result.emitted.size() >= 2)
                CHECK(serial(clean_result.emitted) != serial(corrupted_result.emitted));
        }
    }
    CHECK(differing_frames == 0);
    CHECK(compared_frames > 10);
}

TEST_CASE("train smoke: lr = 0 leaves parameters unchanged") {
    RunConfig cfg = small_config();
    cfg.epochs = 1;
    cfg.stage2_epochs = 1;
    cfg.lr = 0.0;
    cfg.stage2_lr = 0.0;
    cfg.scenario.num_frames = 12;
    cfg.forecast.horizon = 4;

    ParamStore store = init_params(cfg);
    std::map<std::string, std::vector<double>> before;
    for (const std::string& name : store.names()) before[name] = store.get(name).data;

    const std::vector<TrainSequence> data = training_sequences(cfg);
    train(cfg, store, data);
    for (const std::string& name : store.names()) CHECK(store.get(name).data == before[name]);
}

TEST_CASE("train smoke: loss decreases on a noise-free scenario") {
    RunConfig cfg = small_config();
    cfg.epochs = 6;
    cfg.stage2_epochs = 2;
    cfg.lr = 3e-3;
    cfg.scenario.noise_sigma = 0.0;
    cfg.scenario.num_frames = 15;
    cfg.forecast.horizon = 4;

    ParamStore store = init_params(cfg);
    const std::vector<TrainSequence> data = training_sequences(cfg);
    const TrainStats stats = train(cfg, store, data);
    REQUIRE(stats.stage1_epoch_loss.size() == 6);
    CHECK(stats.stage1_epoch_loss.back() < stats.stage1_epoch_loss.front());
}

TEST_CASE("training checkpoints are bit-identical across runs") {
    RunConfig cfg = small_config();
    cfg.epochs = 2;
    cfg.stage2_epochs = 1;
    cfg.scenario.num_frames = 12;
    cfg.forecast.horizon = 4;

    auto run = [&] {
        ParamStore store = init_params(cfg);
        train(cfg, store, training_sequences(cfg));
        std::map<std::string, std::vector<double>> out;
        for (const std::string& name : store.names()) out[name] = store.get(name).data;
        return out;
    };
    CHECK(run() == run());
}

TEST_CASE("track command writes deterministic results") {
    const fs::path out_a = fs::temp_directory_path() / "trackcast_track_a";
    const fs::path out_b = fs::temp_directory_path() / "trackcast_track_b";
    fs::remove_all(out_a);
    fs::remove_all(out_b);

    RunConfig cfg = small_config();
    cfg.scenario.num_frames = 20;
    const fs::path ckpt = fs::temp_directory_path() / "trackcast_track_ckpt.txt";
    init_params(cfg).save(ckpt.string());
    cfg.checkpoint_path = ckpt.string();

    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    };

    cfg.out_dir = out_a.string();
    cmd_track(cfg);
    cfg.out_dir = out_b.string();
    cmd_track(cfg);
    CHECK(slurp(out_a / "results" / "0000.txt") == slurp(out_b / "results" / "0000.txt"));
    CHECK(slurp(out_a / "forecasts" / "0000.txt") == slurp(out_b / "forecasts" / "0000.txt"));
    CHECK(!slurp(out_a / "results" / "0000.txt").empty());

    fs::remove_all(out_a);
    fs::remove_all(out_b);
    fs::remove(ckpt);
}

TEST_CASE("evaluating the ground truth against itself is perfect") {
    const fs::path dir = fs::temp_directory_path() / "trackcast_eval_self";
    fs::remove_all(dir);
    RunConfig cfg = small_config();
    cfg.scenario.noise_sigma = 0;
    cfg.scenario.dropout_rate = 0;
    cfg.scenario.false_positive_rate = 0;
    cfg.out_dir = (dir / "data").string();
    cmd_synth(cfg);

    // results := labels with scores made distinct
    fs::create_directories(dir / "results");
    kitti::TrackletSequence gt = kitti::read_tracklet_file((dir / "data/label/0000.txt").string());
    std::vector<kitti::TrackletRecord> rows;
    double s = 1.0;
    for (auto& [f, records] : gt.frames)
        for (auto rec : records) {
            rec.score = s;
            s -= 1e-4;
            rows.push_back(rec);
        }
    kitti::write_tracklet_file((dir / "results/0000.txt").string(), rows);

    cfg.gt_dir = (dir / "data/label").string();
    cfg.results_dir = (dir / "results").string();
    cfg.out_dir = (dir / "eval").string();
    const metrics::MetricReport report = cmd_evaluate(cfg);
    CHECK(report.mota == doctest::Approx(100.0));
    CHECK(report.motp == doctest::Approx(100.0));
    CHECK(report.ids == 0);
    CHECK(report.frag == 0);
    CHECK(fs::exists(dir / "eval/report.json"));
    CHECK(fs::exists(dir / "eval/table_mot.txt"));
    CHECK(fs::exists(dir / "eval/plot_data.csv"));

    SUBCASE("empty results evaluate to zero AMOTA") {
        fs::create_directories(dir / "empty");
        { std::ofstream out(dir / "empty/0000.txt"); }
        cfg.results_dir = (dir / "empty").string();
        cfg.out_dir = (dir / "eval2").string();
        const metrics::MetricReport empty_report = cmd_evaluate(cfg);
        CHECK(empty_report.amota == 0.0);
        CHECK(empty_report.samota == 0.0);
    }
    fs::remove_all(dir);
}

TEST_CASE("per-frame latency stays under 50 ms for a 20-agent scene") {
    RunConfig cfg = small_config();
    cfg.gnn.feature_width = 32;
    cfg.gnn.message_width = 32;
    cfg.gnn.layers = 2;
    cfg.forecast.latent_width = 16;
    cfg.forecast.num_samples = 10;
    cfg.forecast.horizon = 30;
    cfg.forecast.hidden = 64;
    cfg.scenario.num_agents = 20;
    cfg.scenario.num_frames = 12;
    const ParamStore store = init_params(cfg);
    auto [log, detections] = synth::generate(cfg.scenario);

    TrackerState state = make_tracker_state(cfg, 0);
    double worst = 0;
    for (int f = 0; f < cfg.scenario.num_frames; ++f) {
        const FrameResult r = step_frame(state, detections_at(detections, f), store, cfg);
        if (f > 0) worst = std::max(worst, r.total_ms);  // first frame pays allocation costs
    }
    CHECK(worst < 50.0);
}
