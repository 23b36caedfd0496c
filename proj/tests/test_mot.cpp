#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trackcast/errors.hpp"
#include "trackcast/mot.hpp"
#include "trackcast/nn.hpp"
#include "trackcast/rng.hpp"

using namespace trackcast;

namespace {

// Exhaustive oracle over the padded square matrix, identical cost semantics:
// left-to-right row-order sums, lexicographically smallest optimum kept.
Assignment brute_force_assignment(const std::vector<std::vector<double>>& cost) {
    const std::size_t m = cost.size();
    const std::size_t n = m ? cost[0].size() : 0;
    const std::size_t big = std::max(m, n);
    std::vector<double> padded(big * big, kAssignmentSentinel);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) padded[r * big + c] = cost[r][c];

    std::vector<int> perm(big);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best;
    double best_total = 0;
    bool first = true;
    do {
        double total = 0;
        for (std::size_t r = 0; r < big; ++r) total += padded[r * big + static_cast<std::size_t>(perm[r])];
        if (first || total < best_total) {
            best_total = total;
            best = perm;
            first = false;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    Assignment out;
    std::vector<char> col_used(n, 0);
    for (std::size_t r = 0; r < m; ++r) {
        const int j = best[r];
        if (j < static_cast<int>(n)) {
            out.matches.emplace_back(static_cast<int>(r), j);
            col_used[static_cast<std::size_t>(j)] = 1;
            out.cost += cost[r][static_cast<std::size_t>(j)];
        } else {
            out.unmatched_rows.push_back(static_cast<int>(r));
        }
    }
    for (std::size_t c = 0; c < n; ++c)
        if (!col_used[c]) out.unmatched_cols.push_back(static_cast<int>(c));
    return out;
}

AffinityMatrix affinity_of(std::size_t rows, std::size_t cols, std::vector<double> values) {
    AffinityMatrix a;
    a.rows = rows;
    a.cols = cols;
    a.values = std::move(values);
    a.tape_ids.assign(rows * cols, -1);
    return a;
}

MotConfig default_mot;

kitti::DetectionRecord detection_at(double x, double z, double score = 0.9) {
    kitti::DetectionRecord d;
    d.category = "Car";
    d.x = x;
    d.y = 0;
    d.z = z;
    d.l = 4.0;
    d.w = 1.8;
    d.h = 1.5;
    d.rotation_y = 0.3;
    d.score = score;
    return d;
}

}  // namespace

TEST_CASE("hungarian documented examples") {
    SUBCASE("zero diagonal") {
        const Assignment a = hungarian({{0, 1}, {1, 0}});
        CHECK(a.matches == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
        CHECK(a.cost == 0.0);
    }
    SUBCASE("2x2 with brute force 1 vs 5") {
        const Assignment a = hungarian({{1, 2}, {3, 0}});
        CHECK(a.matches == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
        CHECK(a.cost == 1.0);
    }
    SUBCASE("3x3 over all six permutations") {
        const Assignment a = hungarian({{4, 1, 3}, {2, 0, 5}, {3, 2, 2}});
        CHECK(a.matches == std::vector<std::pair<int, int>>{{0, 1}, {1, 0}, {2, 2}});
        CHECK(a.cost == 5.0);
    }
    SUBCASE("NaN entries are rejected") {
        CHECK_THROWS_AS(hungarian({{0.0, NAN}, {1.0, 2.0}}), NumericalError);
    }
    SUBCASE("empty matrices") {
        const Assignment a = hungarian({});
        CHECK(a.matches.empty());
        const Assignment b = hungarian({{}, {}});
        CHECK(b.unmatched_rows.size() == 2);
    }
}

TEST_CASE("hungarian equals brute force on random matrices up to n = 7") {
    Rng rng(101);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t m = static_cast<std::size_t>(rng.uniform_int(1, 7));
        const std::size_t n = rep % 4 == 0 ? static_cast<std::size_t>(rng.uniform_int(1, 7)) : m;
        std::vector<std::vector<double>> cost(m, std::vector<double>(n));
        const bool integers = rep % 5 == 0;  // exact ties appear with small integers
        for (auto& row : cost)
            for (double& v : row)
                v = integers ? static_cast<double>(rng.uniform_int(0, 4)) : rng.uniform(0, 1);

        const Assignment got = hungarian(cost);
        const Assignment want = brute_force_assignment(cost);
        CHECK(got.cost == want.cost);  // exact float equality
        CHECK(got.matches == want.matches);
        CHECK(got.unmatched_rows == want.unmatched_rows);
        CHECK(got.unmatched_cols == want.unmatched_cols);
    }
}

TEST_CASE("hungarian tie-break picks the lexicographically smallest pairs") {
    // all-equal costs: identity assignment is the canonical one
    const Assignment a = hungarian({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
    CHECK(a.matches == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}, {2, 2}});
}

TEST_CASE("associate") {
    SUBCASE("all-zero affinity leaves everything unmatched at threshold 0.5") {
        const Assignment a = associate(affinity_of(2, 2, {0, 0, 0, 0}), 0.5);
        CHECK(a.matches.empty());
        CHECK(a.unmatched_rows.size() == 2);
        CHECK(a.unmatched_cols.size() == 2);
    }
    SUBCASE("1x1 above threshold matches") {
        const Assignment a = associate(affinity_of(1, 1, {0.9}), 0.5);
        CHECK(a.matches == std::vector<std::pair<int, int>>{{0, 0}});
    }
    SUBCASE("documented 2x2 example survives the threshold") {
        const Assignment a = associate(affinity_of(2, 2, {0.9, 0.4, 0.4, 0.6}), 0.5);
        CHECK(a.matches == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
    }
    SUBCASE("threshold bounds enforced") {
        CHECK_THROWS_AS(associate(affinity_of(1, 1, {0.9}), 0.0), Error);
        CHECK_THROWS_AS(associate(affinity_of(1, 1, {0.9}), 1.0), Error);
    }
    SUBCASE("partition is exhaustive and disjoint") {
        Rng rng(5);
        for (int rep = 0; rep < 100; ++rep) {
            const std::size_t m = static_cast<std::size_t>(rng.uniform_int(0, 6));
            const std::size_t n = static_cast<std::size_t>(rng.uniform_int(0, 6));
            std::vector<double> vals(m * n);
            for (double& v : vals) v = rng.uniform(0, 1);
            const Assignment a = associate(affinity_of(m, n, vals), 0.5);
            std::vector<char> row_seen(m, 0), col_seen(n, 0);
            for (const auto& [r, c] : a.matches) {
                CHECK(!row_seen[static_cast<std::size_t>(r)]);
                CHECK(!col_seen[static_cast<std::size_t>(c)]);
                row_seen[static_cast<std::size_t>(r)] = 1;
                col_seen[static_cast<std::size_t>(c)] = 1;
            }
            for (int r : a.unmatched_rows) {
                CHECK(!row_seen[static_cast<std::size_t>(r)]);
                row_seen[static_cast<std::size_t>(r)] = 1;
            }
            for (int c : a.unmatched_cols) {
                CHECK(!col_seen[static_cast<std::size_t>(c)]);
                col_seen[static_cast<std::size_t>(c)] = 1;
            }
            CHECK(std::count(row_seen.begin(), row_seen.end(), 1) == static_cast<long>(m));
            CHECK(std::count(col_seen.begin(), col_seen.end(), 1) == static_cast<long>(n));
        }
    }
}

TEST_CASE("affinity head") {
    GnnConfig gnn;
    gnn.feature_width = 4;
    gnn.message_width = 4;
    gnn.layers = 1;
    gnn.history_len = 2;

    SUBCASE("zero weights give sigmoid(0) = 0.5 everywhere") {
        MotConfig cfg;
        cfg.affinity_hidden = 4;
        ParamStore store(1);
        nn::ensure_linear(store, "aff.l1", 2 * gnn.feature_width, cfg.affinity_hidden);
        nn::ensure_linear(store, "aff.l2", cfg.affinity_hidden, 1);
        for (const std::string& name : store.names())
            for (double& v : store.get(name).data) v = 0.0;

        Tape tape;
        AgentGraph g;
        for (int i = 0; i < 3; ++i) {
            AgentNode n;
            n.id = i;
            n.source = i < 2 ? NodeSource::existing_track : NodeSource::new_detection;
            n.feature = tape.constant(Tensor::row({0.3, -0.2, 0.5, 0.9}));
            g.nodes.push_back(n);
        }
        const AffinityMatrix a = affinity(tape, store, gnn, cfg, g);
        CHECK(a.rows == 2);
        CHECK(a.cols == 1);
        for (double v : a.values) CHECK(v == 0.5);
    }
    SUBCASE("relu-hidden identity weights reproduce sigmoid(2)") {
        MotConfig cfg;
        cfg.affinity_hidden = 2 * gnn.feature_width;
        ParamStore store(2);
        nn::ensure_linear(store, "aff.l1", 2 * gnn.feature_width, cfg.affinity_hidden);
        nn::ensure_linear(store, "aff.l2", cfg.affinity_hidden, 1);
        for (const std::string& name : store.names())
            for (double& v : store.get(name).data) v = 0.0;
        Tensor& w1 = store.get("aff.l1.w");
        for (std::size_t i = 0; i < cfg.affinity_hidden; ++i) w1.at(i, i) = 1.0;
        store.get("aff.l2.w").at(0, 0) = 1.0;  // picks hidden unit 0 = h_track[0]

        Tape tape;
        AgentGraph g;
        AgentNode track;
        track.id = 0;
        track.source = NodeSource::existing_track;
        track.feature = tape.constant(Tensor::row({2, 0, 0, 0}));
        AgentNode det;
        det.id = 1;
        det.source = NodeSource::new_detection;
        det.feature = tape.constant(Tensor::row({0, 0, 0, 0}));
        g.nodes = {track, det};
        const AffinityMatrix a = affinity(tape, store, gnn, cfg, g);
        CHECK(a.at(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    }
    SUBCASE("determinism") {
        MotConfig cfg;
        ParamStore store(3);
        ensure_gnn_params(store, gnn);
        ensure_affinity_params(store, gnn, cfg);
        Rng rng(9);
        auto run = [&] {
            Tape tape;
            AgentGraph g;
            Rng local(9);
            for (int i = 0; i < 4; ++i) {
                AgentNode n;
                n.id = i;
                n.source = i < 2 ? NodeSource::existing_track : NodeSource::new_detection;
                Tensor f({1, gnn.feature_width});
                for (double& v : f.data) v = local.uniform(-1, 1);
                n.feature = tape.constant(f);
                g.nodes.push_back(n);
            }
            return affinity(tape, store, gnn, cfg, g).values;
        };
        CHECK(run() == run());
    }
}

TEST_CASE("association_loss") {
    SUBCASE("all entries 0.5 gives ln 2") {
        Tape tape;
        AffinityMatrix a;
        a.rows = 2;
        a.cols = 2;
        for (int i = 0; i < 4; ++i) {
            a.tape_ids.push_back(tape.constant(Tensor::scalar(0.5)));
            a.values.push_back(0.5);
        }
        const int loss = association_loss(tape, a, {{0, 0}, {1, 1}});
        CHECK(tape.value(loss).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("perfect affinity is at the clamp floor") {
        Tape tape;
        AffinityMatrix a;
        a.rows = 1;
        a.cols = 2;
        a.tape_ids = {tape.constant(Tensor::scalar(1.0)), tape.constant(Tensor::scalar(0.0))};
        a.values = {1.0, 0.0};
        const int loss = association_loss(tape, a, {{0, 0}});
        CHECK(tape.value(loss).item() < 1e-6);
        CHECK(tape.value(loss).item() > 0.0);  // clamped, not infinite
    }
    SUBCASE("empty matrix gives zero loss") {
        Tape tape;
        AffinityMatrix a;
        const int loss = association_loss(tape, a, {});
        CHECK(tape.value(loss).item() == 0.0);
    }
}

TEST_CASE("kalman filter") {
    SUBCASE("constant velocity prediction") {
        KalmanState s = kalman_init({0, 0, 0, 0, 4, 2, 1.5});
        s.x[7] = 1.0;  // vx
        kalman_predict(s, 1.0, default_mot);
        CHECK(s.x[0] == 1.0);
        CHECK(s.x[1] == 0.0);
    }
    SUBCASE("zero velocity keeps position, covariance trace grows") {
        KalmanState s = kalman_init({2, 1, -3, 0.2, 4, 2, 1.5});
        const double trace_before = linalg::trace(s.P);
        kalman_predict(s, 1.0, default_mot);
        CHECK(s.x[0] == 2.0);
        CHECK(s.x[2] == -3.0);
        CHECK(linalg::trace(s.P) > trace_before);
    }
    SUBCASE("backwards motion over two frames") {
        KalmanState s = kalman_init({2, 0, 0, 0, 4, 2, 1.5});
        s.x[7] = -1.0;
        kalman_predict(s, 2.0, default_mot);
        CHECK(s.x[0] == 0.0);
    }
    SUBCASE("near-zero observation noise pins the posterior to the observation") {
        MotConfig cfg;
        cfg.observation_noise = 1e-12;
        KalmanState s = kalman_init({0, 0, 0, 0, 4, 2, 1.5});
        kalman_predict(s, 1.0, cfg);
        kalman_update(s, {3, 1, -2, 0.5, 4.2, 1.9, 1.6}, cfg);
        CHECK(s.x[0] == doctest::Approx(3.0).epsilon(1e-9));
        CHECK(s.x[1] == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(s.x[3] == doctest::Approx(0.5).epsilon(1e-9));
    }
    SUBCASE("observation equal to prediction changes nothing") {
        KalmanState s = kalman_init({1, 2, 3, 0.1, 4, 2, 1.5});
        kalman_predict(s, 1.0, default_mot);
        const std::array<double, 10> before = s.x;
        kalman_update(s, {1, 2, 3, 0.1, 4, 2, 1.5}, default_mot);
        for (std::size_t i = 0; i < 10; ++i) CHECK(std::fabs(s.x[i] - before[i]) < 1e-12);
    }
    SUBCASE("scalar gain sanity: P=1, R=1, pred 0, obs 2 -> posterior 1") {
        MotConfig cfg;
        cfg.observation_noise = 1.0;
        KalmanState s = kalman_init({0, 0, 0, 0, 1, 1, 1});
        s.P = linalg::Mat::identity(10);
        kalman_update(s, {2, 0, 0, 0, 1, 1, 1}, cfg);
        CHECK(s.x[0] == doctest::Approx(1.0));
    }
    SUBCASE("yaw innovation wraps") {
        KalmanState s = kalman_init({0, 0, 0, 3.0, 4, 2, 1.5});
        kalman_update(s, {0, 0, 0, -3.0, 4, 2, 1.5}, default_mot);
        // the short way around from 3.0 toward -3.0 passes through pi, not
        // zero: the posterior moves positively from 3.0 by under pi/2
        const double moved = kitti::wrap_angle(s.x[3] - 3.0);
        CHECK(moved > 0.0);
        CHECK(moved < 0.3);
        CHECK(kitti::wrap_angle(s.x[3]) == s.x[3]);
    }
}

TEST_CASE("lifecycle_step") {
    MotConfig cfg;  // min_hits 3, max_age 2

    SUBCASE("fresh mid-sequence detection emits on its third consecutive match") {
        std::vector<Track> tracks;
        int next_id = 0;
        // frame 10: spawn
        Assignment spawn;
        spawn.unmatched_cols = {0};
        auto r1 = lifecycle_step(tracks, spawn, {detection_at(0, 10)}, cfg, 10, next_id);
        CHECK(r1.emitted.empty());
        REQUIRE(tracks.size() == 1);

        // frame 11: match
        Assignment m;
        m.matches = {{0, 0}};
        kalman_predict(tracks[0].kf, 1.0, cfg);
        auto r2 = lifecycle_step(tracks, m, {detection_at(0, 10.5)}, cfg, 11, next_id);
        CHECK(r2.emitted.empty());

        // frame 12: third consecutive -> confirmed and emitted
        kalman_predict(tracks[0].kf, 1.0, cfg);
        auto r3 = lifecycle_step(tracks, m, {detection_at(0, 11.0)}, cfg, 12, next_id);
        REQUIRE(r3.emitted.size() == 1);
        CHECK(r3.emitted[0].track_id == 0);
        CHECK(tracks[0].status == TrackStatus::confirmed);
    }
    SUBCASE("confirmed track dies after max_age misses") {
        std::vector<Track> tracks;
        int next_id = 0;
        Assignment spawn;
        spawn.unmatched_cols = {0};
        lifecycle_step(tracks, spawn, {detection_at(0, 10)}, cfg, 0, next_id);  // warm-up confirm
        CHECK(tracks[0].status == TrackStatus::confirmed);

        Assignment miss;
        miss.unmatched_rows = {0};
        lifecycle_step(tracks, miss, {}, cfg, 1, next_id);
        CHECK(tracks.size() == 1);  // age 1
        lifecycle_step(tracks, miss, {}, cfg, 2, next_id);
        CHECK(tracks.size() == 1);  // age 2
        lifecycle_step(tracks, miss, {}, cfg, 3, next_id);
        CHECK(tracks.empty());  // age 3 > max_age 2
    }
    SUBCASE("empty frame is a no-op") {
        std::vector<Track> tracks;
        int next_id = 5;
        const auto r = lifecycle_step(tracks, {}, {}, cfg, 3, next_id);
        CHECK(r.emitted.empty());
        CHECK(tracks.empty());
        CHECK(next_id == 5);
    }
    SUBCASE("track ids are strictly increasing and never reused") {
        std::vector<Track> tracks;
        int next_id = 0;
        Assignment spawn;
        spawn.unmatched_cols = {0};
        lifecycle_step(tracks, spawn, {detection_at(0, 0)}, cfg, 10, next_id);
        Assignment miss;
        miss.unmatched_rows = {0};
        for (int f = 11; f <= 14; ++f) lifecycle_step(tracks, miss, {}, cfg, f, next_id);
        CHECK(tracks.empty());
        lifecycle_step(tracks, spawn, {detection_at(0, 0)}, cfg, 15, next_id);
        REQUIRE(tracks.size() == 1);
        CHECK(tracks[0].id == 1);
        CHECK(next_id == 2);
    }
    SUBCASE("yaw stays in range through updates") {
        std::vector<Track> tracks;
        int next_id = 0;
        Assignment spawn;
        spawn.unmatched_cols = {0};
        kitti::DetectionRecord d = detection_at(0, 0);
        d.rotation_y = 3.1;
        lifecycle_step(tracks, spawn, {d}, cfg, 0, next_id);
        Assignment m;
        m.matches = {{0, 0}};
        Rng rng(21);
        for (int f = 1; f < 20; ++f) {
            kalman_predict(tracks[0].kf, 1.0, cfg);
            d.rotation_y = kitti::wrap_angle(rng.uniform(-10, 10));
            lifecycle_step(tracks, m, {d}, cfg, f, next_id);
            CHECK(tracks[0].kf.x[3] >= -3.14159265358979323846);
            CHECK(tracks[0].kf.x[3] < 3.14159265358979323846);
        }
    }
}
