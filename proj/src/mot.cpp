#include "trackcast/mot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "trackcast/errors.hpp"
#include "trackcast/nn.hpp"

namespace trackcast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// O(n^3) shortest-augmenting-path assignment on a square row-major matrix.
// Returns row -> col.
std::vector<int> jv_solve(const std::vector<double>& a, std::size_t n) {
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = kInf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j]) row_to_col[p[j] - 1] = static_cast<int>(j) - 1;
    return row_to_col;
}

// Left-to-right cost fold in row order; comparisons below rely on every
// total being accumulated in exactly this order.
double ordered_total(const std::vector<double>& c, std::size_t n, const std::vector<int>& sigma) {
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) acc += c[r * n + static_cast<std::size_t>(sigma[r])];
    return acc;
}

// Picks, among all minimum-cost assignments of the padded matrix, the one
// whose (row, col) sequence is lexicographically smallest: rows in order,
// each takes the smallest column that still permits an optimal completion.
std::vector<int> canonical_assignment(const std::vector<double>& c, std::size_t n) {
    std::vector<int> completion = jv_solve(c, n);
    const double best_total = ordered_total(c, n, completion);

    std::vector<int> fixed(n, -1);
    std::vector<char> used(n, 0);
    double prefix = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            if (used[j]) continue;
            if (static_cast<int>(j) == completion[r]) {
                fixed[r] = static_cast<int>(j);  // current completion already uses it
                break;
            }
            // Force (r, j) and ask whether an optimal completion still exists.
            std::vector<std::size_t> col_map;
            col_map.reserve(n - r - 1);
            for (std::size_t jj = 0; jj < n; ++jj)
                if (!used[jj] && jj != j) col_map.push_back(jj);
            const std::size_t k = n - r - 1;
            std::vector<double> minor(k * k);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b)
                    minor[a * k + b] = c[(r + 1 + a) * n + col_map[b]];
            std::vector<int> local = k ? jv_solve(minor, k) : std::vector<int>{};

            double total = prefix + c[r * n + j];
            std::vector<int> candidate(n - r, -1);
            candidate[0] = static_cast<int>(j);
            for (std::size_t a = 0; a < k; ++a) {
                candidate[a + 1] = static_cast<int>(col_map[static_cast<std::size_t>(local[a])]);
                total += c[(r + 1 + a) * n + static_cast<std::size_t>(candidate[a + 1])];
            }
            if (total == best_total) {
                fixed[r] = static_cast<int>(j);
                for (std::size_t a = 0; a + r < n; ++a) completion[r + a] = candidate[a];
                break;
            }
        }
        used[static_cast<std::size_t>(fixed[r])] = 1;
        prefix += c[r * n + static_cast<std::size_t>(fixed[r])];
    }
    return fixed;
}

nn::Mlp affinity_mlp(const GnnConfig& gnn, const MotConfig& cfg) {
    return {"aff", 2 * gnn.feature_width, cfg.affinity_hidden, 1, OpKind::relu};
}

}  // namespace

Assignment hungarian(const std::vector<std::vector<double>>& cost) {
    const std::size_t m = cost.size();
    const std::size_t n = m ? cost[0].size() : 0;
    for (std::size_t r = 0; r < m; ++r) {
        if (cost[r].size() != n)
            throw ShapeError("hungarian: ragged cost matrix at row " + std::to_string(r));
        for (std::size_t c = 0; c < n; ++c)
            if (!std::isfinite(cost[r][c]))
                throw NumericalError("hungarian: non-finite entry at (" + std::to_string(r) + "," +
                                     std::to_string(c) + ")");
    }

    Assignment out;
    if (m == 0 || n == 0) {
        for (std::size_t r = 0; r < m; ++r) out.unmatched_rows.push_back(static_cast<int>(r));
        for (std::size_t c = 0; c < n; ++c) out.unmatched_cols.push_back(static_cast<int>(c));
        return out;
    }

    const std::size_t big = std::max(m, n);
    std::vector<double> padded(big * big, kAssignmentSentinel);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) padded[r * big + c] = cost[r][c];

    const std::vector<int> sigma = canonical_assignment(padded, big);

    std::vector<char> col_matched(n, 0);
    for (std::size_t r = 0; r < m; ++r) {
        const int j = sigma[r];
        if (j < static_cast<int>(n)) {
            out.matches.emplace_back(static_cast<int>(r), j);
            col_matched[static_cast<std::size_t>(j)] = 1;
            out.cost += cost[r][static_cast<std::size_t>(j)];
        } else {
            out.unmatched_rows.push_back(static_cast<int>(r));
        }
    }
    for (std::size_t c = 0; c < n; ++c)
        if (!col_matched[c]) out.unmatched_cols.push_back(static_cast<int>(c));
    return out;
}

Assignment associate(const AffinityMatrix& aff, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw Error("associate: threshold must lie in (0,1)");
    if (aff.rows == 0 || aff.cols == 0) {
        // a vector-of-rows cost matrix cannot carry the empty side's extent
        Assignment a;
        for (std::size_t r = 0; r < aff.rows; ++r) a.unmatched_rows.push_back(static_cast<int>(r));
        for (std::size_t c = 0; c < aff.cols; ++c) a.unmatched_cols.push_back(static_cast<int>(c));
        return a;
    }
    std::vector<std::vector<double>> cost(aff.rows, std::vector<double>(aff.cols));
    for (std::size_t r = 0; r < aff.rows; ++r)
        for (std::size_t c = 0; c < aff.cols; ++c) cost[r][c] = 1.0 - aff.at(r, c);
    Assignment a = hungarian(cost);

    std::vector<std::pair<int, int>> kept;
    for (const auto& [r, c] : a.matches) {
        if (aff.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) < threshold) {
            a.unmatched_rows.push_back(r);
            a.unmatched_cols.push_back(c);
            a.cost -= cost[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        } else {
            kept.push_back({r, c});
        }
    }
    a.matches = std::move(kept);
    std::sort(a.unmatched_rows.begin(), a.unmatched_rows.end());
    std::sort(a.unmatched_cols.begin(), a.unmatched_cols.end());
    return a;
}

void ensure_affinity_params(ParamStore& store, const GnnConfig& gnn, const MotConfig& cfg) {
    affinity_mlp(gnn, cfg).ensure(store);
}

AffinityMatrix affinity(Tape& tape, const ParamStore& store, const GnnConfig& gnn,
                        const MotConfig& cfg, const AgentGraph& graph) {
    std::vector<int> track_feats, det_feats;
    for (const AgentNode& node : graph.nodes) {
        if (node.feature < 0) throw Error("affinity: graph features missing; run the GNN first");
        (node.source == NodeSource::existing_track ? track_feats : det_feats)
            .push_back(node.feature);
    }
    const nn::Mlp mlp = affinity_mlp(gnn, cfg);
    AffinityMatrix out;
    out.rows = track_feats.size();
    out.cols = det_feats.size();
    out.values.reserve(out.rows * out.cols);
    out.tape_ids.reserve(out.rows * out.cols);
    for (int ht : track_feats) {
        for (int hd : det_feats) {
            const int pair = ops::concat(tape, {ht, hd});
            const int logit = mlp.forward(tape, store, pair);
            const int p = ops::sigmoid(tape, logit);
            out.tape_ids.push_back(p);
            out.values.push_back(tape.value(p).item());
        }
    }
    return out;
}

int association_loss(Tape& tape, const AffinityMatrix& aff,
                     const std::vector<std::pair<int, int>>& gt_pairs) {
    if (aff.rows == 0 || aff.cols == 0) return tape.constant(Tensor::scalar(0.0));
    std::set<std::pair<int, int>> positives(gt_pairs.begin(), gt_pairs.end());
    const double lo = 1e-7, hi = 1.0 - 1e-7;
    std::vector<int> cell_losses;
    cell_losses.reserve(aff.rows * aff.cols);
    for (std::size_t r = 0; r < aff.rows; ++r) {
        for (std::size_t c = 0; c < aff.cols; ++c) {
            const int p = aff.tape_at(r, c);
            const bool positive = positives.count({static_cast<int>(r), static_cast<int>(c)}) > 0;
            const int prob = positive ? p : ops::sub(tape, tape.constant(Tensor::scalar(1.0)), p);
            const int nll = ops::scale(tape, ops::log(tape, ops::clamp(tape, prob, lo, hi)), -1.0);
            cell_losses.push_back(nll);
        }
    }
    return ops::reduce_mean(tape, ops::concat(tape, cell_losses));
}

KalmanState kalman_init(const std::array<double, 7>& obs) {
    KalmanState s;
    for (int i = 0; i < 7; ++i) s.x[static_cast<std::size_t>(i)] = obs[static_cast<std::size_t>(i)];
    s.x[3] = kitti::wrap_angle(s.x[3]);
    const double diag[10] = {1, 1, 1, 1, 0.1, 0.1, 0.1, 10, 10, 10};
    for (std::size_t i = 0; i < 10; ++i) s.P(i, i) = diag[i];
    return s;
}

void kalman_predict(KalmanState& s, double dt_frames, const MotConfig& cfg) {
    if (dt_frames < 1.0) throw Error("kalman_predict: dt must be >= 1 frame");
    linalg::Mat f = linalg::Mat::identity(10);
    for (std::size_t i = 0; i < 3; ++i) f(i, i + 7) = dt_frames;
    s.x[0] += s.x[7] * dt_frames;
    s.x[1] += s.x[8] * dt_frames;
    s.x[2] += s.x[9] * dt_frames;
    s.P = linalg::mul(linalg::mul(f, s.P), linalg::transpose(f));
    for (std::size_t i = 7; i < 10; ++i) s.P(i, i) += cfg.process_noise_vel * dt_frames;
}

void kalman_update(KalmanState& s, const std::array<double, 7>& obs, const MotConfig& cfg) {
    // S = P[0:7,0:7] + R
    linalg::Mat innov_cov(7, 7);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) innov_cov(i, j) = s.P(i, j);
    for (std::size_t i = 0; i < 7; ++i) innov_cov(i, i) += cfg.observation_noise;

    linalg::Mat s_inv;
    try {
        s_inv = linalg::lu_inverse(innov_cov);
    } catch (const NumericalError&) {
        throw NumericalError("kalman_update: singular innovation covariance");
    }

    // K = P H^T S^-1, with H = [I_7 | 0]
    linalg::Mat pht(10, 7);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 7; ++j) pht(i, j) = s.P(i, j);
    const linalg::Mat gain = linalg::mul(pht, s_inv);

    double innovation[7];
    for (std::size_t i = 0; i < 7; ++i) innovation[i] = obs[i] - s.x[i];
    innovation[3] = kitti::wrap_angle(innovation[3]);

    for (std::size_t i = 0; i < 10; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 7; ++j) acc += gain(i, j) * innovation[j];
        s.x[i] += acc;
    }
    s.x[3] = kitti::wrap_angle(s.x[3]);

    // P = P - K (H P)
    linalg::Mat hp(7, 10);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 10; ++j) hp(i, j) = s.P(i, j);
    s.P = linalg::sub(s.P, linalg::mul(gain, hp));
}

kitti::TrackletRecord track_to_record(const Track& track, int frame) {
    kitti::TrackletRecord rec;
    static_cast<kitti::DetectionRecord&>(rec) = track.last_detection;
    rec.frame = frame;
    rec.track_id = track.id;
    if (rec.category.empty()) rec.category = "Car";
    rec.x = track.kf.x[0];
    rec.y = track.kf.x[1];
    rec.z = track.kf.x[2];
    rec.rotation_y = kitti::wrap_angle(track.kf.x[3]);
    rec.l = track.kf.x[4];
    rec.w = track.kf.x[5];
    rec.h = track.kf.x[6];
    rec.alpha = kitti::wrap_angle(rec.rotation_y - std::atan2(rec.x, rec.z));
    rec.score = track.score;
    return rec;
}

namespace {

std::array<double, 7> observation_of(const kitti::DetectionRecord& det) {
    return {det.x, det.y, det.z, det.rotation_y, det.l, det.w, det.h};
}

constexpr std::size_t kHistoryCap = 32;

}  // namespace

LifecycleResult lifecycle_step(std::vector<Track>& tracks, const Assignment& assignment,
                               const std::vector<kitti::DetectionRecord>& detections,
                               const MotConfig& cfg, int frame_index, int& next_track_id) {
    LifecycleResult out;
    for (Track& t : tracks) t.matched_this_frame = false;

    for (const auto& [row, col] : assignment.matches) {
        Track& t = tracks[static_cast<std::size_t>(row)];
        const kitti::DetectionRecord& det = detections[static_cast<std::size_t>(col)];
        kalman_update(t.kf, observation_of(det), cfg);
        t.hits += 1;
        t.age = 0;
        t.matched_this_frame = true;
        t.score = det.score.value_or(1.0);
        t.last_detection = det;
        t.history.push_back({t.kf.x[0], t.kf.x[1], t.kf.x[2]});
        if (t.history.size() > kHistoryCap) t.history.erase(t.history.begin());
        if (t.status == TrackStatus::tentative && t.hits >= cfg.min_hits)
            t.status = TrackStatus::confirmed;
    }

    for (int row : assignment.unmatched_rows) {
        Track& t = tracks[static_cast<std::size_t>(row)];
        t.age += 1;
        t.hits = 0;
        if (t.age > cfg.max_age) t.status = TrackStatus::dead;
    }

    for (Track& t : tracks) {
        if (t.status != TrackStatus::confirmed) continue;
        if (t.matched_this_frame) {
            out.emitted.push_back(track_to_record(t, frame_index));
        } else if (cfg.emit_coasting && t.age <= cfg.max_age) {
            Track coasted = t;
            coasted.score = t.score * std::pow(cfg.coast_score_decay, t.age);
            out.emitted.push_back(track_to_record(coasted, frame_index));
        }
    }

    for (int col : assignment.unmatched_cols) {
        const kitti::DetectionRecord& det = detections[static_cast<std::size_t>(col)];
        Track t;
        t.id = next_track_id++;
        t.kf = kalman_init(observation_of(det));
        t.hits = 1;
        t.age = 0;
        // Sequence warm-up: during the first min_hits frames a new track is
        // confirmed immediately, so coverage from frame 0 is possible.
        t.status = frame_index < cfg.min_hits ? TrackStatus::confirmed : TrackStatus::tentative;
        t.score = det.score.value_or(1.0);
        t.last_detection = det;
        t.history.push_back({det.x, det.y, det.z});
        out.spawned_track_ids.push_back(t.id);
        if (t.status == TrackStatus::confirmed)
            out.emitted.push_back(track_to_record(t, frame_index));
        tracks.push_back(std::move(t));
    }

    std::erase_if(tracks, [](const Track& t) { return t.status == TrackStatus::dead; });
    return out;
}

}  // namespace trackcast
