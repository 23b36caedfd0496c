#include "trackcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "trackcast/errors.hpp"
#include "trackcast/mot.hpp"

#include <json.hpp>

namespace trackcast::metrics {

namespace {

struct Pt {
    double x, z;
};

double polygon_area(const std::vector<Pt>& poly) {
    double a = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Pt& p = poly[i];
        const Pt& q = poly[(i + 1) % n];
        a += p.x * q.z - q.x * p.z;
    }
    return 0.5 * a;
}

std::vector<Pt> box_corners_bev(const Box3d& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hl = 0.5 * b.l, hw = 0.5 * b.w;
    // counter-clockwise in the (x, z) plane
    const double local[4][2] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
    std::vector<Pt> out(4);
    for (int i = 0; i < 4; ++i) {
        const double dx = local[i][0], dz = local[i][1];
        out[static_cast<std::size_t>(i)] = {b.x + c * dx + s * dz, b.z - s * dx + c * dz};
    }
    if (polygon_area(out) < 0.0) std::reverse(out.begin(), out.end());
    return out;
}

// Sutherland-Hodgman clip of a convex subject polygon by a convex clip
// polygon (both counter-clockwise).
std::vector<Pt> clip_polygon(std::vector<Pt> subject, const std::vector<Pt>& clip) {
    for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
        const Pt a = clip[e];
        const Pt b = clip[(e + 1) % clip.size()];
        auto inside = [&](const Pt& p) {
            return (b.x - a.x) * (p.z - a.z) - (b.z - a.z) * (p.x - a.x) >= 0.0;
        };
        auto intersect = [&](const Pt& p, const Pt& q) {
            const double a1 = b.z - a.z, b1 = a.x - b.x, c1 = a1 * a.x + b1 * a.z;
            const double a2 = q.z - p.z, b2 = p.x - q.x, c2 = a2 * p.x + b2 * p.z;
            const double det = a1 * b2 - a2 * b1;
            if (std::fabs(det) < 1e-300) return p;
            return Pt{(b2 * c1 - b1 * c2) / det, (a1 * c2 - a2 * c1) / det};
        };
        std::vector<Pt> out;
        for (std::size_t i = 0; i < subject.size(); ++i) {
            const Pt& cur = subject[i];
            const Pt& prev = subject[(i + subject.size() - 1) % subject.size()];
            const bool cur_in = inside(cur), prev_in = inside(prev);
            if (cur_in) {
                if (!prev_in) out.push_back(intersect(prev, cur));
                out.push_back(cur);
            } else if (prev_in) {
                out.push_back(intersect(prev, cur));
            }
        }
        subject = std::move(out);
    }
    return subject;
}

double rect_area_2d(const double b[4]) {
    return std::max(0.0, b[2] - b[0]) * std::max(0.0, b[3] - b[1]);
}

double rect_overlap_2d(const double a[4], const double b[4]) {
    const double w = std::min(a[2], b[2]) - std::max(a[0], b[0]);
    const double h = std::min(a[3], b[3]) - std::max(a[1], b[1]);
    return std::max(0.0, w) * std::max(0.0, h);
}

bool inside_dont_care(const kitti::TrackletRecord& pred,
                      const std::vector<kitti::DontCareRegion>& regions, int frame) {
    const double area = rect_area_2d(pred.bbox2d);
    if (area <= 0.0) return false;
    for (const auto& region : regions) {
        if (region.frame != frame) continue;
        if (rect_overlap_2d(pred.bbox2d, region.bbox2d) / area > 0.5) return true;
    }
    return false;
}

}  // namespace

Box3d box_of(const kitti::DetectionRecord& rec) {
    return {rec.x, rec.y, rec.z, rec.l, rec.w, rec.h, rec.rotation_y};
}

double iou3d(const Box3d& a, const Box3d& b) {
    constexpr double kAreaEps = 1e-12;  // degenerate sliver cutoff
    const std::vector<Pt> inter = clip_polygon(box_corners_bev(a), box_corners_bev(b));
    double inter_area = inter.size() >= 3 ? polygon_area(inter) : 0.0;
    if (inter_area < kAreaEps) inter_area = 0.0;

    // vertical extent: [y - h, y], bottom-face anchored
    const double overlap_y =
        std::max(0.0, std::min(a.y, b.y) - std::max(a.y - a.h, b.y - b.h));
    const double inter_vol = inter_area * overlap_y;
    const double union_vol = a.l * a.w * a.h + b.l * b.w * b.h - inter_vol;
    if (union_vol <= 0.0) return 0.0;
    return std::min(1.0, std::max(0.0, inter_vol / union_vol));
}

FrameMatches match_frame(const std::vector<kitti::TrackletRecord>& gt,
                         const std::vector<kitti::TrackletRecord>& pred,
                         const std::vector<kitti::DontCareRegion>& dont_care, double iou_min) {
    const std::size_t m = gt.size(), n = pred.size();
    FrameMatches out;
    out.num_gt = static_cast<int>(m);
    for (const auto& g : gt) out.gt_ids.push_back(g.track_id);

    std::vector<double> iou(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            iou[i * n + j] = iou3d(box_of(gt[i]), box_of(pred[j]));

    // Union-find over the gated bipartite graph; each component is assigned
    // independently, which is equivalent and much faster than one big solve.
    std::vector<int> parent(m + n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    };
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (iou[i * n + j] >= iou_min) parent[static_cast<std::size_t>(find(static_cast<int>(i)))] =
                find(static_cast<int>(m + j));

    std::map<int, std::pair<std::vector<int>, std::vector<int>>> comps;  // root -> (gt idx, pred idx)
    for (std::size_t i = 0; i < m; ++i) comps[find(static_cast<int>(i))].first.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < n; ++j)
        comps[find(static_cast<int>(m + j))].second.push_back(static_cast<int>(j));

    std::vector<char> pred_matched(n, 0);
    long matched_gt = 0;
    for (const auto& [root, comp] : comps) {
        const auto& rows = comp.first;
        const auto& cols = comp.second;
        if (rows.empty() || cols.empty()) continue;
        std::vector<std::vector<double>> cost(rows.size(), std::vector<double>(cols.size()));
        for (std::size_t a = 0; a < rows.size(); ++a)
            for (std::size_t b = 0; b < cols.size(); ++b) {
                const double v = iou[static_cast<std::size_t>(rows[a]) * n +
                                     static_cast<std::size_t>(cols[b])];
                cost[a][b] = v >= iou_min ? 1.0 - v : kAssignmentSentinel;
            }
        const Assignment assign = hungarian(cost);
        for (const auto& [a, b] : assign.matches) {
            const int gi = rows[static_cast<std::size_t>(a)];
            const int pj = cols[static_cast<std::size_t>(b)];
            const double v = iou[static_cast<std::size_t>(gi) * n + static_cast<std::size_t>(pj)];
            if (v < iou_min) continue;  // sentinel pairing
            out.matches.emplace_back(gt[static_cast<std::size_t>(gi)].track_id,
                                     pred[static_cast<std::size_t>(pj)].track_id, v);
            pred_matched[static_cast<std::size_t>(pj)] = 1;
            ++matched_gt;
        }
    }

    out.fn = static_cast<int>(m) - static_cast<int>(matched_gt);
    for (std::size_t j = 0; j < n; ++j) {
        if (pred_matched[j]) continue;
        if (inside_dont_care(pred[j], dont_care, pred[j].frame)) continue;
        out.fp += 1;
    }
    return out;
}

ClearResult clear_mot(const std::vector<std::vector<FrameMatches>>& sequences) {
    ClearResult r;
    double iou_sum = 0.0;

    for (const auto& frames : sequences) {
        // gt id -> (frame order index, matched pred id or -1)
        std::map<int, std::vector<std::pair<int, int>>> timelines;
        for (std::size_t f = 0; f < frames.size(); ++f) {
            const FrameMatches& fm = frames[f];
            r.num_gt += fm.num_gt;
            r.fp += fm.fp;
            r.fn += fm.fn;
            r.tp += static_cast<long>(fm.matches.size());
            std::map<int, int> matched_of;
            for (const auto& [gid, pid, v] : fm.matches) {
                iou_sum += v;
                matched_of[gid] = pid;
            }
            for (int gid : fm.gt_ids) {
                const auto it = matched_of.find(gid);
                timelines[gid].push_back({static_cast<int>(f), it == matched_of.end() ? -1 : it->second});
            }
        }

        for (const auto& [gid, timeline] : timelines) {
            int last_pred = -1;
            bool was_covered = false;
            bool in_gap = false;
            for (const auto& [frame, pid] : timeline) {
                if (pid >= 0) {
                    if (last_pred >= 0 && pid != last_pred) r.ids += 1;
                    last_pred = pid;
                    if (was_covered && in_gap) r.frag += 1;
                    was_covered = true;
                    in_gap = false;
                } else if (was_covered) {
                    in_gap = true;
                }
            }
        }
    }

    if (r.num_gt == 0) throw Error("clear_mot: no ground-truth objects; metrics undefined");
    r.mota = 1.0 - static_cast<double>(r.fp + r.fn + r.ids) / static_cast<double>(r.num_gt);
    r.motp = r.tp > 0 ? iou_sum / static_cast<double>(r.tp) : 0.0;
    return r;
}

namespace {

ClearResult clear_at_threshold(const std::vector<SequenceEval>& sequences, double threshold,
                               double iou_min) {
    std::vector<std::vector<FrameMatches>> all;
    for (const auto& seq : sequences) {
        std::vector<FrameMatches> frames;
        std::set<int> frame_ids;
        for (const auto& [f, _] : seq.ground_truth.frames) frame_ids.insert(f);
        for (const auto& [f, _] : seq.predictions.frames) frame_ids.insert(f);
        for (int f : frame_ids) {
            static const std::vector<kitti::TrackletRecord> kNone;
            const auto git = seq.ground_truth.frames.find(f);
            const auto pit = seq.predictions.frames.find(f);
            std::vector<kitti::TrackletRecord> kept;
            if (pit != seq.predictions.frames.end())
                for (const auto& p : pit->second)
                    if (*p.score >= threshold) kept.push_back(p);
            frames.push_back(match_frame(git == seq.ground_truth.frames.end() ? kNone : git->second,
                                         kept, seq.dont_care, iou_min));
        }
        all.push_back(std::move(frames));
    }
    return clear_mot(all);
}

}  // namespace

AmotaResult amota_family(const std::vector<SequenceEval>& sequences, int recall_levels,
                         double iou_min) {
    std::vector<double> scores;
    for (const auto& seq : sequences)
        for (const auto& [f, records] : seq.predictions.frames)
            for (const auto& rec : records) {
                if (!rec.score) throw Error("amota_family: prediction without score in frame " +
                                            std::to_string(f));
                scores.push_back(*rec.score);
            }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

    // Index i keeps predictions with score >= scores[i]; recall is
    // nondecreasing in i. Results are memoized since neighboring recall
    // targets revisit the same thresholds.
    std::map<int, ClearResult> memo;
    auto eval_at = [&](int i) -> const ClearResult& {
        auto it = memo.find(i);
        if (it == memo.end())
            it = memo.emplace(i, clear_at_threshold(sequences, scores[static_cast<std::size_t>(i)],
                                                    iou_min)).first;
        return it->second;
    };
    auto recall_at = [&](int i) {
        const ClearResult& c = eval_at(i);
        return static_cast<double>(c.tp) / static_cast<double>(c.num_gt);
    };

    AmotaResult out;
    if (scores.empty()) return out;  // no predictions at all: all levels zero

    const int last = static_cast<int>(scores.size()) - 1;
    const double max_recall = recall_at(last);

    for (int level = 1; level <= recall_levels; ++level) {
        const double target = static_cast<double>(level) / static_cast<double>(recall_levels);
        if (target > max_recall + 1e-12) continue;  // unreachable recall: zero contribution

        // Largest index whose recall still fits under the target...
        int lo = 0, hi = last, best = -1;
        while (lo <= hi) {
            const int mid = (lo + hi) / 2;
            if (recall_at(mid) <= target + 1e-12) {
                best = mid;
                lo = mid + 1;
            } else {
                hi = mid - 1;
            }
        }
        if (best < 0) continue;  // even the strictest threshold overshoots
        // ...then the first index of that recall plateau (fewest extras kept).
        const double plateau = recall_at(best);
        lo = 0;
        hi = best;
        int first = best;
        while (lo <= hi) {
            const int mid = (lo + hi) / 2;
            if (recall_at(mid) >= plateau - 1e-12) {
                first = mid;
                hi = mid - 1;
            } else {
                lo = mid + 1;
            }
        }

        const ClearResult& c = eval_at(first);
        const double g = static_cast<double>(c.num_gt);
        out.amota += std::max(0.0, c.mota);
        out.amotp += c.motp;
        const double err = static_cast<double>(c.fp + c.fn + c.ids) - (1.0 - target) * g;
        out.samota += std::max(0.0, 1.0 - err / (target * g));
    }
    out.amota /= static_cast<double>(recall_levels);
    out.amotp /= static_cast<double>(recall_levels);
    out.samota /= static_cast<double>(recall_levels);
    return out;
}

std::pair<double, double> ade_fde(const std::vector<FutureTrajectory>& samples,
                                  const FutureTrajectory& gt) {
    if (samples.empty()) throw Error("ade_fde: no samples");
    double best_ade = std::numeric_limits<double>::infinity();
    double best_fde = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        if (s.points.size() != gt.points.size())
            throw ShapeError("ade_fde: horizon mismatch, " + std::to_string(s.points.size()) +
                             " vs " + std::to_string(gt.points.size()));
        double acc = 0.0;
        for (std::size_t t = 0; t < s.points.size(); ++t) {
            const double dx = s.points[t][0] - gt.points[t][0];
            const double dz = s.points[t][1] - gt.points[t][1];
            acc += std::sqrt(dx * dx + dz * dz);
        }
        best_ade = std::min(best_ade, acc / static_cast<double>(s.points.size()));
        const double fx = s.points.back()[0] - gt.points.back()[0];
        const double fz = s.points.back()[1] - gt.points.back()[1];
        best_fde = std::min(best_fde, std::sqrt(fx * fx + fz * fz));
    }
    return {best_ade, best_fde};
}

std::pair<double, double> asd_fsd(const std::vector<FutureTrajectory>& samples) {
    const std::size_t k = samples.size();
    if (k < 2) throw Error("asd_fsd: need at least 2 samples");
    double asd = 0.0, fsd = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double best_mean = std::numeric_limits<double>::infinity();
        double best_final = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            if (samples[i].points.size() != samples[j].points.size())
                throw ShapeError("asd_fsd: horizon mismatch");
            double acc = 0.0;
            for (std::size_t t = 0; t < samples[i].points.size(); ++t) {
                const double dx = samples[i].points[t][0] - samples[j].points[t][0];
                const double dz = samples[i].points[t][1] - samples[j].points[t][1];
                acc += std::sqrt(dx * dx + dz * dz);
            }
            best_mean = std::min(best_mean, acc / static_cast<double>(samples[i].points.size()));
            const double fx = samples[i].points.back()[0] - samples[j].points.back()[0];
            const double fz = samples[i].points.back()[1] - samples[j].points.back()[1];
            best_final = std::min(best_final, std::sqrt(fx * fx + fz * fz));
        }
        asd += best_mean;
        fsd += best_final;
    }
    return {asd / static_cast<double>(k), fsd / static_cast<double>(k)};
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["definitions"] = {
        {"ade_fde", "best-of-K over samples, minima taken independently"},
        {"asd_fsd", "mean nearest-other-sample distance"},
    };
    j["mot"] = {{"sAMOTA", samota}, {"AMOTA", amota}, {"AMOTP", amotp},
                {"MOTA", mota},     {"MOTP", motp},   {"IDS", ids},
                {"FRAG", frag}};
    nlohmann::json horizons = nlohmann::json::object();
    for (const auto& [h, fm] : per_horizon) {
        horizons[std::to_string(h)] = {{"ADE", fm.ade},
                                       {"FDE", fm.fde},
                                       {"ASD", fm.asd},
                                       {"FSD", fm.fsd},
                                       {"cases", fm.cases}};
    }
    j["forecast"] = horizons;
    return j.dump(2) + "\n";
}

MetricReport MetricReport::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report " + path);
    nlohmann::json j;
    in >> j;
    MetricReport r;
    const auto& mot = j.at("mot");
    r.samota = mot.at("sAMOTA").get<double>();
    r.amota = mot.at("AMOTA").get<double>();
    r.amotp = mot.at("AMOTP").get<double>();
    r.mota = mot.at("MOTA").get<double>();
    r.motp = mot.at("MOTP").get<double>();
    r.ids = mot.at("IDS").get<long>();
    r.frag = mot.at("FRAG").get<long>();
    for (const auto& [key, val] : j.at("forecast").items()) {
        ForecastMetrics fm;
        fm.ade = val.at("ADE").get<double>();
        fm.fde = val.at("FDE").get<double>();
        fm.asd = val.at("ASD").get<double>();
        fm.fsd = val.at("FSD").get<double>();
        fm.cases = val.at("cases").get<std::size_t>();
        r.per_horizon[std::stoi(key)] = fm;
    }
    return r;
}

std::string MetricReport::mot_table(const std::string& method_name) const {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-16s %10s %10s %10s %10s %10s %8s %8s\n", "Method",
                  "sAMOTA(%)", "AMOTA(%)", "AMOTP(%)", "MOTA(%)", "MOTP(%)", "IDS", "FRAG");
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-16s %10.2f %10.2f %10.2f %10.2f %10.2f %8ld %8ld\n",
                  method_name.c_str(), samota, amota, amotp, mota, motp, ids, frag);
    out += buf;
    return out;
}

std::string MetricReport::forecast_table(const std::string& method_name) const {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf), "%-14s %-10s %12s\n", "Setting", "Metric", method_name.c_str());
    out += buf;
    for (const auto& [h, fm] : per_horizon) {
        const double seconds = static_cast<double>(h) / 10.0;
        char setting[32];
        std::snprintf(setting, sizeof(setting), "horizon-%.1fs", seconds);
        const std::pair<const char*, double> rows[4] = {
            {"ADE", fm.ade}, {"FDE", fm.fde}, {"ASD", fm.asd}, {"FSD", fm.fsd}};
        for (const auto& [name, v] : rows) {
            std::snprintf(buf, sizeof(buf), "%-14s %-10s %12.3f\n", setting, name, v);
            out += buf;
        }
    }
    return out;
}

}  // namespace trackcast::metrics
