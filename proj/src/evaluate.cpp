#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "trackcast/errors.hpp"
#include "trackcast/pipeline.hpp"

namespace trackcast {

namespace fs = std::filesystem;

namespace {

struct EvalSequence {
    int id = 0;
    kitti::TrackletSequence gt;
    std::vector<kitti::DontCareRegion> dont_care;
    kitti::TrackletSequence results;
    std::vector<ForecastRow> forecast_rows;
};

void split_gt(kitti::TrackletSequence raw, const std::string& category,
              kitti::TrackletSequence& gt_out, std::vector<kitti::DontCareRegion>& dc_out) {
    for (auto& [frame, records] : raw.frames) {
        for (auto& rec : records) {
            if (rec.category == "DontCare") {
                kitti::DontCareRegion region;
                region.frame = frame;
                for (int i = 0; i < 4; ++i) region.bbox2d[i] = rec.bbox2d[i];
                dc_out.push_back(region);
            } else if (rec.category == category) {
                gt_out.frames[frame].push_back(std::move(rec));
            }
        }
    }
}

std::vector<EvalSequence> load_eval_sequences(const RunConfig& cfg) {
    if (cfg.gt_dir.empty()) throw ConfigError("evaluate: eval.gt_dir is required");
    std::vector<EvalSequence> out;
    for (int id : list_sequence_ids(cfg.gt_dir)) {
        EvalSequence seq;
        seq.id = id;
        const std::string name = kitti::sequence_file_name(id);
        split_gt(kitti::read_tracklet_file((fs::path(cfg.gt_dir) / name).string(), id),
                 cfg.category, seq.gt, seq.dont_care);
        if (!cfg.results_dir.empty()) {
            const fs::path p = fs::path(cfg.results_dir) / name;
            if (fs::exists(p)) seq.results = kitti::read_tracklet_file(p.string(), id);
        }
        if (!cfg.forecasts_dir.empty()) {
            const fs::path p = fs::path(cfg.forecasts_dir) / name;
            if (fs::exists(p)) seq.forecast_rows = parse_forecast_file(p.string());
        }
        out.push_back(std::move(seq));
    }
    if (out.empty()) throw IoError("evaluate: no sequences found under " + cfg.gt_dir);
    return out;
}

// (frame, sample) -> trajectory points keyed for grouping
struct ForecastGroup {
    int frame;
    int agent_id;
    std::vector<FutureTrajectory> samples;
};

std::vector<ForecastGroup> group_forecasts(const std::vector<ForecastRow>& rows) {
    std::map<std::pair<int, int>, std::map<int, std::vector<std::pair<int, GroundPoint>>>> acc;
    for (const auto& r : rows)
        acc[{r.frame, r.agent_id}][r.sample_idx].push_back({r.t, {r.x, r.z}});
    std::vector<ForecastGroup> out;
    for (auto& [key, samples] : acc) {
        ForecastGroup g;
        g.frame = key.first;
        g.agent_id = key.second;
        for (auto& [k, pts] : samples) {
            std::sort(pts.begin(), pts.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            FutureTrajectory traj;
            for (const auto& [t, p] : pts) traj.points.push_back(p);
            g.samples.push_back(std::move(traj));
        }
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace

metrics::MetricReport cmd_evaluate(const RunConfig& cfg) {
    const std::vector<EvalSequence> sequences = load_eval_sequences(cfg);
    metrics::MetricReport report;

    // (sequence, frame, predicted id) -> gt id, from the keep-all matching
    std::map<std::tuple<int, int, int>, int> pred_to_gt;

    const bool have_results =
        std::any_of(sequences.begin(), sequences.end(),
                    [](const EvalSequence& s) { return !s.results.frames.empty(); });
    if (have_results) {
        std::vector<std::vector<metrics::FrameMatches>> all_frames;
        std::vector<metrics::SequenceEval> amota_in;
        for (const EvalSequence& seq : sequences) {
            std::vector<metrics::FrameMatches> frames;
            std::set<int> frame_ids;
            for (const auto& [f, _] : seq.gt.frames) frame_ids.insert(f);
            for (const auto& [f, _] : seq.results.frames) frame_ids.insert(f);
            for (int f : frame_ids) {
                static const std::vector<kitti::TrackletRecord> kNone;
                const auto git = seq.gt.frames.find(f);
                const auto pit = seq.results.frames.find(f);
                metrics::FrameMatches fm = metrics::match_frame(
                    git == seq.gt.frames.end() ? kNone : git->second,
                    pit == seq.results.frames.end() ? kNone : pit->second, seq.dont_care,
                    cfg.iou_min);
                for (const auto& [gid, pid, iou] : fm.matches) pred_to_gt[{seq.id, f, pid}] = gid;
                frames.push_back(std::move(fm));
            }
            all_frames.push_back(std::move(frames));
            amota_in.push_back({seq.gt, seq.results, seq.dont_care});
        }
        const metrics::ClearResult clear = metrics::clear_mot(all_frames);
        const metrics::AmotaResult amota =
            metrics::amota_family(amota_in, cfg.recall_levels, cfg.iou_min);
        report.mota = 100.0 * clear.mota;
        report.motp = 100.0 * clear.motp;
        report.ids = clear.ids;
        report.frag = clear.frag;
        report.samota = 100.0 * amota.samota;
        report.amota = 100.0 * amota.amota;
        report.amotp = 100.0 * amota.amotp;
    }

    // Forecast block: best-of-K accuracy against the ground-truth future and
    // self-distance diversity, per horizon.
    const bool have_forecasts =
        std::any_of(sequences.begin(), sequences.end(),
                    [](const EvalSequence& s) { return !s.forecast_rows.empty(); });
    if (have_forecasts) {
        for (int h : cfg.horizons) {
            metrics::ForecastMetrics agg;
            double ade_sum = 0, fde_sum = 0, asd_sum = 0, fsd_sum = 0;
            std::size_t accuracy_cases = 0, diversity_cases = 0;
            for (const EvalSequence& seq : sequences) {
                for (const ForecastGroup& g : group_forecasts(seq.forecast_rows)) {
                    std::vector<FutureTrajectory> samples = g.samples;
                    bool long_enough = true;
                    for (auto& s : samples) {
                        if (s.points.size() < static_cast<std::size_t>(h)) {
                            long_enough = false;
                            break;
                        }
                        s.points.resize(static_cast<std::size_t>(h));
                    }
                    if (!long_enough) continue;

                    if (samples.size() >= 2) {
                        const auto [asd, fsd] = metrics::asd_fsd(samples);
                        asd_sum += asd;
                        fsd_sum += fsd;
                        ++diversity_cases;
                    }

                    int gt_id = g.agent_id;
                    if (have_results) {
                        const auto it = pred_to_gt.find({seq.id, g.frame, g.agent_id});
                        if (it == pred_to_gt.end()) continue;
                        gt_id = it->second;
                    }
                    FutureTrajectory gt_future;
                    bool complete = true;
                    for (int f = g.frame + 1; f <= g.frame + h; ++f) {
                        const auto fit = seq.gt.frames.find(f);
                        const kitti::TrackletRecord* found = nullptr;
                        if (fit != seq.gt.frames.end())
                            for (const auto& rec : fit->second)
                                if (rec.track_id == gt_id) found = &rec;
                        if (!found) {
                            complete = false;
                            break;
                        }
                        gt_future.points.push_back({found->x, found->z});
                    }
                    if (!complete) continue;
                    const auto [ade, fde] = metrics::ade_fde(samples, gt_future);
                    ade_sum += ade;
                    fde_sum += fde;
                    ++accuracy_cases;
                }
            }
            if (accuracy_cases) {
                agg.ade = ade_sum / static_cast<double>(accuracy_cases);
                agg.fde = fde_sum / static_cast<double>(accuracy_cases);
            }
            if (diversity_cases) {
                agg.asd = asd_sum / static_cast<double>(diversity_cases);
                agg.fsd = fsd_sum / static_cast<double>(diversity_cases);
            }
            agg.cases = accuracy_cases;
            report.per_horizon[h] = agg;
        }
    }

    fs::create_directories(cfg.out_dir);
    {
        std::ofstream out(fs::path(cfg.out_dir) / "report.json");
        out << report.to_json();
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "table_mot.txt");
        out << report.mot_table();
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "table_forecast.txt");
        out << report.forecast_table();
    }
    {
        std::ofstream out(fs::path(cfg.out_dir) / "plot_data.csv");
        out << "frame,agent_id,kind,sample_idx,t,x,z\n";
        char buf[160];
        for (const EvalSequence& seq : sequences) {
            for (const auto& [f, records] : seq.gt.frames)
                for (const auto& rec : records) {
                    std::snprintf(buf, sizeof(buf), "%d,%d,gt,-1,0,%.17g,%.17g\n", f, rec.track_id,
                                  rec.x, rec.z);
                    out << buf;
                }
            for (const auto& [f, records] : seq.results.frames)
                for (const auto& rec : records) {
                    std::snprintf(buf, sizeof(buf), "%d,%d,track,-1,0,%.17g,%.17g\n", f,
                                  rec.track_id, rec.x, rec.z);
                    out << buf;
                }
            for (const auto& r : seq.forecast_rows) {
                std::snprintf(buf, sizeof(buf), "%d,%d,forecast,%d,%d,%.17g,%.17g\n", r.frame,
                              r.agent_id, r.sample_idx, r.t, r.x, r.z);
                out << buf;
            }
        }
    }
    return report;
}

std::string render_report(const metrics::MetricReport& report) {
    return report.mot_table() + "\n" + report.forecast_table();
}

}  // namespace trackcast
