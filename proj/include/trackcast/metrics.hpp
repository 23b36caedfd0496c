#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "trackcast/forecast.hpp"
#include "trackcast/kitti.hpp"

namespace trackcast::metrics {

struct Box3d {
    double x = 0, y = 0, z = 0;  // bottom-face center, camera coordinates
    double l = 0, w = 0, h = 0;
    double yaw = 0;
};

Box3d box_of(const kitti::DetectionRecord& rec);

// Rotated birds-eye-view overlap (convex polygon clipping) times vertical
// overlap, over the union of volumes. In [0, 1].
double iou3d(const Box3d& a, const Box3d& b);

// One frame's evaluation outcome.
struct FrameMatches {
    // (gt track id, predicted track id, IoU)
    std::vector<std::tuple<int, int, double>> matches;
    std::vector<int> gt_ids;  // every ground-truth id present this frame
    int fp = 0;               // after DontCare exclusion
    int fn = 0;
    int num_gt = 0;
};

// Optimal matching on cost = 1 - IoU restricted to pairs with
// IoU >= iou_min. Unmatched predictions mostly inside a DontCare region are
// not counted as false positives.
FrameMatches match_frame(const std::vector<kitti::TrackletRecord>& gt,
                         const std::vector<kitti::TrackletRecord>& pred,
                         const std::vector<kitti::DontCareRegion>& dont_care,
                         double iou_min = 0.25);

struct ClearResult {
    double mota = 0;  // may be negative; reported unclamped
    double motp = 0;  // mean IoU over true positives
    long ids = 0;
    long frag = 0;
    long tp = 0, fp = 0, fn = 0, num_gt = 0;
};

// CLEAR aggregation over sequences of per-frame matches. IDS counts
// matched-id changes between a ground-truth track's consecutive matched
// frames; FRAG counts interruptions of its covered span.
// num_gt == 0 is an error, not a zero score.
ClearResult clear_mot(const std::vector<std::vector<FrameMatches>>& sequences);

struct AmotaResult {
    double samota = 0;
    double amota = 0;
    double amotp = 0;
};

// One evaluated sequence: ground truth, scored predictions, DontCare.
struct SequenceEval {
    kitti::TrackletSequence ground_truth;
    kitti::TrackletSequence predictions;  // all records must carry scores
    std::vector<kitti::DontCareRegion> dont_care;
};

// Averages over L recall targets r = 1/L .. 1. For each target the score
// threshold achieving the largest recall <= r is used; targets above the
// maximum reachable recall contribute zero. MOTA_r is clamped at 0 and
// sMOTA_r = max(0, 1 - (FP+FN+IDS - (1-r) G) / (r G)).
AmotaResult amota_family(const std::vector<SequenceEval>& sequences, int recall_levels = 40,
                         double iou_min = 0.25);

// Best-of-K displacement errors; the minima over samples are taken
// independently for ADE and FDE.
std::pair<double, double> ade_fde(const std::vector<FutureTrajectory>& samples,
                                  const FutureTrajectory& gt);

// Diversity: mean over samples of the distance to the nearest other sample
// (mean per-step for ASD, final step for FSD). Requires K >= 2.
std::pair<double, double> asd_fsd(const std::vector<FutureTrajectory>& samples);

struct ForecastMetrics {
    double ade = 0, fde = 0, asd = 0, fsd = 0;
    std::size_t cases = 0;
};

struct MetricReport {
    // MOT block, percentages except the counts
    double samota = 0, amota = 0, amotp = 0, mota = 0, motp = 0;
    long ids = 0, frag = 0;
    // forecasting block per horizon (in frames)
    std::map<int, ForecastMetrics> per_horizon;

    std::string to_json() const;
    static MetricReport from_json_file(const std::string& path);
    // Aligned tables in the MOT column order
    // sAMOTA, AMOTA, AMOTP, MOTA, MOTP, IDS, FRAG.
    std::string mot_table(const std::string& method_name = "trackcast") const;
    std::string forecast_table(const std::string& method_name = "trackcast") const;
};

}  // namespace trackcast::metrics
