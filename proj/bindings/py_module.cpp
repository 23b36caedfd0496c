#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "trackcast/errors.hpp"
#include "trackcast/forecast.hpp"
#include "trackcast/metrics.hpp"
#include "trackcast/mot.hpp"
#include "trackcast/pipeline.hpp"

namespace py = pybind11;
using namespace trackcast;

namespace {

metrics::Box3d box_from_tuple(const std::array<double, 7>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

DppKernel kernel_from_matrix(const std::vector<std::vector<double>>& l) {
    DppKernel k;
    const std::size_t n = l.size();
    k.l = linalg::Mat(n, n);
    k.s = linalg::Mat(n, n);
    k.quality.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (l[i].size() != n) throw ShapeError("kernel must be square");
        for (std::size_t j = 0; j < n; ++j) {
            k.l(i, j) = l[i][j];
            k.s(i, j) = l[i][j];
        }
    }
    return k;
}

FutureTrajectory traj_of(const std::vector<std::array<double, 2>>& pts) {
    FutureTrajectory t;
    t.points = pts;
    return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Joint 3D multi-object tracking and trajectory forecasting core";

    m.def("hungarian", [](const std::vector<std::vector<double>>& cost) {
        const Assignment a = hungarian(cost);
        py::dict out;
        out["matches"] = a.matches;
        out["unmatched_rows"] = a.unmatched_rows;
        out["unmatched_cols"] = a.unmatched_cols;
        out["cost"] = a.cost;
        return out;
    }, py::arg("cost"), "Minimum-cost one-to-one assignment with deterministic tie-breaking");

    m.def("iou3d", [](const std::array<double, 7>& a, const std::array<double, 7>& b) {
        return metrics::iou3d(box_from_tuple(a), box_from_tuple(b));
    }, py::arg("box_a"), py::arg("box_b"),
       "Rotated 3D IoU of (x, y, z, l, w, h, yaw) boxes");

    m.def("expected_cardinality", [](const std::vector<std::vector<double>>& l) {
        return expected_cardinality(kernel_from_matrix(l));
    }, py::arg("kernel"), "trace(I - (L+I)^-1) of a DPP kernel");

    m.def("greedy_map", [](const std::vector<std::vector<double>>& l) {
        return greedy_map(kernel_from_matrix(l));
    }, py::arg("kernel"), "Greedy MAP subset of a DPP kernel, in selection order");

    m.def("ade_fde", [](const std::vector<std::vector<std::array<double, 2>>>& samples,
                        const std::vector<std::array<double, 2>>& gt) {
        std::vector<FutureTrajectory> s;
        for (const auto& pts : samples) s.push_back(traj_of(pts));
        return metrics::ade_fde(s, traj_of(gt));
    }, py::arg("samples"), py::arg("ground_truth"), "Best-of-K displacement errors");

    m.def("asd_fsd", [](const std::vector<std::vector<std::array<double, 2>>>& samples) {
        std::vector<FutureTrajectory> s;
        for (const auto& pts : samples) s.push_back(traj_of(pts));
        return metrics::asd_fsd(s);
    }, py::arg("samples"), "Self-distance diversity of a sample set");

    m.def("wrap_angle", &kitti::wrap_angle, py::arg("radians"));

    m.def("parse_tracklet_line", [](const std::string& line) {
        const kitti::TrackletRecord r = kitti::parse_tracklet_line(line);
        py::dict out;
        out["frame"] = r.frame;
        out["track_id"] = r.track_id;
        out["category"] = r.category;
        out["x"] = r.x;
        out["y"] = r.y;
        out["z"] = r.z;
        out["h"] = r.h;
        out["w"] = r.w;
        out["l"] = r.l;
        out["rotation_y"] = r.rotation_y;
        if (r.score) out["score"] = *r.score;
        return out;
    }, py::arg("line"));

    m.def("parse_config", &parse_config_text, py::arg("text"), py::arg("name") = "<config>",
          "Validates run-configuration text; raises on unknown keys");

    m.def("synth", [](const std::string& config_path, const std::string& out_dir) {
        RunConfig cfg = parse_config_file(config_path);
        cfg.out_dir = out_dir;
        cmd_synth(cfg);
    }, py::arg("config_path"), py::arg("out_dir"));

    m.def("init_checkpoint", [](const std::string& config_path, const std::string& out_path) {
        const RunConfig cfg = parse_config_file(config_path);
        init_params(cfg).save(out_path);
    }, py::arg("config_path"), py::arg("out_path"),
       "Writes an untrained, seeded parameter checkpoint");

    m.def("train", [](const std::string& config_path, const std::string& out_dir, long seed) {
        RunConfig cfg = parse_config_file(config_path);
        cfg.out_dir = out_dir;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        cmd_train(cfg);
    }, py::arg("config_path"), py::arg("out_dir"), py::arg("seed") = -1);

    m.def("track", [](const std::string& config_path, const std::string& checkpoint,
                      const std::string& out_dir) {
        RunConfig cfg = parse_config_file(config_path);
        cfg.checkpoint_path = checkpoint;
        cfg.out_dir = out_dir;
        cmd_track(cfg);
    }, py::arg("config_path"), py::arg("checkpoint"), py::arg("out_dir"));

    m.def("evaluate", [](const std::string& config_path, const std::string& gt_dir,
                         const std::string& results_dir, const std::string& forecasts_dir,
                         const std::string& out_dir) {
        RunConfig cfg = parse_config_file(config_path);
        cfg.gt_dir = gt_dir;
        cfg.results_dir = results_dir;
        cfg.forecasts_dir = forecasts_dir;
        cfg.out_dir = out_dir;
        const metrics::MetricReport report = cmd_evaluate(cfg);
        py::dict out;
        out["sAMOTA"] = report.samota;
        out["AMOTA"] = report.amota;
        out["AMOTP"] = report.amotp;
        out["MOTA"] = report.mota;
        out["MOTP"] = report.motp;
        out["IDS"] = report.ids;
        out["FRAG"] = report.frag;
        py::dict horizons;
        for (const auto& [h, fm] : report.per_horizon) {
            py::dict entry;
            entry["ADE"] = fm.ade;
            entry["FDE"] = fm.fde;
            entry["ASD"] = fm.asd;
            entry["FSD"] = fm.fsd;
            entry["cases"] = fm.cases;
            horizons[py::int_(h)] = entry;
        }
        out["horizons"] = horizons;
        return out;
    }, py::arg("config_path"), py::arg("gt_dir"), py::arg("results_dir") = "",
       py::arg("forecasts_dir") = "", py::arg("out_dir") = "out");
}
