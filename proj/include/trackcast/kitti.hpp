#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace trackcast::kitti {

// One 3D box observation in one frame, KITTI tracking field semantics.
// dims are (h, w, l) in file order; center is the bottom-face center in
// camera coordinates.
struct DetectionRecord {
    int frame = 0;
    std::string category;
    double truncated = 0;
    int occluded = 0;
    double alpha = 0;
    double bbox2d[4] = {0, 0, 0, 0};  // left, top, right, bottom (pixels)
    double h = 0, w = 0, l = 0;       // meters
    double x = 0, y = 0, z = 0;       // camera coordinates, meters
    double rotation_y = 0;            // radians, normalized into [-pi, pi)
    std::optional<double> score;
};

struct TrackletRecord : DetectionRecord {
    int track_id = -1;  // -1 only for DontCare ground truth
};

// 2D image region whose unmatched predictions are not penalized.
struct DontCareRegion {
    int frame = 0;
    double bbox2d[4] = {0, 0, 0, 0};
};

template <typename Record>
struct SequenceOf {
    int id = 0;
    // frame index -> records of that frame; iteration is frame-ascending.
    std::map<int, std::vector<Record>> frames;

    bool empty() const { return frames.empty(); }
    std::size_t record_count() const {
        std::size_t n = 0;
        for (const auto& [_, v] : frames) n += v.size();
        return n;
    }
};

using DetectionSequence = SequenceOf<DetectionRecord>;
using TrackletSequence = SequenceOf<TrackletRecord>;

struct LoadedSequence {
    TrackletSequence ground_truth;
    DetectionSequence detections;
    std::vector<DontCareRegion> dont_care;
};

// Wraps into [-pi, pi).
double wrap_angle(double a);

// Parses one whitespace-separated line. Detections carry 16 fields plus an
// optional score; tracklets insert the track id after the frame (17/18
// fields). Malformed lines throw ParseError with file and 1-based line
// context.
DetectionRecord parse_detection_line(const std::string& line, const std::string& file = "",
                                     long line_no = 0);
TrackletRecord parse_tracklet_line(const std::string& line, const std::string& file = "",
                                   long line_no = 0);

// One line per record, KITTI tracking field order, floats rendered with 17
// significant digits so parse(serialize(x)) reproduces x exactly.
// rotation_y is normalized on the way out. Missing scores throw.
std::string serialize_tracklet(const TrackletRecord& rec);
std::string serialize_detection(const DetectionRecord& rec);
std::string serialize_results(const std::vector<TrackletRecord>& records);

// Reads a whole file of tracklets (ground truth / results). Blank lines and
// '#' comments are ignored; anything else either parses or throws.
TrackletSequence read_tracklet_file(const std::string& path, int sequence_id = 0);
DetectionSequence read_detection_file(const std::string& path, int sequence_id = 0);

// Loads labels and detections for one sequence, keeping only `category`
// records (case-sensitive exact match). DontCare regions are split out of
// the ground truth for metric exclusion.
LoadedSequence load_sequence(const std::string& label_path, const std::string& detection_path,
                             const std::string& category_filter);

void write_tracklet_file(const std::string& path, const std::vector<TrackletRecord>& records);

// "%04d.txt"
std::string sequence_file_name(int sequence_id);

}  // namespace trackcast::kitti
