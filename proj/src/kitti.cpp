#include "trackcast/kitti.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "trackcast/errors.hpp"

namespace trackcast::kitti {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& tok, std::size_t field, const std::string& file,
                    long line_no) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw ParseError(file, line_no,
                         "field " + std::to_string(field) + ": unparsable number '" + tok + "'");
    if (!std::isfinite(v))
        throw ParseError(file, line_no,
                         "field " + std::to_string(field) + ": non-finite value '" + tok + "'");
    return v;
}

int parse_int(const std::string& tok, std::size_t field, const std::string& file, long line_no) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0')
        throw ParseError(file, line_no,
                         "field " + std::to_string(field) + ": unparsable integer '" + tok + "'");
    return static_cast<int>(v);
}

// Fills everything after the (frame [, track_id], category) prefix.
void parse_box_fields(DetectionRecord& rec, const std::vector<std::string>& f, std::size_t off,
                      const std::string& file, long line_no) {
    rec.truncated = parse_double(f[off + 0], off + 0, file, line_no);
    rec.occluded = parse_int(f[off + 1], off + 1, file, line_no);
    rec.alpha = parse_double(f[off + 2], off + 2, file, line_no);
    for (int i = 0; i < 4; ++i)
        rec.bbox2d[i] = parse_double(f[off + 3 + static_cast<std::size_t>(i)],
                                     off + 3 + static_cast<std::size_t>(i), file, line_no);
    rec.h = parse_double(f[off + 7], off + 7, file, line_no);
    rec.w = parse_double(f[off + 8], off + 8, file, line_no);
    rec.l = parse_double(f[off + 9], off + 9, file, line_no);
    rec.x = parse_double(f[off + 10], off + 10, file, line_no);
    rec.y = parse_double(f[off + 11], off + 11, file, line_no);
    rec.z = parse_double(f[off + 12], off + 12, file, line_no);
    rec.rotation_y = wrap_angle(parse_double(f[off + 13], off + 13, file, line_no));
}

void format_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

bool is_skippable(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;  // blank
}

}  // namespace

double wrap_angle(double a) {
    const double two_pi = 2.0 * kPi;
    double w = a - two_pi * std::floor((a + kPi) / two_pi);
    if (w >= kPi) w -= two_pi;  // guards the floor rounding edge
    return w;
}

DetectionRecord parse_detection_line(const std::string& line, const std::string& file,
                                     long line_no) {
    const auto f = split_ws(line);
    // tracklet line minus the track id: frame category truncated occluded
    // alpha bbox(4) h w l x y z rotation_y [score]
    if (f.size() != 16 && f.size() != 17)
        throw ParseError(file, line_no,
                         "detection line has " + std::to_string(f.size()) +
                             " fields, expected 16 or 17");
    DetectionRecord rec;
    rec.frame = parse_int(f[0], 0, file, line_no);
    rec.category = f[1];
    parse_box_fields(rec, f, 2, file, line_no);
    if (f.size() == 17) rec.score = parse_double(f[16], 16, file, line_no);
    return rec;
}

TrackletRecord parse_tracklet_line(const std::string& line, const std::string& file,
                                   long line_no) {
    const auto f = split_ws(line);
    if (f.size() != 17 && f.size() != 18)
        throw ParseError(file, line_no,
                         "tracklet line has " + std::to_string(f.size()) +
                             " fields, expected 17 or 18");
    TrackletRecord rec;
    rec.frame = parse_int(f[0], 0, file, line_no);
    rec.track_id = parse_int(f[1], 1, file, line_no);
    rec.category = f[2];
    parse_box_fields(rec, f, 3, file, line_no);
    if (f.size() == 18) rec.score = parse_double(f[17], 17, file, line_no);
    return rec;
}

std::string serialize_tracklet(const TrackletRecord& rec) {
    if (!rec.score) throw Error("serialize: record in frame " + std::to_string(rec.frame) +
                                " has no score");
    std::string out;
    out += std::to_string(rec.frame);
    out += ' ';
    out += std::to_string(rec.track_id);
    out += ' ';
    out += rec.category;
    const double fields[] = {rec.truncated,
                             static_cast<double>(rec.occluded),
                             rec.alpha,
                             rec.bbox2d[0],
                             rec.bbox2d[1],
                             rec.bbox2d[2],
                             rec.bbox2d[3],
                             rec.h,
                             rec.w,
                             rec.l,
                             rec.x,
                             rec.y,
                             rec.z,
                             wrap_angle(rec.rotation_y),
                             *rec.score};
    for (double v : fields) {
        out += ' ';
        format_double(out, v);
    }
    return out;
}

std::string serialize_detection(const DetectionRecord& rec) {
    if (!rec.score) throw Error("serialize: detection in frame " + std::to_string(rec.frame) +
                                " has no score");
    std::string out;
    out += std::to_string(rec.frame);
    out += ' ';
    out += rec.category;
    const double fields[] = {rec.truncated,
                             static_cast<double>(rec.occluded),
                             rec.alpha,
                             rec.bbox2d[0],
                             rec.bbox2d[1],
                             rec.bbox2d[2],
                             rec.bbox2d[3],
                             rec.h,
                             rec.w,
                             rec.l,
                             rec.x,
                             rec.y,
                             rec.z,
                             wrap_angle(rec.rotation_y),
                             *rec.score};
    for (double v : fields) {
        out += ' ';
        format_double(out, v);
    }
    return out;
}

std::string serialize_results(const std::vector<TrackletRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        out += serialize_tracklet(rec);
        out += '\n';
    }
    return out;
}

TrackletSequence read_tracklet_file(const std::string& path, int sequence_id) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    TrackletSequence seq;
    seq.id = sequence_id;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_skippable(line)) continue;
        TrackletRecord rec = parse_tracklet_line(line, path, line_no);
        seq.frames[rec.frame].push_back(std::move(rec));
    }
    return seq;
}

DetectionSequence read_detection_file(const std::string& path, int sequence_id) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    DetectionSequence seq;
    seq.id = sequence_id;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_skippable(line)) continue;
        DetectionRecord rec = parse_detection_line(line, path, line_no);
        seq.frames[rec.frame].push_back(std::move(rec));
    }
    return seq;
}

LoadedSequence load_sequence(const std::string& label_path, const std::string& detection_path,
                             const std::string& category_filter) {
    LoadedSequence out;
    TrackletSequence raw_gt = read_tracklet_file(label_path);
    out.ground_truth.id = raw_gt.id;
    for (auto& [frame, records] : raw_gt.frames) {
        for (auto& rec : records) {
            if (rec.category == "DontCare") {
                DontCareRegion region;
                region.frame = frame;
                for (int i = 0; i < 4; ++i) region.bbox2d[i] = rec.bbox2d[i];
                out.dont_care.push_back(region);
            } else if (rec.category == category_filter) {
                out.ground_truth.frames[frame].push_back(std::move(rec));
            }
        }
    }
    DetectionSequence raw_det = read_detection_file(detection_path);
    out.detections.id = raw_det.id;
    for (auto& [frame, records] : raw_det.frames)
        for (auto& rec : records)
            if (rec.category == category_filter)
                out.detections.frames[frame].push_back(std::move(rec));
    return out;
}

void write_tracklet_file(const std::string& path, const std::vector<TrackletRecord>& records) {
    std::ofstream outfile(path);
    if (!outfile) throw IoError("cannot write " + path);
    outfile << serialize_results(records);
    if (!outfile) throw IoError("write failed: " + path);
}

std::string sequence_file_name(int sequence_id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d.txt", sequence_id);
    return buf;
}

}  // namespace trackcast::kitti
