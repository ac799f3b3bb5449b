#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "msfm/dataset.hpp"
#include "msfm/state.hpp"
#include "msfm/synth.hpp"
#include "msfm/types.hpp"

namespace msfm {

struct ErrorStats {
    double mean = 0.0;
    double max = 0.0;
    double stddev = 0.0;
    int n = 0;
};

ErrorStats error_stats(const std::vector<double>& values);

// Best similarity `to ~ scale * rot * from + t` over corresponded points.
struct Similarity {
    double scale = 1.0;
    Mat3 rot = Mat3::Identity();
    Vec3 t = Vec3::Zero();
    Vec3 apply(const Vec3& p) const { return scale * (rot * p) + t; }
};
Similarity align_umeyama(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

// Assignment of estimated Manhattan axes to ground-truth axes: the signed
// permutation maximizing total alignment over the six permutations.
struct AxisMatch {
    std::array<int, 3> gt_index{0, 1, 2};
    std::array<double, 3> sign{1.0, 1.0, 1.0};
    double worst_angle_deg = 0.0;
};
AxisMatch match_axes(const ManhattanFrame& est, const ManhattanFrame& gt);

// Geodesic rotation errors in degrees. When `align_frame0` the estimate is
// right-multiplied by the frame-0 correction before comparing, removing the
// global-frame gauge that rotation refinement cannot observe.
std::vector<double> rotation_errors_deg(const std::vector<Rotation>& est,
                                        const std::vector<Rotation>& gt, bool align_frame0);

// Ground-truth line id per track by geometric vote under the true poses.
// Tracks without a confident majority are absent from the map.
std::map<int, int> map_tracks_to_gt_lines(const Dataset& data, const GroundTruth& gt,
                                          const std::vector<LineSegment2D>& segments,
                                          const std::vector<LineTrack>& tracks);

// Fraction of observations agreeing with their track's majority line.
double track_purity(const std::vector<LineTrack>& tracks,
                    const std::map<std::pair<int, int>, int>& obs_gt_line);

struct RelationScore {
    int detected = 0;
    int correct = 0;
    int gt_pairs = 0;  // detectable ground-truth pairs
    int recalled = 0;
    double precision() const { return detected ? static_cast<double>(correct) / detected : 1.0; }
    double recall() const { return gt_pairs ? static_cast<double>(recalled) / gt_pairs : 1.0; }
};

struct EvaluationReport {
    ErrorStats rot_before_deg, rot_after_deg;          // frame-0 aligned
    ErrorStats rot_before_raw_deg, rot_after_raw_deg;  // unaligned
    double frame_axis_worst_deg = 0.0;

    double translation_rmse_m = 0.0;
    double translation_rmse_frac = 0.0;  // of scene diameter
    double line_rmse_m = 0.0;
    ErrorStats depth_rel_error;

    std::map<std::string, RelationScore> relations;
    double track_purity_value = 1.0;

    ErrorStats reproj_before_px, reproj_after_px;
    double registered_ratio = 0.0;
    int n_components = 0;

    std::map<std::string, double> stage_seconds;  // filled by the driver
};

// Scores whatever stages are present in the state against the ground truth.
EvaluationReport evaluate_pipeline(const Dataset& data, const GroundTruth& gt,
                                   const PipelineState& st);

void save_report(const EvaluationReport& report, const std::filesystem::path& path);

}  // namespace msfm
