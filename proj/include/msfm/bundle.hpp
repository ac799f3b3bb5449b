#pragma once

#include <vector>

#include "msfm/config.hpp"
#include "msfm/coplanarity.hpp"
#include "msfm/dataset.hpp"
#include "msfm/linear_sfm.hpp"
#include "msfm/tracking.hpp"
#include "msfm/types.hpp"

namespace msfm {

// A 3D line in two-parameter form: point Lambda with Lambda . axis_dir == 0,
// direction fixed to a Manhattan axis of the refined frame.
struct Line3D {
    int track_id = -1;
    Axis axis = Axis::X;
    Vec3 point = Vec3::Zero();  // closest point of the line to the origin
};

struct BaCostEntry {
    int phase = 0;
    int iteration = 0;
    double cost = 0.0;
};

struct BundleResult {
    std::vector<int> frame_ids;
    std::vector<Rotation> rotations;    // refined, parallel to frame_ids
    std::vector<Vec3> translations;     // camera centers, parallel to frame_ids
    Intrinsics intrinsics;              // refined shared intrinsics
    ManhattanFrame frame;               // axis directions used for the lines
    std::vector<Line3D> lines;          // one per registered track
    double initial_cost = 0.0;
    double final_cost = 0.0;
    double mean_reproj_px = 0.0;        // unsigned mean endpoint distance
    int iterations = 0;                 // accepted LM steps over all phases
    std::vector<BaCostEntry> cost_log;  // cost after each accepted step
};

// One line per registered track: perpendicular least-squares fit of the
// Manhattan-direction line through the reconstructed observation midpoints,
// reported as the closest point of that line to the origin.
std::vector<Line3D> init_lines_from_linear(const Dataset& data,
                                           const std::vector<LineSegment2D>& segments,
                                           const std::vector<LineTrack>& tracks,
                                           const std::vector<Rotation>& rotations,
                                           const ManhattanFrame& frame, const SfmSolution& init);

// Signed reprojection residual: mean of the signed perpendicular distances of
// the two observed endpoints to the projected infinite line, in pixels.
// Returns false when no forward anchor pair exists and the observation has to
// be dropped. `same_side` reports whether both endpoints lie on one side of the
// projected line; endpoints within 1e-3 px of it count as on-line, so a sign
// flip inside numerical noise is not a straddle.
struct ReprojJacobian {
    Eigen::Matrix<double, 1, 3> d_point = Eigen::Matrix<double, 1, 3>::Zero();
    Eigen::Matrix<double, 1, 3> d_center = Eigen::Matrix<double, 1, 3>::Zero();
    Eigen::Matrix<double, 1, 3> d_rotation = Eigen::Matrix<double, 1, 3>::Zero();
    Eigen::Matrix<double, 1, 4> d_intrinsics = Eigen::Matrix<double, 1, 4>::Zero();
};
bool reprojection_residual(const Line3D& line, const ManhattanFrame& frame,
                           const LineSegment2D& seg, const Intrinsics& K, const Rotation& rot,
                           const Vec3& center, double& out, bool* same_side = nullptr,
                           ReprojJacobian* jac = nullptr);

// Evaluated reprojection error of one observation: unsigned mean distance of
// the two observed endpoints to the projected infinite line. NaN when the
// observation cannot be projected.
double reprojection_error_px(const Line3D& line, const ManhattanFrame& frame,
                             const LineSegment2D& seg, const Intrinsics& K, const Rotation& rot,
                             const Vec3& center);

// Three-phase damped refinement: phase 1 frees lines and camera centers,
// phase 2 adds rotations, phase 3 adds shared intrinsics. `max_phase` stops
// the schedule early.
BundleResult bundle_adjust(const Dataset& data, const std::vector<LineSegment2D>& segments,
                           const std::vector<LineTrack>& tracks,
                           const std::vector<CoplanarityRelation>& rels,
                           const std::vector<Rotation>& rotations, const ManhattanFrame& frame,
                           const SfmSolution& init, const PipelineConfig& cfg, int max_phase = 3);

}  // namespace msfm
