#pragma once

#include <vector>

#include <Eigen/Sparse>

#include "msfm/config.hpp"
#include "msfm/coplanarity.hpp"
#include "msfm/tracking.hpp"
#include "msfm/types.hpp"

namespace msfm {

// Result of the linear initialization. Depths are per (track, observation)
// along rays through segment midpoints; translations are camera centers in
// the global (Manhattan-aligned, gravity z-up) frame.
struct SfmSolution {
    std::vector<int> frame_ids;          // frames of the solved component, ascending
    std::vector<Vec3> translations;      // parallel to frame_ids
    std::vector<int> track_ids;          // tracks of the solved component, ascending
    std::vector<std::vector<double>> depths;  // [track][obs] midpoint depths
    int n_components = 0;                // constraint-graph component count
    double registered_ratio = 0.0;       // frames in largest component / frames with tracks
    double kkt_stationarity = 0.0;       // max |grad_free|, bound-consistency included
    double kkt_complementarity = 0.0;    // max |mu_i * (lambda_i - eps)|
};

struct ConstraintSystem {
    // Sparse least-squares rows over x = [lambda...; t_1..t_{n-1} (t_0 fixed
    // at 0)]. The soft scale gauge (mean depth = 1, weighted) touches every
    // lambda, so it lives in a separate dense row and never densifies the
    // normal matrix.
    std::vector<Eigen::Triplet<double>> triplets;
    std::vector<double> rhs;
    Eigen::RowVectorXd scale_row;  // size n_lambda + n_t when rows_scale == 1
    double scale_rhs = 0.0;
    int n_rows = 0;  // sparse rows only
    int n_lambda = 0;
    int n_t = 0;  // free translation scalars (3 * (n_frames - 1))
    // Bookkeeping for tests and reporting.
    int rows_colinearity = 0, rows_coplanar = 0, rows_floor = 0, rows_scale = 0;
    std::vector<int> lambda_offset;  // per track index into x
};

// Connected components of the constraint graph (frames + tracks as nodes,
// observations and pairwise relations as edges). Returns one sorted list of
// frame ids per component, largest first.
std::vector<std::vector<int>> constraint_components(const std::vector<LineTrack>& tracks,
                                                    const std::vector<CoplanarityRelation>& rels,
                                                    bool use_floor);

ConstraintSystem assemble_system(const Dataset& data, const std::vector<LineSegment2D>& segments,
                                 const std::vector<LineTrack>& tracks,
                                 const std::vector<CoplanarityRelation>& rels,
                                 const std::vector<Rotation>& rotations,
                                 const ManhattanFrame& frame, const std::vector<int>& comp_frames,
                                 const PipelineConfig& cfg);

SfmSolution solve_linear_sfm(const Dataset& data, const std::vector<LineSegment2D>& segments,
                             const std::vector<LineTrack>& tracks,
                             const std::vector<CoplanarityRelation>& rels,
                             const std::vector<Rotation>& rotations, const ManhattanFrame& frame,
                             const PipelineConfig& cfg);

}  // namespace msfm
