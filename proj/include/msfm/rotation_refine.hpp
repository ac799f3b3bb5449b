#pragma once

#include <optional>
#include <vector>

#include "msfm/config.hpp"
#include "msfm/dataset.hpp"
#include "msfm/types.hpp"

namespace msfm {

// Labels a segment with the Manhattan axis whose direction is orthogonal to
// the segment's interpretation plane within (90 - min_angle): exactly one
// axis must qualify, otherwise nullopt.
std::optional<Axis> classify_segment(const LineSegment2D& seg, const Intrinsics& K,
                                     const Rotation& rot, const ManhattanFrame& frame,
                                     double min_angle_deg);

// Applies classify_segment to every segment in place; returns labeled count.
int classify_segments(std::vector<LineSegment2D>& segs, const Intrinsics& K,
                      const std::vector<int>& frame_ids, const std::vector<Rotation>& rots,
                      const ManhattanFrame& frame, double min_angle_deg);

struct RefineResult {
    std::vector<int> frame_ids;
    std::vector<Rotation> rotations;
    ManhattanFrame frame;  // re-extracted under the refined rotations
    int outer_iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    int n_labeled = 0;
    // cost after each accepted inner step, one list per outer iteration
    // (labels are fixed within a list, so each list is non-increasing)
    std::vector<std::vector<double>> cost_history;
};

// Alternates segment classification with damped Gauss-Newton over all
// rotations (first frame pinned as the gauge) and re-extracts the Manhattan
// frame from the refined rotations after each round, so the axes settle into
// the pinned frame's gauge. The data term wants each labeled segment's
// interpretation plane orthogonal to its axis; the smoothness term holds
// relative rotations of neighboring frames (z-axes within neighbor_z_deg at
// the initial estimates) near their initial values, weighted by
// lambda_smooth. Segment labels are updated in place.
RefineResult refine_rotations(std::vector<LineSegment2D>& segs, const Dataset& data,
                              const ManhattanFrame& frame, const PipelineConfig& cfg);

}  // namespace msfm
