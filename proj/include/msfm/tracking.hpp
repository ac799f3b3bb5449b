#pragma once

#include <vector>

#include "msfm/config.hpp"
#include "msfm/types.hpp"

namespace msfm {

// One physical 3D line observed across frames. Observations reference
// segments by (frame_id, index into the pipeline's segment array).
struct LineTrack {
    int id = -1;
    Axis label = Axis::X;
    std::vector<std::pair<int, int>> obs;  // (frame_id, segment index), frame ids distinct

    void validate() const {
        if (obs.size() < 2) throw NumericError("track: needs >= 2 observations");
        for (size_t i = 1; i < obs.size(); ++i)
            if (obs[i].first <= obs[i - 1].first)
                throw NumericError("track: frame ids must be strictly increasing");
    }
};

// Matches between one frame pair, one-to-one by construction.
struct PairMatch {
    int frame_i = -1, frame_j = -1;
    std::vector<std::pair<int, int>> matches;  // (segment index in i, segment index in j)
    std::vector<double> distances;             // parallel to matches
    Mat3 homography;                           // pixel i -> pixel j
};

// All unordered frame pairs whose camera z-axes differ by less than max_angle.
std::vector<std::pair<int, int>> candidate_pairs(const std::vector<int>& frame_ids,
                                                 const std::vector<Rotation>& rotations,
                                                 double max_angle_deg);

// Rotation-induced homography K R_j R_i^T K^-1, Frobenius-normalized to sqrt(3).
Mat3 pair_homography(const Rotation& r_i, const Rotation& r_j, const Intrinsics& K);

// DLT + iterative reweighting from >= 4 point correspondences (pixel i, pixel j).
Mat3 pair_homography_from_points(const std::vector<std::pair<Vec2, Vec2>>& matches);

// Minimum of the four endpoint-to-infinite-line distances after warping `a`
// into b's frame by H.
double segment_distance(const LineSegment2D& a, const LineSegment2D& b, const Mat3& h);

// Mutual-nearest matching of same-label segments under distance and direction
// thresholds. `seg_idx_i/j` index into `segments`.
PairMatch match_pair(int frame_i, int frame_j, const std::vector<LineSegment2D>& segments,
                     const std::vector<int>& seg_idx_i, const std::vector<int>& seg_idx_j,
                     const Mat3& h, const Intrinsics& K, const PipelineConfig& cfg);

// Union of all pair matches into tracks; conflicting components are split by
// dropping largest-distance edges first (Kruskal order). Singletons dropped.
std::vector<LineTrack> form_tracks(const std::vector<PairMatch>& pair_matches,
                                   const std::vector<LineSegment2D>& segments);

// Full tracking stage: candidate pairs, homographies, matching, track formation.
std::vector<LineTrack> track_segments(const std::vector<LineSegment2D>& segments,
                                      const std::vector<int>& frame_ids,
                                      const std::vector<Rotation>& rotations,
                                      const Intrinsics& K, const PipelineConfig& cfg);

}  // namespace msfm
