#pragma once

#include <optional>
#include <vector>

#include "msfm/config.hpp"
#include "msfm/dataset.hpp"
#include "msfm/tracking.hpp"
#include "msfm/types.hpp"

namespace msfm {

enum class RelationKind { Junction = 0, Orthogonal = 1, Parallel = 2, Floor = 3 };

const char* relation_kind_name(RelationKind k);
RelationKind relation_kind_from_name(const std::string& s);

// A pairwise coplanarity constraint between two tracks, or the global floor
// relation (kind == Floor, frame_id == -1, members in floor_tracks).
struct CoplanarityRelation {
    RelationKind kind = RelationKind::Junction;
    int frame_id = -1;           // frame the evidence came from; -1 for floor
    int track_a = -1, track_b = -1;
    Axis normal_axis = Axis::X;  // Manhattan axis of the shared plane normal
    std::vector<int> floor_tracks;
};

// Per-frame normal statistics over the quad spanned by two segments.
struct QuadNormalStats {
    Vec3 mean_normal = Vec3::Zero();  // average of valid global-frame normals
    double mean_dev_rad = 0.0;        // mean angle to mean_normal
    int n_pixels = 0;                 // valid pixels sampled
};

// Pixel centers inside the convex hull of the four segment endpoints,
// normals rotated to the global frame. Zero-norm map pixels are skipped.
QuadNormalStats quad_normal_stats(const LineSegment2D& a, const LineSegment2D& b,
                                  const NormalMap& nm, const Rotation& rot);

// Floor support mask: pixels whose global-frame normal lies within
// `cone_deg` of `up`, dilated once with a 3x3 box.
std::vector<uint8_t> floor_mask(const NormalMap& nm, const Rotation& rot, const Vec3& up,
                                double cone_deg);

bool segment_in_mask(const LineSegment2D& s, const std::vector<uint8_t>& mask, int width,
                     int height);

// Runs all enabled detectors over the tracked segments. Pairwise relations are
// deduplicated across frames (one per unordered track pair per kind).
std::vector<CoplanarityRelation> detect_relations(
    const Dataset& data, const std::vector<LineSegment2D>& segments,
    const std::vector<LineTrack>& tracks, const std::vector<Rotation>& rotations,
    const ManhattanFrame& frame, const PipelineConfig& cfg);

}  // namespace msfm
