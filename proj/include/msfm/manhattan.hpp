#pragma once

#include <vector>

#include "msfm/config.hpp"
#include "msfm/dataset.hpp"
#include "msfm/types.hpp"

namespace msfm {

// Unit direction candidates from a subdivided icosahedron. 5 subdivision
// levels give 10242 vertices; the six coordinate directions are exact
// vertices of this family.
struct Icosphere {
    std::vector<Vec3> vertices;
};

Icosphere build_icosphere(int subdivisions);

// Accumulates weights of all plane normals within the great-circle band
// |asin(n . d)| < band_rad of each candidate direction, then normalizes by
// the maximum (all zeros stay zero).
std::vector<double> vote_directions(const Icosphere& sphere, const std::vector<Vec3>& normals,
                                    const std::vector<double>& weights, double band_rad);

// Picks v_z as the best-voted candidate within the gravity cone (sign folded
// toward gravity), v_x as the best candidate within the orthogonal band, then
// orthonormalizes. Ties break toward the lower vertex index. The voted bin is
// only a seed: the grid quantizes to ~1.1 degrees and full-coverage scenes
// flatten the vote map into a plateau of the band radius around each axis, so
// each axis is re-fit as the least-squares direction of its supporting
// normals (smallest eigenvector of the weighted scatter). Pass the same
// normals and weights that produced the votes; with no support inside the
// band an axis keeps the raw bin direction.
ManhattanFrame extract_frame(const Icosphere& sphere, const std::vector<double>& votes,
                             const std::vector<Vec3>& normals, const std::vector<double>& weights,
                             const Vec3& gravity, const PipelineConfig& cfg);

// Convenience: interpretation-plane normals in the global frame plus length
// weights for every segment, using each segment's frame rotation.
void collect_plane_normals(const std::vector<LineSegment2D>& segments, const Dataset& data,
                           std::vector<Vec3>& normals, std::vector<double>& weights);

}  // namespace msfm
