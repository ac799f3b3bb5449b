#include "msfm/manhattan.hpp"

#include <algorithm>
#include <map>

#include <Eigen/Eigenvalues>

#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"

namespace msfm {
namespace {

int midpoint(std::vector<Vec3>& verts, std::map<std::pair<int, int>, int>& cache, int a, int b) {
    auto key = std::minmax(a, b);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    int idx = static_cast<int>(verts.size());
    verts.push_back((verts[a] + verts[b]).normalized());
    cache.emplace(key, idx);
    return idx;
}

// Least-squares axis through the normals voting for the seed direction: the
// smallest eigenvector of the weighted scatter. Two passes so the support set
// settles once the axis moves off the bin center.
Vec3 refine_axis(const Vec3& seed, const std::vector<Vec3>& normals,
                 const std::vector<double>& weights, double band_rad) {
    const double sin_band = std::sin(band_rad);
    Vec3 axis = seed;
    for (int pass = 0; pass < 2; ++pass) {
        Mat3 m = Mat3::Zero();
        double wsum = 0.0;
        for (size_t i = 0; i < normals.size(); ++i) {
            if (std::abs(normals[i].dot(axis)) >= sin_band) continue;
            m += weights[i] * normals[i] * normals[i].transpose();
            wsum += weights[i];
        }
        if (wsum <= 0.0) return seed;
        Eigen::SelfAdjointEigenSolver<Mat3> es(m);
        const Vec3 v = es.eigenvectors().col(0);
        axis = v.dot(axis) < 0 ? -v : v;
    }
    return axis;
}

}  // namespace

Icosphere build_icosphere(int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {
        {-1, t, 0}, {1, t, 0},   {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::pair<int, int>, int> cache;
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int ab = midpoint(verts, cache, f[0], f[1]);
            int bc = midpoint(verts, cache, f[1], f[2]);
            int ca = midpoint(verts, cache, f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    return Icosphere{std::move(verts)};
}

std::vector<double> vote_directions(const Icosphere& sphere, const std::vector<Vec3>& normals,
                                    const std::vector<double>& weights, double band_rad) {
    if (normals.size() != weights.size())
        throw Error("vote_directions: normals and weights differ in size");
    const double sin_band = std::sin(band_rad);
    std::vector<double> votes(sphere.vertices.size(), 0.0);
    for (size_t v = 0; v < sphere.vertices.size(); ++v) {
        const Vec3& d = sphere.vertices[v];
        double acc = 0.0;
        for (size_t s = 0; s < normals.size(); ++s)
            if (std::abs(normals[s].dot(d)) < sin_band) acc += weights[s];
        votes[v] = acc;
    }
    double top = *std::max_element(votes.begin(), votes.end());
    if (top > 0)
        for (double& v : votes) v /= top;
    return votes;
}

ManhattanFrame extract_frame(const Icosphere& sphere, const std::vector<double>& votes,
                             const std::vector<Vec3>& normals, const std::vector<double>& weights,
                             const Vec3& gravity, const PipelineConfig& cfg) {
    if (votes.size() != sphere.vertices.size())
        throw Error("extract_frame: vote vector size mismatch");
    if (normals.size() != weights.size())
        throw Error("extract_frame: normals and weights differ in size");
    const Vec3 g = gravity.normalized();
    const double cone = deg2rad(cfg.gravity_cone_deg);
    const double band = deg2rad(cfg.orthogonal_band_deg);

    int best_z = -1;
    double best_zv = -1.0;
    for (size_t i = 0; i < votes.size(); ++i) {
        if (folded_angle(sphere.vertices[i], g) > cone) continue;
        if (votes[i] > best_zv) {
            best_zv = votes[i];
            best_z = static_cast<int>(i);
        }
    }
    if (best_z < 0) throw NumericError("extract_frame: no candidate inside the gravity cone");
    Vec3 vz = refine_axis(sphere.vertices[best_z], normals, weights, cfg.vote_band_rad);
    if (vz.dot(g) < 0) vz = -vz;

    int best_x = -1;
    double best_xv = -1.0;
    for (size_t i = 0; i < votes.size(); ++i) {
        if (std::abs(folded_angle(sphere.vertices[i], vz) - kPi / 2) > band) continue;
        if (votes[i] > best_xv) {
            best_xv = votes[i];
            best_x = static_cast<int>(i);
        }
    }
    if (best_x < 0)
        throw NumericError("extract_frame: no candidate orthogonal to the vertical axis");

    Vec3 vx = refine_axis(sphere.vertices[best_x], normals, weights, cfg.vote_band_rad);
    vx = (vx - vx.dot(vz) * vz).normalized();
    vx = canonicalize_sign(vx);
    ManhattanFrame frame{vx, vz.cross(vx), vz};
    frame.validate();
    return frame;
}

void collect_plane_normals(const std::vector<LineSegment2D>& segments, const Dataset& data,
                           std::vector<Vec3>& normals, std::vector<double>& weights) {
    normals.clear();
    weights.clear();
    normals.reserve(segments.size());
    weights.reserve(segments.size());
    for (const auto& s : segments) {
        normals.push_back(interpretation_plane(s, data.intrinsics, data.rotation_of(s.frame_id)));
        weights.push_back(s.length);
    }
}

}  // namespace msfm
