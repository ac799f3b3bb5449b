#include "msfm/coplanarity.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"

namespace msfm {
namespace {

constexpr int kQuadSampleCap = 20000;  // pixel budget per quad; larger quads are strided

// An endpoint sitting on the image border came from visibility clipping, not
// from a physical line ending, so it cannot witness a junction.
bool interior_endpoint(const Vec2& p, int width, int height) {
    const double m = 1.0;
    return p.x() > m && p.y() > m && p.x() < width - m && p.y() < height - m;
}

double endpoint_gap(const LineSegment2D& a, const LineSegment2D& b, int width, int height) {
    double d = std::numeric_limits<double>::infinity();
    for (const Vec2& pa : {a.p, a.q}) {
        if (!interior_endpoint(pa, width, height)) continue;
        for (const Vec2& pb : {b.p, b.q}) {
            if (!interior_endpoint(pb, width, height)) continue;
            d = std::min(d, (pa - pb).norm());
        }
    }
    return d;
}

// Andrew's monotone chain over the four endpoints.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vec2& a, const Vec2& b) { return a == b; }),
              pts.end());
    if (pts.size() < 3) return pts;
    auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
        return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
    };
    std::vector<Vec2> hull(2 * pts.size());
    size_t k = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    size_t lower = k + 1;
    for (size_t i = pts.size() - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

bool inside_hull(const std::vector<Vec2>& hull, const Vec2& p) {
    for (size_t i = 0; i < hull.size(); ++i) {
        const Vec2& a = hull[i];
        const Vec2& b = hull[(i + 1) % hull.size()];
        if ((b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x()) < 0)
            return false;
    }
    return true;
}

}  // namespace

const char* relation_kind_name(RelationKind k) {
    switch (k) {
        case RelationKind::Junction: return "junction";
        case RelationKind::Orthogonal: return "orthogonal";
        case RelationKind::Parallel: return "parallel";
        case RelationKind::Floor: return "floor";
    }
    throw Error("relation_kind_name: bad kind");
}

RelationKind relation_kind_from_name(const std::string& s) {
    if (s == "junction") return RelationKind::Junction;
    if (s == "orthogonal") return RelationKind::Orthogonal;
    if (s == "parallel") return RelationKind::Parallel;
    if (s == "floor") return RelationKind::Floor;
    throw DataError("unknown relation kind: " + s);
}

QuadNormalStats quad_normal_stats(const LineSegment2D& a, const LineSegment2D& b,
                                  const NormalMap& nm, const Rotation& rot) {
    QuadNormalStats st;
    auto hull = convex_hull({a.p, a.q, b.p, b.q});
    if (hull.size() < 3) return st;

    double x_lo = hull[0].x(), x_hi = x_lo, y_lo = hull[0].y(), y_hi = y_lo;
    for (const auto& v : hull) {
        x_lo = std::min(x_lo, v.x());
        x_hi = std::max(x_hi, v.x());
        y_lo = std::min(y_lo, v.y());
        y_hi = std::max(y_hi, v.y());
    }
    int ix0 = std::max(0, static_cast<int>(std::floor(x_lo)));
    int ix1 = std::min(nm.width - 1, static_cast<int>(std::ceil(x_hi)));
    int iy0 = std::max(0, static_cast<int>(std::floor(y_lo)));
    int iy1 = std::min(nm.height - 1, static_cast<int>(std::ceil(y_hi)));
    if (ix1 < ix0 || iy1 < iy0) return st;

    long long bbox = static_cast<long long>(ix1 - ix0 + 1) * (iy1 - iy0 + 1);
    int step = 1;
    if (bbox > kQuadSampleCap)
        step = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(bbox) / kQuadSampleCap)));

    const Mat3 rt = rot.matrix().transpose();
    Vec3 sum = Vec3::Zero();
    std::vector<Vec3> samples;
    for (int iy = iy0; iy <= iy1; iy += step)
        for (int ix = ix0; ix <= ix1; ix += step) {
            Vec2 c(ix + 0.5, iy + 0.5);
            if (!inside_hull(hull, c)) continue;
            Vec3 n = nm.at(ix, iy);
            if (n.squaredNorm() < 0.25) continue;  // invalid pixel
            Vec3 g = rt * n;
            samples.push_back(g);
            sum += g;
        }
    st.n_pixels = static_cast<int>(samples.size());
    if (samples.empty()) return st;
    if (sum.norm() < 1e-9) return QuadNormalStats{};  // fully cancelling normals
    st.mean_normal = sum.normalized();
    double dev = 0.0;
    for (const auto& g : samples)
        dev += std::acos(std::clamp(g.dot(st.mean_normal), -1.0, 1.0));
    st.mean_dev_rad = dev / static_cast<double>(samples.size());
    return st;
}

std::vector<uint8_t> floor_mask(const NormalMap& nm, const Rotation& rot, const Vec3& up,
                                double cone_deg) {
    const double max_angle = deg2rad(cone_deg);
    const Mat3 rt = rot.matrix().transpose();
    const Vec3 u = up.normalized();
    std::vector<uint8_t> mask(static_cast<size_t>(nm.width) * nm.height, 0);
    for (int iy = 0; iy < nm.height; ++iy)
        for (int ix = 0; ix < nm.width; ++ix) {
            Vec3 n = nm.at(ix, iy);
            if (n.squaredNorm() < 0.25) continue;
            Vec3 g = (rt * n).normalized();
            if (std::acos(std::clamp(g.dot(u), -1.0, 1.0)) < max_angle)
                mask[static_cast<size_t>(iy) * nm.width + ix] = 1;
        }
    // one 3x3 dilation
    std::vector<uint8_t> out(mask.size(), 0);
    for (int iy = 0; iy < nm.height; ++iy)
        for (int ix = 0; ix < nm.width; ++ix) {
            uint8_t v = 0;
            for (int dy = -1; dy <= 1 && !v; ++dy)
                for (int dx = -1; dx <= 1 && !v; ++dx) {
                    int x = ix + dx, y = iy + dy;
                    if (x < 0 || y < 0 || x >= nm.width || y >= nm.height) continue;
                    v = mask[static_cast<size_t>(y) * nm.width + x];
                }
            out[static_cast<size_t>(iy) * nm.width + ix] = v;
        }
    return out;
}

bool segment_in_mask(const LineSegment2D& s, const std::vector<uint8_t>& mask, int width,
                     int height) {
    const double len = s.length;
    const int steps = std::max(2, static_cast<int>(std::ceil(len * 2.0)));
    for (int k = 0; k <= steps; ++k) {
        Vec2 x = s.p + (s.q - s.p) * (static_cast<double>(k) / steps);
        // segments are clipped to the image, so samples leave the pixel grid
        // only by epsilon at the border
        int ix = std::clamp(static_cast<int>(std::floor(x.x())), 0, width - 1);
        int iy = std::clamp(static_cast<int>(std::floor(x.y())), 0, height - 1);
        if (!mask[static_cast<size_t>(iy) * width + ix]) return false;
    }
    return true;
}

std::vector<CoplanarityRelation> detect_relations(
    const Dataset& data, const std::vector<LineSegment2D>& segments,
    const std::vector<LineTrack>& tracks, const std::vector<Rotation>& rotations,
    const ManhattanFrame& frame, const PipelineConfig& cfg) {
    if (rotations.size() != data.frames.size())
        throw Error("detect_relations: rotations must parallel dataset frames");

    // frame id -> (track id, segment index) co-visible, sorted by track id
    std::map<int, std::vector<std::pair<int, int>>> per_frame;
    for (const auto& t : tracks)
        for (const auto& [f, s] : t.obs) per_frame[f].emplace_back(t.id, s);
    for (auto& [f, v] : per_frame) std::sort(v.begin(), v.end());

    const double junction_max = cfg.junction_dist_frac * data.intrinsics.min_dim();
    const double normal_max = deg2rad(cfg.coplanar_normal_deg);
    const double dev_max = deg2rad(cfg.coplanar_dev_deg);
    const int nm_w = data.intrinsics.width, nm_h = data.intrinsics.height;

    std::vector<CoplanarityRelation> rels;
    std::set<std::pair<int, int>> done_junction, done_orth, done_par;
    std::set<int> floor_tracks;

    std::map<int, Axis> label_of;
    for (const auto& t : tracks) label_of[t.id] = t.label;

    const bool need_maps = cfg.use_orthogonal || cfg.use_parallel || cfg.use_floor;

    for (const auto& [fid, vis] : per_frame) {
        int fidx = data.frame_index(fid);
        const Rotation& rot = rotations[fidx];
        NormalMap nm;
        if (need_maps) nm = data.load_normal_map(fidx);

        for (size_t a = 0; a < vis.size(); ++a) {
            for (size_t b = a + 1; b < vis.size(); ++b) {
                auto [ta, sa] = vis[a];
                auto [tb, sb] = vis[b];
                Axis la = label_of.at(ta), lb = label_of.at(tb);
                const LineSegment2D& seg_a = segments[sa];
                const LineSegment2D& seg_b = segments[sb];
                std::pair<int, int> key{ta, tb};

                if (la != lb) {
                    Axis third = third_axis(la, lb);
                    if (cfg.use_junction && !done_junction.count(key) &&
                        endpoint_gap(seg_a, seg_b, nm_w, nm_h) < junction_max) {
                        done_junction.insert(key);
                        rels.push_back({RelationKind::Junction, fid, ta, tb, third, {}});
                    }
                    if (cfg.use_orthogonal && !done_orth.count(key)) {
                        auto st = quad_normal_stats(seg_a, seg_b, nm, rot);
                        if (st.n_pixels > 0 &&
                            folded_angle(st.mean_normal, frame.axis(third)) < normal_max &&
                            st.mean_dev_rad < dev_max) {
                            done_orth.insert(key);
                            rels.push_back({RelationKind::Orthogonal, fid, ta, tb, third, {}});
                        }
                    }
                } else if (cfg.use_parallel && !done_par.count(key)) {
                    auto st = quad_normal_stats(seg_a, seg_b, nm, rot);
                    if (st.n_pixels > 0 && st.mean_dev_rad < dev_max) {
                        Axis c1 = axis_from_index((static_cast<int>(la) + 1) % 3);
                        Axis c2 = axis_from_index((static_cast<int>(la) + 2) % 3);
                        double a1 = folded_angle(st.mean_normal, frame.axis(c1));
                        double a2 = folded_angle(st.mean_normal, frame.axis(c2));
                        Axis pick = a1 <= a2 ? c1 : c2;
                        if (std::min(a1, a2) < normal_max) {
                            done_par.insert(key);
                            rels.push_back({RelationKind::Parallel, fid, ta, tb, pick, {}});
                        }
                    }
                }
            }
        }

        if (cfg.use_floor) {
            auto mask = floor_mask(nm, rot, -frame.vz, cfg.floor_vertical_deg);
            for (const auto& [tid, sidx] : vis)
                if (!floor_tracks.count(tid) &&
                    segment_in_mask(segments[sidx], mask, nm.width, nm.height))
                    floor_tracks.insert(tid);
        }
    }

    if (cfg.use_floor && floor_tracks.size() >= 2) {
        CoplanarityRelation fr;
        fr.kind = RelationKind::Floor;
        fr.frame_id = -1;
        fr.normal_axis = Axis::Z;
        fr.floor_tracks.assign(floor_tracks.begin(), floor_tracks.end());
        rels.push_back(std::move(fr));
    }

    std::sort(rels.begin(), rels.end(), [](const CoplanarityRelation& x,
                                           const CoplanarityRelation& y) {
        if (x.kind != y.kind) return static_cast<int>(x.kind) < static_cast<int>(y.kind);
        if (x.track_a != y.track_a) return x.track_a < y.track_a;
        if (x.track_b != y.track_b) return x.track_b < y.track_b;
        return x.frame_id < y.frame_id;
    });
    return rels;
}

}  // namespace msfm
