#include "msfm/tracking.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "msfm/errors.hpp"

namespace msfm {
namespace {

Vec2 warp_point(const Mat3& h, const Vec2& x) {
    Vec3 y = h * Vec3(x.x(), x.y(), 1.0);
    if (std::abs(y.z()) < 1e-12) throw NumericError("homography maps point to infinity");
    return Vec2(y.x() / y.z(), y.y() / y.z());
}

double point_line_distance(const Vec2& x, const Vec2& a, const Vec2& b) {
    Vec2 d = b - a;
    double len = d.norm();
    if (len < 1e-12) return (x - a).norm();
    return std::abs(d.x() * (x.y() - a.y()) - d.y() * (x.x() - a.x())) / len;
}

struct DsuTracks {
    std::vector<int> parent;
    // root -> (frame -> segment) for the one-segment-per-frame rule
    std::vector<std::map<int, int>> frames;
    explicit DsuTracks(const std::vector<LineSegment2D>& segs) : parent(segs.size()) {
        std::iota(parent.begin(), parent.end(), 0);
        frames.resize(segs.size());
        for (size_t i = 0; i < segs.size(); ++i)
            frames[i][segs[i].frame_id] = static_cast<int>(i);
    }
    int find(int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); }
    bool try_unite(int a, int b) {
        int ra = find(a), rb = find(b);
        if (ra == rb) return true;  // already joined, consistent by invariant
        if (frames[ra].size() < frames[rb].size()) std::swap(ra, rb);
        for (const auto& [f, s] : frames[rb]) {
            auto it = frames[ra].find(f);
            if (it != frames[ra].end() && it->second != s) return false;
        }
        for (const auto& [f, s] : frames[rb]) frames[ra].emplace(f, s);
        frames[rb].clear();
        parent[rb] = ra;
        return true;
    }
};

}  // namespace

std::vector<std::pair<int, int>> candidate_pairs(const std::vector<int>& frame_ids,
                                                 const std::vector<Rotation>& rotations,
                                                 double max_angle_deg) {
    if (frame_ids.size() != rotations.size())
        throw Error("candidate_pairs: frame ids and rotations differ in size");
    const double max_angle = deg2rad(max_angle_deg);
    std::vector<std::pair<int, int>> pairs;
    for (size_t i = 0; i < frame_ids.size(); ++i)
        for (size_t j = i + 1; j < frame_ids.size(); ++j) {
            double c = rotations[i].cam_z_global().dot(rotations[j].cam_z_global());
            if (std::acos(std::clamp(c, -1.0, 1.0)) < max_angle)
                pairs.emplace_back(frame_ids[i], frame_ids[j]);
        }
    return pairs;
}

Mat3 pair_homography(const Rotation& r_i, const Rotation& r_j, const Intrinsics& K) {
    Mat3 h = K.K() * r_j.matrix() * r_i.matrix().transpose() * K.Kinv();
    return h * (std::sqrt(3.0) / h.norm());
}

Mat3 pair_homography_from_points(const std::vector<std::pair<Vec2, Vec2>>& matches) {
    if (matches.size() < 4) throw DataError("homography estimation needs >= 4 matches");
    // Hartley normalization on both sides
    auto normalize = [](const std::vector<Vec2>& pts) {
        Vec2 mean = Vec2::Zero();
        for (const auto& p : pts) mean += p;
        mean /= static_cast<double>(pts.size());
        double scale = 0.0;
        for (const auto& p : pts) scale += (p - mean).norm();
        scale = std::sqrt(2.0) * pts.size() / std::max(scale, 1e-12);
        Mat3 t;
        t << scale, 0, -scale * mean.x(), 0, scale, -scale * mean.y(), 0, 0, 1;
        return t;
    };
    std::vector<Vec2> src, dst;
    for (const auto& [a, b] : matches) {
        src.push_back(a);
        dst.push_back(b);
    }
    Mat3 ts = normalize(src), td = normalize(dst);
    Eigen::MatrixXd a(2 * matches.size(), 9);
    for (size_t k = 0; k < matches.size(); ++k) {
        Vec3 p = ts * Vec3(src[k].x(), src[k].y(), 1.0);
        Vec3 q = td * Vec3(dst[k].x(), dst[k].y(), 1.0);
        a.row(2 * k) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
        a.row(2 * k + 1) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
    Eigen::Matrix<double, 9, 1> hv = svd.matrixV().col(8);
    Mat3 hn;
    hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
    Mat3 h = td.inverse() * hn * ts;
    return h * (std::sqrt(3.0) / h.norm());
}

double segment_distance(const LineSegment2D& a, const LineSegment2D& b, const Mat3& h) {
    Vec2 ap = warp_point(h, a.p), aq = warp_point(h, a.q);
    double d = point_line_distance(ap, b.p, b.q);
    d = std::min(d, point_line_distance(aq, b.p, b.q));
    d = std::min(d, point_line_distance(b.p, ap, aq));
    d = std::min(d, point_line_distance(b.q, ap, aq));
    return d;
}

PairMatch match_pair(int frame_i, int frame_j, const std::vector<LineSegment2D>& segments,
                     const std::vector<int>& seg_idx_i, const std::vector<int>& seg_idx_j,
                     const Mat3& h, const Intrinsics& K, const PipelineConfig& cfg) {
    if (frame_i > frame_j) {
        // canonical order, then flip; keeps matching symmetric by construction
        PairMatch m = match_pair(frame_j, frame_i, segments, seg_idx_j, seg_idx_i, h.inverse(),
                                 K, cfg);
        PairMatch out;
        out.frame_i = frame_i;
        out.frame_j = frame_j;
        out.homography = h;
        out.distances = m.distances;
        for (const auto& [a, b] : m.matches) out.matches.emplace_back(b, a);
        return out;
    }

    PairMatch out;
    out.frame_i = frame_i;
    out.frame_j = frame_j;
    out.homography = h;

    const double max_dist = cfg.track_dist_frac * K.min_dim();
    const double max_angle = deg2rad(cfg.track_angle_deg);
    const int ni = static_cast<int>(seg_idx_i.size());
    const int nj = static_cast<int>(seg_idx_j.size());
    if (ni == 0 || nj == 0) return out;

    // pairwise gated distances
    Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(ni, nj, -1.0);
    for (int a = 0; a < ni; ++a) {
        const LineSegment2D& sa = segments[seg_idx_i[a]];
        if (!sa.label) continue;
        Vec2 wp = warp_point(h, sa.p), wq = warp_point(h, sa.q);
        Vec2 wd = (wq - wp).normalized();
        for (int b = 0; b < nj; ++b) {
            const LineSegment2D& sb = segments[seg_idx_j[b]];
            if (!sb.label || *sb.label != *sa.label) continue;
            double ca = std::abs(wd.dot(sb.direction()));
            if (std::acos(std::clamp(ca, 0.0, 1.0)) >= max_angle) continue;
            double d = segment_distance(sa, sb, h);
            if (d >= max_dist) continue;
            dist(a, b) = d;
        }
    }

    // mutual nearest, ties to the lower index
    std::vector<int> best_j(ni, -1), best_i(nj, -1);
    for (int a = 0; a < ni; ++a) {
        double best = std::numeric_limits<double>::infinity();
        for (int b = 0; b < nj; ++b)
            if (dist(a, b) >= 0 && dist(a, b) < best) {
                best = dist(a, b);
                best_j[a] = b;
            }
    }
    for (int b = 0; b < nj; ++b) {
        double best = std::numeric_limits<double>::infinity();
        for (int a = 0; a < ni; ++a)
            if (dist(a, b) >= 0 && dist(a, b) < best) {
                best = dist(a, b);
                best_i[b] = a;
            }
    }
    for (int a = 0; a < ni; ++a) {
        int b = best_j[a];
        if (b >= 0 && best_i[b] == a) {
            out.matches.emplace_back(seg_idx_i[a], seg_idx_j[b]);
            out.distances.push_back(dist(a, b));
        }
    }
    return out;
}

std::vector<LineTrack> form_tracks(const std::vector<PairMatch>& pair_matches,
                                   const std::vector<LineSegment2D>& segments) {
    struct Edge {
        double dist;
        int a, b;
    };
    std::vector<Edge> edges;
    for (const auto& pm : pair_matches)
        for (size_t k = 0; k < pm.matches.size(); ++k)
            edges.push_back({pm.distances[k], pm.matches[k].first, pm.matches[k].second});
    std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
        if (x.dist != y.dist) return x.dist < y.dist;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });

    DsuTracks dsu(segments);
    for (const auto& e : edges) dsu.try_unite(e.a, e.b);

    std::map<int, std::vector<int>> comps;
    for (size_t i = 0; i < segments.size(); ++i)
        comps[dsu.find(static_cast<int>(i))].push_back(static_cast<int>(i));

    std::vector<LineTrack> tracks;
    for (auto& [root, members] : comps) {
        if (members.size() < 2) continue;
        LineTrack t;
        if (!segments[members.front()].label)
            throw Error("form_tracks: matched segment without label");
        t.label = *segments[members.front()].label;
        for (int m : members) t.obs.emplace_back(segments[m].frame_id, m);
        std::sort(t.obs.begin(), t.obs.end());
        tracks.push_back(std::move(t));
    }
    std::sort(tracks.begin(), tracks.end(),
              [](const LineTrack& x, const LineTrack& y) { return x.obs.front() < y.obs.front(); });
    for (size_t i = 0; i < tracks.size(); ++i) {
        tracks[i].id = static_cast<int>(i);
        tracks[i].validate();
    }
    return tracks;
}

std::vector<LineTrack> track_segments(const std::vector<LineSegment2D>& segments,
                                      const std::vector<int>& frame_ids,
                                      const std::vector<Rotation>& rotations,
                                      const Intrinsics& K, const PipelineConfig& cfg) {
    std::map<int, std::vector<int>> per_frame;
    for (size_t i = 0; i < segments.size(); ++i)
        if (segments[i].label) per_frame[segments[i].frame_id].push_back(static_cast<int>(i));

    std::map<int, const Rotation*> rot_of;
    for (size_t i = 0; i < frame_ids.size(); ++i) rot_of[frame_ids[i]] = &rotations[i];

    std::vector<PairMatch> matches;
    for (const auto& [fi, fj] : candidate_pairs(frame_ids, rotations, cfg.track_z_deg)) {
        auto it_i = per_frame.find(fi), it_j = per_frame.find(fj);
        if (it_i == per_frame.end() || it_j == per_frame.end()) continue;
        Mat3 h = pair_homography(*rot_of.at(fi), *rot_of.at(fj), K);
        PairMatch pm = match_pair(fi, fj, segments, it_i->second, it_j->second, h, K, cfg);
        if (!pm.matches.empty()) matches.push_back(std::move(pm));
    }
    return form_tracks(matches, segments);
}

}  // namespace msfm
