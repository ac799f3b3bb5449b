#include "msfm/preprocess.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "msfm/errors.hpp"

namespace msfm {
namespace {

double endpoint_gap(const LineSegment2D& a, const LineSegment2D& b) {
    double d = (a.p - b.p).norm();
    d = std::min(d, (a.p - b.q).norm());
    d = std::min(d, (a.q - b.p).norm());
    d = std::min(d, (a.q - b.q).norm());
    return d;
}

double direction_angle(const LineSegment2D& a, const LineSegment2D& b) {
    double c = std::abs(a.direction().dot(b.direction()));
    return std::acos(std::clamp(c, 0.0, 1.0));
}

struct Dsu {
    std::vector<int> parent;
    explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Length-weighted axial mean: top eigenvector of sum(w * d d^T).
Vec2 mean_direction(const std::vector<const LineSegment2D*>& group) {
    Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
    for (const auto* s : group) {
        Vec2 d = s->direction();
        m += s->length * d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
    Vec2 d = es.eigenvectors().col(1);  // largest eigenvalue last
    if (d.x() < 0 || (d.x() == 0 && d.y() < 0)) d = -d;
    return d;
}

void canonical_endpoints(LineSegment2D& s) {
    if (s.q.x() < s.p.x() || (s.q.x() == s.p.x() && s.q.y() < s.p.y())) std::swap(s.p, s.q);
}

bool segment_less(const LineSegment2D& a, const LineSegment2D& b) {
    if (a.p.x() != b.p.x()) return a.p.x() < b.p.x();
    if (a.p.y() != b.p.y()) return a.p.y() < b.p.y();
    if (a.q.x() != b.q.x()) return a.q.x() < b.q.x();
    return a.q.y() < b.q.y();
}

}  // namespace

std::vector<LineSegment2D> merge_segments(const std::vector<LineSegment2D>& segs,
                                          const Intrinsics& K, const PipelineConfig& cfg) {
    if (segs.empty()) return {};
    const int frame = segs.front().frame_id;
    for (const auto& s : segs)
        if (s.frame_id != frame) throw Error("merge_segments: mixed frame ids");

    const double max_angle = deg2rad(cfg.merge_angle_deg);
    const double max_gap = cfg.merge_gap_frac * K.min_dim();
    const int n = static_cast<int>(segs.size());

    Dsu dsu(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (direction_angle(segs[i], segs[j]) < max_angle &&
                endpoint_gap(segs[i], segs[j]) < max_gap)
                dsu.unite(i, j);

    std::map<int, std::vector<const LineSegment2D*>> groups;
    for (int i = 0; i < n; ++i) groups[dsu.find(i)].push_back(&segs[i]);

    std::vector<LineSegment2D> out;
    out.reserve(groups.size());
    for (auto& [root, group] : groups) {
        if (group.size() == 1) {
            out.push_back(*group.front());
            continue;
        }
        Vec2 dir = mean_direction(group);
        double wsum = 0.0;
        Vec2 anchor = Vec2::Zero();
        for (const auto* s : group) {
            anchor += s->length * s->midpoint();
            wsum += s->length;
        }
        anchor /= wsum;
        double t_lo = std::numeric_limits<double>::infinity(), t_hi = -t_lo;
        for (const auto* s : group)
            for (const Vec2& e : {s->p, s->q}) {
                double t = dir.dot(e - anchor);
                t_lo = std::min(t_lo, t);
                t_hi = std::max(t_hi, t);
            }
        out.push_back(LineSegment2D::make(frame, anchor + t_lo * dir, anchor + t_hi * dir));
    }
    return out;
}

std::vector<LineSegment2D> filter_short(const std::vector<LineSegment2D>& segs,
                                        const Intrinsics& K, const PipelineConfig& cfg) {
    const double min_len = cfg.min_length_frac * K.min_dim();
    std::vector<LineSegment2D> out;
    out.reserve(segs.size());
    for (const auto& s : segs)
        if (s.length >= min_len) out.push_back(s);
    return out;
}

std::vector<LineSegment2D> preprocess_segments(const std::vector<LineSegment2D>& raw,
                                               const Intrinsics& K, const PipelineConfig& cfg) {
    std::map<int, std::vector<LineSegment2D>> by_frame;
    for (const auto& s : raw) by_frame[s.frame_id].push_back(s);

    std::vector<LineSegment2D> out;
    out.reserve(raw.size());
    for (auto& [frame, segs] : by_frame) {
        auto merged = filter_short(merge_segments(segs, K, cfg), K, cfg);
        for (auto& s : merged) canonical_endpoints(s);
        std::sort(merged.begin(), merged.end(), segment_less);
        out.insert(out.end(), merged.begin(), merged.end());
    }
    return out;
}

}  // namespace msfm
