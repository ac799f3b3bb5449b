#include "msfm/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <Eigen/Dense>

#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"

namespace msfm {
namespace {

constexpr double kMinAnchorDepth = 1e-6;
constexpr double kMuInit = 1e-4;
constexpr double kMuMax = 1e10;
constexpr double kRelDecrease = 1e-10;

// Picks two line parameters whose points lie in front of the camera. Default
// anchors are s = 0 and s = 1; when either falls behind, anchors are moved
// along the direction to exact depths 0.5 and 1.5. The projected infinite
// line does not depend on the choice, so the anchors are treated as constants
// when differentiating.
bool pick_anchors(const Vec3& point, const Vec3& axis_dir, const Rotation& rot, const Vec3& center,
                  double& s0, double& s1) {
    const Vec3 rz = rot.cam_z_global();
    const double bz = rz.dot(point - center);
    const double dz = rz.dot(axis_dir);
    s0 = 0.0;
    s1 = 1.0;
    if (bz > kMinAnchorDepth && bz + dz > kMinAnchorDepth) return true;
    if (std::abs(dz) < 1e-12) return false;  // constant depth, entirely behind
    s0 = (0.5 - bz) / dz;
    s1 = (1.5 - bz) / dz;
    return true;
}

}  // namespace

bool reprojection_residual(const Line3D& line, const ManhattanFrame& frame,
                           const LineSegment2D& seg, const Intrinsics& K, const Rotation& rot,
                           const Vec3& center, double& out, bool* same_side, ReprojJacobian* jac) {
    const Vec3 a = frame.axis(line.axis);
    double s0, s1;
    if (!pick_anchors(line.point, a, rot, center, s0, s1)) return false;
    const Mat3 kr = K.K() * rot.matrix();
    const Vec3 u0 = line.point + s0 * a - center;
    const Vec3 u1 = line.point + s1 * a - center;
    const Vec3 m0 = kr * u0;
    const Vec3 m1 = kr * u1;
    const Vec3 l = m0.cross(m1);
    const double rho2 = l[0] * l[0] + l[1] * l[1];
    // anchors projecting onto one pixel, or an image line at infinity
    if (l.squaredNorm() <= 1e-24 * m0.squaredNorm() * m1.squaredNorm()) return false;
    if (rho2 <= 1e-24 * l.squaredNorm()) return false;
    const double rho = std::sqrt(rho2);
    const Vec3 xp(seg.p.x(), seg.p.y(), 1.0);
    const Vec3 xq(seg.q.x(), seg.q.y(), 1.0);
    const double np = l.dot(xp);
    const double nq = l.dot(xq);
    out = 0.5 * (np + nq) / rho;
    if (same_side)
        *same_side = np * nq >= 0.0 || std::max(std::abs(np), std::abs(nq)) <= 1e-3 * rho;
    if (jac) {
        Eigen::RowVector3d drdl = 0.5 * (xp + xq).transpose() / rho;
        drdl -= (0.5 * (np + nq) / (rho2 * rho)) * Eigen::RowVector3d(l[0], l[1], 0.0);
        const Mat3 dl_dm0 = -skew(m1);
        const Mat3 dl_dm1 = skew(m0);
        jac->d_point = drdl * ((dl_dm0 + dl_dm1) * kr);
        jac->d_center = -jac->d_point;
        jac->d_rotation = drdl * (dl_dm0 * (-kr) * skew(u0) + dl_dm1 * (-kr) * skew(u1));
        const Vec3 y0 = rot.matrix() * u0;
        const Vec3 y1 = rot.matrix() * u1;
        Eigen::Matrix<double, 3, 4> d0 = Eigen::Matrix<double, 3, 4>::Zero();
        Eigen::Matrix<double, 3, 4> d1 = Eigen::Matrix<double, 3, 4>::Zero();
        d0(0, 0) = y0[0], d0(1, 1) = y0[1], d0(0, 2) = y0[2], d0(1, 3) = y0[2];
        d1(0, 0) = y1[0], d1(1, 1) = y1[1], d1(0, 2) = y1[2], d1(1, 3) = y1[2];
        jac->d_intrinsics = drdl * (dl_dm0 * d0 + dl_dm1 * d1);
    }
    return std::isfinite(out);
}

double reprojection_error_px(const Line3D& line, const ManhattanFrame& frame,
                             const LineSegment2D& seg, const Intrinsics& K, const Rotation& rot,
                             const Vec3& center) {
    const Vec3 a = frame.axis(line.axis);
    double s0, s1;
    if (!pick_anchors(line.point, a, rot, center, s0, s1))
        return std::numeric_limits<double>::quiet_NaN();
    const Mat3 kr = K.K() * rot.matrix();
    const Vec3 m0 = kr * (line.point + s0 * a - center);
    const Vec3 m1 = kr * (line.point + s1 * a - center);
    const Vec3 l = m0.cross(m1);
    const double rho = std::hypot(l[0], l[1]);
    if (l.squaredNorm() <= 1e-24 * m0.squaredNorm() * m1.squaredNorm() ||
        rho * rho <= 1e-24 * l.squaredNorm())
        return std::numeric_limits<double>::quiet_NaN();
    const double dp = l.dot(Vec3(seg.p.x(), seg.p.y(), 1.0)) / rho;
    const double dq = l.dot(Vec3(seg.q.x(), seg.q.y(), 1.0)) / rho;
    return 0.5 * (std::abs(dp) + std::abs(dq));
}

std::vector<Line3D> init_lines_from_linear(const Dataset& data,
                                           const std::vector<LineSegment2D>& segments,
                                           const std::vector<LineTrack>& tracks,
                                           const std::vector<Rotation>& rotations,
                                           const ManhattanFrame& frame, const SfmSolution& init) {
    std::map<int, int> frame_pos;
    for (size_t i = 0; i < init.frame_ids.size(); ++i)
        frame_pos[init.frame_ids[i]] = static_cast<int>(i);
    std::map<int, const LineTrack*> by_id;
    for (const auto& t : tracks) by_id[t.id] = &t;

    std::vector<Line3D> out;
    out.reserve(init.track_ids.size());
    for (size_t k = 0; k < init.track_ids.size(); ++k) {
        const LineTrack& t = *by_id.at(init.track_ids[k]);
        const Vec3 a = frame.axis(t.label);
        Vec3 acc = Vec3::Zero();
        for (size_t o = 0; o < t.obs.size(); ++o) {
            const auto& [f, s] = t.obs[o];
            const Rotation& rot = rotations[data.frame_index(f)];
            const Vec3 d = pixel_to_global_ray(segments[s].midpoint(), data.intrinsics, rot);
            acc += init.translations[frame_pos.at(f)] + init.depths[k][o] * d;
        }
        const Vec3 mean = acc / static_cast<double>(t.obs.size());
        Line3D line;
        line.track_id = t.id;
        line.axis = t.label;
        line.point = mean - a.dot(mean) * a;
        out.push_back(line);
    }
    return out;
}

namespace {

struct BaObs {
    int line = 0;   // index into lines
    int frame = 0;  // index into frame_ids
    int seg = 0;    // index into segments
    bool alive = true;
};

struct GeoPair {
    int la = 0, lb = 0;
    Vec3 axis = Vec3::Zero();
};

struct BaState {
    std::vector<Line3D> lines;
    std::vector<Vec3> centers;
    std::vector<Rotation> rots;
    Intrinsics intr;
};

struct Layout {
    int n = 0;
    int t_base = 0;
    int r_base = -1;  // phase >= 2
    int k_base = -1;  // phase >= 3
};

Layout make_layout(int n_lines, int n_frames, int phase) {
    Layout lo;
    lo.t_base = 3 * n_lines;
    lo.n = lo.t_base + 3 * (n_frames - 1);
    if (phase >= 2) {
        lo.r_base = lo.n;
        lo.n += 3 * n_frames;
    }
    if (phase >= 3) {
        lo.k_base = lo.n;
        lo.n += 4;
    }
    return lo;
}

struct BaProblem {
    const Dataset* data = nullptr;
    const std::vector<LineSegment2D>* segments = nullptr;
    const ManhattanFrame* frame = nullptr;
    const PipelineConfig* cfg = nullptr;
    std::vector<int> frame_ids;
    std::vector<BaObs> obs;
    std::vector<GeoPair> geo;
    std::vector<std::pair<int, int>> obs_track_frame;  // for diagnostics
    double scale_target = 0.0;
    double fx0 = 0.0, fy0 = 0.0;

    // cost of a state; nullopt when some live observation stops projecting
    std::optional<double> cost(const BaState& st) const {
        double c = 0.0;
        for (size_t i = 0; i < obs.size(); ++i) {
            const BaObs& o = obs[i];
            if (!o.alive) continue;
            double r = 0.0;
            if (!reprojection_residual(st.lines[o.line], *frame, (*segments)[o.seg], st.intr,
                                       st.rots[o.frame], st.centers[o.frame], r))
                return std::nullopt;
            if (!std::isfinite(r))
                throw NumericError("bundle: non-finite residual at track " +
                                   std::to_string(obs_track_frame[i].first) + " frame " +
                                   std::to_string(obs_track_frame[i].second));
            c += cfg->w_reproj * r * r;
        }
        for (const auto& gp : geo) {
            const double r = gp.axis.dot(st.lines[gp.la].point - st.lines[gp.lb].point);
            c += cfg->w_geom * r * r;
        }
        for (const auto& ln : st.lines) {
            const double r = frame->axis(ln.axis).dot(ln.point);
            c += cfg->w_geom * r * r;
        }
        c += cfg->scale_row_weight * scale_residual(st) * scale_residual(st);
        return c;
    }

    double scale_residual(const BaState& st) const {
        double m = 0.0;
        for (const auto& ln : st.lines) m += ln.point.norm();
        return m / static_cast<double>(st.lines.size()) - scale_target;
    }

    void normal_equations(const BaState& st, int phase, const Layout& lo, Eigen::MatrixXd& h,
                          Eigen::VectorXd& g) const {
        h.setZero(lo.n, lo.n);
        g.setZero(lo.n);
        std::vector<std::pair<int, double>> row;
        auto accumulate = [&](double w, double r) {
            for (const auto& [i, vi] : row) {
                g[i] += w * vi * r;
                for (const auto& [j, vj] : row) h(i, j) += w * vi * vj;
            }
        };
        for (size_t k = 0; k < obs.size(); ++k) {
            const BaObs& o = obs[k];
            if (!o.alive) continue;
            double r = 0.0;
            ReprojJacobian jac;
            if (!reprojection_residual(st.lines[o.line], *frame, (*segments)[o.seg], st.intr,
                                       st.rots[o.frame], st.centers[o.frame], r, nullptr, &jac))
                continue;
            row.clear();
            for (int c = 0; c < 3; ++c) row.emplace_back(3 * o.line + c, jac.d_point[c]);
            if (o.frame > 0)
                for (int c = 0; c < 3; ++c)
                    row.emplace_back(lo.t_base + 3 * (o.frame - 1) + c, jac.d_center[c]);
            if (phase >= 2)
                for (int c = 0; c < 3; ++c)
                    row.emplace_back(lo.r_base + 3 * o.frame + c, jac.d_rotation[c]);
            if (phase >= 3)
                for (int c = 0; c < 4; ++c) row.emplace_back(lo.k_base + c, jac.d_intrinsics[c]);
            accumulate(cfg->w_reproj, r);
        }
        for (const auto& gp : geo) {
            const double r = gp.axis.dot(st.lines[gp.la].point - st.lines[gp.lb].point);
            row.clear();
            for (int c = 0; c < 3; ++c) row.emplace_back(3 * gp.la + c, gp.axis[c]);
            for (int c = 0; c < 3; ++c) row.emplace_back(3 * gp.lb + c, -gp.axis[c]);
            accumulate(cfg->w_geom, r);
        }
        for (size_t l = 0; l < st.lines.size(); ++l) {
            const Vec3 a = frame->axis(st.lines[l].axis);
            const double r = a.dot(st.lines[l].point);
            row.clear();
            for (int c = 0; c < 3; ++c) row.emplace_back(3 * l + c, a[c]);
            accumulate(cfg->w_geom, r);
        }
        {
            const double r = scale_residual(st);
            const double inv_n = 1.0 / static_cast<double>(st.lines.size());
            row.clear();
            for (size_t l = 0; l < st.lines.size(); ++l) {
                const double nrm = st.lines[l].point.norm();
                if (nrm < 1e-12) continue;
                const Vec3 d = st.lines[l].point / nrm * inv_n;
                for (int c = 0; c < 3; ++c) row.emplace_back(3 * l + c, d[c]);
            }
            accumulate(cfg->scale_row_weight, r);
        }
    }

    BaState apply(const BaState& st, int phase, const Layout& lo,
                  const Eigen::VectorXd& delta) const {
        BaState out = st;
        for (size_t l = 0; l < out.lines.size(); ++l) {
            out.lines[l].point += delta.segment<3>(3 * l);
            const Vec3 a = frame->axis(out.lines[l].axis);
            out.lines[l].point -= a.dot(out.lines[l].point) * a;
        }
        for (size_t i = 1; i < out.centers.size(); ++i)
            out.centers[i] += delta.segment<3>(lo.t_base + 3 * (i - 1));
        if (phase >= 2)
            for (size_t i = 0; i < out.rots.size(); ++i)
                out.rots[i] = Rotation::project(out.rots[i].matrix() *
                                                exp_so3(delta.segment<3>(lo.r_base + 3 * i)));
        if (phase >= 3) {
            out.intr.fx = std::clamp(st.intr.fx + delta[lo.k_base + 0], 0.5 * fx0, 2.0 * fx0);
            out.intr.fy = std::clamp(st.intr.fy + delta[lo.k_base + 1], 0.5 * fy0, 2.0 * fy0);
            out.intr.cx += delta[lo.k_base + 2];
            out.intr.cy += delta[lo.k_base + 3];
        }
        return out;
    }
};

}  // namespace

BundleResult bundle_adjust(const Dataset& data, const std::vector<LineSegment2D>& segments,
                           const std::vector<LineTrack>& tracks,
                           const std::vector<CoplanarityRelation>& rels,
                           const std::vector<Rotation>& rotations, const ManhattanFrame& frame,
                           const SfmSolution& init, const PipelineConfig& cfg, int max_phase) {
    if (rotations.size() != data.frames.size())
        throw Error("bundle_adjust: rotations must parallel dataset frames");
    if (init.track_ids.empty()) throw DataError("bundle_adjust: no registered tracks");
    max_phase = std::clamp(max_phase, 1, 3);

    BaProblem pb;
    pb.data = &data;
    pb.segments = &segments;
    pb.frame = &frame;
    pb.cfg = &cfg;
    pb.frame_ids = init.frame_ids;

    std::map<int, int> frame_pos;
    for (size_t i = 0; i < pb.frame_ids.size(); ++i) frame_pos[pb.frame_ids[i]] = static_cast<int>(i);
    std::map<int, int> line_of_track;
    for (size_t i = 0; i < init.track_ids.size(); ++i)
        line_of_track[init.track_ids[i]] = static_cast<int>(i);

    BaState st;
    st.lines = init_lines_from_linear(data, segments, tracks, rotations, frame, init);
    st.centers = init.translations;
    st.rots.reserve(pb.frame_ids.size());
    for (int f : pb.frame_ids) st.rots.push_back(rotations[data.frame_index(f)]);
    st.intr = data.intrinsics;
    pb.fx0 = st.intr.fx;
    pb.fy0 = st.intr.fy;

    std::map<int, const LineTrack*> by_id;
    for (const auto& t : tracks) by_id[t.id] = &t;
    for (const auto& [tid, li] : line_of_track) {
        const LineTrack& t = *by_id.at(tid);
        for (const auto& [f, s] : t.obs) {
            pb.obs.push_back(BaObs{li, frame_pos.at(f), s, true});
            pb.obs_track_frame.emplace_back(tid, f);
        }
    }

    // geometric residuals: deduplicated pairwise relations plus floor chains
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& r : rels) {
        if (r.kind == RelationKind::Floor) {
            std::vector<int> members;
            for (int tid : r.floor_tracks)
                if (line_of_track.count(tid)) members.push_back(tid);
            for (size_t i = 1; i < members.size(); ++i)
                pb.geo.push_back(GeoPair{line_of_track.at(members[i - 1]),
                                         line_of_track.at(members[i]), frame.vz});
            continue;
        }
        auto la = line_of_track.find(r.track_a);
        auto lb = line_of_track.find(r.track_b);
        if (la == line_of_track.end() || lb == line_of_track.end()) continue;
        auto key = std::make_tuple(std::min(r.track_a, r.track_b),
                                   std::max(r.track_a, r.track_b), static_cast<int>(r.normal_axis));
        if (!seen.insert(key).second) continue;
        pb.geo.push_back(GeoPair{la->second, lb->second, frame.axis(r.normal_axis)});
    }

    double m0 = 0.0;
    for (const auto& ln : st.lines) m0 += ln.point.norm();
    pb.scale_target = m0 / static_cast<double>(st.lines.size());

    // observations that cannot be projected at the starting point are dropped
    int dropped = 0, straddling = 0;
    for (size_t i = 0; i < pb.obs.size(); ++i) {
        BaObs& o = pb.obs[i];
        double r = 0.0;
        bool same = true;
        if (!reprojection_residual(st.lines[o.line], frame, segments[o.seg], st.intr,
                                   st.rots[o.frame], st.centers[o.frame], r, &same)) {
            std::cerr << "warning: bundle drops observation of track "
                      << pb.obs_track_frame[i].first << " in frame " << pb.obs_track_frame[i].second
                      << " (line behind camera)\n";
            o.alive = false;
            ++dropped;
        } else if (!same) {
            ++straddling;
        }
    }
    if (straddling > 0)
        std::cerr << "warning: " << straddling
                  << " observations straddle their projected line at the start\n";

    BundleResult res;
    res.frame_ids = pb.frame_ids;
    res.frame = frame;

    double cost = pb.cost(st).value_or(std::numeric_limits<double>::quiet_NaN());
    if (!std::isfinite(cost)) throw NumericError("bundle: initial cost not finite");
    res.initial_cost = cost;

    const int n_lines = static_cast<int>(st.lines.size());
    const int n_frames = static_cast<int>(pb.frame_ids.size());
    int total_accepted = 0;
    for (int phase = 1; phase <= max_phase; ++phase) {
        const Layout lo = make_layout(n_lines, n_frames, phase);
        double mu = kMuInit;
        res.cost_log.push_back(BaCostEntry{phase, 0, cost});
        Eigen::MatrixXd h;
        Eigen::VectorXd g;
        for (int iter = 1; iter <= cfg.ba_max_iterations; ++iter) {
            pb.normal_equations(st, phase, lo, h, g);
            if (g.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + cost)) break;
            bool accepted = false;
            bool converged = false;
            while (mu <= kMuMax) {
                Eigen::MatrixXd hd = h;
                hd.diagonal() += mu * h.diagonal();
                hd.diagonal().array() += 1e-12;
                Eigen::VectorXd delta = hd.ldlt().solve(-g);
                if (!delta.allFinite()) {
                    mu *= 10.0;
                    continue;
                }
                BaState trial = pb.apply(st, phase, lo, delta);
                std::optional<double> tc = pb.cost(trial);
                if (tc && *tc < cost) {
                    st = std::move(trial);
                    const double prev = cost;
                    cost = *tc;
                    ++total_accepted;
                    res.cost_log.push_back(BaCostEntry{phase, iter, cost});
                    mu = std::max(mu / 10.0, 1e-12);
                    accepted = true;
                    converged = (prev - cost) <= kRelDecrease * std::max(prev, 1e-30) ||
                                delta.lpNorm<Eigen::Infinity>() < 1e-15;
                    break;
                }
                mu *= 10.0;
            }
            if (!accepted || converged) break;
        }
    }

    res.rotations = st.rots;
    res.translations = st.centers;
    res.intrinsics = st.intr;
    res.lines = st.lines;
    res.final_cost = cost;
    res.iterations = total_accepted;
    double err = 0.0;
    int n_err = 0;
    for (const auto& o : pb.obs) {
        if (!o.alive) continue;
        const double e = reprojection_error_px(st.lines[o.line], frame, segments[o.seg], st.intr,
                                               st.rots[o.frame], st.centers[o.frame]);
        if (std::isfinite(e)) {
            err += e;
            ++n_err;
        }
    }
    res.mean_reproj_px = n_err > 0 ? err / n_err : 0.0;
    return res;
}

}  // namespace msfm
