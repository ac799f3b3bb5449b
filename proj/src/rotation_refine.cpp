#include "msfm/rotation_refine.hpp"

#include <map>

#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"
#include "msfm/manhattan.hpp"

namespace msfm {
namespace {

// Interpretation-plane normal in camera coordinates; independent of the
// frame's rotation, so it is constant across refinement iterations.
Vec3 camera_plane_normal(const LineSegment2D& s, const Intrinsics& K) {
    const Mat3 kinv = K.Kinv();
    const Vec3 a = kinv * Vec3(s.p.x(), s.p.y(), 1.0);
    const Vec3 b = kinv * Vec3(s.q.x(), s.q.y(), 1.0);
    Vec3 n = a.cross(b);
    const double len = n.norm();
    if (len < 1e-12) throw NumericError("degenerate segment: endpoint rays are parallel");
    return canonicalize_sign(n / len);
}

struct DataItem {
    int frame_idx;
    Vec3 n_cam;
    Vec3 axis_dir;
};

struct SmoothItem {
    int i, j;
    Mat3 q0;  // R_i^T R_j at the initial estimates
};

double total_cost(const std::vector<Mat3>& rots, const std::vector<DataItem>& data,
                  const std::vector<SmoothItem>& smooth, double lambda) {
    double c = 0.0;
    for (const auto& d : data) {
        double r = d.n_cam.dot(rots[d.frame_idx] * d.axis_dir);
        c += r * r;
    }
    for (const auto& s : smooth) {
        Mat3 m = rots[s.i].transpose() * rots[s.j] - s.q0;
        c += lambda * m.squaredNorm();
    }
    return c;
}

// A re-extracted frame may come back with x and y swapped or flipped (the
// vote plateau does not order the horizontal axes); keep the identity of the
// previous round's axes so labels stay comparable.
ManhattanFrame match_horizontal_axes(const ManhattanFrame& next, const ManhattanFrame& prev) {
    Vec3 vx = next.vx;
    double best = std::abs(prev.vx.dot(vx));
    if (std::abs(prev.vx.dot(next.vy)) > best) vx = next.vy;
    if (vx.dot(prev.vx) < 0) vx = -vx;
    ManhattanFrame out{vx, next.vz.cross(vx).normalized(), next.vz};
    out.validate();
    return out;
}

}  // namespace

std::optional<Axis> classify_segment(const LineSegment2D& seg, const Intrinsics& K,
                                     const Rotation& rot, const ManhattanFrame& frame,
                                     double min_angle_deg) {
    const Vec3 n = interpretation_plane(seg, K, rot);
    const double min_angle = deg2rad(min_angle_deg);
    int hit = -1;
    for (int k = 0; k < 3; ++k) {
        if (folded_angle(n, frame.axis(axis_from_index(k))) >= min_angle) {
            if (hit >= 0) return std::nullopt;  // ambiguous
            hit = k;
        }
    }
    if (hit < 0) return std::nullopt;
    return axis_from_index(hit);
}

int classify_segments(std::vector<LineSegment2D>& segs, const Intrinsics& K,
                      const std::vector<int>& frame_ids, const std::vector<Rotation>& rots,
                      const ManhattanFrame& frame, double min_angle_deg) {
    std::map<int, int> index;
    for (size_t i = 0; i < frame_ids.size(); ++i) index[frame_ids[i]] = static_cast<int>(i);
    int n = 0;
    for (auto& s : segs) {
        auto it = index.find(s.frame_id);
        if (it == index.end()) throw DataError("classify: segment references unknown frame");
        s.label = classify_segment(s, K, rots[it->second], frame, min_angle_deg);
        if (s.label) ++n;
    }
    return n;
}

RefineResult refine_rotations(std::vector<LineSegment2D>& segs, const Dataset& data,
                              const ManhattanFrame& frame, const PipelineConfig& cfg) {
    const int n = static_cast<int>(data.frames.size());
    if (n == 0) throw DataError("refine: dataset has no frames");

    RefineResult res;
    res.frame_ids.reserve(n);
    std::vector<Mat3> rots;
    rots.reserve(n);
    std::vector<Rotation> cur;
    cur.reserve(n);
    for (const auto& f : data.frames) {
        res.frame_ids.push_back(f.id);
        rots.push_back(f.rotation.matrix());
        cur.push_back(f.rotation);
    }

    // neighbor graph from the initial estimates
    std::vector<SmoothItem> smooth;
    const double zmax = deg2rad(cfg.neighbor_z_deg);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double c = rots[i].row(2).dot(rots[j].row(2));
            if (std::acos(std::clamp(c, -1.0, 1.0)) < zmax)
                smooth.push_back({i, j, rots[i].transpose() * rots[j]});
        }

    // camera-frame normals once per segment
    std::vector<Vec3> n_cam(segs.size());
    std::map<int, int> index;
    for (int i = 0; i < n; ++i) index[res.frame_ids[i]] = i;
    for (size_t s = 0; s < segs.size(); ++s) n_cam[s] = camera_plane_normal(segs[s], data.intrinsics);

    const double lambda = cfg.lambda_smooth;
    ManhattanFrame fr = frame;
    const Icosphere sphere = build_icosphere(5);
    bool first_outer = true;

    for (int outer = 0; outer < cfg.refine_max_outer; ++outer) {
        res.outer_iterations = outer + 1;
        res.n_labeled =
            classify_segments(segs, data.intrinsics, res.frame_ids, cur, fr,
                              cfg.classify_angle_deg);

        std::vector<DataItem> items;
        items.reserve(segs.size());
        for (size_t s = 0; s < segs.size(); ++s)
            if (segs[s].label)
                items.push_back(
                    {index.at(segs[s].frame_id), n_cam[s], fr.axis(*segs[s].label)});

        double cost = total_cost(rots, items, smooth, lambda);
        if (first_outer) {
            res.initial_cost = cost;
            first_outer = false;
        }
        res.cost_history.emplace_back();
        res.cost_history.back().push_back(cost);

        // damped Gauss-Newton over all frames but the first
        double mu = 1e-4;
        for (int inner = 0; inner < cfg.refine_max_inner; ++inner) {
            const int dim = 3 * (n - 1);
            if (dim == 0) break;
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
            Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
            auto off = [](int f) { return 3 * (f - 1); };

            for (const auto& d : items) {
                if (d.frame_idx == 0) continue;
                double r = d.n_cam.dot(rots[d.frame_idx] * d.axis_dir);
                Vec3 jrow = d.axis_dir.cross(rots[d.frame_idx].transpose() * d.n_cam);
                int o = off(d.frame_idx);
                h.block<3, 3>(o, o) += jrow * jrow.transpose();
                g.segment<3>(o) += jrow * r;
            }
            for (const auto& s : smooth) {
                Mat3 q = rots[s.i].transpose() * rots[s.j];
                Mat3 m = q - s.q0;
                Eigen::Matrix<double, 9, 3> ji, jj;
                for (int k = 0; k < 3; ++k) {
                    Mat3 sk = skew(Vec3::Unit(k));
                    Mat3 dj = q * sk;
                    Mat3 di = -sk * q;
                    jj.col(k) = Eigen::Map<Eigen::Matrix<double, 9, 1>>(dj.data());
                    ji.col(k) = Eigen::Map<Eigen::Matrix<double, 9, 1>>(di.data());
                }
                Eigen::Matrix<double, 9, 1> mv = Eigen::Map<Eigen::Matrix<double, 9, 1>>(m.data());
                if (s.i != 0) {
                    int oi = off(s.i);
                    h.block<3, 3>(oi, oi) += lambda * ji.transpose() * ji;
                    g.segment<3>(oi) += lambda * ji.transpose() * mv;
                }
                if (s.j != 0) {
                    int oj = off(s.j);
                    h.block<3, 3>(oj, oj) += lambda * jj.transpose() * jj;
                    g.segment<3>(oj) += lambda * jj.transpose() * mv;
                }
                if (s.i != 0 && s.j != 0) {
                    int oi = off(s.i), oj = off(s.j);
                    Mat3 cross_blk = lambda * ji.transpose() * jj;
                    h.block<3, 3>(oi, oj) += cross_blk;
                    h.block<3, 3>(oj, oi) += cross_blk.transpose();
                }
            }

            bool accepted = false;
            while (mu < 1e10) {
                Eigen::MatrixXd hd = h;
                hd.diagonal().array() += mu + 1e-12;
                Eigen::VectorXd delta = hd.ldlt().solve(-g);
                std::vector<Mat3> trial = rots;
                for (int f = 1; f < n; ++f)
                    trial[f] = trial[f] * exp_so3(delta.segment<3>(off(f)));
                double trial_cost = total_cost(trial, items, smooth, lambda);
                if (trial_cost < cost) {
                    rots = std::move(trial);
                    double drop = cost - trial_cost;
                    cost = trial_cost;
                    res.cost_history.back().push_back(cost);
                    mu = std::max(mu / 10.0, 1e-15);
                    accepted = true;
                    if (drop < 1e-14 * std::max(cost, 1.0) ||
                        delta.lpNorm<Eigen::Infinity>() < 1e-12)
                        inner = cfg.refine_max_inner;  // converged
                    break;
                }
                mu *= 10.0;
            }
            if (!accepted) break;
        }

        for (int f = 0; f < n; ++f) cur[f] = Rotation::project(rots[f]);

        // re-extract the frame under the refined rotations so the axes track
        // the gauge pinned by frame 0
        {
            std::vector<Vec3> normals;
            std::vector<double> weights;
            normals.reserve(segs.size());
            weights.reserve(segs.size());
            for (size_t s = 0; s < segs.size(); ++s) {
                const Mat3& rm = rots[index.at(segs[s].frame_id)];
                normals.push_back(canonicalize_sign(rm.transpose() * n_cam[s]));
                weights.push_back(segs[s].length);
            }
            const auto votes = vote_directions(sphere, normals, weights, cfg.vote_band_rad);
            fr = match_horizontal_axes(
                extract_frame(sphere, votes, normals, weights, data.gravity, cfg), fr);
        }

        // stop when labels are stable under the refined rotations and frame
        std::vector<std::optional<Axis>> labels(segs.size());
        std::vector<LineSegment2D> probe = segs;
        classify_segments(probe, data.intrinsics, res.frame_ids, cur, fr,
                          cfg.classify_angle_deg);
        for (size_t s = 0; s < segs.size(); ++s) labels[s] = probe[s].label;
        std::vector<std::optional<Axis>> cur_labels(segs.size());
        for (size_t s = 0; s < segs.size(); ++s) cur_labels[s] = segs[s].label;
        if (labels == cur_labels) break;
    }

    // final labels under the final rotations and frame
    res.n_labeled = classify_segments(segs, data.intrinsics, res.frame_ids, cur, fr,
                                      cfg.classify_angle_deg);
    {
        std::vector<DataItem> items;
        for (size_t s = 0; s < segs.size(); ++s)
            if (segs[s].label)
                items.push_back(
                    {index.at(segs[s].frame_id), n_cam[s], fr.axis(*segs[s].label)});
        res.final_cost = total_cost(rots, items, smooth, lambda);
    }
    res.frame = fr;
    res.rotations = std::move(cur);
    return res;
}

}  // namespace msfm
