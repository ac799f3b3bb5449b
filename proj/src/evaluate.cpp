#include "msfm/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <Eigen/Dense>
#include <json.hpp>

#include "msfm/bundle.hpp"
#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"

namespace msfm {

using nlohmann::json;

ErrorStats error_stats(const std::vector<double>& values) {
    ErrorStats st;
    st.n = static_cast<int>(values.size());
    if (values.empty()) return st;
    for (double v : values) {
        st.mean += v;
        st.max = std::max(st.max, v);
    }
    st.mean /= st.n;
    for (double v : values) st.stddev += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(st.stddev / st.n);
    return st;
}

Similarity align_umeyama(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    if (from.size() != to.size() || from.size() < 3)
        throw Error("align_umeyama: need at least 3 corresponded points");
    Eigen::MatrixXd src(3, from.size()), dst(3, to.size());
    for (size_t i = 0; i < from.size(); ++i) {
        src.col(i) = from[i];
        dst.col(i) = to[i];
    }
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
    Similarity sim;
    const Mat3 sr = t.topLeftCorner<3, 3>();
    sim.scale = std::cbrt(sr.determinant());
    if (!(sim.scale > 0)) throw NumericError("align_umeyama: degenerate point sets");
    sim.rot = sr / sim.scale;
    sim.t = t.topRightCorner<3, 1>();
    return sim;
}

AxisMatch match_axes(const ManhattanFrame& est, const ManhattanFrame& gt) {
    static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    AxisMatch best;
    double best_score = -1.0;
    for (const auto& p : perms) {
        double score = 0.0;
        for (int k = 0; k < 3; ++k)
            score += std::abs(est.axis(axis_from_index(k)).dot(gt.axis(axis_from_index(p[k]))));
        if (score > best_score) {
            best_score = score;
            best.gt_index = {p[0], p[1], p[2]};
        }
    }
    double worst = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Vec3 e = est.axis(axis_from_index(k));
        const Vec3 g = gt.axis(axis_from_index(best.gt_index[k]));
        best.sign[k] = e.dot(g) >= 0 ? 1.0 : -1.0;
        worst = std::max(worst, folded_angle(e, g));
    }
    best.worst_angle_deg = rad2deg(worst);
    return best;
}

std::vector<double> rotation_errors_deg(const std::vector<Rotation>& est,
                                        const std::vector<Rotation>& gt, bool align_frame0) {
    if (est.size() != gt.size() || est.empty())
        throw Error("rotation_errors_deg: size mismatch");
    Mat3 g = Mat3::Identity();
    if (align_frame0) g = est[0].matrix().transpose() * gt[0].matrix();
    std::vector<double> out;
    out.reserve(est.size());
    for (size_t i = 0; i < est.size(); ++i)
        out.push_back(
            rad2deg(geodesic_angle(Rotation::trusted(est[i].matrix() * g), gt[i])));
    return out;
}

namespace {

// distance of both observed endpoints to the infinite image line through a
// projected ground-truth segment; large when directions disagree
double image_line_distance(const LineSegment2D& seg, const Vec2& a, const Vec2& b) {
    const Vec2 d = b - a;
    const double len = d.norm();
    if (len < 1e-9) return std::numeric_limits<double>::infinity();
    const Vec2 dir = d / len;
    const double ang = std::abs(dir.x() * seg.direction().y() - dir.y() * seg.direction().x());
    if (ang > std::sin(deg2rad(2.0))) return std::numeric_limits<double>::infinity();
    auto dist = [&](const Vec2& p) {
        const Vec2 r = p - a;
        return std::abs(r.x() * dir.y() - r.y() * dir.x());
    };
    return std::max(dist(seg.p), dist(seg.q));
}

std::map<std::pair<int, int>, int> observations_to_gt(const Dataset& data, const GroundTruth& gt,
                                                      const std::vector<LineSegment2D>& segments,
                                                      const std::vector<LineTrack>& tracks) {
    // Preprocessing reorders and merges segments, so indices into gt.segment_line
    // are meaningless here; match each observation to the reprojected gt line.
    std::map<std::pair<int, int>, int> out;
    for (const auto& t : tracks)
        for (const auto& [f, s] : t.obs) {
            const int gi = data.frame_index(f);
            const Rotation& rot = gt.rotations[gi];
            const Vec3& c = gt.translations[gi];
            double best = 2.0;  // px acceptance gate
            int best_line = -1;
            for (const auto& line : gt.lines) {
                if (line.room != gt.room_of_frame(f)) continue;
                auto pr = project_segment_to_image(line.a, line.b, data.intrinsics, rot, c);
                if (!pr) continue;
                const double d = image_line_distance(segments[s], pr->first, pr->second);
                if (d < best) {
                    best = d;
                    best_line = line.id;
                }
            }
            if (best_line >= 0) out[{f, s}] = best_line;
        }
    return out;
}

}  // namespace

std::map<int, int> map_tracks_to_gt_lines(const Dataset& data, const GroundTruth& gt,
                                          const std::vector<LineSegment2D>& segments,
                                          const std::vector<LineTrack>& tracks) {
    const auto per_obs = observations_to_gt(data, gt, segments, tracks);
    std::map<int, int> out;
    for (const auto& t : tracks) {
        std::map<int, int> votes;
        for (const auto& [f, s] : t.obs) {
            auto it = per_obs.find({f, s});
            if (it != per_obs.end()) ++votes[it->second];
        }
        int best_line = -1, best_votes = 0;
        for (const auto& [line, v] : votes)
            if (v > best_votes) {
                best_votes = v;
                best_line = line;
            }
        if (best_line >= 0 && 2 * best_votes > static_cast<int>(t.obs.size()))
            out[t.id] = best_line;
    }
    return out;
}

double track_purity(const std::vector<LineTrack>& tracks,
                    const std::map<std::pair<int, int>, int>& obs_gt_line) {
    int agree = 0, total = 0;
    for (const auto& t : tracks) {
        std::map<int, int> votes;
        for (const auto& [f, s] : t.obs) {
            auto it = obs_gt_line.find({f, s});
            if (it != obs_gt_line.end()) ++votes[it->second];
        }
        int best = 0, n = 0;
        for (const auto& [line, v] : votes) {
            best = std::max(best, v);
            n += v;
        }
        agree += best;
        total += n;
    }
    return total > 0 ? static_cast<double>(agree) / total : 1.0;
}

namespace {

const GTLine* gt_line_by_id(const GroundTruth& gt, int id) {
    for (const auto& l : gt.lines)
        if (l.id == id) return &l;
    return nullptr;
}

double gt_ray_depth(const Vec3& center, const Vec3& ray, const GTLine& line) {
    const Vec3 e = (line.b - line.a).normalized();
    const double de = ray.dot(e);
    const double denom = 1.0 - de * de;
    if (denom < 1e-12) return std::numeric_limits<double>::quiet_NaN();
    const Vec3 w = line.a - center;
    return (ray - de * e).dot(w) / denom;
}

}  // namespace

EvaluationReport evaluate_pipeline(const Dataset& data, const GroundTruth& gt,
                                   const PipelineState& st) {
    EvaluationReport rep;
    const size_t nf = data.frames.size();
    if (gt.rotations.size() != nf || gt.translations.size() != nf)
        throw Error("evaluate: ground truth does not match dataset frame count");

    std::vector<Rotation> manifest;
    manifest.reserve(nf);
    for (const auto& f : data.frames) manifest.push_back(f.rotation);
    rep.rot_before_deg = error_stats(rotation_errors_deg(manifest, gt.rotations, true));
    rep.rot_before_raw_deg = error_stats(rotation_errors_deg(manifest, gt.rotations, false));

    if (st.rotations && st.rotations->size() == nf) {
        rep.rot_after_deg = error_stats(rotation_errors_deg(*st.rotations, gt.rotations, true));
        rep.rot_after_raw_deg =
            error_stats(rotation_errors_deg(*st.rotations, gt.rotations, false));
    }
    if (st.frame) rep.frame_axis_worst_deg = match_axes(*st.frame, gt.frame).worst_angle_deg;

    // track to ground-truth line mapping
    std::map<std::pair<int, int>, int> obs_map;
    std::map<int, int> track_map;
    if (st.tracks && st.segments) {
        obs_map = observations_to_gt(data, gt, *st.segments, *st.tracks);
        track_map = map_tracks_to_gt_lines(data, gt, *st.segments, *st.tracks);
        rep.track_purity_value = track_purity(*st.tracks, obs_map);
    }

    // structure alignment from camera centers of the registered component
    Similarity sim;
    bool have_sim = false;
    std::vector<int> reg_frames;
    std::vector<Vec3> est_centers;
    if (st.bundle) {
        reg_frames = st.bundle->frame_ids;
        est_centers = st.bundle->translations;
    } else if (st.solution) {
        reg_frames = st.solution->frame_ids;
        est_centers = st.solution->translations;
    }
    if (reg_frames.size() >= 3) {
        std::vector<Vec3> gt_centers;
        for (int f : reg_frames) gt_centers.push_back(gt.translations[data.frame_index(f)]);
        sim = align_umeyama(est_centers, gt_centers);
        have_sim = true;
        double se = 0.0;
        for (size_t i = 0; i < reg_frames.size(); ++i)
            se += (sim.apply(est_centers[i]) - gt_centers[i]).squaredNorm();
        rep.translation_rmse_m = std::sqrt(se / reg_frames.size());
        rep.translation_rmse_frac =
            gt.scene_diameter > 0 ? rep.translation_rmse_m / gt.scene_diameter : 0.0;
    }

    // line placement error against ground-truth infinite lines
    if (have_sim && st.tracks && st.segments && (st.bundle || st.solution)) {
        std::vector<Line3D> lines;
        if (st.bundle) {
            lines = st.bundle->lines;
        } else if (st.rotations && st.rotations->size() == nf) {
            lines = init_lines_from_linear(data, *st.segments, *st.tracks, *st.rotations,
                                           st.require_frame(), *st.solution);
        }
        double se = 0.0;
        int n = 0;
        for (const auto& ln : lines) {
            auto it = track_map.find(ln.track_id);
            if (it == track_map.end()) continue;
            const GTLine* g = gt_line_by_id(gt, it->second);
            if (!g) continue;
            const Vec3 p = sim.apply(ln.point);
            const Vec3 e = (g->b - g->a).normalized();
            const Vec3 r = p - g->a;
            se += (r - r.dot(e) * e).squaredNorm();
            ++n;
        }
        if (n > 0) rep.line_rmse_m = std::sqrt(se / n);
    }

    // depth errors of the linear stage, in ground-truth units via the scale
    if (have_sim && st.solution && st.tracks && st.segments) {
        const SfmSolution& sol = *st.solution;
        std::map<int, const LineTrack*> by_id;
        for (const auto& t : *st.tracks) by_id[t.id] = &t;
        std::vector<double> rel;
        for (size_t k = 0; k < sol.track_ids.size(); ++k) {
            auto tm = track_map.find(sol.track_ids[k]);
            if (tm == track_map.end()) continue;
            const GTLine* g = gt_line_by_id(gt, tm->second);
            if (!g) continue;
            const LineTrack& t = *by_id.at(sol.track_ids[k]);
            for (size_t o = 0; o < t.obs.size(); ++o) {
                const auto& [f, s] = t.obs[o];
                const int gi = data.frame_index(f);
                const Vec3 ray = pixel_to_global_ray((*st.segments)[s].midpoint(),
                                                     data.intrinsics, gt.rotations[gi]);
                const double d_gt = gt_ray_depth(gt.translations[gi], ray, *g);
                if (!std::isfinite(d_gt) || d_gt < 0.05) continue;
                rel.push_back(std::abs(sim.scale * sol.depths[k][o] - d_gt) / d_gt);
            }
        }
        rep.depth_rel_error = error_stats(rel);
    }

    // relation precision against the ground-truth coplanarity constraint
    if (st.relations && st.frame) {
        const AxisMatch am = match_axes(*st.frame, gt.frame);
        const std::set<int> floor_ids(gt.floor_line_ids.begin(), gt.floor_line_ids.end());
        auto gt_axis_of = [&](Axis est_axis) {
            return gt.frame.axis(axis_from_index(am.gt_index[static_cast<int>(est_axis)]));
        };
        auto coplanar_ok = [&](int line_a, int line_b, const Vec3& normal) {
            const GTLine* a = gt_line_by_id(gt, line_a);
            const GTLine* b = gt_line_by_id(gt, line_b);
            if (!a || !b) return false;
            return std::abs(normal.dot(a->a - b->a)) < 1e-6;
        };
        for (const auto& r : *st.relations) {
            RelationScore& sc = rep.relations[relation_kind_name(r.kind)];
            ++sc.detected;
            if (r.kind == RelationKind::Floor) {
                bool ok = r.floor_tracks.size() >= 2;
                for (int tid : r.floor_tracks) {
                    auto it = track_map.find(tid);
                    ok = ok && it != track_map.end() && floor_ids.count(it->second) > 0;
                }
                if (ok) ++sc.correct;
                continue;
            }
            auto ia = track_map.find(r.track_a);
            auto ib = track_map.find(r.track_b);
            if (ia == track_map.end() || ib == track_map.end()) continue;
            if (coplanar_ok(ia->second, ib->second, gt_axis_of(r.normal_axis))) ++sc.correct;
        }

        // detectable ground-truth pairs: both lines tracked and co-visible
        std::map<int, std::set<int>> tracks_of_line;
        for (const auto& [tid, lid] : track_map) tracks_of_line[lid].insert(tid);
        std::set<std::pair<int, int>> covisible;  // gt line id pairs
        if (st.tracks) {
            std::map<int, std::set<int>> lines_in_frame;
            for (const auto& t : *st.tracks) {
                auto it = track_map.find(t.id);
                if (it == track_map.end()) continue;
                for (const auto& [f, s] : t.obs) lines_in_frame[f].insert(it->second);
            }
            for (const auto& [f, ids] : lines_in_frame)
                for (auto a = ids.begin(); a != ids.end(); ++a)
                    for (auto b = std::next(a); b != ids.end(); ++b) covisible.insert({*a, *b});
        }
        auto detected_pair = [&](RelationKind kind, int la, int lb) {
            for (const auto& r : *st.relations) {
                if (r.kind != kind) continue;
                auto ia = track_map.find(r.track_a);
                auto ib = track_map.find(r.track_b);
                if (ia == track_map.end() || ib == track_map.end()) continue;
                if ((ia->second == la && ib->second == lb) ||
                    (ia->second == lb && ib->second == la))
                    return true;
            }
            return false;
        };
        auto endpoint_gap_3d = [](const GTLine& a, const GTLine& b) {
            double g = std::numeric_limits<double>::infinity();
            for (const Vec3& pa : {a.a, a.b})
                for (const Vec3& pb : {b.a, b.b}) g = std::min(g, (pa - pb).norm());
            return g;
        };
        for (const auto& [la, lb] : covisible) {
            const GTLine* a = gt_line_by_id(gt, la);
            const GTLine* b = gt_line_by_id(gt, lb);
            if (!a || !b) continue;
            if (a->axis != b->axis && endpoint_gap_3d(*a, *b) < 1e-6) {
                RelationScore& sc = rep.relations[relation_kind_name(RelationKind::Junction)];
                ++sc.gt_pairs;
                if (detected_pair(RelationKind::Junction, la, lb)) ++sc.recalled;
            }
            if (a->axis != b->axis && a->face == b->face) {
                RelationScore& sc = rep.relations[relation_kind_name(RelationKind::Orthogonal)];
                ++sc.gt_pairs;
                if (detected_pair(RelationKind::Orthogonal, la, lb)) ++sc.recalled;
            }
            if (a->axis == b->axis && a->face == b->face) {
                RelationScore& sc = rep.relations[relation_kind_name(RelationKind::Parallel)];
                ++sc.gt_pairs;
                if (detected_pair(RelationKind::Parallel, la, lb)) ++sc.recalled;
            }
        }
        {
            int tracked_floor = 0;
            for (const auto& [lid, ts] : tracks_of_line)
                if (floor_ids.count(lid)) ++tracked_floor;
            if (tracked_floor >= 2) {
                RelationScore& sc = rep.relations[relation_kind_name(RelationKind::Floor)];
                sc.gt_pairs = 1;
                for (const auto& r : *st.relations)
                    if (r.kind == RelationKind::Floor && r.floor_tracks.size() >= 2) {
                        sc.recalled = 1;
                        break;
                    }
            }
        }
    }

    // reprojection before and after bundle adjustment
    if (st.solution && st.tracks && st.segments && st.rotations &&
        st.rotations->size() == nf && st.frame) {
        const SfmSolution& sol = *st.solution;
        const auto lines =
            init_lines_from_linear(data, *st.segments, *st.tracks, *st.rotations, *st.frame, sol);
        std::map<int, const LineTrack*> by_id;
        for (const auto& t : *st.tracks) by_id[t.id] = &t;
        std::map<int, int> frame_pos;
        for (size_t i = 0; i < sol.frame_ids.size(); ++i)
            frame_pos[sol.frame_ids[i]] = static_cast<int>(i);
        std::vector<double> errs;
        for (const auto& ln : lines) {
            const LineTrack& t = *by_id.at(ln.track_id);
            for (const auto& [f, s] : t.obs) {
                const double e = reprojection_error_px(
                    ln, *st.frame, (*st.segments)[s], data.intrinsics,
                    (*st.rotations)[data.frame_index(f)], sol.translations[frame_pos.at(f)]);
                if (std::isfinite(e)) errs.push_back(e);
            }
        }
        rep.reproj_before_px = error_stats(errs);
    }
    if (st.bundle && st.tracks && st.segments) {
        const BundleResult& ba = *st.bundle;
        std::map<int, const LineTrack*> by_id;
        for (const auto& t : *st.tracks) by_id[t.id] = &t;
        std::map<int, int> frame_pos;
        for (size_t i = 0; i < ba.frame_ids.size(); ++i)
            frame_pos[ba.frame_ids[i]] = static_cast<int>(i);
        std::vector<double> errs;
        for (const auto& ln : ba.lines) {
            const LineTrack& t = *by_id.at(ln.track_id);
            for (const auto& [f, s] : t.obs) {
                auto fp = frame_pos.find(f);
                if (fp == frame_pos.end()) continue;
                const double e = reprojection_error_px(ln, ba.frame, (*st.segments)[s],
                                                       ba.intrinsics, ba.rotations[fp->second],
                                                       ba.translations[fp->second]);
                if (std::isfinite(e)) errs.push_back(e);
            }
        }
        rep.reproj_after_px = error_stats(errs);
    }

    if (st.solution) {
        rep.registered_ratio = st.solution->registered_ratio;
        rep.n_components = st.solution->n_components;
    }
    return rep;
}

namespace {

json stats_json(const ErrorStats& st) {
    return json{{"mean", st.mean}, {"max", st.max}, {"stddev", st.stddev}, {"n", st.n}};
}

}  // namespace

void save_report(const EvaluationReport& rep, const std::filesystem::path& path) {
    json j;
    j["rotation_error_deg"] = {{"before", stats_json(rep.rot_before_deg)},
                               {"after", stats_json(rep.rot_after_deg)},
                               {"before_raw", stats_json(rep.rot_before_raw_deg)},
                               {"after_raw", stats_json(rep.rot_after_raw_deg)}};
    j["frame_axis_worst_deg"] = rep.frame_axis_worst_deg;
    j["translation_rmse_m"] = rep.translation_rmse_m;
    j["translation_rmse_frac_of_diameter"] = rep.translation_rmse_frac;
    j["line_rmse_m"] = rep.line_rmse_m;
    j["depth_rel_error"] = stats_json(rep.depth_rel_error);
    json rels = json::object();
    for (const auto& [name, sc] : rep.relations)
        rels[name] = {{"detected", sc.detected},     {"correct", sc.correct},
                      {"precision", sc.precision()}, {"gt_pairs", sc.gt_pairs},
                      {"recalled", sc.recalled},     {"recall", sc.recall()}};
    j["relations"] = rels;
    j["track_purity"] = rep.track_purity_value;
    j["reprojection_px"] = {{"before", stats_json(rep.reproj_before_px)},
                            {"after", stats_json(rep.reproj_after_px)}};
    j["registered_ratio"] = rep.registered_ratio;
    j["n_components"] = rep.n_components;
    // stage timings stay out of the file so reruns are byte-identical

    std::ofstream out(path);
    if (!out) throw DataError("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace msfm
