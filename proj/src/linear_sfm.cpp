#include "msfm/linear_sfm.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"
#include "msfm/qp.hpp"

namespace msfm {
namespace {

constexpr double kRidge = 1e-10;

struct Dsu {
    std::vector<int> parent;
    explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<std::vector<int>> constraint_components(const std::vector<LineTrack>& tracks,
                                                    const std::vector<CoplanarityRelation>& rels,
                                                    bool use_floor) {
    std::map<int, int> frame_node;  // frame id -> node
    for (const auto& t : tracks)
        for (const auto& [f, s] : t.obs) frame_node.emplace(f, 0);
    int nf = 0;
    for (auto& [f, node] : frame_node) node = nf++;
    std::map<int, int> track_node;
    int nt = nf;
    for (const auto& t : tracks) track_node[t.id] = nt++;

    Dsu dsu(nt);
    for (const auto& t : tracks)
        for (const auto& [f, s] : t.obs) dsu.unite(track_node.at(t.id), frame_node.at(f));
    for (const auto& r : rels) {
        if (r.kind == RelationKind::Floor) {
            if (!use_floor) continue;
            for (size_t i = 1; i < r.floor_tracks.size(); ++i)
                dsu.unite(track_node.at(r.floor_tracks[i - 1]), track_node.at(r.floor_tracks[i]));
        } else {
            dsu.unite(track_node.at(r.track_a), track_node.at(r.track_b));
        }
    }

    std::map<int, std::vector<int>> comp_frames;
    for (const auto& [f, node] : frame_node) comp_frames[dsu.find(node)].push_back(f);
    std::vector<std::vector<int>> out;
    for (auto& [root, frames] : comp_frames) {
        std::sort(frames.begin(), frames.end());
        out.push_back(std::move(frames));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() > b.size();
        return a.front() < b.front();
    });
    return out;
}

ConstraintSystem assemble_system(const Dataset& data, const std::vector<LineSegment2D>& segments,
                                 const std::vector<LineTrack>& tracks,
                                 const std::vector<CoplanarityRelation>& rels,
                                 const std::vector<Rotation>& rotations,
                                 const ManhattanFrame& frame, const std::vector<int>& comp_frames,
                                 const PipelineConfig& cfg) {
    if (rotations.size() != data.frames.size())
        throw Error("assemble_system: rotations must parallel dataset frames");
    std::set<int> in_comp(comp_frames.begin(), comp_frames.end());

    // tracks fully inside the component, ascending id
    std::vector<const LineTrack*> comp_tracks;
    for (const auto& t : tracks)
        if (in_comp.count(t.obs.front().first)) comp_tracks.push_back(&t);

    ConstraintSystem sys;
    std::map<int, int> track_local;
    for (size_t i = 0; i < comp_tracks.size(); ++i) {
        track_local[comp_tracks[i]->id] = static_cast<int>(i);
        sys.lambda_offset.push_back(sys.n_lambda);
        sys.n_lambda += static_cast<int>(comp_tracks[i]->obs.size());
    }
    // translation scalars; the lowest frame is the gauge origin
    std::map<int, int> t_offset;
    for (size_t i = 1; i < comp_frames.size(); ++i)
        t_offset[comp_frames[i]] = sys.n_lambda + 3 * static_cast<int>(i - 1);
    sys.n_t = 3 * std::max<int>(0, static_cast<int>(comp_frames.size()) - 1);

    // per-observation ray directions at segment midpoints
    std::vector<std::vector<Vec3>> rays(comp_tracks.size());
    for (size_t ti = 0; ti < comp_tracks.size(); ++ti) {
        const LineTrack& t = *comp_tracks[ti];
        rays[ti].reserve(t.obs.size());
        for (const auto& [f, s] : t.obs) {
            const Rotation& rot = rotations[data.frame_index(f)];
            rays[ti].push_back(
                pixel_to_global_ray(segments[s].midpoint(), data.intrinsics, rot));
        }
    }

    auto add = [&](int row, int col, double v) {
        if (v != 0.0) sys.triplets.emplace_back(row, col, v);
    };
    auto add_t = [&](int row, int frame_id, const Vec3& coeff) {
        auto it = t_offset.find(frame_id);
        if (it == t_offset.end()) return;  // gauge frame
        for (int c = 0; c < 3; ++c) add(row, it->second + c, coeff[c]);
    };

    // colinearity: every observation pair of a track, two directions each
    for (size_t ti = 0; ti < comp_tracks.size(); ++ti) {
        const LineTrack& t = *comp_tracks[ti];
        int k = static_cast<int>(t.label);
        const Vec3 e1 = frame.axis(axis_from_index((k + 1) % 3));
        const Vec3 e2 = frame.axis(axis_from_index((k + 2) % 3));
        const int base = sys.lambda_offset[ti];
        for (size_t i = 0; i < t.obs.size(); ++i)
            for (size_t j = i + 1; j < t.obs.size(); ++j)
                for (const Vec3& e : {e1, e2}) {
                    int row = sys.n_rows++;
                    ++sys.rows_colinearity;
                    add(row, base + static_cast<int>(i), e.dot(rays[ti][i]));
                    add(row, base + static_cast<int>(j), -e.dot(rays[ti][j]));
                    add_t(row, t.obs[i].first, e);
                    add_t(row, t.obs[j].first, -e);
                    sys.rhs.push_back(0.0);
                }
    }

    // pairwise coplanarity, deduplicated by (track pair, plane axis); the
    // shared evidence frame makes the translation terms cancel exactly
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& r : rels) {
        if (r.kind == RelationKind::Floor) continue;
        auto la = track_local.find(r.track_a);
        auto lb = track_local.find(r.track_b);
        if (la == track_local.end() || lb == track_local.end()) continue;
        auto key = std::make_tuple(std::min(r.track_a, r.track_b),
                                   std::max(r.track_a, r.track_b),
                                   static_cast<int>(r.normal_axis));
        if (!seen.insert(key).second) continue;
        const Vec3 va = frame.axis(r.normal_axis);
        const LineTrack& ta = *comp_tracks[la->second];
        const LineTrack& tb = *comp_tracks[lb->second];
        auto obs_at = [&](const LineTrack& t, int f) {
            for (size_t i = 0; i < t.obs.size(); ++i)
                if (t.obs[i].first == f) return static_cast<int>(i);
            throw Error("assemble_system: relation evidence frame missing from track");
        };
        int oa = obs_at(ta, r.frame_id), ob = obs_at(tb, r.frame_id);
        int row = sys.n_rows++;
        ++sys.rows_coplanar;
        add(row, sys.lambda_offset[la->second] + oa, va.dot(rays[la->second][oa]));
        add(row, sys.lambda_offset[lb->second] + ob, -va.dot(rays[lb->second][ob]));
        sys.rhs.push_back(0.0);
    }

    // floor: chain the first observations of consecutive floor tracks
    for (const auto& r : rels) {
        if (r.kind != RelationKind::Floor) continue;
        const Vec3 vz = frame.vz;
        std::vector<int> members;
        for (int tid : r.floor_tracks)
            if (track_local.count(tid)) members.push_back(tid);
        for (size_t i = 1; i < members.size(); ++i) {
            int a = track_local.at(members[i - 1]);
            int b = track_local.at(members[i]);
            int row = sys.n_rows++;
            ++sys.rows_floor;
            add(row, sys.lambda_offset[a], vz.dot(rays[a][0]));
            add(row, sys.lambda_offset[b], -vz.dot(rays[b][0]));
            add_t(row, comp_tracks[a]->obs.front().first, vz);
            add_t(row, comp_tracks[b]->obs.front().first, -vz);
            sys.rhs.push_back(0.0);
        }
    }

    // soft gauge on scale: mean depth pinned to 1 (dense over all lambdas)
    if (sys.n_lambda > 0) {
        const double w = std::sqrt(cfg.scale_row_weight);
        sys.rows_scale = 1;
        sys.scale_row = Eigen::RowVectorXd::Zero(sys.n_lambda + sys.n_t);
        for (int i = 0; i < sys.n_lambda; ++i) sys.scale_row[i] = w / sys.n_lambda;
        sys.scale_rhs = w;
    }
    return sys;
}

SfmSolution solve_linear_sfm(const Dataset& data, const std::vector<LineSegment2D>& segments,
                             const std::vector<LineTrack>& tracks,
                             const std::vector<CoplanarityRelation>& rels,
                             const std::vector<Rotation>& rotations, const ManhattanFrame& frame,
                             const PipelineConfig& cfg) {
    auto comps = constraint_components(tracks, rels, cfg.use_floor);
    if (comps.empty()) throw DataError("linear sfm: no tracked frames to solve");
    const std::vector<int>& comp = comps.front();

    ConstraintSystem sys =
        assemble_system(data, segments, tracks, rels, rotations, frame, comp, cfg);
    if (sys.n_lambda == 0) throw DataError("linear sfm: largest component has no tracks");

    const int n_vars = sys.n_lambda + sys.n_t;
    Eigen::SparseMatrix<double> a(sys.n_rows, n_vars);
    a.setFromTriplets(sys.triplets.begin(), sys.triplets.end());
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), sys.n_rows);
    Eigen::MatrixXd u(sys.rows_scale, n_vars);
    Eigen::VectorXd d(sys.rows_scale);
    if (sys.rows_scale) {
        u.row(0) = sys.scale_row;
        d[0] = sys.scale_rhs;
    }
    std::vector<double> lower(n_vars, -std::numeric_limits<double>::infinity());
    for (int i = 0; i < sys.n_lambda; ++i) lower[i] = cfg.eps_depth;

    QpResult qp = solve_bounded_ls(a, b, u, d, lower, kRidge);

    SfmSolution sol;
    sol.frame_ids = comp;
    sol.translations.assign(comp.size(), Vec3::Zero());
    for (size_t i = 1; i < comp.size(); ++i) {
        int off = sys.n_lambda + 3 * static_cast<int>(i - 1);
        sol.translations[i] = Vec3(qp.x[off], qp.x[off + 1], qp.x[off + 2]);
    }
    std::set<int> in_comp(comp.begin(), comp.end());
    int li = 0;
    for (const auto& t : tracks) {
        if (!in_comp.count(t.obs.front().first)) continue;
        sol.track_ids.push_back(t.id);
        std::vector<double> d(t.obs.size());
        for (size_t o = 0; o < t.obs.size(); ++o) d[o] = qp.x[sys.lambda_offset[li] + o];
        sol.depths.push_back(std::move(d));
        ++li;
    }
    sol.n_components = static_cast<int>(comps.size());
    std::set<int> frames_with_tracks;
    for (const auto& t : tracks)
        for (const auto& [f, s] : t.obs) frames_with_tracks.insert(f);
    sol.registered_ratio =
        frames_with_tracks.empty()
            ? 0.0
            : static_cast<double>(comp.size()) / static_cast<double>(frames_with_tracks.size());
    sol.kkt_stationarity = qp.stationarity;
    sol.kkt_complementarity = qp.complementarity;
    return sol;
}

}  // namespace msfm
