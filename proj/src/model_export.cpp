#include "msfm/model_export.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"

namespace msfm {

using nlohmann::json;

namespace {

// closest-approach parameter on the line (point + s * dir) to the pixel ray
bool ray_line_param(const Vec3& point, const Vec3& dir, const Vec3& center, const Vec3& ray,
                    double& s) {
    const double de = dir.dot(ray);
    const double denom = 1.0 - de * de;
    if (denom < 1e-12) return false;
    const Vec3 w = center - point;
    s = (dir - de * ray).dot(w) / denom;
    return true;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

LineModel build_model(const Dataset& data, const PipelineState& st) {
    LineModel m;
    std::vector<Line3D> lines;
    if (st.bundle) {
        const BundleResult& ba = *st.bundle;
        m.frame_ids = ba.frame_ids;
        m.rotations = ba.rotations;
        m.centers = ba.translations;
        m.intrinsics = ba.intrinsics;
        m.frame = ba.frame;
        lines = ba.lines;
    } else if (st.solution) {
        const SfmSolution& sol = *st.solution;
        m.frame_ids = sol.frame_ids;
        m.centers = sol.translations;
        m.intrinsics = data.intrinsics;
        m.frame = st.require_frame();
        const auto& rots = st.require_rotations();
        if (rots.size() != data.frames.size())
            throw DataError("export: refined rotations do not cover the dataset");
        m.rotations.reserve(sol.frame_ids.size());
        for (int f : sol.frame_ids) m.rotations.push_back(rots[data.frame_index(f)]);
        lines = init_lines_from_linear(data, st.require_segments(), st.require_tracks(), rots,
                                       m.frame, sol);
    } else {
        throw DataError("export: nothing solved yet (run solve or ba first)");
    }

    // extent: span of the observation endpoints projected onto the line
    std::map<int, int> frame_pos;
    for (size_t i = 0; i < m.frame_ids.size(); ++i) frame_pos[m.frame_ids[i]] = static_cast<int>(i);
    std::map<int, const LineTrack*> by_id;
    for (const auto& t : st.require_tracks()) by_id[t.id] = &t;
    const auto& segments = st.require_segments();

    for (const auto& ln : lines) {
        const Vec3 dir = m.frame.axis(ln.axis);
        double lo = 0.0, hi = 0.0;
        bool any = false;
        const LineTrack& t = *by_id.at(ln.track_id);
        for (const auto& [f, s] : t.obs) {
            auto fp = frame_pos.find(f);
            if (fp == frame_pos.end()) continue;
            const Rotation& rot = m.rotations[fp->second];
            const Vec3& c = m.centers[fp->second];
            for (const Vec2& px : {segments[s].p, segments[s].q}) {
                const Vec3 ray = pixel_to_global_ray(px, m.intrinsics, rot);
                double sp;
                if (!ray_line_param(ln.point, dir, c, ray, sp)) continue;
                if (!any) {
                    lo = hi = sp;
                    any = true;
                } else {
                    lo = std::min(lo, sp);
                    hi = std::max(hi, sp);
                }
            }
        }
        if (!any || hi - lo < 1e-9) {
            lo = -0.5;
            hi = 0.5;
        }
        LineModel::ModelLine out;
        out.track_id = ln.track_id;
        out.axis = ln.axis;
        out.point = ln.point;
        out.a = ln.point + lo * dir;
        out.b = ln.point + hi * dir;
        m.lines.push_back(out);
    }
    return m;
}

void save_model_ply(const LineModel& model, const std::filesystem::path& path) {
    static const int color[3][3] = {{255, 0, 0}, {255, 165, 0}, {0, 0, 255}};  // x, y, z lines
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model: " + path.string());
    const size_t nv = 2 * model.lines.size() + model.centers.size();
    out << "ply\nformat ascii 1.0\ncomment axis-aligned line map\n";
    out << "element vertex " << nv << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element edge " << model.lines.size() << "\n";
    out << "property int vertex1\nproperty int vertex2\nend_header\n";
    for (const auto& ln : model.lines) {
        const int* c = color[static_cast<int>(ln.axis)];
        for (const Vec3* p : {&ln.a, &ln.b})
            out << fmt(p->x()) << " " << fmt(p->y()) << " " << fmt(p->z()) << " " << c[0] << " "
                << c[1] << " " << c[2] << "\n";
    }
    for (const auto& c : model.centers)
        out << fmt(c.x()) << " " << fmt(c.y()) << " " << fmt(c.z()) << " 0 255 0\n";
    for (size_t i = 0; i < model.lines.size(); ++i)
        out << 2 * i << " " << 2 * i + 1 << "\n";
}

void save_model_json(const LineModel& model, const std::filesystem::path& path) {
    json j;
    j["intrinsics"] = {{"fx", model.intrinsics.fx},         {"fy", model.intrinsics.fy},
                       {"cx", model.intrinsics.cx},         {"cy", model.intrinsics.cy},
                       {"width", model.intrinsics.width},   {"height", model.intrinsics.height}};
    j["manhattan_frame"] = {{"vx", {model.frame.vx.x(), model.frame.vx.y(), model.frame.vx.z()}},
                            {"vy", {model.frame.vy.x(), model.frame.vy.y(), model.frame.vy.z()}},
                            {"vz", {model.frame.vz.x(), model.frame.vz.y(), model.frame.vz.z()}}};
    json frames = json::array();
    for (size_t i = 0; i < model.frame_ids.size(); ++i) {
        const Mat3& r = model.rotations[i].matrix();
        json jr = json::array();
        for (int row = 0; row < 3; ++row)
            for (int col = 0; col < 3; ++col) jr.push_back(r(row, col));
        frames.push_back({{"id", model.frame_ids[i]},
                          {"rotation", jr},
                          {"center", {model.centers[i].x(), model.centers[i].y(),
                                      model.centers[i].z()}}});
    }
    j["frames"] = frames;
    json lines = json::array();
    for (const auto& ln : model.lines) {
        lines.push_back({{"track_id", ln.track_id},
                         {"axis", std::string(1, axis_name(ln.axis))},
                         {"point", {ln.point.x(), ln.point.y(), ln.point.z()}},
                         {"a", {ln.a.x(), ln.a.y(), ln.a.z()}},
                         {"b", {ln.b.x(), ln.b.y(), ln.b.z()}}});
    }
    j["lines"] = lines;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write model: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace msfm
