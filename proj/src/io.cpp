#include "msfm/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "msfm/errors.hpp"
#include "msfm/pfm.hpp"

namespace msfm {

using nlohmann::json;

int Dataset::frame_index(int frame_id) const {
    const auto it = std::lower_bound(frames.begin(), frames.end(), frame_id,
                                     [](const FrameInfo& f, int id) { return f.id < id; });
    if (it == frames.end() || it->id != frame_id)
        throw DataError("dataset: unknown frame id " + std::to_string(frame_id));
    return static_cast<int>(it - frames.begin());
}

NormalMap Dataset::load_normal_map(int frame_id) const {
    const int idx = frame_index(frame_id);
    if (has_memory_maps()) return normal_maps_mem[idx];
    NormalMap map = read_pfm(root / frames[idx].normal_map_path);
    // enforce unit norm; zero (or denormal) pixels become invalid
    for (auto& n : map.data) {
        const float len = n.norm();
        if (len < 1e-6f)
            n.setZero();
        else
            n /= len;
    }
    return map;
}

void Dataset::validate() const {
    intrinsics.validate();
    if (std::abs(gravity.norm() - 1.0) > 1e-9)
        throw DataError("dataset: gravity must be unit-norm");
    for (size_t i = 1; i < frames.size(); ++i)
        if (frames[i].id <= frames[i - 1].id)
            throw DataError("dataset: frame ids must be strictly increasing");
    for (const auto& s : segments) {
        s.validate();
        frame_index(s.frame_id);  // throws on unknown frame
    }
}

std::vector<LineSegment2D> read_segments_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("segments: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("segments: empty file " + path.string());
    if (line != "frame_id,px,py,qx,qy")
        throw DataError("segments: bad header in " + path.string() + ": '" + line + "'");
    std::vector<LineSegment2D> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        double v[5];
        for (int i = 0; i < 5; ++i) {
            if (!std::getline(ss, field, ','))
                throw DataError("segments: line " + std::to_string(lineno) + ": expected 5 fields");
            try {
                v[i] = std::stod(field);
            } catch (const std::exception&) {
                throw DataError("segments: line " + std::to_string(lineno) + ": bad number '" +
                                field + "'");
            }
        }
        auto seg = LineSegment2D::make(static_cast<int>(v[0]), Vec2(v[1], v[2]), Vec2(v[3], v[4]));
        if (!(seg.length > 0))
            throw DataError("segments: line " + std::to_string(lineno) + ": zero-length segment");
        out.push_back(seg);
    }
    return out;
}

void write_segments_csv(const std::vector<LineSegment2D>& segments,
                        const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("segments: cannot write " + path.string());
    out << "frame_id,px,py,qx,qy\n";
    char buf[256];
    for (const auto& s : segments) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", s.frame_id, s.p.x(),
                      s.p.y(), s.q.x(), s.q.y());
        out << buf;
    }
}

namespace {

Vec3 vec3_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) throw DataError("manifest: " + what + " must be [3]");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Rotation rotation_from_json(const json& j, int frame_id) {
    if (!j.is_array() || j.size() != 9)
        throw DataError("manifest: frame " + std::to_string(frame_id) +
                        ": rotation must have 9 row-major entries");
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = j[r * 3 + c].get<double>();
    if (m.determinant() < 0)
        throw DataError("manifest: frame " + std::to_string(frame_id) + ": improper rotation");
    const double err = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-6)
        throw DataError("manifest: frame " + std::to_string(frame_id) +
                        ": rotation not orthonormal (error " + std::to_string(err) + ")");
    if (err > 1e-12) return Rotation::project(m);
    return Rotation::trusted(m);
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw DataError("dataset: missing manifest.json in " + dir.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("dataset: manifest.json parse error: " + std::string(e.what()));
    }

    Dataset ds;
    ds.root = dir;
    try {
        const json& ji = j.at("intrinsics");
        ds.intrinsics.fx = ji.at("fx").get<double>();
        ds.intrinsics.fy = ji.at("fy").get<double>();
        ds.intrinsics.cx = ji.at("cx").get<double>();
        ds.intrinsics.cy = ji.at("cy").get<double>();
        ds.intrinsics.width = ji.at("width").get<int>();
        ds.intrinsics.height = ji.at("height").get<int>();
        ds.gravity = vec3_from_json(j.at("gravity"), "gravity").normalized();
        for (const json& jf : j.at("frames")) {
            FrameInfo f;
            f.id = jf.at("id").get<int>();
            f.rotation = rotation_from_json(jf.at("rotation"), f.id);
            f.normal_map_path = jf.at("normal_map").get<std::string>();
            ds.frames.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw DataError("dataset: manifest.json schema error: " + std::string(e.what()));
    }

    ds.segments = read_segments_csv(dir / "segments.csv");

    // eager checks: frame references, normal map presence and size
    ds.validate();
    for (const auto& f : ds.frames) {
        const auto p = dir / f.normal_map_path;
        if (!std::filesystem::exists(p))
            throw DataError("dataset: frame " + std::to_string(f.id) + ": missing normal map " +
                            f.normal_map_path);
        const auto [w, h] = read_pfm_size(p);
        if (w != ds.intrinsics.width || h != ds.intrinsics.height)
            throw DataError("dataset: frame " + std::to_string(f.id) + ": normal map size " +
                            std::to_string(w) + "x" + std::to_string(h) +
                            " does not match intrinsics");
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json frames = json::array();
    for (size_t i = 0; i < ds.frames.size(); ++i) {
        const auto& f = ds.frames[i];
        json rot = json::array();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) rot.push_back(f.rotation.matrix()(r, c));
        frames.push_back(
            {{"id", f.id}, {"rotation", rot}, {"normal_map", f.normal_map_path}});
        if (ds.has_memory_maps()) write_pfm(ds.normal_maps_mem[i], dir / f.normal_map_path);
    }
    json j{{"intrinsics",
            {{"fx", ds.intrinsics.fx},
             {"fy", ds.intrinsics.fy},
             {"cx", ds.intrinsics.cx},
             {"cy", ds.intrinsics.cy},
             {"width", ds.intrinsics.width},
             {"height", ds.intrinsics.height}}},
           {"gravity", {ds.gravity.x(), ds.gravity.y(), ds.gravity.z()}},
           {"frames", frames}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("dataset: cannot write manifest.json");
    out << j.dump(2) << "\n";
    write_segments_csv(ds.segments, dir / "segments.csv");
}

}  // namespace msfm
