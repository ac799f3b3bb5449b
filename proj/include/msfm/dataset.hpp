#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "msfm/types.hpp"

namespace msfm {

// Per-pixel camera-frame surface normals. Invalid pixels are (0,0,0).
struct NormalMap {
    int width = 0, height = 0;
    std::vector<Eigen::Vector3f> data;  // row-major, top-left origin

    bool valid(int x, int y) const { return data[y * width + x].squaredNorm() > 0.0f; }
    Vec3 at(int x, int y) const { return data[y * width + x].cast<double>(); }
    void set(int x, int y, const Vec3& n) { data[y * width + x] = n.cast<float>(); }

    static NormalMap zeros(int w, int h) {
        NormalMap m;
        m.width = w;
        m.height = h;
        m.data.assign(static_cast<size_t>(w) * h, Eigen::Vector3f::Zero());
        return m;
    }
};

struct FrameInfo {
    int id = -1;
    Rotation rotation;            // initial (IMU) rotation, global-to-camera
    std::string normal_map_path;  // relative to the dataset root
};

// A fully validated input dataset. Normal maps stay on disk unless the
// dataset was synthesized in memory; fetch per frame via load_normal_map.
struct Dataset {
    std::filesystem::path root;
    Intrinsics intrinsics;
    Vec3 gravity{0, 0, -1};
    std::vector<FrameInfo> frames;          // strictly increasing ids
    std::vector<LineSegment2D> segments;    // sorted by frame id, stable
    std::vector<NormalMap> normal_maps_mem; // optional; parallel to frames when non-empty

    int frame_index(int frame_id) const;
    const Rotation& rotation_of(int frame_id) const { return frames[frame_index(frame_id)].rotation; }
    NormalMap load_normal_map(int frame_id) const;
    bool has_memory_maps() const { return !normal_maps_mem.empty(); }

    void validate() const;
};

}  // namespace msfm
