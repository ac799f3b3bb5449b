#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "msfm/config.hpp"
#include "msfm/dataset.hpp"
#include "msfm/rng.hpp"
#include "msfm/types.hpp"

namespace msfm {

// One axis-aligned box face; the plane is coord[axis] == offset with the
// inward (room-side) unit normal stored explicitly.
struct GTFace {
    int id = 0;
    int axis = 2;        // 0/1/2 meaning x/y/z coordinate is fixed
    double offset = 0.0;
    Vec3 inward_normal = Vec3::UnitZ();
    bool is_floor = false;
    int room = 0;
};

struct GTLine {
    int id = 0;
    Vec3 a = Vec3::Zero(), b = Vec3::Zero();
    Axis axis = Axis::X;  // direction of b - a
    int face = 0;
    int room = 0;
};

struct GroundTruth {
    std::vector<Rotation> rotations;     // true world->camera rotations
    std::vector<Vec3> translations;      // true camera centers
    ManhattanFrame frame;                // true axis frame (z toward gravity)
    Vec3 up = Vec3::UnitZ();
    std::vector<GTFace> faces;
    std::vector<GTLine> lines;
    std::vector<int> segment_line;       // GT line id per dataset segment
    std::vector<std::pair<int, int>> coplanar_pairs;  // line-id pairs sharing a plane
    std::vector<int> floor_line_ids;
    double scene_diameter = 0.0;
    bool two_room = false;
    int room_split_frame = 0;            // frames >= this observe room 1

    int room_of_frame(int frame_id) const {
        return (two_room && frame_id >= room_split_frame) ? 1 : 0;
    }
};

struct SynthOptions {
    bool render_normal_maps = true;
    // When set, PFM maps are streamed to <dir>/normals/ instead of kept in
    // memory and the dataset root is fixed to <dir>.
    std::optional<std::filesystem::path> stream_dir;
};

std::pair<Dataset, GroundTruth> generate_scene(const SceneConfig& cfg,
                                               const SynthOptions& opt = {});

// Projects a 3D segment into the image: clipped against a 0.1 m near plane
// and the image rectangle. Empty when nothing visible remains.
std::optional<std::pair<Vec2, Vec2>> project_segment_to_image(const Vec3& a, const Vec3& b,
                                                              const Intrinsics& K,
                                                              const Rotation& R,
                                                              const Vec3& center);

// R_noisy = drift_i * white_i * R_true with drift a compounding random walk
// (drift_0 identity) and white an independent per-frame perturbation. Angles
// are drawn from N(0, std) about uniformly random axes.
std::vector<Rotation> corrupt_rotations(const std::vector<Rotation>& truth, double walk_std_deg,
                                        double white_std_deg, Rng& rng);

// Copies each segment's true Manhattan axis onto its label.
void apply_gt_labels(Dataset& data, const GroundTruth& gt);

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace msfm
