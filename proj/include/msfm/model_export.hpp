#pragma once

#include <filesystem>
#include <vector>

#include "msfm/bundle.hpp"
#include "msfm/state.hpp"
#include "msfm/types.hpp"

namespace msfm {

// Reconstruction snapshot ready for export: finite line segments (observation
// extent along the axis direction), camera poses, and intrinsics.
struct LineModel {
    struct ModelLine {
        int track_id = -1;
        Axis axis = Axis::X;
        Vec3 point = Vec3::Zero();  // closest point of the infinite line to the origin
        Vec3 a = Vec3::Zero(), b = Vec3::Zero();  // exported extent
    };
    std::vector<int> frame_ids;
    std::vector<Rotation> rotations;
    std::vector<Vec3> centers;
    Intrinsics intrinsics;
    ManhattanFrame frame;
    std::vector<ModelLine> lines;
};

// Builds the model from the bundle stage when present, otherwise from the
// linear solution. Throws DataError when neither is available.
LineModel build_model(const Dataset& data, const PipelineState& st);

// ASCII PLY: two vertices per line (colored by axis), one edge per line,
// camera centers as green vertices. Byte-deterministic.
void save_model_ply(const LineModel& model, const std::filesystem::path& path);

// Full numeric model as JSON. Byte-deterministic.
void save_model_json(const LineModel& model, const std::filesystem::path& path);

}  // namespace msfm
