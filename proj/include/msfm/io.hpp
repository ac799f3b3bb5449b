#pragma once

#include <filesystem>

#include "msfm/dataset.hpp"

namespace msfm {

// Loads and eagerly validates a dataset directory:
//   manifest.json  {intrinsics, gravity, frames: [{id, rotation, normal_map}]}
//   segments.csv   header frame_id,px,py,qx,qy
//   *.pfm          per-frame normal maps (header-checked here, pixels lazily)
// Rotations within 1e-6 of orthonormal are re-orthonormalized; worse is an error.
Dataset load_dataset(const std::filesystem::path& dir);

// Writes manifest.json + segments.csv (+ normal maps when held in memory).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

std::vector<LineSegment2D> read_segments_csv(const std::filesystem::path& path);
void write_segments_csv(const std::vector<LineSegment2D>& segments,
                        const std::filesystem::path& path);

}  // namespace msfm
