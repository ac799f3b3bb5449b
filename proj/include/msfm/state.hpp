#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "msfm/bundle.hpp"
#include "msfm/coplanarity.hpp"
#include "msfm/linear_sfm.hpp"
#include "msfm/tracking.hpp"
#include "msfm/types.hpp"

namespace msfm {

// Everything the pipeline has computed so far. Stages append their output and
// later stages check prerequisites via require_*(). Serialized to a versioned
// binary container; contains no paths or timestamps so identical runs produce
// identical bytes.
struct PipelineState {
    std::optional<std::vector<LineSegment2D>> segments;  // preprocessed + labeled
    std::optional<ManhattanFrame> frame;
    std::optional<std::vector<int>> frame_ids;           // frames with rotations below
    std::optional<std::vector<Rotation>> rotations;      // refined, parallel to frame_ids
    std::optional<std::vector<LineTrack>> tracks;
    std::optional<std::vector<CoplanarityRelation>> relations;
    std::optional<SfmSolution> solution;
    std::optional<BundleResult> bundle;

    const std::vector<LineSegment2D>& require_segments() const;
    const ManhattanFrame& require_frame() const;
    const std::vector<Rotation>& require_rotations() const;
    const std::vector<int>& require_frame_ids() const;
    const std::vector<LineTrack>& require_tracks() const;
    const std::vector<CoplanarityRelation>& require_relations() const;
    const SfmSolution& require_solution() const;
    const BundleResult& require_bundle() const;
};

void save_state(const PipelineState& st, const std::filesystem::path& path);
PipelineState load_state(const std::filesystem::path& path);

}  // namespace msfm
