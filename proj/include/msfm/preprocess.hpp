#pragma once

#include <vector>

#include "msfm/config.hpp"
#include "msfm/types.hpp"

namespace msfm {

// Merges fragments of the same image line within one frame: segments whose
// directions differ by less than merge_angle and whose closest endpoints are
// nearer than merge_gap_frac * min(w, h) are grouped transitively. Each group
// is replaced by one segment on the length-weighted mean line, spanning the
// extremal endpoint projections. Input segments must share a frame id.
std::vector<LineSegment2D> merge_segments(const std::vector<LineSegment2D>& segs,
                                          const Intrinsics& K, const PipelineConfig& cfg);

// Drops segments shorter than min_length_frac * min(w, h).
std::vector<LineSegment2D> filter_short(const std::vector<LineSegment2D>& segs,
                                        const Intrinsics& K, const PipelineConfig& cfg);

// Full stage over the whole dataset: per frame merge, then filter, then
// canonical ordering (endpoints lexicographic within a segment, segments by
// endpoints within a frame, frames ascending).
std::vector<LineSegment2D> preprocess_segments(const std::vector<LineSegment2D>& raw,
                                               const Intrinsics& K, const PipelineConfig& cfg);

}  // namespace msfm
