#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "msfm/config.hpp"
#include "msfm/dataset.hpp"
#include "msfm/state.hpp"

namespace msfm {

// One pipeline stage each. Prerequisites are taken from the state via
// require_*(); the stage's own slot is overwritten.
void stage_preprocess(const Dataset& data, PipelineState& st, const PipelineConfig& cfg);
void stage_frame(const Dataset& data, PipelineState& st, const PipelineConfig& cfg);
void stage_refine_rotations(const Dataset& data, PipelineState& st, const PipelineConfig& cfg);
void stage_track(const Dataset& data, PipelineState& st, const PipelineConfig& cfg);
void stage_coplanarity(const Dataset& data, PipelineState& st, const PipelineConfig& cfg);
void stage_solve(const Dataset& data, PipelineState& st, const PipelineConfig& cfg);
void stage_bundle(const Dataset& data, PipelineState& st, const PipelineConfig& cfg,
                  int max_phase = 3);

// All stages in order. With `state_path` set, the state is rewritten after
// every stage so a failure leaves the completed stages on disk. Errors gain a
// "stage <name>:" prefix. Per-stage wall-clock seconds go to `timings`.
PipelineState run_pipeline(const Dataset& data, const PipelineConfig& cfg,
                           const std::optional<std::filesystem::path>& state_path = {},
                           std::map<std::string, double>* timings = nullptr);

}  // namespace msfm
