#include "msfm/pipeline.hpp"

#include <chrono>
#include <functional>

#include "msfm/bundle.hpp"
#include "msfm/coplanarity.hpp"
#include "msfm/errors.hpp"
#include "msfm/linear_sfm.hpp"
#include "msfm/manhattan.hpp"
#include "msfm/preprocess.hpp"
#include "msfm/rotation_refine.hpp"
#include "msfm/tracking.hpp"

namespace msfm {

void stage_preprocess(const Dataset& data, PipelineState& st, const PipelineConfig& cfg) {
    st.segments = preprocess_segments(data.segments, data.intrinsics, cfg);
}

void stage_frame(const Dataset& data, PipelineState& st, const PipelineConfig& cfg) {
    const auto& segs = st.require_segments();
    std::vector<Vec3> normals;
    std::vector<double> weights;
    collect_plane_normals(segs, data, normals, weights);
    const Icosphere sphere = build_icosphere(5);
    const std::vector<double> votes = vote_directions(sphere, normals, weights, cfg.vote_band_rad);
    st.frame = extract_frame(sphere, votes, normals, weights, data.gravity, cfg);
}

void stage_refine_rotations(const Dataset& data, PipelineState& st, const PipelineConfig& cfg) {
    auto segs = st.require_segments();
    RefineResult res = refine_rotations(segs, data, st.require_frame(), cfg);
    st.segments = std::move(segs);  // refined labels
    st.frame = res.frame;           // re-extracted under the refined rotations
    st.frame_ids = std::move(res.frame_ids);
    st.rotations = std::move(res.rotations);
}

void stage_track(const Dataset& data, PipelineState& st, const PipelineConfig& cfg) {
    st.tracks = track_segments(st.require_segments(), st.require_frame_ids(),
                               st.require_rotations(), data.intrinsics, cfg);
}

void stage_coplanarity(const Dataset& data, PipelineState& st, const PipelineConfig& cfg) {
    st.relations = detect_relations(data, st.require_segments(), st.require_tracks(),
                                    st.require_rotations(), st.require_frame(), cfg);
}

void stage_solve(const Dataset& data, PipelineState& st, const PipelineConfig& cfg) {
    st.solution = solve_linear_sfm(data, st.require_segments(), st.require_tracks(),
                                   st.require_relations(), st.require_rotations(),
                                   st.require_frame(), cfg);
}

void stage_bundle(const Dataset& data, PipelineState& st, const PipelineConfig& cfg,
                  int max_phase) {
    st.bundle = bundle_adjust(data, st.require_segments(), st.require_tracks(),
                              st.require_relations(), st.require_rotations(), st.require_frame(),
                              st.require_solution(), cfg, max_phase);
}

PipelineState run_pipeline(const Dataset& data, const PipelineConfig& cfg,
                           const std::optional<std::filesystem::path>& state_path,
                           std::map<std::string, double>* timings) {
    PipelineState st;
    const std::pair<const char*, std::function<void()>> stages[] = {
        {"preprocess", [&] { stage_preprocess(data, st, cfg); }},
        {"frame", [&] { stage_frame(data, st, cfg); }},
        {"refine-rotations", [&] { stage_refine_rotations(data, st, cfg); }},
        {"track", [&] { stage_track(data, st, cfg); }},
        {"coplanarity", [&] { stage_coplanarity(data, st, cfg); }},
        {"solve", [&] { stage_solve(data, st, cfg); }},
        {"ba", [&] { stage_bundle(data, st, cfg, 3); }},
    };
    for (const auto& [name, fn] : stages) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const DataError& e) {
            throw DataError("stage " + std::string(name) + ": " + e.what());
        } catch (const NumericError& e) {
            throw NumericError("stage " + std::string(name) + ": " + e.what());
        } catch (const Error& e) {
            throw Error("stage " + std::string(name) + ": " + e.what());
        }
        if (timings)
            (*timings)[name] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (state_path) save_state(st, *state_path);
    }
    return st;
}

}  // namespace msfm
