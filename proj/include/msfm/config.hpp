#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "msfm/types.hpp"

namespace msfm {

// Synthetic scene description. The room is an axis-aligned box
// [-sx/2, sx/2] x [-sy/2, sy/2] x [0, sz] with the floor at z = 0; cameras sit
// on a horizontal circle and face radially outward, covering 360 degrees.
struct SceneConfig {
    double room_x = 6.0, room_y = 6.0, room_z = 3.0;  // meters
    // Default line counts keep parallel same-axis lines far enough apart that
    // their projections never fall inside the merge or match distance gates.
    int n_wall_lines = 32;
    int n_floor_lines = 12;
    double circle_radius_m = 0.3;
    int n_frames = 240;  // 1.5 degrees of yaw between neighbors
    double camera_height_m = 1.0;

    // noise model
    double rot_walk_std_deg = 0.0;   // per-frame random-walk step
    double rot_white_std_deg = 0.0;  // i.i.d. per frame
    double endpoint_noise_px = 0.0;
    double normal_noise_deg = 0.0;
    uint64_t seed = 1;

    int image_width = 1280, image_height = 800;
    double focal_px = 0.0;  // 0 -> width / 2

    // two_room: two boxes with a common floor plane, cameras split between them,
    // no cross-visibility. room B is offset along +x by room_x + room_gap_m.
    bool two_room = false;
    double room_gap_m = 4.0;

    double line_margin_m = 0.8;  // keeps line endpoints away from face borders

    double fx() const { return focal_px > 0 ? focal_px : image_width / 2.0; }

    void validate() const;
};

// Every threshold of the reconstruction, in one place. Defaults follow the
// published values; angles in degrees at this boundary, radians internally.
struct PipelineConfig {
    // preprocessing
    double merge_angle_deg = 1.0;
    double merge_gap_frac = 0.05;   // of min(w, h)
    double min_length_frac = 0.05;  // of min(w, h)

    // Manhattan frame extraction
    double vote_band_rad = 0.03;
    double gravity_cone_deg = 10.0;
    double orthogonal_band_deg = 1.0;  // around 90 degrees from v_z

    // rotation refinement
    double classify_angle_deg = 85.0;
    double neighbor_z_deg = 10.0;
    double lambda_smooth = 0.1;
    int refine_max_inner = 100;
    int refine_max_outer = 10;

    // line tracking
    double track_z_deg = 2.0;
    double track_dist_frac = 0.05;  // of min(h, w)
    double track_angle_deg = 1.0;

    // coplanarity detection
    double junction_dist_frac = 0.1;  // of min(h, w)
    double coplanar_normal_deg = 20.0;
    double coplanar_dev_deg = 5.0;
    double floor_vertical_deg = 25.0;
    bool use_junction = true;
    bool use_orthogonal = true;
    bool use_parallel = true;
    bool use_floor = true;

    // linear SfM
    double eps_depth = 1e-3;
    double scale_row_weight = 1e6;  // quadratic weight of the soft scale gauge row

    // bundle adjustment
    double w_reproj = 1.0;
    double w_geom = 1e4;
    int ba_max_iterations = 200;

    void validate() const;
};

struct Config {
    SceneConfig scene;
    PipelineConfig pipeline;
};

Config load_config(const std::filesystem::path& path);
void save_config(const Config& cfg, const std::filesystem::path& path);

}  // namespace msfm
