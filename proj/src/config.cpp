#include "msfm/config.hpp"

#include <fstream>

#include <json.hpp>

#include "msfm/errors.hpp"

namespace msfm {

using nlohmann::json;

void SceneConfig::validate() const {
    if (!(room_x > 0 && room_y > 0 && room_z > 0))
        throw DataError("scene config: room extents must be positive");
    if (n_frames < 2) throw DataError("scene config: need at least 2 frames");
    if (circle_radius_m < 0) throw DataError("scene config: radius must be >= 0");
    if (rot_walk_std_deg < 0 || rot_white_std_deg < 0 || endpoint_noise_px < 0 ||
        normal_noise_deg < 0)
        throw DataError("scene config: noise stds must be >= 0");
    if (image_width < 8 || image_height < 8) throw DataError("scene config: image too small");
    if (!(camera_height_m > 0 && camera_height_m < room_z))
        throw DataError("scene config: camera height outside room");
    if (n_wall_lines < 0 || n_floor_lines < 0) throw DataError("scene config: negative counts");
}

void PipelineConfig::validate() const {
    if (lambda_smooth < 0) throw DataError("pipeline config: lambda must be >= 0");
    if (eps_depth <= 0) throw DataError("pipeline config: eps_depth must be > 0");
    if (w_reproj <= 0 || w_geom <= 0) throw DataError("pipeline config: weights must be > 0");
}

namespace {

template <typename T>
void get_if_present(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void scene_from_json(const json& j, SceneConfig& s) {
    get_if_present(j, "room_x", s.room_x);
    get_if_present(j, "room_y", s.room_y);
    get_if_present(j, "room_z", s.room_z);
    get_if_present(j, "n_wall_lines", s.n_wall_lines);
    get_if_present(j, "n_floor_lines", s.n_floor_lines);
    get_if_present(j, "circle_radius_m", s.circle_radius_m);
    get_if_present(j, "n_frames", s.n_frames);
    get_if_present(j, "camera_height_m", s.camera_height_m);
    get_if_present(j, "rot_walk_std_deg", s.rot_walk_std_deg);
    get_if_present(j, "rot_white_std_deg", s.rot_white_std_deg);
    get_if_present(j, "endpoint_noise_px", s.endpoint_noise_px);
    get_if_present(j, "normal_noise_deg", s.normal_noise_deg);
    get_if_present(j, "seed", s.seed);
    get_if_present(j, "image_width", s.image_width);
    get_if_present(j, "image_height", s.image_height);
    get_if_present(j, "focal_px", s.focal_px);
    get_if_present(j, "two_room", s.two_room);
    get_if_present(j, "room_gap_m", s.room_gap_m);
    get_if_present(j, "line_margin_m", s.line_margin_m);
}

json scene_to_json(const SceneConfig& s) {
    return json{{"room_x", s.room_x},
                {"room_y", s.room_y},
                {"room_z", s.room_z},
                {"n_wall_lines", s.n_wall_lines},
                {"n_floor_lines", s.n_floor_lines},
                {"circle_radius_m", s.circle_radius_m},
                {"n_frames", s.n_frames},
                {"camera_height_m", s.camera_height_m},
                {"rot_walk_std_deg", s.rot_walk_std_deg},
                {"rot_white_std_deg", s.rot_white_std_deg},
                {"endpoint_noise_px", s.endpoint_noise_px},
                {"normal_noise_deg", s.normal_noise_deg},
                {"seed", s.seed},
                {"image_width", s.image_width},
                {"image_height", s.image_height},
                {"focal_px", s.focal_px},
                {"two_room", s.two_room},
                {"room_gap_m", s.room_gap_m},
                {"line_margin_m", s.line_margin_m}};
}

void pipeline_from_json(const json& j, PipelineConfig& p) {
    get_if_present(j, "merge_angle_deg", p.merge_angle_deg);
    get_if_present(j, "merge_gap_frac", p.merge_gap_frac);
    get_if_present(j, "min_length_frac", p.min_length_frac);
    get_if_present(j, "vote_band_rad", p.vote_band_rad);
    get_if_present(j, "gravity_cone_deg", p.gravity_cone_deg);
    get_if_present(j, "orthogonal_band_deg", p.orthogonal_band_deg);
    get_if_present(j, "classify_angle_deg", p.classify_angle_deg);
    get_if_present(j, "neighbor_z_deg", p.neighbor_z_deg);
    get_if_present(j, "lambda_smooth", p.lambda_smooth);
    get_if_present(j, "refine_max_inner", p.refine_max_inner);
    get_if_present(j, "refine_max_outer", p.refine_max_outer);
    get_if_present(j, "track_z_deg", p.track_z_deg);
    get_if_present(j, "track_dist_frac", p.track_dist_frac);
    get_if_present(j, "track_angle_deg", p.track_angle_deg);
    get_if_present(j, "junction_dist_frac", p.junction_dist_frac);
    get_if_present(j, "coplanar_normal_deg", p.coplanar_normal_deg);
    get_if_present(j, "coplanar_dev_deg", p.coplanar_dev_deg);
    get_if_present(j, "floor_vertical_deg", p.floor_vertical_deg);
    get_if_present(j, "use_junction", p.use_junction);
    get_if_present(j, "use_orthogonal", p.use_orthogonal);
    get_if_present(j, "use_parallel", p.use_parallel);
    get_if_present(j, "use_floor", p.use_floor);
    get_if_present(j, "eps_depth", p.eps_depth);
    get_if_present(j, "scale_row_weight", p.scale_row_weight);
    get_if_present(j, "w_reproj", p.w_reproj);
    get_if_present(j, "w_geom", p.w_geom);
    get_if_present(j, "ba_max_iterations", p.ba_max_iterations);
}

json pipeline_to_json(const PipelineConfig& p) {
    return json{{"merge_angle_deg", p.merge_angle_deg},
                {"merge_gap_frac", p.merge_gap_frac},
                {"min_length_frac", p.min_length_frac},
                {"vote_band_rad", p.vote_band_rad},
                {"gravity_cone_deg", p.gravity_cone_deg},
                {"orthogonal_band_deg", p.orthogonal_band_deg},
                {"classify_angle_deg", p.classify_angle_deg},
                {"neighbor_z_deg", p.neighbor_z_deg},
                {"lambda_smooth", p.lambda_smooth},
                {"refine_max_inner", p.refine_max_inner},
                {"refine_max_outer", p.refine_max_outer},
                {"track_z_deg", p.track_z_deg},
                {"track_dist_frac", p.track_dist_frac},
                {"track_angle_deg", p.track_angle_deg},
                {"junction_dist_frac", p.junction_dist_frac},
                {"coplanar_normal_deg", p.coplanar_normal_deg},
                {"coplanar_dev_deg", p.coplanar_dev_deg},
                {"floor_vertical_deg", p.floor_vertical_deg},
                {"use_junction", p.use_junction},
                {"use_orthogonal", p.use_orthogonal},
                {"use_parallel", p.use_parallel},
                {"use_floor", p.use_floor},
                {"eps_depth", p.eps_depth},
                {"scale_row_weight", p.scale_row_weight},
                {"w_reproj", p.w_reproj},
                {"w_geom", p.w_geom},
                {"ba_max_iterations", p.ba_max_iterations}};
}

}  // namespace

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("config: parse error in " + path.string() + ": " + e.what());
    }
    Config cfg;
    try {
        if (j.contains("scene")) scene_from_json(j.at("scene"), cfg.scene);
        if (j.contains("pipeline")) pipeline_from_json(j.at("pipeline"), cfg.pipeline);
    } catch (const json::exception& e) {
        throw DataError("config: schema error in " + path.string() + ": " + e.what());
    }
    cfg.scene.validate();
    cfg.pipeline.validate();
    return cfg;
}

void save_config(const Config& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("config: cannot write " + path.string());
    json j{{"scene", scene_to_json(cfg.scene)}, {"pipeline", pipeline_to_json(cfg.pipeline)}};
    out << j.dump(2) << "\n";
}

}  // namespace msfm
