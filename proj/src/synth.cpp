#include "msfm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "msfm/errors.hpp"
#include "msfm/geometry.hpp"
#include "msfm/io.hpp"
#include "msfm/pfm.hpp"

namespace msfm {
namespace {

using json = nlohmann::json;

constexpr double kNearZ = 0.1;
constexpr double kMinEmitLenPx = 0.5;

struct RoomBox {
    Vec3 lo, hi;
    int face0 = 0;  // +0 floor, +1 ceiling, +2 x=lo, +3 x=hi, +4 y=lo, +5 y=hi
    int room = 0;
};

void append_faces(const RoomBox& rb, std::vector<GTFace>& faces) {
    auto add = [&](int idx, int axis, double offset, Vec3 n, bool floor) {
        faces.push_back(GTFace{rb.face0 + idx, axis, offset, n, floor, rb.room});
    };
    add(0, 2, rb.lo.z(), Vec3::UnitZ(), true);
    add(1, 2, rb.hi.z(), -Vec3::UnitZ(), false);
    add(2, 0, rb.lo.x(), Vec3::UnitX(), false);
    add(3, 0, rb.hi.x(), -Vec3::UnitX(), false);
    add(4, 1, rb.lo.y(), Vec3::UnitY(), false);
    add(5, 1, rb.hi.y(), -Vec3::UnitY(), false);
}

// Stratified position: stratum i of n over [lo, hi] with jitter bounded to a
// quarter stratum, so neighbors stay at least half a stratum apart.
double stratum(double lo, double hi, int i, int n, Rng& rng) {
    return lo + (hi - lo) * (i + 0.5 + 0.5 * (rng.uniform() - 0.5)) / n;
}

// Random sub-interval covering at least the middle fifth of [lo, hi].
std::pair<double, double> sub_extent(double lo, double hi, Rng& rng) {
    double a = lo + (hi - lo) * 0.4 * rng.uniform();
    double b = hi - (hi - lo) * 0.4 * rng.uniform();
    return {a, b};
}

Axis axis_of_dir(const Vec3& d) {
    int k = 0;
    d.cwiseAbs().maxCoeff(&k);
    return axis_from_index(k);
}

void place_room_lines(const RoomBox& rb, const SceneConfig& cfg, Rng& rng,
                      std::vector<GTLine>& lines) {
    const double m = cfg.line_margin_m;
    const double sz = rb.hi.z() - rb.lo.z();
    // Wall horizontals sit above camera height so that no wall line is ever
    // coplanar with a (floor line, camera center) pair; that keeps distinct
    // parallel lines from projecting onto a common image line.
    double h_lo = rb.lo.z() + cfg.camera_height_m + 0.35;
    double h_hi = rb.hi.z() - 0.3;
    if (h_lo >= h_hi - 0.05) {
        h_lo = rb.lo.z() + 0.55 * sz;
        h_hi = rb.lo.z() + 0.9 * sz;
    }
    const double v_lo = rb.lo.z() + m, v_hi = rb.hi.z() - 0.3;

    auto emit = [&](const Vec3& a, const Vec3& b, int face) {
        GTLine l;
        l.id = static_cast<int>(lines.size());
        l.a = a;
        l.b = b;
        l.axis = axis_of_dir(b - a);
        l.face = face;
        l.room = rb.room;
        lines.push_back(l);
    };

    // Walls: 0 x=lo, 1 x=hi, 2 y=lo, 3 y=hi. u is the in-wall horizontal axis.
    for (int w = 0; w < 4; ++w) {
        int k = cfg.n_wall_lines / 4 + (w < cfg.n_wall_lines % 4 ? 1 : 0);
        if (k <= 0) continue;
        int fixed_axis = w < 2 ? 0 : 1;
        int u_axis = 1 - fixed_axis;
        double c = (w % 2 == 0) ? rb.lo[fixed_axis] : rb.hi[fixed_axis];
        int face = rb.face0 + 2 + w;
        double u0 = rb.lo[u_axis] + m, u1 = rb.hi[u_axis] - m;

        int n_h = k >= 2 ? std::clamp(k / 5, 2, 6) : k;
        int n_v = k - n_h;

        auto point = [&](double u, double z) {
            Vec3 p;
            p[fixed_axis] = c;
            p[u_axis] = u;
            p[2] = z;
            return p;
        };

        int first_h = -1, first_v = -1;
        for (int i = 0; i < n_h; ++i) {
            double z = stratum(h_lo, h_hi, i, n_h, rng);
            auto [a, b] = sub_extent(u0, u1, rng);
            if (i == 0) first_h = static_cast<int>(lines.size());
            emit(point(a, z), point(b, z), face);
        }
        for (int i = 0; i < n_v; ++i) {
            double u = stratum(u0, u1, i, n_v, rng);
            auto [a, b] = sub_extent(v_lo, v_hi, rng);
            if (i == 0) first_v = static_cast<int>(lines.size());
            emit(point(u, a), point(u, b), face);
        }
        // Make the first horizontal and first vertical meet in an L so a
        // junction exists on every wall that carries both.
        if (first_h >= 0 && first_v >= 0) {
            GTLine& lh = lines[first_h];
            GTLine& lv = lines[first_v];
            double uv = lv.a[u_axis];
            double zh = lh.a.z();
            double ua = lh.a[u_axis], ub = lh.b[u_axis];
            if (std::abs(uv - ua) < std::abs(uv - ub)) std::swap(ua, ub);
            // horizontal runs from ua to the vertical's u position
            if (std::abs(uv - ua) < 0.25 * (u1 - u0))
                ua = std::clamp(uv + (uv > ua ? -0.4 : 0.4) * (u1 - u0), u0, u1);
            lh.a = point(ua, zh);
            lh.b = point(uv, zh);
            // vertical starts at the horizontal's height, extending away
            lv.a = point(uv, zh);
            if (v_hi - zh >= 0.3)
                lv.b = point(uv, std::min(v_hi, zh + std::max(0.4 * (v_hi - v_lo), 0.3)));
            else
                lv.b = point(uv, std::max(v_lo, zh - 0.4 * (v_hi - v_lo)));
        }
    }

    // Floor lines: half along x with stratified y, half along y.
    int n_fx = (cfg.n_floor_lines + 1) / 2;
    int n_fy = cfg.n_floor_lines - n_fx;
    double x0 = rb.lo.x() + m, x1 = rb.hi.x() - m;
    double y0 = rb.lo.y() + m, y1 = rb.hi.y() - m;
    double zf = rb.lo.z();
    for (int i = 0; i < n_fx; ++i) {
        double y = stratum(y0, y1, i, n_fx, rng);
        auto [a, b] = sub_extent(x0, x1, rng);
        emit(Vec3(a, y, zf), Vec3(b, y, zf), rb.face0);
    }
    for (int i = 0; i < n_fy; ++i) {
        double x = stratum(x0, x1, i, n_fy, rng);
        auto [a, b] = sub_extent(y0, y1, rng);
        emit(Vec3(x, a, zf), Vec3(x, b, zf), rb.face0);
    }
}

std::optional<std::pair<Vec2, Vec2>> project_segment(const Vec3& A, const Vec3& B,
                                                     const Intrinsics& K, const Mat3& R,
                                                     const Vec3& C) {
    Vec3 a = R * (A - C), b = R * (B - C);
    if (a.z() < kNearZ && b.z() < kNearZ) return std::nullopt;
    if (a.z() < kNearZ)
        a = a + (b - a) * ((kNearZ - a.z()) / (b.z() - a.z()));
    else if (b.z() < kNearZ)
        b = a + (b - a) * ((kNearZ - a.z()) / (b.z() - a.z()));
    Vec2 p(K.fx * a.x() / a.z() + K.cx, K.fy * a.y() / a.z() + K.cy);
    Vec2 q(K.fx * b.x() / b.z() + K.cx, K.fy * b.y() / b.z() + K.cy);

    double t0 = 0.0, t1 = 1.0;
    Vec2 d = q - p;
    auto clip = [&](double denom, double num) {
        if (std::abs(denom) < 1e-15) return num >= 0.0;
        double t = num / denom;
        if (denom > 0) {
            if (t < t0) return false;
            t1 = std::min(t1, t);
        } else {
            if (t > t1) return false;
            t0 = std::max(t0, t);
        }
        return true;
    };
    // constraints d*t <= num kept as: x>=0, x<=w, y>=0, y<=h
    if (!clip(-d.x(), p.x())) return std::nullopt;
    if (!clip(d.x(), K.width - p.x())) return std::nullopt;
    if (!clip(-d.y(), p.y())) return std::nullopt;
    if (!clip(d.y(), K.height - p.y())) return std::nullopt;
    if (t0 >= t1) return std::nullopt;
    Vec2 cp = p + t0 * d, cq = p + t1 * d;
    if ((cq - cp).norm() < kMinEmitLenPx) return std::nullopt;
    return std::make_pair(cp, cq);
}

}  // namespace

std::optional<std::pair<Vec2, Vec2>> project_segment_to_image(const Vec3& a, const Vec3& b,
                                                              const Intrinsics& K,
                                                              const Rotation& R,
                                                              const Vec3& center) {
    return project_segment(a, b, K, R.matrix(), center);
}

namespace {

Vec3 perturb_direction(const Vec3& n, double std_rad, Rng& rng) {
    Vec3 axis;
    do {
        Vec3 v = rng.unit_vector();
        axis = v - v.dot(n) * n;
    } while (axis.squaredNorm() < 1e-12);
    axis.normalize();
    return exp_so3(axis * rng.normal(std_rad)) * n;
}

NormalMap render_normal_map(const RoomBox& rb, const std::vector<GTFace>& faces,
                            const Intrinsics& K, const Mat3& R, const Vec3& C, double noise_deg,
                            Rng& rng) {
    NormalMap nm = NormalMap::zeros(K.width, K.height);
    Mat3 Rt = R.transpose();
    Mat3 Kinv = K.Kinv();
    double noise_rad = deg2rad(noise_deg);
    for (int iy = 0; iy < K.height; ++iy) {
        for (int ix = 0; ix < K.width; ++ix) {
            Vec3 d = Rt * (Kinv * Vec3(ix + 0.5, iy + 0.5, 1.0));
            // exit face of the room box seen from inside
            double t_exit = std::numeric_limits<double>::infinity();
            int face_idx = -1;
            for (int a = 0; a < 3; ++a) {
                if (d[a] > 1e-15) {
                    double t = (rb.hi[a] - C[a]) / d[a];
                    if (t < t_exit) {
                        t_exit = t;
                        face_idx = a == 2 ? 1 : (a == 0 ? 3 : 5);
                    }
                } else if (d[a] < -1e-15) {
                    double t = (rb.lo[a] - C[a]) / d[a];
                    if (t < t_exit) {
                        t_exit = t;
                        face_idx = a == 2 ? 0 : (a == 0 ? 2 : 4);
                    }
                }
            }
            if (face_idx < 0) continue;
            Vec3 n_cam = R * faces[rb.face0 + face_idx].inward_normal;
            if (noise_rad > 0) n_cam = perturb_direction(n_cam, noise_rad, rng);
            nm.set(ix, iy, n_cam);
        }
    }
    return nm;
}

std::string map_name(int frame_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "normals/%06d.pfm", frame_id);
    return buf;
}

}  // namespace

std::vector<Rotation> corrupt_rotations(const std::vector<Rotation>& truth, double walk_std_deg,
                                        double white_std_deg, Rng& rng) {
    std::vector<Rotation> out;
    out.reserve(truth.size());
    Mat3 drift = Mat3::Identity();
    for (size_t i = 0; i < truth.size(); ++i) {
        if (i > 0 && walk_std_deg > 0)
            drift = drift * exp_so3(rng.unit_vector() * rng.normal(deg2rad(walk_std_deg)));
        Mat3 white = Mat3::Identity();
        if (white_std_deg > 0)
            white = exp_so3(rng.unit_vector() * rng.normal(deg2rad(white_std_deg)));
        out.push_back(Rotation::project(drift * white * truth[i].matrix()));
    }
    return out;
}

std::pair<Dataset, GroundTruth> generate_scene(const SceneConfig& cfg, const SynthOptions& opt) {
    cfg.validate();
    Rng rng(cfg.seed);

    std::vector<RoomBox> rooms;
    {
        RoomBox r0;
        r0.lo = Vec3(-cfg.room_x / 2, -cfg.room_y / 2, 0.0);
        r0.hi = Vec3(cfg.room_x / 2, cfg.room_y / 2, cfg.room_z);
        r0.face0 = 0;
        r0.room = 0;
        rooms.push_back(r0);
        if (cfg.two_room) {
            // second room scaled up a little so the two interiors never look
            // alike through a pure-rotation warp
            double sx = cfg.room_x * 1.2, sy = cfg.room_y * 1.2, sz = cfg.room_z * 1.15;
            RoomBox r1;
            double x_lo = cfg.room_x / 2 + cfg.room_gap_m;
            r1.lo = Vec3(x_lo, -sy / 2, 0.0);
            r1.hi = Vec3(x_lo + sx, sy / 2, sz);
            r1.face0 = 6;
            r1.room = 1;
            rooms.push_back(r1);
        }
    }

    GroundTruth gt;
    gt.two_room = cfg.two_room;
    gt.up = Vec3::UnitZ();
    gt.frame.vx = Vec3::UnitX();
    gt.frame.vz = -Vec3::UnitZ();  // toward gravity
    gt.frame.vy = gt.frame.vz.cross(gt.frame.vx);
    for (const auto& rb : rooms) append_faces(rb, gt.faces);
    for (const auto& rb : rooms) place_room_lines(rb, cfg, rng, gt.lines);

    // coplanar ground truth: same face, or floor faces across rooms
    for (size_t i = 0; i < gt.lines.size(); ++i) {
        bool fi = gt.faces[gt.lines[i].face].is_floor;
        if (fi) gt.floor_line_ids.push_back(static_cast<int>(i));
        for (size_t j = i + 1; j < gt.lines.size(); ++j) {
            bool fj = gt.faces[gt.lines[j].face].is_floor;
            if (gt.lines[i].face == gt.lines[j].face || (fi && fj))
                gt.coplanar_pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        }
    }

    {
        Vec3 lo = rooms.front().lo, hi = rooms.front().hi;
        for (const auto& rb : rooms) {
            lo = lo.cwiseMin(rb.lo);
            hi = hi.cwiseMax(rb.hi);
        }
        gt.scene_diameter = (hi - lo).norm();
    }

    // camera ring(s)
    int n0 = cfg.two_room ? cfg.n_frames / 2 : cfg.n_frames;
    gt.room_split_frame = n0;
    for (int i = 0; i < cfg.n_frames; ++i) {
        int room = (cfg.two_room && i >= n0) ? 1 : 0;
        const RoomBox& rb = rooms[room];
        int local = room == 0 ? i : i - n0;
        int count = room == 0 ? n0 : cfg.n_frames - n0;
        double th = 2.0 * kPi * local / count;
        Vec3 center = 0.5 * (rb.lo + rb.hi);
        Vec3 C(center.x() + cfg.circle_radius_m * std::cos(th),
               center.y() + cfg.circle_radius_m * std::sin(th),
               rb.lo.z() + cfg.camera_height_m);
        Mat3 R;
        R.row(0) = Vec3(std::sin(th), -std::cos(th), 0.0);   // camera x
        R.row(1) = Vec3(0.0, 0.0, -1.0);                     // camera y, down
        R.row(2) = Vec3(std::cos(th), std::sin(th), 0.0);    // camera z, outward
        gt.rotations.push_back(Rotation(R));
        gt.translations.push_back(C);
    }

    std::vector<Rotation> noisy =
        corrupt_rotations(gt.rotations, cfg.rot_walk_std_deg, cfg.rot_white_std_deg, rng);

    Dataset data;
    data.intrinsics.fx = cfg.fx();
    data.intrinsics.fy = cfg.fx();
    data.intrinsics.cx = cfg.image_width / 2.0;
    data.intrinsics.cy = cfg.image_height / 2.0;
    data.intrinsics.width = cfg.image_width;
    data.intrinsics.height = cfg.image_height;
    data.gravity = Vec3(0, 0, -1);
    if (opt.stream_dir) data.root = *opt.stream_dir;

    for (int i = 0; i < cfg.n_frames; ++i)
        data.frames.push_back(FrameInfo{i, noisy[i], map_name(i)});

    // segments under the true poses
    for (int i = 0; i < cfg.n_frames; ++i) {
        int room = gt.room_of_frame(i);
        const Mat3 R = gt.rotations[i].matrix();
        const Vec3& C = gt.translations[i];
        for (const auto& line : gt.lines) {
            if (line.room != room) continue;
            auto pr = project_segment(line.a, line.b, data.intrinsics, R, C);
            if (!pr) continue;
            Vec2 p = pr->first, q = pr->second;
            if (cfg.endpoint_noise_px > 0) {
                p.x() += rng.normal(cfg.endpoint_noise_px);
                p.y() += rng.normal(cfg.endpoint_noise_px);
                q.x() += rng.normal(cfg.endpoint_noise_px);
                q.y() += rng.normal(cfg.endpoint_noise_px);
            }
            if ((q - p).norm() < 1e-9) continue;
            data.segments.push_back(LineSegment2D::make(i, p, q));
            gt.segment_line.push_back(line.id);
        }
    }

    if (opt.render_normal_maps) {
        if (opt.stream_dir) {
            std::filesystem::create_directories(*opt.stream_dir / "normals");
        } else {
            data.normal_maps_mem.resize(cfg.n_frames);
        }
        for (int i = 0; i < cfg.n_frames; ++i) {
            const RoomBox& rb = rooms[gt.room_of_frame(i)];
            NormalMap nm = render_normal_map(rb, gt.faces, data.intrinsics,
                                             gt.rotations[i].matrix(), gt.translations[i],
                                             cfg.normal_noise_deg, rng);
            if (opt.stream_dir)
                write_pfm(nm, *opt.stream_dir / map_name(i));
            else
                data.normal_maps_mem[i] = std::move(nm);
        }
    }

    data.validate();
    return {std::move(data), std::move(gt)};
}

void apply_gt_labels(Dataset& data, const GroundTruth& gt) {
    if (data.segments.size() != gt.segment_line.size())
        throw Error("apply_gt_labels: segment count mismatch");
    for (size_t k = 0; k < data.segments.size(); ++k)
        data.segments[k].label = gt.lines[gt.segment_line[k]].axis;
}

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw DataError("ground truth: bad vec3");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

void save_ground_truth(const GroundTruth& gt, const std::filesystem::path& path) {
    json j;
    for (const auto& r : gt.rotations) {
        json m = json::array();
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) m.push_back(r.matrix()(a, b));
        j["rotations"].push_back(m);
    }
    for (const auto& t : gt.translations) j["translations"].push_back(vec3_json(t));
    j["frame"] = {{"vx", vec3_json(gt.frame.vx)},
                  {"vy", vec3_json(gt.frame.vy)},
                  {"vz", vec3_json(gt.frame.vz)}};
    j["up"] = vec3_json(gt.up);
    j["faces"] = json::array();
    for (const auto& f : gt.faces)
        j["faces"].push_back({{"id", f.id},
                              {"axis", f.axis},
                              {"offset", f.offset},
                              {"inward_normal", vec3_json(f.inward_normal)},
                              {"is_floor", f.is_floor},
                              {"room", f.room}});
    j["lines"] = json::array();
    for (const auto& l : gt.lines)
        j["lines"].push_back({{"id", l.id},
                              {"a", vec3_json(l.a)},
                              {"b", vec3_json(l.b)},
                              {"axis", static_cast<int>(l.axis)},
                              {"face", l.face},
                              {"room", l.room}});
    j["segment_line"] = gt.segment_line;
    j["coplanar_pairs"] = json::array();
    for (const auto& [a, b] : gt.coplanar_pairs) j["coplanar_pairs"].push_back({a, b});
    j["floor_line_ids"] = gt.floor_line_ids;
    j["scene_diameter"] = gt.scene_diameter;
    j["two_room"] = gt.two_room;
    j["room_split_frame"] = gt.room_split_frame;

    std::ofstream out(path);
    if (!out) throw DataError("cannot write ground truth: " + path.string());
    out << j.dump(2) << "\n";
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ground truth: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("ground truth: invalid JSON: ") + e.what());
    }
    try {
        GroundTruth gt;
        for (const auto& m : j.at("rotations")) {
            Mat3 r;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) r(a, b) = m.at(3 * a + b).get<double>();
            gt.rotations.push_back(Rotation::project(r));
        }
        for (const auto& t : j.at("translations")) gt.translations.push_back(vec3_from(t));
        gt.frame.vx = vec3_from(j.at("frame").at("vx"));
        gt.frame.vy = vec3_from(j.at("frame").at("vy"));
        gt.frame.vz = vec3_from(j.at("frame").at("vz"));
        gt.frame.validate();
        gt.up = vec3_from(j.at("up"));
        for (const auto& f : j.at("faces")) {
            GTFace face;
            face.id = f.at("id").get<int>();
            face.axis = f.at("axis").get<int>();
            face.offset = f.at("offset").get<double>();
            face.inward_normal = vec3_from(f.at("inward_normal"));
            face.is_floor = f.at("is_floor").get<bool>();
            face.room = f.at("room").get<int>();
            gt.faces.push_back(face);
        }
        for (const auto& l : j.at("lines")) {
            GTLine line;
            line.id = l.at("id").get<int>();
            line.a = vec3_from(l.at("a"));
            line.b = vec3_from(l.at("b"));
            int ax = l.at("axis").get<int>();
            if (ax < 0 || ax > 2) throw DataError("ground truth: bad line axis");
            line.axis = axis_from_index(ax);
            line.face = l.at("face").get<int>();
            line.room = l.at("room").get<int>();
            gt.lines.push_back(line);
        }
        gt.segment_line = j.at("segment_line").get<std::vector<int>>();
        for (const auto& p : j.at("coplanar_pairs"))
            gt.coplanar_pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
        gt.floor_line_ids = j.at("floor_line_ids").get<std::vector<int>>();
        gt.scene_diameter = j.at("scene_diameter").get<double>();
        gt.two_room = j.at("two_room").get<bool>();
        gt.room_split_frame = j.at("room_split_frame").get<int>();
        return gt;
    } catch (const json::exception& e) {
        throw DataError(std::string("ground truth: missing or malformed field: ") + e.what());
    }
}

}  // namespace msfm
