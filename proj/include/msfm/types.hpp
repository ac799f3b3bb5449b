#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <optional>
#include <vector>

#include "msfm/errors.hpp"

namespace msfm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

enum class Axis : int { X = 0, Y = 1, Z = 2 };

inline Axis axis_from_index(int i) {
    if (i < 0 || i > 2) throw DataError("axis index out of range");
    return static_cast<Axis>(i);
}

inline char axis_name(Axis a) { return "XYZ"[static_cast<int>(a)]; }

// Given two distinct axes, returns the remaining one.
inline Axis third_axis(Axis a, Axis b) {
    if (a == b) throw DataError("third_axis: axes must differ");
    return static_cast<Axis>(3 - static_cast<int>(a) - static_cast<int>(b));
}

// Pinhole intrinsics, zero skew.
struct Intrinsics {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;

    Mat3 K() const {
        Mat3 k = Mat3::Zero();
        k(0, 0) = fx;
        k(1, 1) = fy;
        k(0, 2) = cx;
        k(1, 2) = cy;
        k(2, 2) = 1.0;
        return k;
    }
    Mat3 Kinv() const {
        Mat3 k = Mat3::Zero();
        k(0, 0) = 1.0 / fx;
        k(1, 1) = 1.0 / fy;
        k(0, 2) = -cx / fx;
        k(1, 2) = -cy / fy;
        k(2, 2) = 1.0;
        return k;
    }
    double min_dim() const { return static_cast<double>(std::min(width, height)); }

    void validate() const {
        if (!(fx > 0) || !(fy > 0)) throw DataError("intrinsics: focal lengths must be positive");
        if (!(cx > 0 && cx < width)) throw DataError("intrinsics: cx outside image");
        if (!(cy > 0 && cy < height)) throw DataError("intrinsics: cy outside image");
    }
};

bool is_rotation_matrix(const Mat3& m, double tol);

// 3x3 rotation, global-to-camera by convention. Validated on construction.
class Rotation {
public:
    Rotation() : m_(Mat3::Identity()) {}

    explicit Rotation(const Mat3& m) : m_(m) {
        if (!is_rotation_matrix(m, 1e-9))
            throw NumericError("Rotation: matrix not orthonormal proper within 1e-9");
    }

    // Nearest rotation by polar decomposition; throws only on reflections/rank loss.
    static Rotation project(const Mat3& m);

    // Skips validation. For products of already validated rotations.
    static Rotation trusted(const Mat3& m) {
        Rotation r;
        r.m_ = m;
        return r;
    }

    const Mat3& matrix() const { return m_; }

    // Camera axes expressed in global coordinates (rows of the matrix).
    Vec3 cam_x_global() const { return m_.row(0).transpose(); }
    Vec3 cam_y_global() const { return m_.row(1).transpose(); }
    Vec3 cam_z_global() const { return m_.row(2).transpose(); }

    friend Rotation operator*(const Rotation& a, const Rotation& b) {
        return Rotation::trusted(a.m_ * b.m_);
    }

private:
    Mat3 m_;
};

// 2D line segment detected in one frame. `length` is cached |p-q|.
struct LineSegment2D {
    int frame_id = -1;
    Vec2 p{0, 0}, q{0, 0};
    double length = 0;
    std::optional<Axis> label;

    static LineSegment2D make(int frame_id, const Vec2& p, const Vec2& q) {
        LineSegment2D s;
        s.frame_id = frame_id;
        s.p = p;
        s.q = q;
        s.length = (p - q).norm();
        return s;
    }

    Vec2 midpoint() const { return 0.5 * (p + q); }
    Vec2 direction() const { return (q - p) / length; }

    void validate() const {
        if (!(length > 0)) throw DataError("segment: zero length");
        if (std::abs(length - (p - q).norm()) > 1e-9)
            throw DataError("segment: cached length inconsistent");
    }
};

// Right-handed orthonormal triple of global vanishing directions.
struct ManhattanFrame {
    Vec3 vx{1, 0, 0}, vy{0, 1, 0}, vz{0, 0, 1};

    const Vec3& axis(Axis a) const {
        switch (a) {
            case Axis::X: return vx;
            case Axis::Y: return vy;
            default: return vz;
        }
    }

    static ManhattanFrame canonical() { return ManhattanFrame{}; }

    void validate() const {
        const double tol = 1e-9;
        if (std::abs(vx.norm() - 1) > tol || std::abs(vy.norm() - 1) > tol ||
            std::abs(vz.norm() - 1) > tol)
            throw NumericError("manhattan frame: axes not unit");
        if (std::abs(vx.dot(vy)) > tol || std::abs(vy.dot(vz)) > tol || std::abs(vz.dot(vx)) > tol)
            throw NumericError("manhattan frame: axes not orthogonal");
        if ((vy - vz.cross(vx)).norm() > tol)
            throw NumericError("manhattan frame: not right-handed (vy != vz x vx)");
    }
};

}  // namespace msfm
