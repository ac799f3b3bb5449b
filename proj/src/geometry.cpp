#include "msfm/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace msfm {

bool is_rotation_matrix(const Mat3& m, double tol) {
    if (!m.allFinite()) return false;
    const Mat3 gram = m.transpose() * m;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(m.determinant() - 1.0) <= tol;
}

Rotation Rotation::project(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return Rotation(r);
}

Vec3 pixel_to_global_ray(const Vec2& pt, const Intrinsics& K, const Rotation& R) {
    if (!pt.allFinite()) throw DataError("pixel_to_global_ray: non-finite input point");
    const Vec3 cam((pt.x() - K.cx) / K.fx, (pt.y() - K.cy) / K.fy, 1.0);
    Vec3 g = R.matrix().transpose() * cam;
    g.normalize();
    return g;
}

Vec3 canonicalize_sign(const Vec3& v) {
    int imax = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
    return v[imax] < 0 ? Vec3(-v) : v;
}

Vec3 interpretation_plane(const LineSegment2D& seg, const Intrinsics& K, const Rotation& R) {
    const Vec3 a = pixel_to_global_ray(seg.p, K, R);
    const Vec3 b = pixel_to_global_ray(seg.q, K, R);
    Vec3 n = a.cross(b);
    const double nn = n.norm();
    if (nn < 1e-12) throw NumericError("interpretation_plane: degenerate segment (parallel rays)");
    n /= nn;
    return canonicalize_sign(n);
}

double geodesic_angle(const Rotation& a, const Rotation& b) {
    const double c = ((a.matrix().transpose() * b.matrix()).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

Mat3 skew(const Vec3& w) {
    Mat3 s;
    s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return s;
}

Rotation rotation_from_axis_angle(const Vec3& axis, double angle_rad) {
    if (std::abs(axis.norm() - 1.0) > 1e-9)
        throw DataError("rotation_from_axis_angle: axis must be unit-norm");
    const Mat3 k = skew(axis);
    const Mat3 m = Mat3::Identity() + std::sin(angle_rad) * k +
                   (1.0 - std::cos(angle_rad)) * (k * k);
    return Rotation::trusted(m);
}

Mat3 exp_so3(const Vec3& w) {
    const double t = w.norm();
    const Mat3 k = skew(w);
    // series in t^2 below the switchover keeps full double precision
    double a, b;
    if (t < 1e-4) {
        const double t2 = t * t;
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    } else {
        a = std::sin(t) / t;
        b = (1.0 - std::cos(t)) / (t * t);
    }
    return Mat3::Identity() + a * k + b * (k * k);
}

double folded_angle(const Vec3& a, const Vec3& b) {
    const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
    return std::acos(std::clamp(c, -1.0, 1.0));
}

Vec2 project_point(const Vec3& p_global, const Intrinsics& K, const Rotation& R,
                   const Vec3& camera_center, double* depth) {
    const Vec3 cam = R.matrix() * (p_global - camera_center);
    if (depth) *depth = cam.z();
    return Vec2(K.fx * cam.x() / cam.z() + K.cx, K.fy * cam.y() / cam.z() + K.cy);
}

}  // namespace msfm
