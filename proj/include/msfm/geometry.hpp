#pragma once

#include "msfm/types.hpp"

namespace msfm {

// Back-projects a pixel to its unit viewing ray in global coordinates:
// normalize(R^T K^-1 [x, y, 1]^T).
Vec3 pixel_to_global_ray(const Vec2& pt, const Intrinsics& K, const Rotation& R);

// Unit normal of the plane spanned by the origin and the two endpoint rays.
// Sign canonicalized: the component with the largest absolute value is positive.
Vec3 interpretation_plane(const LineSegment2D& seg, const Intrinsics& K, const Rotation& R);

// Rotation distance: arccos((trace(a^T b) - 1) / 2), clamped to [0, pi].
double geodesic_angle(const Rotation& a, const Rotation& b);

// Rodrigues formula. `axis` must be unit-norm.
Rotation rotation_from_axis_angle(const Vec3& axis, double angle_rad);

// exp of so(3): rotation with axis w/|w| and angle |w|; stable near zero.
// Returns the raw matrix so it composes freely in update formulas.
Mat3 exp_so3(const Vec3& w);

Mat3 skew(const Vec3& w);

// Flips sign so the largest-magnitude component (first such index on ties)
// is positive. Leaves exact zero vectors alone.
Vec3 canonicalize_sign(const Vec3& v);

// Angle between directions folded to [0, pi/2] (sign-insensitive).
double folded_angle(const Vec3& a, const Vec3& b);

// Projects a global point into pixel coordinates; camera-frame depth returned
// through `depth`. Ray convention matches pixel_to_global_ray.
Vec2 project_point(const Vec3& p_global, const Intrinsics& K, const Rotation& R,
                   const Vec3& camera_center, double* depth = nullptr);

}  // namespace msfm
