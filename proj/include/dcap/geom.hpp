#pragma once

// Quaternion / SE(3) algebra and the pose-error metrics used throughout the
// toolkit. Rotations are stored as unit quaternions (Hamilton convention,
// w-first); rotation matrices are derived views.

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dcap/errors.hpp"
#include "dcap/util.hpp"

namespace dcap {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& b) const { return {x + b.x, y + b.y, z + b.z}; }
    Vec3 operator-(const Vec3& b) const { return {x - b.x, y - b.y, z - b.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Row-major 3x3 matrix; just enough for rotation-matrix views and metrics.
struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }
    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    double trace() const { return m[0] + m[4] + m[8]; }
};

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 c;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline Vec3 operator*(const Mat3& a, const Vec3& v) {
    return {a(0, 0) * v.x + a(0, 1) * v.y + a(0, 2) * v.z,
            a(1, 0) * v.x + a(1, 1) * v.y + a(1, 2) * v.z,
            a(2, 0) * v.x + a(2, 1) * v.y + a(2, 2) * v.z};
}

struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat identity() { return {}; }

    static Quat from_axis_angle(const Vec3& axis, double angle) {
        double n = norm(axis);
        if (n == 0.0) return identity();
        double s = std::sin(0.5 * angle) / n;
        return {std::cos(0.5 * angle), axis.x * s, axis.y * s, axis.z * s};
    }

    static Quat from_yaw(double yaw) { return {std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw)}; }

    double norm2() const { return w * w + x * x + y * y + z * z; }

    Quat normalized() const {
        double n2 = norm2();
        double inv = 1.0 / std::sqrt(n2);
        return {w * inv, x * inv, y * inv, z * inv};
    }

    Quat conjugate() const { return {w, -x, -y, -z}; }

    Quat operator*(const Quat& b) const {
        return {w * b.w - x * b.x - y * b.y - z * b.z,
                w * b.x + x * b.w + y * b.z - z * b.y,
                w * b.y - x * b.z + y * b.w + z * b.x,
                w * b.z + x * b.y - y * b.x + z * b.w};
    }

    Vec3 rotate(const Vec3& v) const {
        // q v q* expanded via the double-cross identity.
        Vec3 u{x, y, z};
        Vec3 t = cross(u, v) * 2.0;
        return v + t * w + cross(u, t);
    }

    Mat3 to_matrix() const {
        Mat3 r;
        double xx = x * x, yy = y * y, zz = z * z;
        double xy = x * y, xz = x * z, yz = y * z;
        double wx = w * x, wy = w * y, wz = w * z;
        r.m = {1 - 2 * (yy + zz), 2 * (xy - wz),     2 * (xz + wy),
               2 * (xy + wz),     1 - 2 * (xx + zz), 2 * (yz - wx),
               2 * (xz - wy),     2 * (yz + wx),     1 - 2 * (xx + yy)};
        return r;
    }

    // Shepperd's method, canonicalized to w >= 0 so serialization is sign-stable.
    static Quat from_matrix(const Mat3& r) {
        Quat q;
        double tr = r.trace();
        if (tr > 0.0) {
            double s = std::sqrt(tr + 1.0) * 2.0;
            q.w = 0.25 * s;
            q.x = (r(2, 1) - r(1, 2)) / s;
            q.y = (r(0, 2) - r(2, 0)) / s;
            q.z = (r(1, 0) - r(0, 1)) / s;
        } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
            double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
            q.w = (r(2, 1) - r(1, 2)) / s;
            q.x = 0.25 * s;
            q.y = (r(0, 1) + r(1, 0)) / s;
            q.z = (r(0, 2) + r(2, 0)) / s;
        } else if (r(1, 1) > r(2, 2)) {
            double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
            q.w = (r(0, 2) - r(2, 0)) / s;
            q.x = (r(0, 1) + r(1, 0)) / s;
            q.y = 0.25 * s;
            q.z = (r(1, 2) + r(2, 1)) / s;
        } else {
            double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
            q.w = (r(1, 0) - r(0, 1)) / s;
            q.x = (r(0, 2) + r(2, 0)) / s;
            q.y = (r(1, 2) + r(2, 1)) / s;
            q.z = 0.25 * s;
        }
        if (q.w < 0.0) {
            q.w = -q.w;
            q.x = -q.x;
            q.y = -q.y;
            q.z = -q.z;
        }
        return q.normalized();
    }

    double yaw() const { return std::atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z)); }
};

// Rigid transform: p_out = R p + t.
struct Pose {
    Quat rotation;
    Vec3 translation;

    static Pose identity() { return {}; }
    static Pose from_yaw(double yaw, const Vec3& t) { return {Quat::from_yaw(yaw), t}; }

    Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
};

// Applies b then a as rigid maps; rotation re-normalized.
inline Pose compose(const Pose& a, const Pose& b) {
    return {(a.rotation * b.rotation).normalized(), a.translation + a.rotation.rotate(b.translation)};
}

inline Pose inverse(const Pose& p) {
    Quat qi = p.rotation.conjugate();
    return {qi, -qi.rotate(p.translation)};
}

// T_{F->B} = (T_B)^-1 T_F: the pose of `front` expressed in `back`'s frame.
inline Pose relative_transform(const Pose& front, const Pose& back) {
    return compose(inverse(back), front);
}

// World pose of a sibling camera given the rear camera's world pose and the
// fixed intra-rig transform rear -> sibling.
inline Pose propagate_rig(const Pose& rear, const Pose& intra) { return compose(rear, intra); }

// Geodesic angle between two rotations: arccos((tr(R_hat^T R) - 1) / 2).
// Evaluated as atan2(||skew part||, (tr - 1) / 2), which is the same angle
// but stays accurate near 0 and pi where acos loses half the mantissa; the
// cosine term is clamped to [-1, 1] to absorb round-off.
inline double rra(const Mat3& r_hat, const Mat3& r_gt) {
    Mat3 d = r_hat.transposed() * r_gt;
    double c = std::clamp((d.trace() - 1.0) / 2.0, -1.0, 1.0);
    Vec3 ax{0.5 * (d(2, 1) - d(1, 2)), 0.5 * (d(0, 2) - d(2, 0)), 0.5 * (d(1, 0) - d(0, 1))};
    return std::atan2(norm(ax), c);
}

inline double rra(const Quat& q_hat, const Quat& q_gt) {
    return rra(q_hat.to_matrix(), q_gt.to_matrix());
}

struct PoseError {
    double delta_t = 0.0;  // ||t_hat - t_gt||, meters
    double delta_x = 0.0, delta_y = 0.0, delta_z = 0.0;
    double rra = 0.0;  // radians
};

inline PoseError translation_error(const Vec3& t_hat, const Vec3& t_gt) {
    PoseError e;
    e.delta_x = std::abs(t_hat.x - t_gt.x);
    e.delta_y = std::abs(t_hat.y - t_gt.y);
    e.delta_z = std::abs(t_hat.z - t_gt.z);
    e.delta_t = norm(t_hat - t_gt);
    return e;
}

inline PoseError pose_error(const Pose& pred, const Pose& gt) {
    PoseError e = translation_error(pred.translation, gt.translation);
    e.rra = rra(pred.rotation, gt.rotation);
    return e;
}

// Canonical text form: [w, x, y, z, tx, ty, tz], 17 significant digits each.
inline std::string pose_to_string(const Pose& p) {
    const Quat& q = p.rotation;
    const Vec3& t = p.translation;
    return format_real(q.w) + " " + format_real(q.x) + " " + format_real(q.y) + " " +
           format_real(q.z) + " " + format_real(t.x) + " " + format_real(t.y) + " " +
           format_real(t.z);
}

}  // namespace dcap
