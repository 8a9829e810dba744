#pragma once

#include <array>
#include <cmath>

namespace gesturemap {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 cross(const Vec3& a, const Vec3& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

/// Quaternion in (w, x, y, z) order.
struct Quat
{
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const
    {
        const double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    bool operator==(const Quat&) const = default;
};

inline Quat from_axis_angle(const Vec3& axis, double angle)
{
    const double n = norm(axis);
    const double s = std::sin(angle / 2.0) / n;
    return {std::cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s};
}

/// Rotates v by the unit quaternion q (q v q*).
inline Vec3 rotate(const Quat& q, const Vec3& v)
{
    const Vec3 u{q.x, q.y, q.z};
    const Vec3 t = 2.0 * cross(u, v);
    return v + q.w * t + cross(u, t);
}

} // namespace gesturemap
