#pragma once

#include <cmath>

namespace netsar {

// Default wave speed in m/s. Overridable wherever a wave_speed argument exists.
inline constexpr double kWaveSpeed = 2.9979e8;

inline constexpr double kPi = 3.14159265358979323846;

/// 2D point/vector in the global coordinate frame, meters unless stated otherwise.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }

    double norm() const { return std::hypot(x, y); }
    double squared_norm() const { return x * x + y * y; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }
inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

/// Unit vector pointing from `from` towards `to`. Undefined for coincident points.
inline Vec2 unit_towards(const Vec2& from, const Vec2& to) {
    const Vec2 d = to - from;
    return d / d.norm();
}

/// Counter-clockwise rotation by `angle` radians.
inline Vec2 rotate(const Vec2& v, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Rotation about an arbitrary pivot point.
inline Vec2 rotate_about(const Vec2& v, double angle, const Vec2& pivot) {
    return rotate(v - pivot, angle) + pivot;
}

/// Wrap an angle to [-pi, pi).
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    return a - kPi;
}

}  // namespace netsar
