#pragma once

// Minimal 3D math used across the simulator: vectors, rotation matrices,
// quaternions, and the ray/primitive intersections the depth renderer needs.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace servosim {

inline constexpr double kGravity = 9.81;  // m/s^2
inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
    double n = norm(v);
    if (n < 1e-15) throw std::invalid_argument("cannot normalize zero vector");
    return v / n;
}

inline bool finite(const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

inline Vec3 clamp_abs(const Vec3& v, double limit) {
    return {clamp(v.x, -limit, limit), clamp(v.y, -limit, limit), clamp(v.z, -limit, limit)};
}

// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return {}; }

    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        return {{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
    }

    static Mat3 from_cols(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
        return {{c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z}};
    }

    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }

    Mat3 transposed() const {
        return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
};

// Yaw about world +z (x toward y for positive angles).
inline Mat3 rot_z(double yaw) {
    double c = std::cos(yaw), s = std::sin(yaw);
    return Mat3::from_rows({c, -s, 0}, {s, c, 0}, {0, 0, 1});
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
    Mat3 rrt = r * r.transposed();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double want = i == j ? 1.0 : 0.0;
            if (std::abs(rrt(i, j) - want) > tol) return false;
        }
    return std::abs(r.det() - 1.0) < tol;
}

// Unit quaternion, scalar-first.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat identity() { return {}; }

    static Quat from_axis_angle(const Vec3& axis, double angle) {
        Vec3 a = servosim::normalized(axis);
        double h = 0.5 * angle;
        double s = std::sin(h);
        return {std::cos(h), a.x * s, a.y * s, a.z * s};
    }

    static Quat from_yaw(double yaw) {
        return {std::cos(0.5 * yaw), 0, 0, std::sin(0.5 * yaw)};
    }

    // exp of half the rotation vector; identity for |v| -> 0.
    static Quat from_rotvec(const Vec3& v) {
        double angle = servosim::norm(v);
        if (angle < 1e-12) return {1.0, 0.5 * v.x, 0.5 * v.y, 0.5 * v.z};
        double s = std::sin(0.5 * angle) / angle;
        return {std::cos(0.5 * angle), v.x * s, v.y * s, v.z * s};
    }

    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }

    Quat conjugate() const { return {w, -x, -y, -z}; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const {
        double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    Vec3 rotate(const Vec3& v) const {
        // q v q*
        Vec3 u{x, y, z};
        Vec3 t = 2.0 * cross(u, v);
        return v + w * t + cross(u, t);
    }

    Mat3 matrix() const {
        return Mat3::from_rows(
            {1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
            {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
            {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)});
    }

    // Rotation vector of the shortest rotation this quaternion represents.
    Vec3 rotvec() const {
        Quat q = w < 0 ? Quat{-w, -x, -y, -z} : *this;
        double vn = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
        if (vn < 1e-12) return {2 * q.x, 2 * q.y, 2 * q.z};
        double angle = 2.0 * std::atan2(vn, q.w);
        return Vec3{q.x, q.y, q.z} * (angle / vn);
    }

    double yaw() const {
        return std::atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z));
    }
};

struct Vec4 {
    double v[4] = {0, 0, 0, 0};
    double operator[](int i) const { return v[i]; }
    double& operator[](int i) { return v[i]; }
    double norm() const { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]); }
};

// Row-major 4x4, only what the servo law needs.
struct Mat4 {
    std::array<double, 16> m{};

    static Mat4 identity() {
        Mat4 r{};
        for (int i = 0; i < 4; ++i) r.m[i * 5] = 1.0;
        return r;
    }

    static Mat4 diagonal(const Vec4& d) {
        Mat4 r{};
        for (int i = 0; i < 4; ++i) r.m[i * 5] = d[i];
        return r;
    }

    double operator()(int r, int c) const { return m[r * 4 + c]; }
    double& operator()(int r, int c) { return m[r * 4 + c]; }

    Vec4 operator*(const Vec4& x) const {
        Vec4 r;
        for (int i = 0; i < 4; ++i) {
            double s = 0;
            for (int j = 0; j < 4; ++j) s += (*this)(i, j) * x[j];
            r[i] = s;
        }
        return r;
    }
};

// Gauss-Jordan inverse; returns nullopt when |pivot| falls below tol.
inline std::optional<Mat4> inverse(const Mat4& a, double tol = 1e-9) {
    std::array<double, 32> w{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) w[i * 8 + j] = a(i, j);
        w[i * 8 + 4 + i] = 1.0;
    }
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(w[r * 8 + col]) > std::abs(w[piv * 8 + col])) piv = r;
        if (std::abs(w[piv * 8 + col]) < tol) return std::nullopt;
        if (piv != col)
            for (int j = 0; j < 8; ++j) std::swap(w[col * 8 + j], w[piv * 8 + j]);
        double d = w[col * 8 + col];
        for (int j = 0; j < 8; ++j) w[col * 8 + j] /= d;
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            double f = w[r * 8 + col];
            if (f == 0.0) continue;
            for (int j = 0; j < 8; ++j) w[r * 8 + j] -= f * w[col * 8 + j];
        }
    }
    Mat4 inv{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) inv(i, j) = w[i * 8 + 4 + j];
    return inv;
}

struct Ray {
    Vec3 origin;
    Vec3 dir;  // unit
};

// Vertical finite cylinder: axis along +z from base to base + height.
struct CylinderShape {
    Vec3 base;
    double radius = 0;
    double height = 0;
};

// Nearest positive hit distance of a ray against the cylinder (side + caps).
inline std::optional<double> ray_hit_cylinder(const Ray& ray, const CylinderShape& c) {
    double best = std::numeric_limits<double>::infinity();
    double ox = ray.origin.x - c.base.x, oy = ray.origin.y - c.base.y;
    double dx = ray.dir.x, dy = ray.dir.y;
    double a = dx * dx + dy * dy;
    double zlo = c.base.z, zhi = c.base.z + c.height;
    if (a > 1e-16) {
        double b = ox * dx + oy * dy;
        double cc = ox * ox + oy * oy - c.radius * c.radius;
        double disc = b * b - a * cc;
        if (disc >= 0) {
            double sq = std::sqrt(disc);
            for (double t : {(-b - sq) / a, (-b + sq) / a}) {
                if (t <= 1e-9 || t >= best) continue;
                double z = ray.origin.z + t * ray.dir.z;
                if (z >= zlo && z <= zhi) best = t;
            }
        }
    }
    // caps
    if (std::abs(ray.dir.z) > 1e-16) {
        for (double zc : {zlo, zhi}) {
            double t = (zc - ray.origin.z) / ray.dir.z;
            if (t <= 1e-9 || t >= best) continue;
            double px = ox + t * dx, py = oy + t * dy;
            if (px * px + py * py <= c.radius * c.radius) best = t;
        }
    }
    if (!std::isfinite(best)) return std::nullopt;
    return best;
}

// Finite cylinder around an arbitrary axis segment (side surface only);
// used for gate frame bars.
struct BarShape {
    Vec3 a;       // one end of the axis
    Vec3 b;       // other end
    double radius = 0;
};

inline std::optional<double> ray_hit_bar(const Ray& ray, const BarShape& bar) {
    Vec3 axis = bar.b - bar.a;
    double len = norm(axis);
    if (len < 1e-12) return std::nullopt;
    Vec3 u = axis / len;
    Vec3 oc = ray.origin - bar.a;
    Vec3 d_perp = ray.dir - dot(ray.dir, u) * u;
    Vec3 o_perp = oc - dot(oc, u) * u;
    double a = dot(d_perp, d_perp);
    if (a < 1e-16) return std::nullopt;
    double b = dot(o_perp, d_perp);
    double c = dot(o_perp, o_perp) - bar.radius * bar.radius;
    double disc = b * b - a * c;
    if (disc < 0) return std::nullopt;
    double sq = std::sqrt(disc);
    for (double t : {(-b - sq) / a, (-b + sq) / a}) {
        if (t <= 1e-9) continue;
        double s = dot(oc + t * ray.dir, u);
        if (s >= 0 && s <= len) return t;
    }
    return std::nullopt;
}

// Planar square patch (tag face): center, two in-plane half-axes.
struct QuadShape {
    Vec3 center;
    Vec3 normal;   // unit
    Vec3 tangent;  // unit, in-plane "horizontal"
    Vec3 bitan;    // unit, in-plane "vertical"
    double half_side = 0;
};

inline std::optional<double> ray_hit_quad(const Ray& ray, const QuadShape& q) {
    double denom = dot(ray.dir, q.normal);
    if (std::abs(denom) < 1e-12) return std::nullopt;
    double t = dot(q.center - ray.origin, q.normal) / denom;
    if (t <= 1e-9) return std::nullopt;
    Vec3 p = ray.origin + t * ray.dir - q.center;
    if (std::abs(dot(p, q.tangent)) <= q.half_side && std::abs(dot(p, q.bitan)) <= q.half_side)
        return t;
    return std::nullopt;
}

// Does the open segment p0 -> p1 pass through the cylinder volume?
inline bool segment_blocked_by_cylinder(const Vec3& p0, const Vec3& p1, const CylinderShape& c) {
    Vec3 d = p1 - p0;
    double len = norm(d);
    if (len < 1e-12) return false;
    Ray ray{p0, d / len};
    auto hit = ray_hit_cylinder(ray, c);
    return hit && *hit < len - 1e-9;
}

// Signed clearance from a point to the cylinder surface; negative inside.
inline double point_cylinder_clearance(const Vec3& p, const CylinderShape& c) {
    double dx = p.x - c.base.x, dy = p.y - c.base.y;
    double radial = std::sqrt(dx * dx + dy * dy);
    double zlo = c.base.z, zhi = c.base.z + c.height;
    if (p.z >= zlo && p.z <= zhi) {
        if (radial >= c.radius) return radial - c.radius;
        return -std::min(c.radius - radial, std::min(p.z - zlo, zhi - p.z));
    }
    double dz = p.z > zhi ? p.z - zhi : zlo - p.z;
    if (radial <= c.radius) return dz;
    double dr = radial - c.radius;
    return std::sqrt(dr * dr + dz * dz);
}

}  // namespace servosim
