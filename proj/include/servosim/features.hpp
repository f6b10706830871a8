#pragma once

// Image-moment features for visual servoing. The tag's four corner points,
// expressed in normalized image coordinates, feed raw and centered moments;
// from those come the normalized translational features and the yaw feature.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "servosim/geometry.hpp"
#include "servosim/simcam.hpp"

namespace servosim {

struct Point2 {
    double x = 0, y = 0;
};

struct MomentSet {
    double m00 = 0, m10 = 0, m01 = 0;
    double mu20 = 0, mu02 = 0, mu11 = 0;
    double xg = 0, yg = 0;
    double a = 0;  // mu20 + mu02
};

struct RawMoments {
    double m00 = 0, m10 = 0, m01 = 0;
};

inline RawMoments raw_moments(const std::vector<Point2>& points) {
    if (points.empty()) throw std::invalid_argument("raw_moments: empty point list");
    RawMoments m;
    m.m00 = static_cast<double>(points.size());
    for (const auto& p : points) {
        m.m10 += p.x;
        m.m01 += p.y;
    }
    return m;
}

struct CenteredMoments {
    double mu20 = 0, mu02 = 0, mu11 = 0;
    double xg = 0, yg = 0;
};

inline CenteredMoments centered_moments(const std::vector<Point2>& points) {
    RawMoments m = raw_moments(points);
    CenteredMoments c;
    c.xg = m.m10 / m.m00;
    c.yg = m.m01 / m.m00;
    for (const auto& p : points) {
        double dx = p.x - c.xg, dy = p.y - c.yg;
        c.mu20 += dx * dx;
        c.mu02 += dy * dy;
        c.mu11 += dx * dy;
    }
    return c;
}

inline MomentSet compute_moments(const std::vector<Point2>& points) {
    RawMoments m = raw_moments(points);
    CenteredMoments c = centered_moments(points);
    return {m.m00, m.m10, m.m01, c.mu20, c.mu02, c.mu11, c.xg, c.yg, c.mu20 + c.mu02};
}

// q = [x_n, y_n, a_n, f_yaw]
struct FeatureVec {
    double xn = 0, yn = 0;
    double an = 0;
    double fyaw = 0;
    bool valid = false;
};

struct DesiredFeatures {
    double z_star = 1.2;   // desired camera-target normal distance, m
    double a_star = 0;     // value of a when fronto-parallel at z_star
    FeatureVec q_star;     // {0, 0, z_star, pi/2}
};

inline constexpr double kRhoMin = 1e-3;
inline constexpr double kMomentAreaMin = 1e-12;

inline Point2 normalized_image_point(double u, double v, const CameraIntrinsics& k) {
    return {(u - k.cx) / k.fx, (v - k.cy) / k.fy};
}

inline std::vector<Point2> normalized_corners(const TagObservation& obs, const CameraIntrinsics& k) {
    std::vector<Point2> pts;
    pts.reserve(4);
    for (const auto& [u, v] : obs.corners) pts.push_back(normalized_image_point(u, v, k));
    return pts;
}

inline FeatureVec features_from_points(const std::vector<Point2>& pts, const DesiredFeatures& des) {
    MomentSet m = compute_moments(pts);
    FeatureVec q;
    if (!(m.a > kMomentAreaMin) || !std::isfinite(m.a)) return q;  // degenerate corner set
    q.an = des.z_star * std::sqrt(des.a_star / m.a);
    q.xn = q.an * m.xg;
    q.yn = q.an * m.yg;
    double rho = std::max(kRhoMin, std::sqrt(m.xg * m.xg + m.yg * m.yg));
    q.fyaw = std::atan(1.0 / rho);
    q.valid = true;
    return q;
}

inline FeatureVec feature_vector(const TagObservation& obs, const CameraIntrinsics& k,
                                 const DesiredFeatures& des) {
    return features_from_points(normalized_corners(obs, k), des);
}

// a* is not configured: it is measured by projecting the tag fronto-parallel
// at the desired distance through the same projection path the live features
// use, so a_n lands on z_star exactly at the desired pose.
inline DesiredFeatures calibrate_desired_features(double tag_side, const CameraIntrinsics& k,
                                                  double z_star) {
    if (z_star < kTagRangeMin || z_star > kTagRangeMax)
        throw std::invalid_argument("calibrate_desired_features: z_star outside detection range");
    if (tag_side <= 0) throw std::invalid_argument("calibrate_desired_features: tag side must be > 0");
    double h = 0.5 * tag_side;
    std::vector<Point2> pts;
    for (auto [x, y] : {std::pair{-h, h}, {h, h}, {h, -h}, {-h, -h}}) {
        double u = k.fx * x / z_star + k.cx;
        double v = k.fy * y / z_star + k.cy;
        pts.push_back(normalized_image_point(u, v, k));
    }
    MomentSet m = compute_moments(pts);
    DesiredFeatures des;
    des.z_star = z_star;
    des.a_star = m.a;
    des.q_star = {0.0, 0.0, z_star, 0.5 * kPi, true};
    return des;
}

}  // namespace servosim
