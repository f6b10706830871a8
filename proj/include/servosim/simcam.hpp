#pragma once

// Simulated RGB-D sensor. Tag observations come from pinhole projection of
// known corner points with range/facing/visibility/occlusion gating. The
// monocular-depth stand-in ray-casts scene nearness and distorts it with a
// hidden affine map plus per-pixel gaussian noise, reproducing the scale and
// shift ambiguity of learned inverse-depth predictors.

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "servosim/geometry.hpp"
#include "servosim/rng.hpp"
#include "servosim/world.hpp"

namespace servosim {

struct CameraIntrinsics {
    double fx = 466.0, fy = 466.0;
    double cx = 320.0, cy = 240.0;
    int width = 640, height = 480;

    double hfov() const { return 2.0 * std::atan(0.5 * width / fx); }

    CameraIntrinsics scaled(int new_width, int new_height) const {
        double sx = static_cast<double>(new_width) / width;
        double sy = static_cast<double>(new_height) / height;
        return {fx * sx, fy * sy, cx * sx, cy * sy, new_width, new_height};
    }
};

// World -> camera transform. Camera optical frame: z forward, x right, y down.
struct CameraPose {
    Mat3 r_cw;     // rotates world vectors into camera coordinates
    Vec3 position; // camera center in world coordinates

    Vec3 to_camera(const Vec3& p_world) const { return r_cw * (p_world - position); }

    Ray pixel_ray(double u, double v, const CameraIntrinsics& k) const {
        Vec3 d_cam{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
        Vec3 d_world = r_cw.transposed() * d_cam;
        return {position, normalized(d_world)};
    }
};

// Fixed forward mount: camera z -> body x, camera x -> body -y, camera y -> body -z.
inline Mat3 camera_to_body_mount() {
    return Mat3::from_cols({0, -1, 0}, {0, 0, -1}, {1, 0, 0});
}

inline CameraPose camera_pose_from_body(const Vec3& position, const Quat& attitude) {
    Mat3 r_wb = attitude.matrix();
    Mat3 r_wc = r_wb * camera_to_body_mount();
    return {r_wc.transposed(), position};
}

// Level camera at `eye` looking toward `target`.
inline CameraPose look_at(const Vec3& eye, const Vec3& target) {
    Vec3 zc = normalized(target - eye);
    Vec3 up{0, 0, 1};
    if (std::abs(dot(zc, up)) > 0.999) up = {1, 0, 0};
    Vec3 xc = normalized(cross(zc, up));
    Vec3 yc = cross(zc, xc);
    return {Mat3::from_cols(xc, yc, zc).transposed(), eye};
}

struct TagObservation {
    int tag_id = 0;
    std::array<std::pair<double, double>, 4> corners;  // pixel (u, v), ccw from bottom-left
    double range = 0;  // camera-to-tag-center distance; gating only
};

inline constexpr double kTagRangeMin = 0.3;   // m, detector blind below this
inline constexpr double kTagRangeMax = 4.0;   // m, reliable detection limit
inline constexpr double kTagFacingLimitCos = 0.25881904510252074;  // cos(75 deg)

inline std::optional<std::pair<double, double>> project_point(const CameraPose& pose,
                                                              const Vec3& p_world,
                                                              const CameraIntrinsics& k) {
    Vec3 pc = pose.to_camera(p_world);
    if (pc.z <= 1e-9) return std::nullopt;
    return std::make_pair(k.fx * pc.x / pc.z + k.cx, k.fy * pc.y / pc.z + k.cy);
}

inline std::optional<TagObservation> observe_tag(const CameraPose& pose, const TagSpec& tag,
                                                 const CameraIntrinsics& k,
                                                 const std::vector<CylinderObstacle>& obstacles = {}) {
    if (!finite(pose.position)) throw std::invalid_argument("observe_tag: non-finite camera pose");
    Vec3 offset = tag.center - pose.position;
    double range = norm(offset);
    if (range < kTagRangeMin || range > kTagRangeMax) return std::nullopt;
    Vec3 view = offset / range;
    if (dot(tag.normal, view) >= -kTagFacingLimitCos) return std::nullopt;  // back side or grazing
    TagObservation obs;
    obs.tag_id = tag.id;
    obs.range = range;
    auto corners = tag_corners(tag);
    for (int i = 0; i < 4; ++i) {
        auto px = project_point(pose, corners[i], k);
        if (!px) return std::nullopt;
        if (px->first < 0 || px->first >= k.width || px->second < 0 || px->second >= k.height)
            return std::nullopt;
        obs.corners[i] = *px;
    }
    // Binary occlusion on the center ray, matching how the detector loses
    // the whole tag at once behind an obstacle.
    for (const auto& o : obstacles)
        if (segment_blocked_by_cylinder(pose.position, tag.center, o.shape())) return std::nullopt;
    return obs;
}

struct DepthMap {
    int width = 0, height = 0;
    std::vector<double> values;  // row-major, raw units in [0, 1023]

    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    double& at(int x, int y) { return values[static_cast<size_t>(y) * width + x]; }
};

inline constexpr double kDepthRawMax = 1023.0;
inline constexpr double kNearnessConstant = 1000.0;  // raw units at 1 m, pre-affine
inline constexpr double kDepthFarPlane = 20.0;       // m, background distance

// Hidden affine distortion applied to ground-truth nearness.
struct DepthAffine {
    double scale = 1.0;
    double shift = 0.0;
};

// Nearest hit distance along the ray, capped at the far plane.
inline double nearest_hit_distance(const Ray& ray, const WorldScene& scene,
                                   double far_plane = kDepthFarPlane) {
    double best = far_plane;
    for (const auto& o : scene.obstacles)
        if (auto t = ray_hit_cylinder(ray, o.shape()); t && *t < best) best = *t;
    for (const auto& g : scene.gates) {
        const TagSpec* tag = scene.tag_by_id(g.tag_id);
        if (!tag) continue;
        for (const auto& bar : gate_bars(g, tag->normal))
            if (auto t = ray_hit_bar(ray, bar); t && *t < best) best = *t;
    }
    for (const auto& tag : scene.tags) {
        PlaneBasis b = plane_basis(tag.normal);
        QuadShape q{tag.center, normalized(tag.normal), b.horiz, b.vert, 0.5 * tag.side};
        if (auto t = ray_hit_quad(ray, q); t && *t < best) best = *t;
    }
    return best;
}

inline double raw_from_distance(double z, const DepthAffine& affine, double noise = 0.0) {
    return clamp(affine.scale * (kNearnessConstant / z) + affine.shift + noise, 0.0, kDepthRawMax);
}

inline DepthMap render_pseudo_depth(const CameraPose& pose, const WorldScene& scene,
                                    const CameraIntrinsics& k, const DepthAffine& affine,
                                    double noise_sigma, uint64_t rng_seed,
                                    uint64_t frame_index = 0,
                                    double far_plane = kDepthFarPlane) {
    if (!finite(pose.position)) throw std::invalid_argument("render_pseudo_depth: non-finite pose");
    if (affine.scale <= 0) throw std::invalid_argument("render_pseudo_depth: scale must be > 0");
    if (noise_sigma < 0) throw std::invalid_argument("render_pseudo_depth: negative noise sigma");
    DepthMap map;
    map.width = k.width;
    map.height = k.height;
    map.values.resize(static_cast<size_t>(k.width) * k.height);
    Mat3 r_wc = pose.r_cw.transposed();
    for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
            Vec3 d_cam{(x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0};
            Ray ray{pose.position, normalized(r_wc * d_cam)};
            double z = nearest_hit_distance(ray, scene, far_plane);
            uint64_t pix = static_cast<uint64_t>(y) * k.width + x;
            double noise = noise_sigma > 0 ? noise_sigma * gaussian(rng_seed, frame_index, pix) : 0.0;
            map.values[pix] = raw_from_distance(z, affine, noise);
        }
    }
    return map;
}

// Ground-truth nearness samples on a sparse grid; the simulation-side
// reference used when the perception stage re-fits scale and shift in-loop.
struct DepthRefSample {
    int x = 0, y = 0;
    double value = 0;  // identity-affine, noise-free raw nearness
};

inline std::vector<DepthRefSample> sample_reference_depth(const CameraPose& pose,
                                                          const WorldScene& scene,
                                                          const CameraIntrinsics& k,
                                                          int count,
                                                          double far_plane = kDepthFarPlane) {
    std::vector<DepthRefSample> out;
    if (count < 2) return out;
    int cols = std::max(2, static_cast<int>(std::round(std::sqrt(count * k.width / double(k.height)))));
    int rows = std::max(2, (count + cols - 1) / cols);
    Mat3 r_wc = pose.r_cw.transposed();
    for (int j = 0; j < rows && static_cast<int>(out.size()) < count; ++j) {
        for (int i = 0; i < cols && static_cast<int>(out.size()) < count; ++i) {
            int x = static_cast<int>((i + 0.5) * k.width / cols);
            int y = static_cast<int>((j + 0.5) * k.height / rows);
            Vec3 d_cam{(x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0};
            Ray ray{pose.position, normalized(r_wc * d_cam)};
            double z = nearest_hit_distance(ray, scene, far_plane);
            out.push_back({x, y, kNearnessConstant / z});
        }
    }
    return out;
}

}  // namespace servosim
