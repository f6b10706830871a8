#pragma once

// The visual-servoing control law: feature error through the inverse of the
// interaction matrix estimate, per-channel gains, then saturation. Output is
// a camera-frame velocity command mapped to the body frame by the fixed mount.

#include <cmath>
#include <optional>
#include <stdexcept>

#include "servosim/features.hpp"
#include "servosim/geometry.hpp"
#include "servosim/simcam.hpp"

namespace servosim {

enum class CommandFrame { Camera, Body };

struct VelocityCommand {
    double vx = 0, vy = 0, vz = 0;  // m/s in the command frame
    double wz = 0;                  // yaw rate, rad/s, positive counter-clockwise
    CommandFrame frame = CommandFrame::Body;
};

class ServoGains {
  public:
    ServoGains() : ServoGains(default_lambda(), default_lhat(), 1.0, 1.0) {}

    ServoGains(const Vec4& lambda, const Mat4& l_hat, double v_max, double w_max)
        : lambda_(lambda), l_hat_(l_hat), v_max_(v_max), w_max_(w_max) {
        for (int i = 0; i < 4; ++i)
            if (!(lambda_[i] > 0)) throw std::invalid_argument("ServoGains: lambda must be > 0");
        auto inv = inverse(l_hat_);
        if (!inv) throw std::invalid_argument("ServoGains: interaction matrix is singular");
        l_hat_inv_ = *inv;
        if (!(v_max_ > 0) || !(w_max_ > 0))
            throw std::invalid_argument("ServoGains: saturation limits must be > 0");
    }

    static Vec4 default_lambda() { return {{0.5, 0.5, 0.5, 0.8}}; }

    // Near -I for a planar target parallel to the image plane, which is the
    // regime these normalized moment features were built for.
    static Mat4 default_lhat() {
        Mat4 l = Mat4::identity();
        for (int i = 0; i < 4; ++i) l(i, i) = -1.0;
        return l;
    }

    const Vec4& lambda() const { return lambda_; }
    const Mat4& l_hat() const { return l_hat_; }
    const Mat4& l_hat_inverse() const { return l_hat_inv_; }
    double v_max() const { return v_max_; }
    double w_max() const { return w_max_; }

  private:
    Vec4 lambda_;
    Mat4 l_hat_;
    Mat4 l_hat_inv_;
    double v_max_;
    double w_max_;
};

inline double sign_of(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Feature error q - q*. The yaw feature is radially symmetric, so its error
// is signed by the side the target centroid sits on: turn toward the target.
inline Vec4 feature_error(const FeatureVec& q, const DesiredFeatures& des) {
    Vec4 e;
    e[0] = q.xn - des.q_star.xn;
    e[1] = q.yn - des.q_star.yn;
    e[2] = q.an - des.q_star.an;
    e[3] = (q.fyaw - des.q_star.fyaw) * sign_of(q.xn);
    return e;
}

inline std::optional<VelocityCommand> ibvs_velocity(const FeatureVec& q, const DesiredFeatures& des,
                                                    const ServoGains& gains) {
    if (!q.valid) return std::nullopt;
    Vec4 e = feature_error(q, des);
    Vec4 u = gains.l_hat_inverse() * e;
    VelocityCommand cmd;
    cmd.frame = CommandFrame::Camera;
    cmd.vx = clamp(-gains.lambda()[0] * u[0], -gains.v_max(), gains.v_max());
    cmd.vy = clamp(-gains.lambda()[1] * u[1], -gains.v_max(), gains.v_max());
    cmd.vz = clamp(-gains.lambda()[2] * u[2], -gains.v_max(), gains.v_max());
    cmd.wz = clamp(-gains.lambda()[3] * u[3], -gains.w_max(), gains.w_max());
    return cmd;
}

// Rotate the linear part into the body frame; the yaw rate passes through
// (shared vertical axis for the level forward mount).
inline VelocityCommand camera_to_body(const VelocityCommand& cmd,
                                      const Mat3& mount = camera_to_body_mount()) {
    if (cmd.frame != CommandFrame::Camera)
        throw std::invalid_argument("camera_to_body: command is not camera-frame");
    if (!is_rotation(mount)) throw std::invalid_argument("camera_to_body: mount is not a rotation");
    Vec3 v = mount * Vec3{cmd.vx, cmd.vy, cmd.vz};
    return {v.x, v.y, v.z, cmd.wz, CommandFrame::Body};
}

}  // namespace servosim
