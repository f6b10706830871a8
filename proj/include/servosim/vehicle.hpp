#pragma once

// Quadrotor rigid body under Newton-Euler dynamics, the three cascaded
// control loops (velocity -> attitude -> rate) with yaw-rate feedforward,
// and the X-configuration control-allocation mixer.
//
// Frames: world x-forward / y-left / z-up; body FLU. The true state feeds
// back to the loops; estimation is out of scope.

#include <array>
#include <cmath>
#include <stdexcept>

#include "servosim/geometry.hpp"
#include "servosim/servo.hpp"

namespace servosim {

struct QuadParams {
    double mass = 1.1485;            // kg
    double arm = 0.155;              // m, center to rotor
    double thrust_to_weight = 4.0;
    Vec3 inertia{0.015, 0.015, 0.025};  // kg m^2, diagonal
    double kq = 0.016;               // rotor drag-to-thrust moment arm, m

    double max_total_thrust() const { return thrust_to_weight * mass * kGravity; }
    double max_rotor_thrust() const { return max_total_thrust() / 4.0; }
    double lever() const { return arm / std::sqrt(2.0); }
};

struct QuadState {
    Vec3 position;
    Vec3 velocity;
    Quat attitude;                   // body -> world
    Vec3 omega;                      // body rates, rad/s
    std::array<double, 4> rotor_thrusts{0, 0, 0, 0};
};

struct PidState {
    Vec3 integral;
    Vec3 prev_measurement;
    bool has_prev = false;
};

struct LoopGains {
    // velocity loop (PI + gravity feedforward)
    Vec3 vel_kp{3.0, 3.0, 4.0};
    Vec3 vel_ki{1.2, 1.2, 1.5};
    double vel_int_clamp = 1.0;      // m/s accumulated error
    double accel_xy_max = 6.0;       // m/s^2 horizontal authority
    // attitude loop (P on rotation-vector error)
    Vec3 att_kp{8.0, 8.0, 4.0};
    // rate loop (PID, derivative on measurement)
    Vec3 rate_kp{0.30, 0.30, 0.15};
    Vec3 rate_ki{0.15, 0.15, 0.08};
    Vec3 rate_kd{0.003, 0.003, 0.0};
    double rate_int_clamp = 0.5;     // rad/s accumulated error
};

// ---- loops ----

inline Vec3 velocity_loop(const Vec3& v_ref, const Vec3& v, const LoopGains& g, Vec3& integral,
                          double dt) {
    if (dt <= 0) throw std::invalid_argument("velocity_loop: dt must be > 0");
    Vec3 e = v_ref - v;
    integral = clamp_abs(integral + e * dt, g.vel_int_clamp);
    Vec3 a{g.vel_kp.x * e.x + g.vel_ki.x * integral.x,
           g.vel_kp.y * e.y + g.vel_ki.y * integral.y,
           g.vel_kp.z * e.z + g.vel_ki.z * integral.z + kGravity};  // gravity feedforward
    double axy = std::sqrt(a.x * a.x + a.y * a.y);
    if (axy > g.accel_xy_max) {
        double k = g.accel_xy_max / axy;
        a.x *= k;
        a.y *= k;
    }
    return a;
}

struct AttitudeCommand {
    Quat attitude;
    double thrust = 0;  // N
};

// Tilt the body z-axis onto the commanded acceleration with the given yaw.
// Near-zero acceleration keeps the fallback attitude.
inline AttitudeCommand accel_to_attitude(const Vec3& accel_cmd, double yaw_ref,
                                         const QuadParams& params,
                                         const Quat& fallback = Quat::identity()) {
    double a = norm(accel_cmd);
    AttitudeCommand out;
    out.thrust = std::min(params.mass * a, params.max_total_thrust());
    if (a < 0.1) {
        out.attitude = fallback;
        return out;
    }
    Vec3 zb = accel_cmd / a;
    Vec3 xc{std::cos(yaw_ref), std::sin(yaw_ref), 0};
    Vec3 yb_raw = cross(zb, xc);
    double n = norm(yb_raw);
    if (n < 1e-6) {  // thrust pointing along the heading; degenerate tilt
        out.attitude = fallback;
        return out;
    }
    Vec3 yb = yb_raw / n;
    Vec3 xb = cross(yb, zb);
    Mat3 r = Mat3::from_cols(xb, yb, zb);
    // rotation matrix -> quaternion
    double tr = r(0, 0) + r(1, 1) + r(2, 2);
    Quat q;
    if (tr > 0) {
        double s = std::sqrt(tr + 1.0) * 2;
        q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2;
        q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
    } else if (r(1, 1) > r(2, 2)) {
        double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2;
        q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
    } else {
        double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2;
        q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
    }
    out.attitude = q.normalized();
    return out;
}

// Body-frame rotation-vector error scaled by P gains, plus yaw feedforward.
// Antipodal quaternion representations produce identical commands.
inline Vec3 attitude_loop(const Quat& quat_cmd, const Quat& quat, double yaw_rate_ff,
                          const LoopGains& g) {
    Quat err = (quat.conjugate() * quat_cmd).normalized();
    Vec3 rv = err.rotvec();
    return {g.att_kp.x * rv.x, g.att_kp.y * rv.y, g.att_kp.z * rv.z + yaw_rate_ff};
}

inline Vec3 rate_loop_pid(const Vec3& rate_cmd, const Vec3& omega, const LoopGains& g,
                          PidState& pid, double dt) {
    if (dt <= 0) throw std::invalid_argument("rate_loop_pid: dt must be > 0");
    Vec3 e = rate_cmd - omega;
    pid.integral = clamp_abs(pid.integral + e * dt, g.rate_int_clamp);
    Vec3 deriv{0, 0, 0};
    if (pid.has_prev) deriv = (omega - pid.prev_measurement) / dt;  // derivative on measurement
    pid.prev_measurement = omega;
    pid.has_prev = true;
    return {g.rate_kp.x * e.x + g.rate_ki.x * pid.integral.x - g.rate_kd.x * deriv.x,
            g.rate_kp.y * e.y + g.rate_ki.y * pid.integral.y - g.rate_kd.y * deriv.y,
            g.rate_kp.z * e.z + g.rate_ki.z * pid.integral.z - g.rate_kd.z * deriv.z};
}

// ---- mixer ----

// Rotor order: front-right, back-left, front-left, back-right.
// FR/BL spin so their drag torque is -z; FL/BR give +z.
inline std::array<double, 4> mixer_unclamped(double thrust, const Vec3& torque,
                                             const QuadParams& p) {
    double d = p.lever();
    double t4 = thrust / 4.0;
    double rp = (torque.x + torque.y) / (4.0 * d);   // roll+pitch shared term, FR/BL
    double rm = (torque.x - torque.y) / (4.0 * d);   // FL/BR
    double yz = torque.z / (4.0 * p.kq);
    return {t4 - rp - yz, t4 + rp - yz, t4 + rm + yz, t4 - rm + yz};
}

// Wrench produced by a rotor thrust vector (the forward allocation).
inline void forward_allocation(const std::array<double, 4>& f, const QuadParams& p,
                               double& thrust, Vec3& torque) {
    double d = p.lever();
    thrust = f[0] + f[1] + f[2] + f[3];
    torque.x = d * (-f[0] + f[1] + f[2] - f[3]);
    torque.y = d * (-f[0] + f[1] - f[2] + f[3]);
    torque.z = p.kq * (-f[0] - f[1] + f[2] + f[3]);
}

// Saturating mixer. Total thrust is preserved as long as it is feasible;
// yaw torque is the first thing sacrificed, then roll/pitch.
inline std::array<double, 4> mixer(double thrust, const Vec3& torque, const QuadParams& p) {
    if (thrust < 0) throw std::invalid_argument("mixer: thrust must be >= 0");
    double fmax = p.max_rotor_thrust();
    double t = std::min(thrust, p.max_total_thrust());
    auto fits = [&](const std::array<double, 4>& f) {
        for (double v : f)
            if (v < -1e-12 || v > fmax + 1e-12) return false;
        return true;
    };
    std::array<double, 4> f = mixer_unclamped(t, torque, p);
    if (!fits(f)) {
        // shrink yaw until feasible
        for (double scale : {0.5, 0.25, 0.0}) {
            f = mixer_unclamped(t, {torque.x, torque.y, torque.z * scale}, p);
            if (fits(f)) break;
        }
    }
    if (!fits(f)) {
        // then shrink roll/pitch, keeping thrust
        for (double scale : {0.5, 0.25, 0.125, 0.0}) {
            f = mixer_unclamped(t, {torque.x * scale, torque.y * scale, 0.0}, p);
            if (fits(f)) break;
        }
    }
    for (double& v : f) v = clamp(v, 0.0, fmax);
    return f;
}

// ---- dynamics ----

// One integration step. Velocities update semi-implicitly and positions use
// the velocity midpoint, so constant-acceleration segments integrate exactly.
inline QuadState step_dynamics(const QuadState& state, const std::array<double, 4>& rotor_thrusts,
                               const QuadParams& p, double dt) {
    if (!(dt > 0) || dt > 0.01) throw std::invalid_argument("step_dynamics: dt outside (0, 0.01]");
    if (!finite(state.position) || !finite(state.velocity) || !finite(state.omega))
        throw std::invalid_argument("step_dynamics: non-finite state");

    QuadState next = state;
    next.rotor_thrusts = rotor_thrusts;
    for (double& f : next.rotor_thrusts) f = clamp(f, 0.0, p.max_rotor_thrust());

    double thrust;
    Vec3 torque;
    forward_allocation(next.rotor_thrusts, p, thrust, torque);

    Vec3 accel = state.attitude.rotate({0, 0, thrust / p.mass}) + Vec3{0, 0, -kGravity};
    next.velocity = state.velocity + accel * dt;
    next.position = state.position + (state.velocity + next.velocity) * (0.5 * dt);

    const Vec3& inertia = p.inertia;
    Vec3 i_omega{inertia.x * state.omega.x, inertia.y * state.omega.y, inertia.z * state.omega.z};
    Vec3 gyro = cross(state.omega, i_omega);
    Vec3 omega_dot{(torque.x - gyro.x) / inertia.x, (torque.y - gyro.y) / inertia.y,
                   (torque.z - gyro.z) / inertia.z};
    next.omega = state.omega + omega_dot * dt;
    next.attitude = (state.attitude * Quat::from_rotvec(next.omega * dt)).normalized();
    return next;
}

// ---- cascaded controller ----

// Loop scheduling: dynamics and the rate loop run every step (1 kHz at the
// default dt), attitude every 2nd step, velocity every 10th.
struct CascadedController {
    QuadParams params;
    LoopGains gains;

    int velocity_decim = 10;
    int attitude_decim = 2;

    Vec3 v_ref_body;
    double wz_ff = 0;

    Vec3 vel_integral;
    PidState rate_pid;
    double psi_ref = 0;
    Quat quat_cmd = Quat::identity();
    double thrust_cmd = 0;
    Vec3 rate_cmd;
    Vec3 v_ref_world_latched;
    long step_count = 0;

    void reset(double initial_yaw) {
        vel_integral = {};
        rate_pid = {};
        psi_ref = initial_yaw;
        quat_cmd = Quat::from_yaw(initial_yaw);
        thrust_cmd = params.mass * kGravity;
        rate_cmd = {};
        v_ref_world_latched = {};
        step_count = 0;
    }

    void set_command(const VelocityCommand& cmd) {
        if (cmd.frame != CommandFrame::Body)
            throw std::invalid_argument("CascadedController: expected body-frame command");
        v_ref_body = {cmd.vx, cmd.vy, cmd.vz};
        wz_ff = cmd.wz;
    }

    // One dynamics-rate tick; returns rotor thrust commands.
    std::array<double, 4> step(const QuadState& state, double dt) {
        if (step_count % velocity_decim == 0) {
            double dt_vel = dt * velocity_decim;
            // heading frame: forward/left command follows the vehicle's yaw
            Vec3 v_ref_world = rot_z(state.attitude.yaw()) * v_ref_body;
            v_ref_world_latched = v_ref_world;
            Vec3 accel = velocity_loop(v_ref_world, state.velocity, gains, vel_integral, dt_vel);
            psi_ref += wz_ff * dt_vel;
            AttitudeCommand ac = accel_to_attitude(accel, psi_ref, params, quat_cmd);
            quat_cmd = ac.attitude;
            thrust_cmd = ac.thrust;
        }
        if (step_count % attitude_decim == 0)
            rate_cmd = attitude_loop(quat_cmd, state.attitude, wz_ff, gains);
        Vec3 torque = rate_loop_pid(rate_cmd, state.omega, gains, rate_pid, dt);
        ++step_count;
        return mixer(thrust_cmd, torque, params);
    }
};

}  // namespace servosim
