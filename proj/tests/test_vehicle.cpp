#include <catch_amalgamated.hpp>

#include <cmath>

#include "servosim/vehicle.hpp"
#include "servosim/rng.hpp"
#include "support.hpp"

using namespace servosim;

namespace {

QuadParams quad() { return QuadParams{}; }
LoopGains gains() { return LoopGains{}; }

}  // namespace

TEST_CASE("velocity loop: hover feedforward and pure P", "[vehicle]") {
    LoopGains g = gains();
    Vec3 integral;
    Vec3 a = velocity_loop({0, 0, 0}, {0, 0, 0}, g, integral, 0.01);
    CHECK(a.x == Catch::Approx(0.0).margin(1e-12));
    CHECK(a.y == Catch::Approx(0.0).margin(1e-12));
    CHECK(a.z == Catch::Approx(kGravity + g.vel_ki.z * 0.0).margin(1e-9));

    LoopGains p_only = g;
    p_only.vel_kp = {2, 2, 2};
    p_only.vel_ki = {0, 0, 0};
    Vec3 integral2;
    Vec3 a2 = velocity_loop({1, 0, 0}, {0, 0, 0}, p_only, integral2, 0.01);
    CHECK(a2.x == Catch::Approx(2.0));
    CHECK(a2.y == Catch::Approx(0.0).margin(1e-12));
    CHECK(a2.z == Catch::Approx(kGravity).margin(1e-9));
}

TEST_CASE("velocity loop: integral clamps under sustained error", "[vehicle]") {
    LoopGains g = gains();
    g.vel_int_clamp = 1.0;
    Vec3 integral;
    for (int i = 0; i < 5000; ++i)
        velocity_loop({1, 0, 0}, {0, 0, 0}, g, integral, 0.01);
    CHECK(integral.x == Catch::Approx(1.0));  // clamped, not 50
    CHECK(std::abs(integral.y) < 1e-12);
}

TEST_CASE("acceleration maps to thrust and tilt", "[vehicle]") {
    QuadParams p = quad();
    AttitudeCommand hover = accel_to_attitude({0, 0, kGravity}, 0.0, p);
    CHECK(hover.thrust == Catch::Approx(1.1485 * 9.81).epsilon(1e-9));  // about 11.27 N
    Vec3 zb = hover.attitude.rotate({0, 0, 1});
    CHECK(zb.z == Catch::Approx(1.0).margin(1e-9));

    AttitudeCommand sat = accel_to_attitude({0, 0, 5 * kGravity}, 0.0, p);
    CHECK(sat.thrust == Catch::Approx(4 * 1.1485 * 9.81).epsilon(1e-9));  // about 45.07 N

    // oracle: axis-angle from z to the normalized acceleration
    Vec3 accel{kGravity, 0, kGravity};
    AttitudeCommand tilt = accel_to_attitude(accel, 0.0, p);
    Vec3 want_axis = normalized(cross(Vec3{0, 0, 1}, normalized(accel)));
    double want_angle = std::acos(dot(Vec3{0, 0, 1}, normalized(accel)));
    Quat want = Quat::from_axis_angle(want_axis, want_angle);
    Vec3 got_z = tilt.attitude.rotate({0, 0, 1});
    Vec3 want_z = want.rotate({0, 0, 1});
    CHECK(got_z.x == Catch::Approx(want_z.x).margin(1e-9));
    CHECK(got_z.y == Catch::Approx(want_z.y).margin(1e-9));
    CHECK(got_z.z == Catch::Approx(want_z.z).margin(1e-9));
    CHECK(want_angle == Catch::Approx(kPi / 4));

    // near-zero acceleration holds the fallback attitude
    Quat held = Quat::from_yaw(0.3);
    AttitudeCommand low = accel_to_attitude({0, 0, 0.01}, 0.0, p, held);
    CHECK(low.attitude.z == Catch::Approx(held.z));
    CHECK(low.thrust == Catch::Approx(p.mass * 0.01));
}

TEST_CASE("attitude loop: feedforward, P response, and double cover", "[vehicle]") {
    LoopGains g = gains();
    Quat level = Quat::identity();
    Vec3 ff_only = attitude_loop(level, level, 0.3, g);
    CHECK(ff_only.x == Catch::Approx(0.0).margin(1e-12));
    CHECK(ff_only.y == Catch::Approx(0.0).margin(1e-12));
    CHECK(ff_only.z == Catch::Approx(0.3));

    // 10 degree roll error with Kp = 6; oracle is the quaternion log map
    LoopGains kp6 = g;
    kp6.att_kp = {6, 6, 6};
    double angle = 10.0 * kPi / 180.0;
    Quat cmd = Quat::from_axis_angle({1, 0, 0}, angle);
    Vec3 rate = attitude_loop(cmd, level, 0.0, kp6);
    CHECK(rate.x == Catch::Approx(6.0 * angle).epsilon(1e-9));
    CHECK(rate.y == Catch::Approx(0.0).margin(1e-12));

    Quat anti{-cmd.w, -cmd.x, -cmd.y, -cmd.z};
    Vec3 rate2 = attitude_loop(anti, level, 0.0, kp6);
    CHECK(rate2.x == Catch::Approx(rate.x).margin(1e-9));
    CHECK(rate2.z == Catch::Approx(rate.z).margin(1e-9));
}

TEST_CASE("rate loop: P at first sample, integral ramp, clamp", "[vehicle]") {
    LoopGains g = gains();
    g.rate_kp = {0.05, 0.05, 0.05};
    g.rate_ki = {0, 0, 0};
    g.rate_kd = {0, 0, 0};
    PidState pid;
    Vec3 torque = rate_loop_pid({0, 0, 0}, {0, 0, 0}, g, pid, 0.001);
    CHECK(torque.x == Catch::Approx(0.0).margin(1e-12));

    PidState pid2;
    Vec3 step1 = rate_loop_pid({1, 0, 0}, {0, 0, 0}, g, pid2, 0.001);
    CHECK(step1.x == Catch::Approx(0.05).epsilon(1e-6));  // pure P at t = 0

    LoopGains gi = gains();
    gi.rate_kp = {0, 0, 0};
    gi.rate_kd = {0, 0, 0};
    gi.rate_ki = {1, 1, 1};
    gi.rate_int_clamp = 0.1;
    PidState pid3;
    double prev = 0;
    for (int i = 0; i < 50; ++i) {
        Vec3 t3 = rate_loop_pid({1, 0, 0}, {0, 0, 0}, gi, pid3, 0.001);
        CHECK(t3.x >= prev);  // ramps
        prev = t3.x;
    }
    for (int i = 0; i < 1000; ++i) rate_loop_pid({1, 0, 0}, {0, 0, 0}, gi, pid3, 0.001);
    CHECK(pid3.integral.x == Catch::Approx(0.1));  // clamped
}

TEST_CASE("mixer: symmetric hover split and documented example cases", "[vehicle]") {
    QuadParams p = quad();
    auto hover = mixer(8.0, {0, 0, 0}, p);
    for (double f : hover) CHECK(f == Catch::Approx(2.0));

    // pure roll torque: left/right pairs differ by tau / (2 * lever), sum unchanged
    double tau = 0.2;
    auto roll = mixer(8.0, {tau, 0, 0}, p);
    double sum = roll[0] + roll[1] + roll[2] + roll[3];
    CHECK(sum == Catch::Approx(8.0).margin(1e-12));
    double left = roll[1] + roll[2], right = roll[0] + roll[3];
    CHECK(left - right == Catch::Approx(tau / p.lever()).margin(1e-12));
}

TEST_CASE("mixer output reproduces the wrench through an independent matrix", "[vehicle]") {
    QuadParams p = quad();
    // independent 4x4 allocation built from the rotor geometry, then applied
    double d = p.arm / std::sqrt(2.0);
    double A[4][4] = {
        {1, 1, 1, 1},
        {-d, d, d, -d},
        {-d, d, -d, d},
        {-p.kq, -p.kq, p.kq, p.kq},
    };
    Rng rng(8);
    for (int trial = 0; trial < 300; ++trial) {
        double thrust = rng.uniform(1.0, 30.0);
        Vec3 torque{rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.1, 0.1)};
        auto f = mixer_unclamped(thrust, torque, p);
        double out[4] = {0, 0, 0, 0};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) out[i] += A[i][j] * f[static_cast<size_t>(j)];
        CHECK(out[0] == Catch::Approx(thrust).margin(1e-9));
        CHECK(out[1] == Catch::Approx(torque.x).margin(1e-9));
        CHECK(out[2] == Catch::Approx(torque.y).margin(1e-9));
        CHECK(out[3] == Catch::Approx(torque.z).margin(1e-9));

        double fwd_thrust;
        Vec3 fwd_torque;
        forward_allocation(f, p, fwd_thrust, fwd_torque);
        CHECK(fwd_thrust == Catch::Approx(thrust).margin(1e-9));
        CHECK(fwd_torque.x == Catch::Approx(torque.x).margin(1e-9));
        CHECK(fwd_torque.y == Catch::Approx(torque.y).margin(1e-9));
        CHECK(fwd_torque.z == Catch::Approx(torque.z).margin(1e-9));
    }
}

TEST_CASE("mixer saturation keeps thrust and sacrifices yaw first", "[vehicle]") {
    QuadParams p = quad();
    double fmax = p.max_rotor_thrust();
    // heavy yaw demand that cannot fit alongside the thrust
    double thrust = 4 * fmax - 1.0;
    auto f = mixer(thrust, {0, 0, 5.0}, p);
    double got_thrust;
    Vec3 got_torque;
    forward_allocation(f, p, got_thrust, got_torque);
    CHECK(got_thrust == Catch::Approx(thrust).margin(1e-6));
    CHECK(std::abs(got_torque.z) < 5.0);  // yaw demand reduced
    for (double v : f) {
        CHECK(v >= 0.0);
        CHECK(v <= fmax + 1e-9);
    }
    CHECK_THROWS_AS(mixer(-1.0, {0, 0, 0}, p), std::invalid_argument);
}

TEST_CASE("dynamics: hover equilibrium holds position", "[vehicle]") {
    QuadParams p = quad();
    QuadState s;
    s.position = {0, 0, 1};
    double f_hover = p.mass * kGravity / 4.0;
    for (int i = 0; i < 1000; ++i) s = step_dynamics(s, {f_hover, f_hover, f_hover, f_hover}, p, 1e-3);
    CHECK(std::abs(s.position.x) < 1e-9);
    CHECK(std::abs(s.position.y) < 1e-9);
    CHECK(std::abs(s.position.z - 1.0) < 1e-9);
}

TEST_CASE("dynamics: free fall matches the analytic trajectory", "[vehicle]") {
    QuadParams p = quad();
    QuadState s;
    s.position = {0, 0, 10};
    for (int i = 0; i < 500; ++i) s = step_dynamics(s, {0, 0, 0, 0}, p, 1e-3);
    double t = 0.5;
    CHECK(s.position.z == Catch::Approx(10 - 0.5 * kGravity * t * t).margin(1e-4));
    CHECK(s.velocity.z == Catch::Approx(-kGravity * t).margin(1e-9));
}

TEST_CASE("dynamics: pure yaw torque ramps the yaw rate linearly", "[vehicle]") {
    QuadParams p = quad();
    QuadState s;
    s.position = {0, 0, 1};
    // rotor set producing zero net thrust difference but a yaw moment:
    // FL/BR high, FR/BL low
    double base = p.mass * kGravity / 4.0, delta = 0.5;
    std::array<double, 4> f{base - delta, base - delta, base + delta, base + delta};
    double thrust;
    Vec3 torque;
    forward_allocation(f, p, thrust, torque);
    REQUIRE(torque.z == Catch::Approx(4 * p.kq * delta));
    REQUIRE(std::abs(torque.x) < 1e-12);
    double t_end = 0.3;
    for (int i = 0; i < 300; ++i) s = step_dynamics(s, f, p, 1e-3);
    CHECK(s.omega.z == Catch::Approx(torque.z / p.inertia.z * t_end).epsilon(1e-6));
    CHECK(std::abs(s.omega.x) < 1e-9);
}

TEST_CASE("dynamics: ballistic flight does not gain mechanical energy", "[vehicle]") {
    QuadParams p = quad();
    QuadState s;
    s.position = {0, 0, 5};
    s.velocity = {1.0, -0.5, 0.8};
    auto energy = [&](const QuadState& st) {
        return 0.5 * p.mass * dot(st.velocity, st.velocity) + p.mass * kGravity * st.position.z;
    };
    double prev = energy(s);
    for (int i = 0; i < 2000; ++i) {
        s = step_dynamics(s, {0, 0, 0, 0}, p, 1e-3);
        double e = energy(s);
        CHECK(e <= prev + 1e-6);
        prev = e;
    }
}

TEST_CASE("dynamics: quaternion norm stays unit over a million steps", "[vehicle]") {
    QuadParams p = quad();
    QuadState s;
    s.position = {0, 0, 100000};  // keep it falling; attitude is what matters
    s.omega = {0.3, -0.2, 0.5};
    for (int i = 0; i < 1000000; ++i) {
        s = step_dynamics(s, {0.1, 0.11, 0.09, 0.1}, p, 1e-3);
        if (i % 10000 == 0) REQUIRE(std::abs(s.attitude.norm() - 1.0) < 1e-9);
    }
    CHECK(std::abs(s.attitude.norm() - 1.0) < 1e-9);
}

TEST_CASE("dynamics rejects bad steps", "[vehicle]") {
    QuadParams p = quad();
    QuadState s;
    CHECK_THROWS_AS(step_dynamics(s, {0, 0, 0, 0}, p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(step_dynamics(s, {0, 0, 0, 0}, p, 0.05), std::invalid_argument);
    s.velocity.x = std::nan("");
    CHECK_THROWS_AS(step_dynamics(s, {0, 0, 0, 0}, p, 1e-3), std::invalid_argument);
}

TEST_CASE("closed loop: hover drift stays small over ten seconds", "[vehicle]") {
    QuadParams p = quad();
    CascadedController ctl{p, gains()};
    ctl.reset(0.0);
    ctl.set_command({0, 0, 0, 0, CommandFrame::Body});
    QuadState s;
    s.position = {0, 0, 1};
    for (int i = 0; i < 10000; ++i) {
        auto rotors = ctl.step(s, 1e-3);
        s = step_dynamics(s, rotors, p, 1e-3);
    }
    double drift = norm(s.position - Vec3{0, 0, 1});
    CHECK(drift < 0.05);
}

TEST_CASE("closed loop: velocity steps settle and yaw feedforward turns", "[vehicle]") {
    QuadParams p = quad();
    CascadedController ctl{p, gains()};
    ctl.reset(0.0);
    ctl.set_command({0.5, 0, 0, 0, CommandFrame::Body});
    QuadState s;
    s.position = {0, 0, 1};
    for (int i = 0; i < 4000; ++i) {
        auto rotors = ctl.step(s, 1e-3);
        s = step_dynamics(s, rotors, p, 1e-3);
    }
    CHECK(s.velocity.x == Catch::Approx(0.5).margin(0.05));
    CHECK(std::abs(s.velocity.y) < 0.05);
    CHECK(std::abs(s.velocity.z) < 0.05);

    ctl.set_command({0, 0, 0, 0.5, CommandFrame::Body});
    double yaw_before = s.attitude.yaw();
    for (int i = 0; i < 2000; ++i) {
        auto rotors = ctl.step(s, 1e-3);
        s = step_dynamics(s, rotors, p, 1e-3);
    }
    double dyaw = s.attitude.yaw() - yaw_before;
    CHECK(dyaw == Catch::Approx(1.0).margin(0.25));  // 0.5 rad/s for 2 s
}
