#pragma once

// Shared helpers for the test suites: scenario paths, temp dirs, and the
// kinematic camera harness used by the servo convergence checks.

#include <filesystem>
#include <string>

#include "servosim/features.hpp"
#include "servosim/servo.hpp"
#include "servosim/simcam.hpp"
#include "servosim/world.hpp"

namespace testutil {

inline std::string scenario_path(const std::string& name) {
    return std::string(SERVOSIM_SCENARIO_DIR) + "/" + name;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    std::filesystem::path p = std::filesystem::current_path() / "test_out" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Kinematic camera: a level camera with a yaw angle, moved directly by the
// servo command each step. No vehicle dynamics involved.
struct KinematicCamera {
    servosim::Vec3 position;
    double yaw = 0;  // heading of the optical axis in the world x-y plane

    servosim::CameraPose pose() const {
        using namespace servosim;
        Vec3 zc{std::cos(yaw), std::sin(yaw), 0};
        Vec3 xc = normalized(cross(zc, Vec3{0, 0, 1}));
        Vec3 yc = cross(zc, xc);
        return {Mat3::from_cols(xc, yc, zc).transposed(), position};
    }

    // Apply a camera-frame velocity command for dt seconds.
    void apply(const servosim::VelocityCommand& cmd, double dt) {
        using namespace servosim;
        CameraPose p = pose();
        Vec3 delta_world = p.r_cw.transposed() * Vec3{cmd.vx * dt, cmd.vy * dt, cmd.vz * dt};
        position += delta_world;
        yaw += cmd.wz * dt;
    }
};

}  // namespace testutil
