#pragma once

// Run orchestration: loads scenario and config, wires the controller and
// perception stages through the link layer, steps the coupled simulation on
// a purely simulated clock, and writes logs, CSV exports, and the summary.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "servosim/config.hpp"
#include "servosim/features.hpp"
#include "servosim/link.hpp"
#include "servosim/mission.hpp"
#include "servosim/percept.hpp"
#include "servosim/servo.hpp"
#include "servosim/simcam.hpp"
#include "servosim/vehicle.hpp"
#include "servosim/world.hpp"

namespace servosim {

inline constexpr double kHullRadius = 0.25;  // m, spherical collision hull

struct SimcamConfig {
    CameraIntrinsics intrinsics;       // RGB intrinsics used for tag detection
    int depth_width = 160;             // pseudo-depth render resolution
    int depth_height = 120;
    double noise_sigma = 5.0;          // raw units
    DepthAffine affine;                // hidden scale/shift of the depth stand-in
    double far_plane = kDepthFarPlane;

    CameraIntrinsics depth_intrinsics() const {
        return intrinsics.scaled(depth_width, depth_height);
    }
};

struct RunConfig {
    std::string scenario_path;
    uint64_t seed = 1;
    double duration = 120.0;       // s, simulated
    double perception_hz = 4.0;
    bool avoidance = true;
    bool two_process = false;
    std::string out_dir;           // empty: no files written
    bool record_frames = true;     // write frames.bin next to the CSVs
    std::string percept_bin;       // two-process executable; default: sibling binary
    std::string frame_addr = default_frame_addr();
    std::string cmd_addr = default_cmd_addr();
    double staleness_window = kDefaultStalenessWindow;

    Vec4 lambda = ServoGains::default_lambda();
    Mat4 l_hat = ServoGains::default_lhat();
    double v_max = 1.0, w_max = 1.0;
    double z_star = 1.2;

    MissionParams mission;
    PerceptParams percept;
    SimcamConfig simcam;
    QuadParams quad;
    LoopGains gains;
};

inline void apply_run_config(RunConfig& cfg, const ConfigDoc& doc) {
    if (const ConfigSection* s = doc.first("run")) {
        SectionReader r{*s};
        cfg.seed = static_cast<uint64_t>(r.integer("seed", static_cast<long>(cfg.seed)));
        cfg.duration = r.num("duration", cfg.duration);
        cfg.perception_hz = r.num("perception_rate", cfg.perception_hz);
        cfg.avoidance = r.boolean("avoidance", cfg.avoidance);
        cfg.two_process = r.boolean("two_process", cfg.two_process);
        cfg.record_frames = r.boolean("record_frames", cfg.record_frames);
    }
    if (const ConfigSection* s = doc.first("servo")) {
        SectionReader r{*s};
        if (r.has("lambda")) {
            auto v = r.numbers("lambda");
            if (v.size() != 4) throw ConfigError("[servo] lambda: expected 4 numbers");
            cfg.lambda = {{v[0], v[1], v[2], v[3]}};
        }
        if (r.has("lhat")) {
            auto v = r.numbers("lhat");
            if (v.size() != 16) throw ConfigError("[servo] lhat: expected 16 numbers (row-major)");
            for (int i = 0; i < 16; ++i) cfg.l_hat.m[static_cast<size_t>(i)] = v[static_cast<size_t>(i)];
        }
        cfg.v_max = r.num("v_max", cfg.v_max);
        cfg.w_max = r.num("w_max", cfg.w_max);
        cfg.z_star = r.num("z_star", cfg.z_star);
    }
    if (const ConfigSection* s = doc.first("mission")) {
        SectionReader r{*s};
        MissionParams& m = cfg.mission;
        m.eps_track = r.num("eps_track", m.eps_track);
        m.hold_frames = static_cast<int>(r.integer("hold_frames", m.hold_frames));
        m.t_lost = r.num("t_lost", m.t_lost);
        m.search_yaw_rate = r.num("search_yaw_rate", m.search_yaw_rate);
        m.search_vz = r.num("search_vz", m.search_vz);
        m.search_timeout = r.num("search_timeout", m.search_timeout);
        m.climb_rate = r.num("climb_rate", m.climb_rate);
        m.gate_speed = r.num("gate_speed", m.gate_speed);
        m.area_min = r.num("area_min", m.area_min);
        m.avoid.duration = r.num("avoid_duration", m.avoid.duration);
        m.avoid.yaw_rate = r.num("avoid_yaw_rate", m.avoid.yaw_rate);
        m.avoid.forward_speed = r.num("avoid_forward_speed", m.avoid.forward_speed);
        m.avoid.turn_fraction = r.num("avoid_turn_fraction", m.avoid.turn_fraction);
    }
    if (const ConfigSection* s = doc.first("percept")) {
        SectionReader r{*s};
        PerceptParams& p = cfg.percept;
        p.decision.tau = r.num("tau", p.decision.tau);
        p.decision.area_min = r.num("area_min", p.decision.area_min);
        p.decision.left_bound = r.num("left_bound", p.decision.left_bound);
        p.decision.right_bound = r.num("right_bound", p.decision.right_bound);
        p.rate_hz = r.num("rate", p.rate_hz);
        p.align_in_loop = r.boolean("align_in_loop", p.align_in_loop);
        p.align_samples = static_cast<int>(r.integer("align_samples", p.align_samples));
    }
    if (const ConfigSection* s = doc.first("simcam")) {
        SectionReader r{*s};
        SimcamConfig& c = cfg.simcam;
        c.intrinsics.width = static_cast<int>(r.integer("width", c.intrinsics.width));
        c.intrinsics.height = static_cast<int>(r.integer("height", c.intrinsics.height));
        c.intrinsics.fx = r.num("fx", c.intrinsics.fx);
        c.intrinsics.fy = r.num("fy", c.intrinsics.fy);
        c.intrinsics.cx = r.num("cx", c.intrinsics.width / 2.0);
        c.intrinsics.cy = r.num("cy", c.intrinsics.height / 2.0);
        c.depth_width = static_cast<int>(r.integer("depth_width", c.depth_width));
        c.depth_height = static_cast<int>(r.integer("depth_height", c.depth_height));
        c.noise_sigma = r.num("noise_sigma", c.noise_sigma);
        c.affine.scale = r.num("scale_true", c.affine.scale);
        c.affine.shift = r.num("shift_true", c.affine.shift);
        c.far_plane = r.num("far_plane", c.far_plane);
    }
    if (const ConfigSection* s = doc.first("vehicle")) {
        SectionReader r{*s};
        QuadParams& q = cfg.quad;
        q.mass = r.num("mass", q.mass);
        q.arm = r.num("arm", q.arm);
        q.thrust_to_weight = r.num("thrust_to_weight", q.thrust_to_weight);
        q.inertia = r.vec3("inertia", q.inertia);
        q.kq = r.num("kq", q.kq);
        LoopGains& g = cfg.gains;
        g.vel_kp = r.vec3("vel_kp", g.vel_kp);
        g.vel_ki = r.vec3("vel_ki", g.vel_ki);
        g.att_kp = r.vec3("att_kp", g.att_kp);
        g.rate_kp = r.vec3("rate_kp", g.rate_kp);
        g.rate_ki = r.vec3("rate_ki", g.rate_ki);
        g.rate_kd = r.vec3("rate_kd", g.rate_kd);
    }
    if (const ConfigSection* s = doc.first("link")) {
        SectionReader r{*s};
        cfg.frame_addr = r.str("frame_addr", cfg.frame_addr);
        cfg.cmd_addr = r.str("cmd_addr", cfg.cmd_addr);
        cfg.staleness_window = r.num("staleness", cfg.staleness_window);
    }
    cfg.mission.z_star = cfg.z_star;
    cfg.mission.area_min = std::max(cfg.mission.area_min, 0.0);
}

enum class RunOutcome { Done, Failed, Collision, Timeout };

inline const char* to_string(RunOutcome o) {
    switch (o) {
        case RunOutcome::Done: return "Done";
        case RunOutcome::Failed: return "Failed";
        case RunOutcome::Collision: return "Collision";
        default: return "Timeout";
    }
}

inline int exit_code(RunOutcome o) {
    switch (o) {
        case RunOutcome::Done: return 0;
        case RunOutcome::Failed: return 2;
        case RunOutcome::Collision: return 3;
        default: return 4;
    }
}

struct MissionReport {
    RunOutcome outcome = RunOutcome::Timeout;
    FailReason fail_reason = FailReason::None;
    double min_obstacle_clearance = std::numeric_limits<double>::infinity();
    int gates_passed = 0;
    int tags_tracked = 0;
    double mission_time = 0;  // s at termination
    uint64_t seed = 0;
    std::string scenario_name;
    long frames_sent = 0;

    struct TrajSample {
        double t, x, y, z;
    };
    struct VelSample {
        double t, vx_ref, vx, vy_ref, vy, vz_ref, vz;
    };
    struct YawSample {
        double t, wz_ref, wz;
    };
    struct CmdSample {
        double t;
        uint32_t seq;
        AvoidDirection direction;
        double white_fraction;
    };

    std::vector<TrajSample> trajectory;
    std::vector<VelSample> velocity;
    std::vector<YawSample> yawrate;
    std::vector<CmdSample> commands;  // non-CENTER datagrams as received
    std::vector<uint8_t> frame_log;   // encoded frame stream (optional)
};

// ---- two-process child management ----

class ChildProcess {
  public:
    ChildProcess() = default;

    void spawn(const std::string& exe, const std::vector<std::string>& args) {
        std::vector<char*> argv;
        std::vector<std::string> storage = args;
        storage.insert(storage.begin(), exe);
        for (auto& s : storage) argv.push_back(s.data());
        argv.push_back(nullptr);
        pid_ = fork();
        if (pid_ < 0) throw std::runtime_error("fork failed");
        if (pid_ == 0) {
            execv(exe.c_str(), argv.data());
            _exit(127);
        }
    }

    void wait_or_kill(int timeout_ms = 3000) {
        if (pid_ <= 0) return;
        for (int waited = 0; waited < timeout_ms; waited += 20) {
            int status = 0;
            if (waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            usleep(20 * 1000);
        }
        kill(pid_, SIGKILL);
        waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }

    ~ChildProcess() {
        if (pid_ > 0) {
            kill(pid_, SIGKILL);
            waitpid(pid_, nullptr, 0);
        }
    }

  private:
    pid_t pid_ = -1;
};

inline std::string self_exe_dir() {
    char buf[4096];
    ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n <= 0) return ".";
    buf[n] = '\0';
    return std::filesystem::path(buf).parent_path().string();
}

inline std::string default_percept_bin() {
    std::string env = env_or("SERVOSIM_PERCEPT_BIN", "");
    if (!env.empty()) return env;
    return (std::filesystem::path(self_exe_dir()) / "servosim-percept").string();
}

// ---- the simulation loop ----

inline MissionReport run_mission(const RunConfig& cfg) {
    WorldScene scene = load_scenario_file(cfg.scenario_path);
    if (cfg.duration <= 0) throw ConfigError("duration must be > 0");
    if (cfg.perception_hz <= 0) throw ConfigError("perception rate must be > 0");
    if (cfg.two_process && cfg.percept.align_in_loop)
        throw ConfigError("align_in_loop needs in-process reference sampling");

    const CameraIntrinsics& intr = cfg.simcam.intrinsics;
    CameraIntrinsics depth_intr = cfg.simcam.depth_intrinsics();
    ServoGains gains(cfg.lambda, cfg.l_hat, cfg.v_max, cfg.w_max);

    std::vector<DesiredFeatures> desired;
    desired.reserve(scene.tags.size());
    for (const auto& tag : scene.tags)
        desired.push_back(calibrate_desired_features(tag.side, intr, cfg.z_star));

    QuadState quad;
    quad.position = scene.start_position;
    quad.attitude = Quat::from_yaw(scene.start_yaw);
    CascadedController controller{cfg.quad, cfg.gains};
    controller.reset(scene.start_yaw);

    MissionParams mp = cfg.mission;
    mp.z_star = cfg.z_star;
    MissionState mission = make_initial_state(scene, mp);

    std::unique_ptr<ControllerLink> link;
    ChildProcess child;
    if (cfg.avoidance) {
        if (cfg.two_process) {
            auto sock = std::make_unique<SocketControllerLink>(cfg.frame_addr, cfg.cmd_addr,
                                                               cfg.staleness_window);
            std::string bin = cfg.percept_bin.empty() ? default_percept_bin() : cfg.percept_bin;
            char num[48];
            auto fmt = [&](double v) {
                std::snprintf(num, sizeof(num), "%.17g", v);
                return std::string(num);
            };
            child.spawn(bin, {"--frame-addr", sock->frame_addr(), "--cmd-addr", sock->cmd_addr(),
                              "--tau", fmt(cfg.percept.decision.tau), "--area-min",
                              fmt(cfg.percept.decision.area_min), "--left-bound",
                              fmt(cfg.percept.decision.left_bound), "--right-bound",
                              fmt(cfg.percept.decision.right_bound)});
            if (!sock->accept_peer(10000)) throw LinkError("perception process did not connect");
            link = std::move(sock);
        } else {
            link = std::make_unique<InprocLink>(cfg.percept, cfg.staleness_window);
        }
    }

    MissionReport report;
    report.seed = cfg.seed;
    report.scenario_name = std::filesystem::path(cfg.scenario_path).stem().string();

    const uint64_t dt_dyn_us = 1000;          // 1 kHz dynamics and rate loop
    const uint64_t tick_us = 10000;           // 100 Hz control / logging tick
    const uint64_t duration_us = static_cast<uint64_t>(std::llround(cfg.duration * 1e6));
    const uint64_t frame_period_us = static_cast<uint64_t>(std::llround(1e6 / cfg.perception_hz));
    const double dt_dyn = 1e-3;
    const double dt_tick = 1e-2;

    uint64_t t_us = 0;
    uint64_t next_frame_us = 0;
    uint32_t frame_seq = 0;
    uint32_t last_logged_cmd_seq = 0;
    bool have_logged_cmd = false;
    std::optional<RunOutcome> outcome;

    auto update_clearance = [&](const Vec3& pos) {
        for (const auto& o : scene.obstacles) {
            double clearance = point_cylinder_clearance(pos, o.shape()) - kHullRadius;
            report.min_obstacle_clearance = std::min(report.min_obstacle_clearance, clearance);
            if (clearance <= 0) return false;
        }
        return true;
    };

    if (!update_clearance(quad.position)) outcome = RunOutcome::Collision;

    while (!outcome) {
        double t = static_cast<double>(t_us) * 1e-6;

        report.trajectory.push_back({t, quad.position.x, quad.position.y, quad.position.z});
        const Vec3& vr = controller.v_ref_world_latched;
        report.velocity.push_back(
            {t, vr.x, quad.velocity.x, vr.y, quad.velocity.y, vr.z, quad.velocity.z});
        report.yawrate.push_back({t, controller.wz_ff, quad.omega.z});

        if (t_us >= duration_us) {
            outcome = RunOutcome::Timeout;
            break;
        }

        CameraPose cam = camera_pose_from_body(quad.position, quad.attitude);

        if (link && t_us >= next_frame_us) {
            next_frame_us += frame_period_us;
            ++frame_seq;
            DepthMap depth = render_pseudo_depth(cam, scene, depth_intr, cfg.simcam.affine,
                                                 cfg.simcam.noise_sigma, cfg.seed, frame_seq,
                                                 cfg.simcam.far_plane);
            FrameMessage frame = frame_from_depth(depth, frame_seq, t_us);
            std::shared_ptr<const std::vector<DepthRefSample>> refs;
            if (cfg.percept.align_in_loop)
                refs = std::make_shared<const std::vector<DepthRefSample>>(sample_reference_depth(
                    cam, scene, depth_intr, cfg.percept.align_samples, cfg.simcam.far_plane));
            if (cfg.record_frames && !cfg.out_dir.empty()) {
                std::vector<uint8_t> bytes = encode_frame(frame);
                report.frame_log.insert(report.frame_log.end(), bytes.begin(), bytes.end());
            }
            link->send_frame(frame, refs);
            ++report.frames_sent;
            if (!link->wait_reply(frame_seq, 10000))
                throw LinkError("perception reply timed out (frame " + std::to_string(frame_seq) + ")");
        }

        std::optional<AvoidCommandMsg> avoid;
        if (link) {
            link->poll(t_us);
            if (const auto& newest = link->newest()) {
                if ((!have_logged_cmd || newest->msg.seq != last_logged_cmd_seq) &&
                    newest->msg.direction != AvoidDirection::Center) {
                    report.commands.push_back({static_cast<double>(newest->arrival_us) * 1e-6,
                                               newest->msg.seq, newest->msg.direction,
                                               newest->msg.white_fraction});
                }
                if (!have_logged_cmd || newest->msg.seq != last_logged_cmd_seq) {
                    last_logged_cmd_seq = newest->msg.seq;
                    have_logged_cmd = true;
                }
            }
            avoid = link->fresh_command(t_us);
        }

        std::optional<TrackObservation> obs;
        std::optional<VelocityCommand> servo_body;
        {
            size_t k = static_cast<size_t>(mission.target);
            if (k < scene.tags.size()) {
                auto tag_obs = observe_tag(cam, scene.tags[k], intr, scene.obstacles);
                if (tag_obs) {
                    FeatureVec q = feature_vector(*tag_obs, intr, desired[k]);
                    if (q.valid) {
                        obs = TrackObservation{q, feature_error(q, desired[k]).norm()};
                        if (auto vc = ibvs_velocity(q, desired[k], gains))
                            servo_body = camera_to_body(*vc);
                    }
                }
            }
        }

        auto [next_mission, cmd] = step_mission(mission, obs, servo_body, avoid, scene, mp, dt_tick);
        mission = next_mission;
        if (mission.phase == MissionPhase::Done) {
            outcome = RunOutcome::Done;
            break;
        }
        if (mission.phase == MissionPhase::Failed) {
            outcome = RunOutcome::Failed;
            break;
        }
        controller.set_command(cmd.velocity);

        for (uint64_t i = 0; i < tick_us / dt_dyn_us; ++i) {
            auto rotors = controller.step(quad, dt_dyn);
            quad = step_dynamics(quad, rotors, cfg.quad, dt_dyn);
            t_us += dt_dyn_us;
            if (!update_clearance(quad.position)) {
                outcome = RunOutcome::Collision;
                break;
            }
        }
    }

    report.outcome = *outcome;
    report.fail_reason = mission.fail_reason;
    report.gates_passed = mission.gates_passed;
    report.tags_tracked = mission.tags_tracked;
    report.mission_time = static_cast<double>(t_us) * 1e-6;

    if (auto* sock = dynamic_cast<SocketControllerLink*>(link.get())) {
        sock->close_frame_stream();
        child.wait_or_kill();
    }
    return report;
}

// ---- export / import ----

namespace detail {

inline std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline std::string format_summary(const MissionReport& r) {
    std::string s;
    s += "outcome = " + std::string(to_string(r.outcome)) + "\n";
    s += "fail_reason = " + std::string(to_string(r.fail_reason)) + "\n";
    s += "gates_passed = " + std::to_string(r.gates_passed) + "\n";
    s += "tags_tracked = " + std::to_string(r.tags_tracked) + "\n";
    s += "min_obstacle_clearance = " + detail::fmt6(r.min_obstacle_clearance) + "\n";
    s += "mission_time = " + detail::fmt6(r.mission_time) + "\n";
    s += "avoid_commands = " + std::to_string(r.commands.size()) + "\n";
    s += "seed = " + std::to_string(r.seed) + "\n";
    s += "scenario = " + r.scenario_name + "\n";
    return s;
}

inline void export_report(const MissionReport& r, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto f6 = detail::fmt6;

    std::string traj = "t,x,y,z\n";
    for (const auto& s : r.trajectory)
        traj += f6(s.t) + "," + f6(s.x) + "," + f6(s.y) + "," + f6(s.z) + "\n";
    detail::write_atomic(fs::path(dir) / "trajectory.csv", traj);

    std::string vel = "t,vx_ref,vx,vy_ref,vy,vz_ref,vz\n";
    for (const auto& s : r.velocity)
        vel += f6(s.t) + "," + f6(s.vx_ref) + "," + f6(s.vx) + "," + f6(s.vy_ref) + "," +
               f6(s.vy) + "," + f6(s.vz_ref) + "," + f6(s.vz) + "\n";
    detail::write_atomic(fs::path(dir) / "velocity.csv", vel);

    std::string yaw = "t,wz_ref,wz\n";
    for (const auto& s : r.yawrate)
        yaw += f6(s.t) + "," + f6(s.wz_ref) + "," + f6(s.wz) + "\n";
    detail::write_atomic(fs::path(dir) / "yawrate.csv", yaw);

    std::string cmds = "t,seq,direction,white_fraction\n";
    for (const auto& s : r.commands)
        cmds += f6(s.t) + "," + std::to_string(s.seq) + "," + to_string(s.direction) + "," +
                f6(s.white_fraction) + "\n";
    detail::write_atomic(fs::path(dir) / "commands.csv", cmds);

    detail::write_atomic(fs::path(dir) / "summary.txt", format_summary(r));

    if (!r.frame_log.empty()) {
        std::string bytes(reinterpret_cast<const char*>(r.frame_log.data()), r.frame_log.size());
        detail::write_atomic(fs::path(dir) / "frames.bin", bytes);
    }
}

namespace detail {

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::string& expect_header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != expect_header)
        throw std::runtime_error(path.string() + ": unexpected header");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace detail

// Rebuild a report from an exported directory (summary + CSV logs).
inline MissionReport load_report(const std::string& dir) {
    namespace fs = std::filesystem;
    MissionReport r;
    ConfigDoc summary = parse_config("[s]\n" + [&] {
        std::ifstream in(fs::path(dir) / "summary.txt");
        if (!in) throw std::runtime_error("cannot open summary.txt in " + dir);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }());
    SectionReader s{*summary.first("s")};
    std::string outcome = s.require("outcome");
    if (outcome == "Done") r.outcome = RunOutcome::Done;
    else if (outcome == "Failed") r.outcome = RunOutcome::Failed;
    else if (outcome == "Collision") r.outcome = RunOutcome::Collision;
    else r.outcome = RunOutcome::Timeout;
    r.fail_reason = s.str("fail_reason") == "TargetLost" ? FailReason::TargetLost : FailReason::None;
    r.gates_passed = static_cast<int>(s.integer("gates_passed", 0));
    r.tags_tracked = static_cast<int>(s.integer("tags_tracked", 0));
    std::string clearance = s.str("min_obstacle_clearance", "inf");
    r.min_obstacle_clearance = clearance == "inf" ? std::numeric_limits<double>::infinity()
                                                  : parse_double(clearance, "clearance");
    r.mission_time = s.num("mission_time", 0);
    r.seed = static_cast<uint64_t>(s.integer("seed", 0));
    r.scenario_name = s.str("scenario");

    for (const auto& c : detail::read_csv(fs::path(dir) / "trajectory.csv", "t,x,y,z"))
        r.trajectory.push_back({parse_double(c[0], "t"), parse_double(c[1], "x"),
                                parse_double(c[2], "y"), parse_double(c[3], "z")});
    for (const auto& c :
         detail::read_csv(fs::path(dir) / "velocity.csv", "t,vx_ref,vx,vy_ref,vy,vz_ref,vz"))
        r.velocity.push_back({parse_double(c[0], "t"), parse_double(c[1], "v"),
                              parse_double(c[2], "v"), parse_double(c[3], "v"),
                              parse_double(c[4], "v"), parse_double(c[5], "v"),
                              parse_double(c[6], "v")});
    for (const auto& c : detail::read_csv(fs::path(dir) / "yawrate.csv", "t,wz_ref,wz"))
        r.yawrate.push_back(
            {parse_double(c[0], "t"), parse_double(c[1], "wz_ref"), parse_double(c[2], "wz")});
    for (const auto& c :
         detail::read_csv(fs::path(dir) / "commands.csv", "t,seq,direction,white_fraction")) {
        AvoidDirection dir = c[2] == "LEFT" ? AvoidDirection::Left
                           : c[2] == "RIGHT" ? AvoidDirection::Right
                                             : AvoidDirection::Center;
        r.commands.push_back({parse_double(c[0], "t"),
                              static_cast<uint32_t>(parse_long(c[1], "seq")), dir,
                              parse_double(c[3], "fraction")});
    }

    std::ifstream frames(fs::path(dir) / "frames.bin", std::ios::binary);
    if (frames) {
        std::ostringstream ss;
        ss << frames.rdbuf();
        std::string bytes = ss.str();
        r.frame_log.assign(bytes.begin(), bytes.end());
    }
    return r;
}

// Re-run the perception decision over a recorded frame stream.
struct ReplayDecision {
    double t = 0;
    uint32_t seq = 0;
    AvoidCommandMsg command;
};

inline std::vector<ReplayDecision> replay_frames(std::span<const uint8_t> stream,
                                                 const PerceptParams& params) {
    PerceptionPipeline pipeline(params);
    std::vector<ReplayDecision> out;
    size_t off = 0;
    while (off < stream.size()) {
        auto dec = decode_frame(stream.subspan(off));
        if (!dec.ok()) {
            if (dec.error == FrameDecodeError::Truncated) break;
            throw std::runtime_error("replay: corrupt frame stream");
        }
        const FrameMessage& f = dec->message;
        ReplayDecision d;
        d.t = static_cast<double>(f.timestamp_us) * 1e-6;
        d.seq = f.seq;
        d.command = pipeline.process(depth_from_frame(f), f.seq);
        out.push_back(std::move(d));
        off += dec->consumed;
    }
    return out;
}

}  // namespace servosim
