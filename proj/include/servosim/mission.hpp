#pragma once

// Mission switching law: an explicit state machine that sequences takeoff,
// target tracking, gate crossing, target search, and locked avoidance
// maneuvers across the tag sequence.

#include <cmath>
#include <optional>
#include <string>

#include "servosim/percept.hpp"
#include "servosim/servo.hpp"
#include "servosim/world.hpp"

namespace servosim {

enum class MissionPhase { Takeoff, Track, CrossGate, Search, AvoidLocked, Done, Failed };

enum class GateLeg { Up, Forward, Down };

enum class FailReason { None, TargetLost };

enum class ManeuverKind { RightTurnForward, LeftTurnForward, HoldForward };

enum class CmdSource { Servo, Gate, Search, Avoid, Hold };

inline const char* to_string(MissionPhase p) {
    switch (p) {
        case MissionPhase::Takeoff: return "Takeoff";
        case MissionPhase::Track: return "Track";
        case MissionPhase::CrossGate: return "CrossGate";
        case MissionPhase::Search: return "Search";
        case MissionPhase::AvoidLocked: return "AvoidLocked";
        case MissionPhase::Done: return "Done";
        default: return "Failed";
    }
}

inline const char* to_string(FailReason r) {
    return r == FailReason::TargetLost ? "TargetLost" : "-";
}

struct AvoidManeuver {
    ManeuverKind kind = ManeuverKind::HoldForward;
    double duration = 2.5;       // s
    double yaw_rate = 0.5;       // rad/s during the turn segment
    double forward_speed = 0.4;  // m/s during the forward segment
    double turn_fraction = 0.4;  // leading share of the duration spent turning
};

struct ManeuverCmd {
    VelocityCommand velocity;  // body frame
    CmdSource source = CmdSource::Hold;
};

struct MissionParams {
    double eps_track = 0.10;      // feature-error norm threshold
    int hold_frames = 10;         // consecutive frames below eps_track
    double t_lost = 1.0;          // s without the tag before searching
    double search_yaw_rate = 0.5; // rad/s
    double search_vz = 0.3;       // m/s for up/down hints
    double search_timeout = 5.0;  // s beyond one full sweep
    double climb_rate = 0.5;      // m/s, takeoff and gate legs
    double gate_speed = 0.5;      // m/s, forward leg
    double z_star = 1.2;          // tracking standoff; dead-reckons the forward leg
    double area_min = 0.05;       // minimum white fraction to engage avoidance
    AvoidManeuver avoid;          // template for triggered maneuvers
};

struct MissionState {
    MissionPhase phase = MissionPhase::Takeoff;
    int target = 0;  // index into scene.tags
    GateLeg gate_leg = GateLeg::Up;
    double leg_remaining = 0;      // m left in the current open-loop leg
    double leg_direction = 1.0;    // +1 up / -1 down for vertical legs
    int consec_hits = 0;
    double lost_elapsed = 0;       // s since the tag was last seen (Track)
    double search_elapsed = 0;     // s in the current search
    double search_yaw_accum = 0;   // rad swept in the current search
    AvoidManeuver maneuver;
    double avoid_elapsed = 0;
    uint32_t avoid_seq_floor = 0;  // newest message seq consumed or discarded by a lock
    FailReason fail_reason = FailReason::None;
    int gates_passed = 0;
    int tags_tracked = 0;
};

// Feature observation of the current target plus its servo error norm.
struct TrackObservation {
    FeatureVec features;
    double error_norm = 0;
};

struct SearchCmd {
    VelocityCommand velocity;
    bool full_sweep = false;  // unknown hint: one full rotation before giving up
};

inline SearchCmd search_command(SearchHint hint, const MissionParams& p) {
    SearchCmd cmd;
    cmd.velocity.frame = CommandFrame::Body;
    switch (hint) {
        case SearchHint::Left: cmd.velocity.wz = p.search_yaw_rate; break;
        case SearchHint::Right: cmd.velocity.wz = -p.search_yaw_rate; break;
        case SearchHint::Up: cmd.velocity.vz = p.search_vz; break;
        case SearchHint::Down: cmd.velocity.vz = -p.search_vz; break;
        case SearchHint::Unknown:
            cmd.velocity.wz = p.search_yaw_rate;
            cmd.full_sweep = true;
            break;
    }
    return cmd;
}

inline MissionState make_initial_state(const WorldScene& scene, const MissionParams& p) {
    MissionState st;
    st.phase = MissionPhase::Takeoff;
    st.leg_remaining = std::max(0.0, scene.cruise_altitude - scene.start_position.z);
    st.leg_direction = 1.0;
    (void)p;
    return st;
}

namespace detail {

inline void enter_track(MissionState& st, int k) {
    st.phase = MissionPhase::Track;
    st.target = k;
    st.consec_hits = 0;
    st.lost_elapsed = 0;
}

inline void enter_search(MissionState& st, int k) {
    st.phase = MissionPhase::Search;
    st.target = k;
    st.search_elapsed = 0;
    st.search_yaw_accum = 0;
}

inline void enter_cross_gate(MissionState& st, const GateSpec& gate, const TagSpec& tag,
                             const MissionParams& p) {
    st.phase = MissionPhase::CrossGate;
    st.gate_leg = GateLeg::Up;
    // Converged tracking leaves the camera axis on the tag center, so the
    // vertical leg is the tag-to-gate offset.
    double dz = gate.center.z - tag.center.z;
    st.leg_remaining = std::abs(dz);
    st.leg_direction = dz >= 0 ? 1.0 : -1.0;
    (void)p;
}

// Tracking converged on tag k: cross its gate, or finish, or move on.
inline void advance_from_converged(MissionState& st, const WorldScene& scene,
                                   const MissionParams& p) {
    st.tags_tracked += 1;
    const TagSpec& tag = scene.tags[st.target];
    if (const GateSpec* gate = scene.gate_for_tag(tag.id)) {
        enter_cross_gate(st, *gate, tag, p);
    } else if (st.target + 1 < static_cast<int>(scene.tags.size())) {
        enter_search(st, st.target + 1);
    } else {
        st.phase = MissionPhase::Done;
    }
}

inline ManeuverKind maneuver_for(AvoidDirection dir) {
    // Obstacle on the left -> turn right; obstacle on the right -> turn left.
    return dir == AvoidDirection::Left ? ManeuverKind::RightTurnForward
                                       : ManeuverKind::LeftTurnForward;
}

inline VelocityCommand maneuver_velocity(const AvoidManeuver& m, double elapsed) {
    VelocityCommand v;
    v.frame = CommandFrame::Body;
    double turn_time = m.turn_fraction * m.duration;
    if (elapsed < turn_time) {
        switch (m.kind) {
            case ManeuverKind::RightTurnForward: v.wz = -m.yaw_rate; break;
            case ManeuverKind::LeftTurnForward: v.wz = m.yaw_rate; break;
            case ManeuverKind::HoldForward: break;
        }
    } else {
        v.vx = m.forward_speed;
    }
    return v;
}

}  // namespace detail

// One step of the switching law. Exactly one command is emitted; the command
// always reflects the post-transition phase.
inline std::pair<MissionState, ManeuverCmd> step_mission(
    MissionState st, const std::optional<TrackObservation>& obs,
    const std::optional<VelocityCommand>& servo_cmd, const std::optional<AvoidCommandMsg>& avoid,
    const WorldScene& scene, const MissionParams& p, double dt) {
    if (dt <= 0) throw std::invalid_argument("step_mission: dt must be > 0");
    const int last = static_cast<int>(scene.tags.size()) - 1;

    switch (st.phase) {
        case MissionPhase::Takeoff: {
            st.leg_remaining -= p.climb_rate * dt;
            if (st.leg_remaining <= 0) {
                if (obs) detail::enter_track(st, 0);
                else detail::enter_search(st, 0);
            }
            break;
        }
        case MissionPhase::Track: {
            if (avoid && avoid->direction != AvoidDirection::Center &&
                avoid->white_fraction >= p.area_min && avoid->seq > st.avoid_seq_floor) {
                st.phase = MissionPhase::AvoidLocked;
                st.maneuver = p.avoid;
                st.maneuver.kind = detail::maneuver_for(avoid->direction);
                st.avoid_elapsed = 0;
                st.avoid_seq_floor = avoid->seq;
                break;
            }
            if (obs) {
                st.lost_elapsed = 0;
                if (obs->error_norm < p.eps_track) {
                    st.consec_hits += 1;
                    if (st.consec_hits >= p.hold_frames) {
                        detail::advance_from_converged(st, scene, p);
                        break;
                    }
                } else {
                    st.consec_hits = 0;
                }
            } else {
                st.consec_hits = 0;
                st.lost_elapsed += dt;
                if (st.lost_elapsed >= p.t_lost) detail::enter_search(st, st.target);
            }
            break;
        }
        case MissionPhase::CrossGate: {
            // Avoid messages are ignored here: the gate corridor is assumed
            // obstacle-free and the legs are open-loop.
            double speed = st.gate_leg == GateLeg::Forward ? p.gate_speed : p.climb_rate;
            st.leg_remaining -= speed * dt;
            if (st.leg_remaining <= 0) {
                const TagSpec& tag = scene.tags[st.target];
                const GateSpec* gate = scene.gate_for_tag(tag.id);
                if (st.gate_leg == GateLeg::Up) {
                    st.gate_leg = GateLeg::Forward;
                    // Standoff to the gate plane plus the clearance beyond it.
                    st.leg_remaining = p.z_star + (gate ? gate->pass_clearance : 1.5);
                } else if (st.gate_leg == GateLeg::Forward) {
                    st.gate_leg = GateLeg::Down;
                    double dz = (gate ? gate->center.z : scene.cruise_altitude) - scene.cruise_altitude;
                    st.leg_remaining = std::abs(dz);
                    st.leg_direction = dz >= 0 ? -1.0 : 1.0;  // head back to cruise
                } else {
                    st.gates_passed += 1;
                    if (st.target + 1 <= last) detail::enter_search(st, st.target + 1);
                    else st.phase = MissionPhase::Done;
                }
            }
            break;
        }
        case MissionPhase::Search: {
            if (obs) {
                detail::enter_track(st, st.target);
                break;
            }
            st.search_elapsed += dt;
            SearchCmd sc = search_command(scene.tags[st.target].search_hint, p);
            st.search_yaw_accum += std::abs(sc.velocity.wz) * dt;
            if (st.search_elapsed >= 2.0 * kPi / p.search_yaw_rate + p.search_timeout) {
                st.phase = MissionPhase::Failed;
                st.fail_reason = FailReason::TargetLost;
            }
            break;
        }
        case MissionPhase::AvoidLocked: {
            // LOCK: the maneuver runs to completion; messages arriving in the
            // meantime are discarded, not queued for the unlock.
            if (avoid && avoid->seq > st.avoid_seq_floor) st.avoid_seq_floor = avoid->seq;
            st.avoid_elapsed += dt;
            if (st.avoid_elapsed >= st.maneuver.duration) detail::enter_track(st, st.target);
            break;
        }
        case MissionPhase::Done:
        case MissionPhase::Failed:
            break;
    }

    // Emit the command of the (possibly new) phase.
    ManeuverCmd out;
    switch (st.phase) {
        case MissionPhase::Takeoff:
            out.velocity = {0, 0, p.climb_rate, 0, CommandFrame::Body};
            out.source = CmdSource::Gate;
            break;
        case MissionPhase::Track:
            if (servo_cmd) {
                out.velocity = *servo_cmd;
                out.source = CmdSource::Servo;
            } else {
                out.velocity = {0, 0, 0, 0, CommandFrame::Body};
                out.source = CmdSource::Hold;
            }
            break;
        case MissionPhase::CrossGate:
            out.source = CmdSource::Gate;
            out.velocity.frame = CommandFrame::Body;
            if (st.gate_leg == GateLeg::Forward) out.velocity.vx = p.gate_speed;
            else out.velocity.vz = st.leg_direction * p.climb_rate;
            break;
        case MissionPhase::Search:
            out.velocity = search_command(scene.tags[st.target].search_hint, p).velocity;
            out.source = CmdSource::Search;
            break;
        case MissionPhase::AvoidLocked:
            out.velocity = detail::maneuver_velocity(st.maneuver, st.avoid_elapsed);
            out.source = CmdSource::Avoid;
            break;
        case MissionPhase::Done:
        case MissionPhase::Failed:
            out.velocity = {0, 0, 0, 0, CommandFrame::Body};
            out.source = CmdSource::Hold;
            break;
    }
    return {st, out};
}

}  // namespace servosim
