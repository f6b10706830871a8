#include <catch_amalgamated.hpp>

#include <cmath>

#include "servosim/mission.hpp"
#include "servosim/rng.hpp"
#include "support.hpp"

using namespace servosim;

namespace {

WorldScene two_tag_scene() {
    WorldScene s;
    s.bounds = {{-1, -4, 0}, {10, 4, 4}};
    s.cruise_altitude = 1.0;
    TagSpec t0;
    t0.id = 0;
    t0.center = {2.6, 0, 1.0};
    t0.normal = {-1, 0, 0};
    t0.search_hint = SearchHint::Unknown;
    TagSpec t1 = t0;
    t1.id = 1;
    t1.center = {6.5, 0, 1.0};
    t1.search_hint = SearchHint::Left;
    s.tags = {t0, t1};
    GateSpec g;
    g.tag_id = 0;
    g.center = {2.6, 0, 1.5};
    g.width = 1.2;
    g.height = 1.0;
    g.pass_clearance = 1.0;
    s.gates = {g};
    return s;
}

MissionParams params() { return MissionParams{}; }

TrackObservation good_obs(double err = 0.05) {
    TrackObservation o;
    o.features = {0, 0, 1.2, 1.57, true};
    o.error_norm = err;
    return o;
}

VelocityCommand servo_cmd() { return {0.1, 0, 0, 0, CommandFrame::Body}; }

AvoidCommandMsg avoid_msg(AvoidDirection dir, double fraction = 0.12, uint32_t seq = 1) {
    return {dir, fraction, seq};
}

MissionState tracking_state(int k = 0) {
    MissionState st;
    st.phase = MissionPhase::Track;
    st.target = k;
    return st;
}

}  // namespace

TEST_CASE("search commands follow the hint", "[mission]") {
    MissionParams p = params();
    SearchCmd left = search_command(SearchHint::Left, p);
    CHECK(left.velocity.wz == Catch::Approx(0.5));
    CHECK(left.velocity.vx == 0.0);
    CHECK(left.velocity.vz == 0.0);
    CHECK_FALSE(left.full_sweep);

    SearchCmd right = search_command(SearchHint::Right, p);
    CHECK(right.velocity.wz == Catch::Approx(-0.5));

    SearchCmd down = search_command(SearchHint::Down, p);
    CHECK(down.velocity.vz == Catch::Approx(-0.3));
    CHECK(down.velocity.wz == 0.0);

    SearchCmd up = search_command(SearchHint::Up, p);
    CHECK(up.velocity.vz == Catch::Approx(0.3));

    SearchCmd unknown = search_command(SearchHint::Unknown, p);
    CHECK(unknown.velocity.wz == Catch::Approx(0.5));
    CHECK(unknown.full_sweep);
}

TEST_CASE("takeoff climbs then hands over to track or search", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    MissionState st = make_initial_state(scene, p);
    CHECK(st.phase == MissionPhase::Takeoff);

    auto [mid, cmd] = step_mission(st, std::nullopt, std::nullopt, std::nullopt, scene, p, 0.01);
    CHECK(mid.phase == MissionPhase::Takeoff);
    CHECK(cmd.velocity.vz == Catch::Approx(p.climb_rate));
    CHECK(cmd.source == CmdSource::Gate);

    // run the climb out with the tag visible: straight to Track
    MissionState a = st;
    for (int i = 0; i < 250 && a.phase == MissionPhase::Takeoff; ++i)
        a = step_mission(a, good_obs(1.0), servo_cmd(), std::nullopt, scene, p, 0.01).first;
    CHECK(a.phase == MissionPhase::Track);
    CHECK(a.target == 0);

    // without the tag: Search
    MissionState b = st;
    for (int i = 0; i < 250 && b.phase == MissionPhase::Takeoff; ++i)
        b = step_mission(b, std::nullopt, std::nullopt, std::nullopt, scene, p, 0.01).first;
    CHECK(b.phase == MissionPhase::Search);
}

TEST_CASE("track converges after the configured consecutive hits", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    MissionState st = tracking_state(0);
    for (int frame = 1; frame <= 9; ++frame) {
        auto [next, cmd] = step_mission(st, good_obs(0.05), servo_cmd(), std::nullopt, scene, p, 0.01);
        st = next;
        CHECK(st.phase == MissionPhase::Track);
        CHECK(st.consec_hits == frame);
        CHECK(cmd.source == CmdSource::Servo);
    }
    auto [converged, cmd] = step_mission(st, good_obs(0.05), servo_cmd(), std::nullopt, scene, p, 0.01);
    CHECK(converged.phase == MissionPhase::CrossGate);  // 10th consecutive frame
    CHECK(converged.gate_leg == GateLeg::Up);
    CHECK(converged.tags_tracked == 1);
    CHECK(cmd.source == CmdSource::Gate);

    // an error spike resets the counter
    MissionState reset = tracking_state(0);
    reset.consec_hits = 9;
    auto [after, _] = step_mission(reset, good_obs(0.5), servo_cmd(), std::nullopt, scene, p, 0.01);
    CHECK(after.consec_hits == 0);
    CHECK(after.phase == MissionPhase::Track);
}

TEST_CASE("boundary: error exactly at the threshold does not count as a hit", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    auto [st, _] =
        step_mission(tracking_state(0), good_obs(p.eps_track), servo_cmd(), std::nullopt, scene, p, 0.01);
    CHECK(st.consec_hits == 0);
}

TEST_CASE("left obstacle message locks a right-turn maneuver", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    auto [st, cmd] = step_mission(tracking_state(1), good_obs(1.0), servo_cmd(),
                                  avoid_msg(AvoidDirection::Left), scene, p, 0.01);
    CHECK(st.phase == MissionPhase::AvoidLocked);
    CHECK(st.maneuver.kind == ManeuverKind::RightTurnForward);
    CHECK(cmd.source == CmdSource::Avoid);
    CHECK(cmd.velocity.wz == Catch::Approx(-p.avoid.yaw_rate));  // turn segment first

    auto [st2, _] = step_mission(tracking_state(1), good_obs(1.0), servo_cmd(),
                                 avoid_msg(AvoidDirection::Right), scene, p, 0.01);
    CHECK(st2.maneuver.kind == ManeuverKind::LeftTurnForward);
}

TEST_CASE("center or insufficient-area messages do not interrupt tracking", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    auto [a, _x] = step_mission(tracking_state(1), good_obs(1.0), servo_cmd(),
                                avoid_msg(AvoidDirection::Center, 0.5), scene, p, 0.01);
    CHECK(a.phase == MissionPhase::Track);
    auto [b, _y] = step_mission(tracking_state(1), good_obs(1.0), servo_cmd(),
                                avoid_msg(AvoidDirection::Left, 0.01), scene, p, 0.01);
    CHECK(b.phase == MissionPhase::Track);  // below area_min
}

TEST_CASE("lock holds against new messages and expires to track", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    MissionState st;
    st.phase = MissionPhase::AvoidLocked;
    st.target = 1;
    st.maneuver = p.avoid;
    st.maneuver.kind = ManeuverKind::RightTurnForward;
    st.avoid_elapsed = 1.0;

    auto [after, cmd] = step_mission(st, std::nullopt, std::nullopt,
                                     avoid_msg(AvoidDirection::Right), scene, p, 0.01);
    CHECK(after.phase == MissionPhase::AvoidLocked);
    CHECK(after.maneuver.kind == ManeuverKind::RightTurnForward);  // unchanged
    CHECK(after.avoid_elapsed == Catch::Approx(1.01));
    CHECK(cmd.source == CmdSource::Avoid);

    // the 40%/60% split: turning early, forward later
    CHECK(detail::maneuver_velocity(st.maneuver, 0.5).wz == Catch::Approx(-p.avoid.yaw_rate));
    CHECK(detail::maneuver_velocity(st.maneuver, 0.5).vx == 0.0);
    CHECK(detail::maneuver_velocity(st.maneuver, 1.5).vx == Catch::Approx(p.avoid.forward_speed));
    CHECK(detail::maneuver_velocity(st.maneuver, 1.5).wz == 0.0);

    st.avoid_elapsed = p.avoid.duration - 0.005;
    auto [unlocked, _] = step_mission(st, std::nullopt, std::nullopt,
                                      avoid_msg(AvoidDirection::Left), scene, p, 0.01);
    CHECK(unlocked.phase == MissionPhase::Track);  // UNLOCK
    CHECK(unlocked.target == 1);
}

TEST_CASE("lock property: fuzzed message streams never change the maneuver", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    Rng rng(404);
    for (int trace = 0; trace < 300; ++trace) {
        MissionState st;
        st.phase = MissionPhase::AvoidLocked;
        st.target = 1;
        st.maneuver = p.avoid;
        st.maneuver.kind =
            rng.uniform() < 0.5 ? ManeuverKind::RightTurnForward : ManeuverKind::LeftTurnForward;
        ManeuverKind locked = st.maneuver.kind;
        while (st.phase == MissionPhase::AvoidLocked) {
            std::optional<AvoidCommandMsg> msg;
            if (rng.uniform() < 0.8)
                msg = avoid_msg(rng.uniform() < 0.5 ? AvoidDirection::Left : AvoidDirection::Right,
                                rng.uniform(0, 1));
            auto [next, cmd] = step_mission(st, std::nullopt, std::nullopt, msg, scene, p, 0.05);
            if (next.phase == MissionPhase::AvoidLocked) {
                REQUIRE(next.maneuver.kind == locked);
                REQUIRE(cmd.source == CmdSource::Avoid);
            }
            st = next;
        }
        CHECK(st.phase == MissionPhase::Track);
    }
}

TEST_CASE("gate crossing runs up, forward, down, then searches the next tag", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    MissionState st = tracking_state(0);
    st.consec_hits = p.hold_frames - 1;
    st = step_mission(st, good_obs(0.05), servo_cmd(), std::nullopt, scene, p, 0.01).first;
    REQUIRE(st.phase == MissionPhase::CrossGate);

    double up_time = 0, fwd_time = 0, down_time = 0;
    const double dt = 0.01;
    int guard = 0;
    while (st.phase == MissionPhase::CrossGate && guard++ < 5000) {
        auto [next, cmd] = step_mission(st, std::nullopt, std::nullopt, std::nullopt, scene, p, dt);
        if (st.gate_leg == GateLeg::Up) {
            CHECK(cmd.velocity.vz >= 0.0);
            up_time += dt;
        } else if (st.gate_leg == GateLeg::Forward) {
            fwd_time += dt;
            if (next.gate_leg == GateLeg::Forward) CHECK(cmd.velocity.vx == Catch::Approx(p.gate_speed));
        } else {
            down_time += dt;
        }
        st = next;
    }
    CHECK(st.phase == MissionPhase::Search);
    CHECK(st.target == 1);
    CHECK(st.gates_passed == 1);
    // 0.5 m vertical legs at 0.5 m/s; 2.2 m forward at 0.5 m/s
    CHECK(up_time == Catch::Approx(1.0).margin(0.05));
    CHECK(fwd_time == Catch::Approx((p.z_star + 1.0) / p.gate_speed).margin(0.05));
    CHECK(down_time == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("converging on the last tag without a gate completes the mission", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    MissionState st = tracking_state(1);
    st.consec_hits = p.hold_frames - 1;
    auto [done, cmd] = step_mission(st, good_obs(0.05), servo_cmd(), std::nullopt, scene, p, 0.01);
    CHECK(done.phase == MissionPhase::Done);
    CHECK(done.tags_tracked == 1);
    CHECK(cmd.source == CmdSource::Hold);
    CHECK(cmd.velocity.vx == 0.0);
}

TEST_CASE("losing the target long enough triggers a search", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    MissionState st = tracking_state(1);
    int steps = 0;
    while (st.phase == MissionPhase::Track && steps++ < 200) {
        auto [next, cmd] = step_mission(st, std::nullopt, std::nullopt, std::nullopt, scene, p, 0.01);
        if (next.phase == MissionPhase::Track) CHECK(cmd.source == CmdSource::Hold);
        st = next;
    }
    CHECK(st.phase == MissionPhase::Search);
    CHECK(steps == Catch::Approx(int(p.t_lost / 0.01)).margin(2));

    // a single dropped frame does not flap into search
    MissionState quick = tracking_state(1);
    quick = step_mission(quick, std::nullopt, std::nullopt, std::nullopt, scene, p, 0.01).first;
    CHECK(quick.phase == MissionPhase::Track);
    quick = step_mission(quick, good_obs(1.0), servo_cmd(), std::nullopt, scene, p, 0.01).first;
    CHECK(quick.lost_elapsed == 0.0);
}

TEST_CASE("search finds the tag or times out after a sweep plus margin", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    MissionState st;
    st.phase = MissionPhase::Search;
    st.target = 1;

    // detection exits to track
    auto [tracked, _] = step_mission(st, good_obs(1.0), servo_cmd(), std::nullopt, scene, p, 0.01);
    CHECK(tracked.phase == MissionPhase::Track);

    // no detection: must exit within 2*pi/rate + timeout
    double bound = 2 * kPi / p.search_yaw_rate + p.search_timeout;
    double t = 0;
    while (st.phase == MissionPhase::Search) {
        auto [next, cmd] = step_mission(st, std::nullopt, std::nullopt, std::nullopt, scene, p, 0.05);
        if (next.phase == MissionPhase::Search) {
            CHECK(cmd.source == CmdSource::Search);
            CHECK(cmd.velocity.wz == Catch::Approx(p.search_yaw_rate));  // hint Left
        }
        st = next;
        t += 0.05;
        REQUIRE(t < bound + 1.0);
    }
    CHECK(st.phase == MissionPhase::Failed);
    CHECK(st.fail_reason == FailReason::TargetLost);
    CHECK(t >= bound - 0.1);
}

TEST_CASE("terminal states emit zero-velocity hold commands", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    for (MissionPhase phase : {MissionPhase::Done, MissionPhase::Failed}) {
        MissionState st;
        st.phase = phase;
        auto [next, cmd] = step_mission(st, good_obs(0.01), servo_cmd(),
                                        avoid_msg(AvoidDirection::Left), scene, p, 0.01);
        CHECK(next.phase == phase);
        CHECK(cmd.source == CmdSource::Hold);
        CHECK(cmd.velocity.vx == 0.0);
        CHECK(cmd.velocity.wz == 0.0);
    }
}

// Exhaustive (phase x input-class) enumeration against an independent
// transition oracle transcribing the switching rules.
TEST_CASE("transition graph contains only the documented edges", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();

    enum class ObsClass { None, Far, ConvergedHit };
    enum class AvoidClass { None, Center, Left, Right, LeftSmall };

    auto make_obs = [&](ObsClass c) -> std::optional<TrackObservation> {
        switch (c) {
            case ObsClass::None: return std::nullopt;
            case ObsClass::Far: return good_obs(1.0);
            default: return good_obs(0.05);
        }
    };
    auto make_avoid = [&](AvoidClass c) -> std::optional<AvoidCommandMsg> {
        switch (c) {
            case AvoidClass::None: return std::nullopt;
            case AvoidClass::Center: return avoid_msg(AvoidDirection::Center, 0.3);
            case AvoidClass::Left: return avoid_msg(AvoidDirection::Left, 0.3);
            case AvoidClass::Right: return avoid_msg(AvoidDirection::Right, 0.3);
            default: return avoid_msg(AvoidDirection::Left, 0.01);
        }
    };

    // independent oracle for the next phase
    auto oracle = [&](const MissionState& st, ObsClass oc, AvoidClass ac) -> MissionPhase {
        bool obs = oc != ObsClass::None;
        bool engern = ac == AvoidClass::Left || ac == AvoidClass::Right;
        switch (st.phase) {
            case MissionPhase::Takeoff:
                if (st.leg_remaining > p.climb_rate * 0.01)
                    return MissionPhase::Takeoff;
                return obs ? MissionPhase::Track : MissionPhase::Search;
            case MissionPhase::Track:
                if (engern) return MissionPhase::AvoidLocked;
                if (oc == ObsClass::ConvergedHit && st.consec_hits + 1 >= p.hold_frames) {
                    const TagSpec& tag = scene.tags[st.target];
                    if (scene.gate_for_tag(tag.id)) return MissionPhase::CrossGate;
                    return st.target + 1 < (int)scene.tags.size() ? MissionPhase::Search
                                                                  : MissionPhase::Done;
                }
                if (!obs && st.lost_elapsed + 0.01 >= p.t_lost) return MissionPhase::Search;
                return MissionPhase::Track;
            case MissionPhase::CrossGate:
                return MissionPhase::CrossGate;  // legs far from finished in this setup
            case MissionPhase::Search:
                if (obs) return MissionPhase::Track;
                if (st.search_elapsed + 0.01 >= 2 * kPi / p.search_yaw_rate + p.search_timeout)
                    return MissionPhase::Failed;
                return MissionPhase::Search;
            case MissionPhase::AvoidLocked:
                if (st.avoid_elapsed + 0.01 >= st.maneuver.duration) return MissionPhase::Track;
                return MissionPhase::AvoidLocked;
            default:
                return st.phase;
        }
    };

    std::vector<MissionState> bases;
    {
        MissionState t = make_initial_state(scene, p);
        bases.push_back(t);  // takeoff, mid-climb
        MissionState t2 = t;
        t2.leg_remaining = 0.001;
        bases.push_back(t2);  // takeoff, finishing
        bases.push_back(tracking_state(0));
        bases.push_back(tracking_state(1));
        MissionState almost = tracking_state(0);
        almost.consec_hits = p.hold_frames - 1;
        bases.push_back(almost);
        MissionState almost1 = tracking_state(1);
        almost1.consec_hits = p.hold_frames - 1;
        bases.push_back(almost1);
        MissionState lost = tracking_state(1);
        lost.lost_elapsed = p.t_lost - 0.005;
        bases.push_back(lost);
        MissionState cg = tracking_state(0);
        cg.phase = MissionPhase::CrossGate;
        cg.gate_leg = GateLeg::Up;
        cg.leg_remaining = 0.4;
        bases.push_back(cg);
        MissionState se;
        se.phase = MissionPhase::Search;
        se.target = 1;
        bases.push_back(se);
        MissionState se2 = se;
        se2.search_elapsed = 2 * kPi / p.search_yaw_rate + p.search_timeout - 0.005;
        bases.push_back(se2);
        MissionState av;
        av.phase = MissionPhase::AvoidLocked;
        av.target = 1;
        av.maneuver = p.avoid;
        av.maneuver.kind = ManeuverKind::RightTurnForward;
        bases.push_back(av);
        MissionState av2 = av;
        av2.avoid_elapsed = av.maneuver.duration - 0.005;
        bases.push_back(av2);
        MissionState done;
        done.phase = MissionPhase::Done;
        bases.push_back(done);
        MissionState failed;
        failed.phase = MissionPhase::Failed;
        bases.push_back(failed);
    }

    for (const MissionState& base : bases)
        for (ObsClass oc : {ObsClass::None, ObsClass::Far, ObsClass::ConvergedHit})
            for (AvoidClass ac : {AvoidClass::None, AvoidClass::Center, AvoidClass::Left,
                                  AvoidClass::Right, AvoidClass::LeftSmall}) {
                auto obs = make_obs(oc);
                auto servo = obs ? std::optional(servo_cmd()) : std::nullopt;
                auto [next, cmd] =
                    step_mission(base, obs, servo, make_avoid(ac), scene, p, 0.01);
                INFO("phase " << to_string(base.phase) << " obs " << (int)oc << " avoid "
                              << (int)ac);
                REQUIRE(next.phase == oracle(base, oc, ac));
                REQUIRE(next.target >= base.target);  // progress
            }
}

TEST_CASE("target index is non-decreasing across random traces", "[mission]") {
    WorldScene scene = two_tag_scene();
    MissionParams p = params();
    Rng rng(2121);
    for (int trace = 0; trace < 50; ++trace) {
        MissionState st = make_initial_state(scene, p);
        int prev_k = st.target;
        for (int step = 0; step < 2000; ++step) {
            std::optional<TrackObservation> obs;
            if (rng.uniform() < 0.6) obs = good_obs(rng.uniform() < 0.3 ? 0.05 : 0.5);
            std::optional<AvoidCommandMsg> avoid;
            if (rng.uniform() < 0.2)
                avoid = avoid_msg(rng.uniform() < 0.5 ? AvoidDirection::Left : AvoidDirection::Right,
                                  rng.uniform(0, 0.4));
            auto servo = obs ? std::optional(servo_cmd()) : std::nullopt;
            st = step_mission(st, obs, servo, avoid, scene, p, 0.05).first;
            REQUIRE(st.target >= prev_k);
            prev_k = st.target;
            if (st.phase == MissionPhase::Done) {
                REQUIRE(st.target == (int)scene.tags.size() - 1);
                break;
            }
            if (st.phase == MissionPhase::Failed) break;
        }
    }
}

TEST_CASE("non-positive dt is rejected", "[mission]") {
    WorldScene scene = two_tag_scene();
    CHECK_THROWS_AS(
        step_mission(tracking_state(0), std::nullopt, std::nullopt, std::nullopt, scene, params(), 0),
        std::invalid_argument);
}
