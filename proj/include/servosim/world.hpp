#pragma once

// Static scene description: fiducial tags in mission order, the gates
// associated with them, cylindrical obstacles, and arena bounds.

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "servosim/config.hpp"
#include "servosim/geometry.hpp"

namespace servosim {

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SearchHint { Left, Right, Up, Down, Unknown };

inline const char* to_string(SearchHint h) {
    switch (h) {
        case SearchHint::Left: return "left";
        case SearchHint::Right: return "right";
        case SearchHint::Up: return "up";
        case SearchHint::Down: return "down";
        default: return "unknown";
    }
}

inline SearchHint search_hint_from_string(const std::string& s) {
    if (s == "left") return SearchHint::Left;
    if (s == "right") return SearchHint::Right;
    if (s == "up") return SearchHint::Up;
    if (s == "down") return SearchHint::Down;
    if (s == "unknown") return SearchHint::Unknown;
    throw ScenarioError("unknown search_hint: '" + s + "'");
}

struct TagSpec {
    int id = 0;
    Vec3 center;
    Vec3 normal;          // unit, facing direction of the tag front
    double side = 0.16;   // edge length, m
    SearchHint search_hint = SearchHint::Unknown;
};

struct GateSpec {
    int tag_id = 0;
    Vec3 center;
    double width = 1.0;
    double height = 1.0;
    double pass_clearance = 1.5;  // travel beyond the gate plane when crossing
    double bar_radius = 0.04;
};

struct CylinderObstacle {
    Vec3 base_center;
    double radius = 0;
    double height = 0;

    CylinderShape shape() const { return {base_center, radius, height}; }
};

struct Aabb {
    Vec3 min;
    Vec3 max;

    bool contains(const Vec3& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
               p.z <= max.z;
    }
};

struct WorldScene {
    std::vector<TagSpec> tags;  // mission order: tags[0] is the start target
    std::vector<GateSpec> gates;
    std::vector<CylinderObstacle> obstacles;
    double cruise_altitude = 1.0;
    Aabb bounds{{-10, -10, 0}, {10, 10, 5}};
    Vec3 start_position{0, 0, 0};
    double start_yaw = 0.0;

    const GateSpec* gate_for_tag(int tag_id) const {
        for (const auto& g : gates)
            if (g.tag_id == tag_id) return &g;
        return nullptr;
    }

    const TagSpec* tag_by_id(int id) const {
        for (const auto& t : tags)
            if (t.id == id) return &t;
        return nullptr;
    }
};

// In-plane basis of a tag (or of the gate sharing its normal). `horiz` points
// left as seen from the front, `vert` points up.
struct PlaneBasis {
    Vec3 horiz;
    Vec3 vert;
};

inline PlaneBasis plane_basis(const Vec3& normal) {
    Vec3 up{0, 0, 1};
    Vec3 n = normalized(normal);
    if (std::abs(dot(n, up)) > 0.99) up = {1, 0, 0};  // horizontal tag
    Vec3 vert = normalized(up - dot(up, n) * n);
    Vec3 horiz = cross(n, vert);
    return {horiz, vert};
}

// Corner order: counter-clockwise as seen from the front, starting bottom-left.
inline std::array<Vec3, 4> tag_corners(const TagSpec& tag) {
    PlaneBasis b = plane_basis(tag.normal);
    double h = 0.5 * tag.side;
    return {tag.center + h * b.horiz - h * b.vert,
            tag.center - h * b.horiz - h * b.vert,
            tag.center - h * b.horiz + h * b.vert,
            tag.center + h * b.horiz + h * b.vert};
}

// Gate frame as four bars lying in the gate plane.
inline std::array<BarShape, 4> gate_bars(const GateSpec& g, const Vec3& normal) {
    PlaneBasis b = plane_basis(normal);
    double hw = 0.5 * g.width, hh = 0.5 * g.height;
    Vec3 bl = g.center - hw * b.horiz - hh * b.vert;
    Vec3 br = g.center + hw * b.horiz - hh * b.vert;
    Vec3 tl = g.center - hw * b.horiz + hh * b.vert;
    Vec3 tr = g.center + hw * b.horiz + hh * b.vert;
    return {BarShape{bl, tl, g.bar_radius}, BarShape{br, tr, g.bar_radius},
            BarShape{bl, br, g.bar_radius}, BarShape{tl, tr, g.bar_radius}};
}

namespace detail {

inline void validate_scene(const WorldScene& scene) {
    if (scene.tags.empty()) throw ScenarioError("scene has no tags");
    for (size_t i = 0; i < scene.tags.size(); ++i) {
        const auto& t = scene.tags[i];
        if (t.side <= 0) throw ScenarioError("tag " + std::to_string(t.id) + ": side must be > 0");
        if (std::abs(norm(t.normal) - 1.0) > 1e-9)
            throw ScenarioError("tag " + std::to_string(t.id) + ": normal must be unit length");
        for (size_t j = i + 1; j < scene.tags.size(); ++j)
            if (scene.tags[j].id == t.id)
                throw ScenarioError("duplicate tag id " + std::to_string(t.id));
        if (!scene.bounds.contains(t.center))
            throw ScenarioError("tag " + std::to_string(t.id) + " outside world bounds");
    }
    for (const auto& g : scene.gates) {
        if (g.width <= 0 || g.height <= 0)
            throw ScenarioError("gate for tag " + std::to_string(g.tag_id) + ": width/height must be > 0");
        if (g.pass_clearance <= 0)
            throw ScenarioError("gate for tag " + std::to_string(g.tag_id) + ": pass_clearance must be > 0");
        if (!scene.tag_by_id(g.tag_id))
            throw ScenarioError("gate references unknown tag_id " + std::to_string(g.tag_id));
        if (!scene.bounds.contains(g.center))
            throw ScenarioError("gate for tag " + std::to_string(g.tag_id) + " outside world bounds");
    }
    for (size_t i = 0; i < scene.obstacles.size(); ++i) {
        const auto& o = scene.obstacles[i];
        if (o.radius <= 0 || o.height <= 0)
            throw ScenarioError("obstacle " + std::to_string(i) + ": radius/height must be > 0");
        if (!scene.bounds.contains(o.base_center))
            throw ScenarioError("obstacle " + std::to_string(i) + " outside world bounds");
    }
    if (scene.cruise_altitude <= 0) throw ScenarioError("cruise_altitude must be > 0");
}

}  // namespace detail

inline WorldScene scene_from_doc(const ConfigDoc& doc) {
    WorldScene scene;
    if (const ConfigSection* w = doc.first("world")) {
        SectionReader r{*w};
        scene.cruise_altitude = r.num("cruise_altitude", 1.0);
        if (r.has("bounds")) {
            auto v = r.numbers("bounds");
            if (v.size() != 6) throw ScenarioError("[world] bounds: expected 6 numbers");
            scene.bounds = {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
        }
        scene.start_position = r.vec3("start", scene.start_position);
        scene.start_yaw = r.num("start_yaw", 0.0);
    }
    for (const ConfigSection* s : doc.all("tag")) {
        SectionReader r{*s};
        TagSpec t;
        t.id = static_cast<int>(r.require_int("id"));
        t.center = r.require_vec3("center");
        t.normal = r.require_vec3("normal");
        t.side = r.num("side", 0.16);
        t.search_hint = search_hint_from_string(r.str("search_hint", "unknown"));
        scene.tags.push_back(t);
    }
    for (const ConfigSection* s : doc.all("gate")) {
        SectionReader r{*s};
        GateSpec g;
        g.tag_id = static_cast<int>(r.require_int("tag_id"));
        g.center = r.require_vec3("center");
        g.width = r.require_num("width");
        g.height = r.require_num("height");
        g.pass_clearance = r.num("pass_clearance", 1.5);
        g.bar_radius = r.num("bar_radius", 0.04);
        scene.gates.push_back(g);
    }
    for (const ConfigSection* s : doc.all("obstacle")) {
        SectionReader r{*s};
        CylinderObstacle o;
        o.base_center = r.require_vec3("base_center");
        o.radius = r.require_num("radius");
        o.height = r.require_num("height");
        scene.obstacles.push_back(o);
    }
    detail::validate_scene(scene);
    return scene;
}

inline WorldScene load_scenario(const std::string& text) { return scene_from_doc(parse_config(text)); }

inline WorldScene load_scenario_file(const std::string& path) {
    return scene_from_doc(load_config_file(path));
}

inline std::string save_scenario(const WorldScene& scene) {
    char buf[256];
    std::string out;
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    auto vec = [&](const Vec3& v) { return num(v.x) + " " + num(v.y) + " " + num(v.z); };
    out += "[world]\n";
    out += "cruise_altitude = " + num(scene.cruise_altitude) + "\n";
    out += "bounds = " + vec(scene.bounds.min) + " " + vec(scene.bounds.max) + "\n";
    out += "start = " + vec(scene.start_position) + "\n";
    out += "start_yaw = " + num(scene.start_yaw) + "\n";
    for (const auto& t : scene.tags) {
        out += "\n[tag]\n";
        out += "id = " + std::to_string(t.id) + "\n";
        out += "center = " + vec(t.center) + "\n";
        out += "normal = " + vec(t.normal) + "\n";
        out += "side = " + num(t.side) + "\n";
        out += "search_hint = " + std::string(to_string(t.search_hint)) + "\n";
    }
    for (const auto& g : scene.gates) {
        out += "\n[gate]\n";
        out += "tag_id = " + std::to_string(g.tag_id) + "\n";
        out += "center = " + vec(g.center) + "\n";
        out += "width = " + num(g.width) + "\n";
        out += "height = " + num(g.height) + "\n";
        out += "pass_clearance = " + num(g.pass_clearance) + "\n";
        out += "bar_radius = " + num(g.bar_radius) + "\n";
    }
    for (const auto& o : scene.obstacles) {
        out += "\n[obstacle]\n";
        out += "base_center = " + vec(o.base_center) + "\n";
        out += "radius = " + num(o.radius) + "\n";
        out += "height = " + num(o.height) + "\n";
    }
    return out;
}

// Consecutive tags farther apart than the camera's reliable detection range
// get flagged; the mission can still run, detection just cannot be guaranteed.
inline constexpr double kTagSpacingLimit = 4.0;

struct SpacingWarning {
    size_t first_index;
    size_t second_index;
    double distance;
};

inline std::vector<SpacingWarning> validate_spacing(const WorldScene& scene) {
    std::vector<SpacingWarning> warnings;
    for (size_t i = 0; i + 1 < scene.tags.size(); ++i) {
        double d = norm(scene.tags[i + 1].center - scene.tags[i].center);
        if (d >= kTagSpacingLimit) warnings.push_back({i, i + 1, d});
    }
    return warnings;
}

}  // namespace servosim
