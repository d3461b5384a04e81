#include "atm/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

namespace atm {

const Entity& Scenario::entity(EntityId id) const {
    for (const auto& e : entities) {
        if (e.id == id) return e;
    }
    throw ScenarioError("no entity with id " + std::to_string(id));
}

Entity& Scenario::entity(EntityId id) {
    for (auto& e : entities) {
        if (e.id == id) return e;
    }
    throw ScenarioError("no entity with id " + std::to_string(id));
}

std::optional<EntityId> Scenario::robot_id() const {
    for (const auto& e : entities) {
        if (e.cls == "robot") return e.id;
    }
    return std::nullopt;
}

// --- loading -------------------------------------------------------------------

namespace {

using nlohmann::json;

void require_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) {
        throw ScenarioError(where + ": expected an object");
    }
    for (const auto& [key, value] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) ==
            allowed.end()) {
            throw ScenarioError(where + ": unknown field '" + key + "'");
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ScenarioError(where + ": field '" + key + "' has the wrong type");
    }
}

template <typename T>
T get_req(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) {
        throw ScenarioError(where + ": missing field '" + key + "'");
    }
    return get_or<T>(obj, key, T{}, where);
}

Shape parse_shape(const json& j, double height, const std::string& where) {
    require_keys(j, {"circle", "box"}, where + " shape");
    try {
        if (j.contains("circle")) {
            require_keys(j.at("circle"), {"r"}, where + " shape.circle");
            return Shape::circle(get_req<double>(j.at("circle"), "r", where), height);
        }
        if (j.contains("box")) {
            require_keys(j.at("box"), {"hx", "hy"}, where + " shape.box");
            return Shape::box(get_req<double>(j.at("box"), "hx", where),
                              get_req<double>(j.at("box"), "hy", where), height);
        }
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(where + ": " + e.what());
    }
    throw ScenarioError(where + ": shape needs circle or box");
}

bool pose_inside(const Bounds& b, const Pose2& p) { return b.contains(p.position()); }

}  // namespace

Scenario load_scenario(const json& doc) {
    require_keys(doc, {"seed", "room", "entities", "person_script", "sampling", "name"}, "scenario");
    Scenario sc;
    sc.seed = get_or<std::uint64_t>(doc, "seed", 0, "scenario");
    if (doc.contains("room")) {
        const auto& room = doc.at("room");
        require_keys(room, {"width_m", "depth_m"}, "room");
        sc.width = get_req<double>(room, "width_m", "room");
        sc.depth = get_req<double>(room, "depth_m", "room");
        if (!(sc.width > 0.0) || !(sc.depth > 0.0)) {
            throw ScenarioError("room: dimensions must be positive");
        }
    }
    if (!doc.contains("entities") || !doc.at("entities").is_array()) {
        throw ScenarioError("scenario: missing entities list");
    }
    std::set<EntityId> seen;
    const Bounds room = sc.room();
    for (const auto& je : doc.at("entities")) {
        const std::string where =
            "entity " + (je.contains("id") ? je.at("id").dump() : std::string("<no id>"));
        require_keys(je, {"id", "class", "pose", "shape", "height", "dynamic", "speed_limit",
                          "accel_limit", "eye_height"},
                     where);
        Entity e;
        e.id = get_req<EntityId>(je, "id", where);
        if (!seen.insert(e.id).second) {
            throw ScenarioError(where + ": duplicate id");
        }
        e.cls = get_req<std::string>(je, "class", where);
        const auto pose = get_req<std::vector<double>>(je, "pose", where);
        if (pose.size() != 3) {
            throw ScenarioError(where + ": pose must be [x, y, theta]");
        }
        e.pose = Pose2(pose[0], pose[1], pose[2]);
        if (!pose_inside(room, e.pose)) {
            throw ScenarioError(where + " (" + e.cls + "): pose outside room");
        }
        const double height = get_or<double>(je, "height", 0.0, where);
        if (!je.contains("shape")) {
            throw ScenarioError(where + ": missing field 'shape'");
        }
        e.shape = parse_shape(je.at("shape"), height, where);
        e.dynamic = get_or<bool>(je, "dynamic", false, where);
        e.speed_limit = get_or<double>(je, "speed_limit", 0.0, where);
        e.accel_limit = get_or<double>(je, "accel_limit", 0.0, where);
        e.eye_height = get_or<double>(je, "eye_height", 1.6, where);
        if (e.dynamic && !(e.speed_limit > 0.0)) {
            throw ScenarioError(where + ": dynamic entity needs a positive speed_limit");
        }
        sc.entities.push_back(std::move(e));
    }
    if (doc.contains("person_script")) {
        const auto& ps = doc.at("person_script");
        require_keys(ps, {"person_id", "target_id", "speed", "gaze_deg", "human_steered"},
                     "person_script");
        sc.person_script.person_id = get_req<EntityId>(ps, "person_id", "person_script");
        sc.person_script.target_id = get_req<EntityId>(ps, "target_id", "person_script");
        sc.person_script.speed = get_or<double>(ps, "speed", 0.5, "person_script");
        sc.person_script.gaze_deg = get_or<double>(ps, "gaze_deg", 10.0, "person_script");
        sc.person_script.human_steered = get_or<bool>(ps, "human_steered", false, "person_script");
        if (!seen.contains(sc.person_script.person_id)) {
            throw ScenarioError("person_script: unknown person_id");
        }
        if (!seen.contains(sc.person_script.target_id)) {
            throw ScenarioError("person_script: unknown target_id");
        }
        if (!(sc.person_script.speed > 0.0)) {
            throw ScenarioError("person_script: speed must be positive");
        }
    }
    if (doc.contains("sampling")) {
        const auto& s = doc.at("sampling");
        require_keys(s, {"radius_m", "ids"}, "sampling");
        sc.sampling.radius = get_req<double>(s, "radius_m", "sampling");
        sc.sampling.ids = get_or<std::vector<EntityId>>(s, "ids", {}, "sampling");
        if (!(sc.sampling.radius >= 0.0)) {
            throw ScenarioError("sampling: radius must be non-negative");
        }
        for (EntityId id : sc.sampling.ids) {
            if (!seen.contains(id)) {
                throw ScenarioError("sampling: unknown id " + std::to_string(id));
            }
        }
    }
    return sc;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ScenarioError("cannot open scenario file '" + path + "'");
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ScenarioError("malformed scenario file '" + path + "': " + e.what());
    }
    return load_scenario(doc);
}

json scenario_to_json(const Scenario& sc) {
    json doc;
    doc["seed"] = sc.seed;
    doc["room"] = {{"width_m", sc.width}, {"depth_m", sc.depth}};
    doc["entities"] = json::array();
    for (const auto& e : sc.entities) {
        json je;
        je["id"] = e.id;
        je["class"] = e.cls;
        je["pose"] = {e.pose.x, e.pose.y, e.pose.theta};
        if (e.shape.is_circle()) {
            je["shape"] = {{"circle", {{"r", e.shape.radius()}}}};
        } else {
            const auto& b = std::get<Box>(e.shape.footprint());
            je["shape"] = {{"box", {{"hx", b.half_x}, {"hy", b.half_y}}}};
        }
        je["height"] = e.shape.height();
        je["dynamic"] = e.dynamic;
        je["speed_limit"] = e.speed_limit;
        je["accel_limit"] = e.accel_limit;
        if (e.cls == "person") je["eye_height"] = e.eye_height;
        doc["entities"].push_back(je);
    }
    const auto& ps = sc.person_script;
    doc["person_script"] = {{"person_id", ps.person_id}, {"target_id", ps.target_id},
                            {"speed", ps.speed},         {"gaze_deg", ps.gaze_deg},
                            {"human_steered", ps.human_steered}};
    doc["sampling"] = {{"radius_m", sc.sampling.radius}, {"ids", sc.sampling.ids}};
    return doc;
}

// --- sampling ------------------------------------------------------------------

namespace {

bool bodies_overlap(const Entity& a, const Entity& b) {
    if (a.shape.is_circle()) {
        return disc_overlaps(a.pose.position(), a.shape.radius(), b.pose, b.shape);
    }
    if (b.shape.is_circle()) {
        return disc_overlaps(b.pose.position(), b.shape.radius(), a.pose, a.shape);
    }
    // Box-box: conservative bounding-disc test.
    return distance(a.pose.position(), b.pose.position()) <
           a.shape.bounding_radius() + b.shape.bounding_radius();
}

bool inside_room(const Bounds& room, const Entity& e) {
    const double r = e.shape.bounding_radius();
    return e.pose.x - r >= room.min_x && e.pose.x + r <= room.max_x && e.pose.y - r >= room.min_y &&
           e.pose.y + r <= room.max_y;
}

}  // namespace

Scenario sample_scenario(const Scenario& base, std::uint64_t seed) {
    Scenario out = base;
    out.seed = seed;
    if (base.sampling.radius == 0.0) {
        return out;
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Bounds room = out.room();
    for (EntityId id : base.sampling.ids) {
        const Entity& nominal = base.entity(id);
        Entity& e = out.entity(id);
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            const double r = base.sampling.radius * std::sqrt(unit(rng));
            const double phi = 2.0 * kPi * unit(rng);
            e.pose = Pose2(nominal.pose.x + r * std::cos(phi), nominal.pose.y + r * std::sin(phi),
                           nominal.pose.theta);
            placed = inside_room(room, e);
            for (const auto& other : out.entities) {
                if (!placed) break;
                if (other.id != e.id && bodies_overlap(e, other)) {
                    placed = false;
                }
            }
        }
        if (!placed) {
            throw ScenarioError("unsatisfiable sample for entity " + std::to_string(id));
        }
    }
    return out;
}

// --- stepping --------------------------------------------------------------------

const Entity& WorldState::entity(EntityId id) const {
    for (const auto& e : entities) {
        if (e.id == id) return e;
    }
    throw ScenarioError("no entity with id " + std::to_string(id));
}

std::vector<SceneBody> WorldState::bodies_except(EntityId id) const {
    std::vector<SceneBody> out;
    out.reserve(entities.size());
    for (const auto& e : entities) {
        if (e.id != id) {
            out.push_back({e.id, e.pose, e.shape, e.dynamic});
        }
    }
    return out;
}

WorldState initial_state(const Scenario& scenario, double dt) {
    WorldState s;
    s.dt = dt;
    s.entities = scenario.entities;
    for (auto& e : s.entities) {
        e.velocity = {};
    }
    return s;
}

WorldState step(const WorldState& state, const std::map<EntityId, Vec2>& commands, const Bounds& room) {
    for (const auto& [id, cmd] : commands) {
        const Entity& e = state.entity(id);
        if (!e.dynamic) {
            throw std::invalid_argument("command for static entity " + std::to_string(id));
        }
    }
    WorldState next = state;
    next.tick = state.tick + 1;
    const double t = next.time();
    for (auto& e : next.entities) {
        if (!e.dynamic) continue;
        auto it = commands.find(e.id);
        const Vec2 cmd = it == commands.end() ? Vec2{} : it->second;
        e.velocity = limit_velocity(e.velocity, cmd, e.speed_limit, e.accel_limit, state.dt);
        Vec2 p = e.pose.position() + e.velocity * state.dt;
        double theta = e.pose.theta;
        if (e.velocity.norm() > 1e-9) {
            theta = std::atan2(e.velocity.y, e.velocity.x);
        }
        const double r = e.shape.bounding_radius();
        const Vec2 clamped{std::clamp(p.x, room.min_x + r, room.max_x - r),
                           std::clamp(p.y, room.min_y + r, room.max_y - r)};
        if (clamped != p) {
            next.collision_events.push_back({t, e.id, kWallId});
            if (clamped.x != p.x) e.velocity.x = 0.0;
            if (clamped.y != p.y) e.velocity.y = 0.0;
            p = clamped;
        }
        e.pose = Pose2(p, theta);
    }
    std::set<std::pair<EntityId, EntityId>> contacts;
    for (std::size_t i = 0; i < next.entities.size(); ++i) {
        for (std::size_t k = i + 1; k < next.entities.size(); ++k) {
            const Entity& a = next.entities[i];
            const Entity& b = next.entities[k];
            if (!a.dynamic && !b.dynamic) continue;
            if (bodies_overlap(a, b)) {
                const auto key = std::minmax(a.id, b.id);
                contacts.insert(key);
                if (!state.contacts.contains(key)) {
                    next.collision_events.push_back({t, key.first, key.second});
                }
            }
        }
    }
    next.contacts = std::move(contacts);
    return next;
}

bool collided(const WorldState& state, EntityId id) {
    return std::any_of(state.collision_events.begin(), state.collision_events.end(),
                       [&](const CollisionEvent& ev) {
                           return (ev.a == id && ev.b != kWallId) || (ev.b == id && ev.a != kWallId);
                       });
}

WalkerParams person_walker_params(const Scenario& scenario, const Entity& person, double speed,
                                  double gaze_deg, const PersonModel& model, const NavConfig& nav,
                                  double dt) {
    WalkerParams p;
    p.radius = person.shape.bounding_radius();
    p.eye_height = person.eye_height;
    p.frustum.half_angle = deg_to_rad(model.fov_half_angle_deg);
    p.frustum.range = model.fov_range_m;
    p.frustum.gaze_depression = deg_to_rad(gaze_deg);
    p.speed = speed;
    p.accel_limit = person.accel_limit;
    p.dt = dt;
    p.nav = nav;
    p.room = scenario.room();
    return p;
}

ScriptedPerson::ScriptedPerson(const Scenario& scenario, const WorldState& state,
                               const PersonModel& model, const NavConfig& nav)
    : person_id_(scenario.person_script.person_id),
      walker_(person_walker_params(scenario, state.entity(person_id_), scenario.person_script.speed,
                                   scenario.person_script.gaze_deg, model, nav, state.dt),
              state.entity(person_id_).pose, scenario.person_script.target_id,
              state.bodies_except(person_id_)) {}

std::optional<Vec2> ScriptedPerson::command(const WorldState& state) {
    const auto bodies = state.bodies_except(person_id_);
    return walker_.step(state.entity(person_id_).pose, bodies);
}

}  // namespace atm
