#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "atm/geometry.hpp"
#include "atm/navigation.hpp"
#include "atm/walker.hpp"

namespace atm {

using EntityId = std::int64_t;

/// Pseudo id used for wall contacts in collision events.
inline constexpr EntityId kWallId = -1;

inline constexpr double kTickSeconds = 0.05;

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Entity {
    EntityId id = 0;
    std::string cls;
    Pose2 pose;
    Shape shape = Shape::circle(0.1, 0.0);
    bool dynamic = false;
    double speed_limit = 0.0;
    double accel_limit = 0.0;
    /// Only meaningful for people.
    double eye_height = 1.6;
    Vec2 velocity;
};

struct PersonScript {
    EntityId person_id = 0;
    EntityId target_id = 0;
    double speed = 0.5;
    /// The scripted person's true vertical gaze.
    double gaze_deg = 10.0;
    bool human_steered = false;
};

struct Sampling {
    double radius = 1.5;
    std::vector<EntityId> ids;
};

struct Scenario {
    std::uint64_t seed = 0;
    double width = 8.0;
    double depth = 6.0;
    std::vector<Entity> entities;
    PersonScript person_script;
    Sampling sampling;

    Bounds room() const { return {-0.5 * width, -0.5 * depth, 0.5 * width, 0.5 * depth}; }
    const Entity& entity(EntityId id) const;
    Entity& entity(EntityId id);
    std::optional<EntityId> robot_id() const;
};

Scenario load_scenario(const nlohmann::json& document);
Scenario load_scenario_file(const std::string& path);
nlohmann::json scenario_to_json(const Scenario& scenario);

/// Displaces every sampled entity uniformly over a disc of the sampling radius around its
/// nominal position, re-drawing overlapping placements up to 100 times.
Scenario sample_scenario(const Scenario& base, std::uint64_t seed);

struct CollisionEvent {
    double time = 0.0;
    EntityId a = 0;
    EntityId b = 0;

    friend bool operator==(const CollisionEvent&, const CollisionEvent&) = default;
};

struct WorldState {
    std::int64_t tick = 0;
    double dt = kTickSeconds;
    std::vector<Entity> entities;
    std::vector<CollisionEvent> collision_events;
    /// Pairs overlapping at the current tick; events fire on the rising edge.
    std::set<std::pair<EntityId, EntityId>> contacts;

    double time() const { return static_cast<double>(tick) * dt; }
    const Entity& entity(EntityId id) const;
    std::vector<SceneBody> bodies_except(EntityId id) const;
};

WorldState initial_state(const Scenario& scenario, double dt = kTickSeconds);

/// Advances the world one tick: clamps commands to each entity's limits, integrates, keeps
/// bodies inside the room, and records new overlaps.
WorldState step(const WorldState& state, const std::map<EntityId, Vec2>& commands, const Bounds& room);

/// True if `id` took part in a body-body collision (walls excluded).
bool collided(const WorldState& state, EntityId id);

struct PersonModel {
    double fov_half_angle_deg = 60.0;
    double fov_range_m = 8.0;
};

/// Walker parameters for a person entity of `scenario` with the given gaze.
WalkerParams person_walker_params(const Scenario& scenario, const Entity& person, double speed,
                                  double gaze_deg, const PersonModel& model, const NavConfig& nav,
                                  double dt = kTickSeconds);

/// Drives the scripted person with the shared walking model and its true gaze.
class ScriptedPerson {
public:
    ScriptedPerson(const Scenario& scenario, const WorldState& state, const PersonModel& model,
                   const NavConfig& nav);

    std::optional<Vec2> command(const WorldState& state);
    bool done() const { return walker_.status() != GoalWalker::Status::walking; }
    const GoalWalker& walker() const { return walker_; }

private:
    EntityId person_id_;
    GoalWalker walker_;
};

}  // namespace atm
