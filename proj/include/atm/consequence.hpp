#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atm/geometry.hpp"
#include "atm/navigation.hpp"
#include "atm/walker.hpp"
#include "atm/working_memory.hpp"

namespace atm {

class SimulationHorizonExceeded : public std::runtime_error {
public:
    SimulationHorizonExceeded() : std::runtime_error("simulation horizon exceeded") {}
};

/// How the robot picks its stopping point next to a move_to target.
enum class RobotApproach {
    /// Standoff point closest to the robot's current position.
    nearest_to_robot,
    /// Standoff point closest to the predicted collision point it is trying to prevent.
    nearest_to_collision,
    /// Standoff point facing the person, so the robot stands between them and the target.
    nearest_to_person,
};

struct EngineConfig {
    double dt = 0.05;
    double horizon = 60.0;
    double collision_step = kDefaultCollisionStep;
    double standoff = 0.1;
    double admissibility_margin = 0.5;
    /// Gap the moving robot must keep from the person's unaided walk for an action to count.
    double robot_clearance = 0.1;
    // Generic human model the robot projects onto people.
    double person_speed = 0.5;
    double person_accel = 10.0;
    double fov_half_angle_deg = 60.0;
    double fov_range_m = 8.0;
    NavConfig nav;
    RobotApproach approach = RobotApproach::nearest_to_person;
    /// Perceived body extents are divided by this worst-case shrink factor (>= 1) ...
    double size_uncertainty_factor = 1.0;
    /// ... and grown by this many meters of position uncertainty.
    double position_uncertainty_pad = 0.0;
};

/// Internal-simulator geometry margins covering the given perception noise: the smallest
/// plausible size multiplier at three sigma (floored at the clamp) and three sigma of
/// relative position error between two detected bodies.
void apply_noise_margins(EngineConfig& config, double pos_sigma, double size_sigma);

struct SceneEntity {
    NodeId node = 0;
    std::int64_t track_id = 0;
    std::string cls;
    NodeKind kind = NodeKind::object;
    Pose2 pose;
    Shape shape = Shape::circle(0.1, 0.0);
    bool dynamic = false;
    double eye_height = 1.6;
};

/// Room-frame view of a working-memory snapshot: robot pose, limits and perceived bodies.
struct SceneModel {
    NodeId robot_node = 0;
    Pose2 robot_pose;
    Shape robot_shape = Shape::circle(0.35, 1.2);
    double robot_speed = 1.0;
    double robot_accel = 1.0;
    Bounds room;
    std::vector<SceneEntity> entities;

    const SceneEntity* find(NodeId node) const;
    const SceneEntity& at(NodeId node) const;
};

/// Builds the scene, growing every perceived body by the configured uncertainty margins.
SceneModel scene_from_snapshot(const Snapshot& snapshot, const EngineConfig& config);

struct IntentionRecord {
    NodeId subject = 0;
    NodeId target = 0;
    std::string action = "move_to";
    /// Vertical gaze in radians; robot records carry none.
    std::optional<double> gaze;
    /// Robot records only: room-frame bearing from the target to the robot's standoff goal.
    /// Absent means the engine's approach policy picks the side.
    std::optional<double> approach_bearing;
    std::optional<bool> c;
    std::optional<double> collision_time;
    std::optional<Vec2> collision_xy;
};

struct SimOutcome {
    bool c = false;
    std::optional<double> collision_time;
    std::optional<Vec2> collision_xy;
    std::optional<NodeId> collided_with;
    PlanStatus plan_status = PlanStatus::no_route;
    Path planned_path;
    std::vector<Pose2> realized_trajectory;
    bool replanned = false;

    // Filled by co_simulate.
    PlanStatus robot_plan_status = PlanStatus::no_route;
    Path robot_plan;
    std::optional<Pose2> robot_goal;
    std::optional<double> robot_arrival;
    bool admissible = false;
    bool transit_conflict = false;

    bool reachable() const { return plan_status == PlanStatus::ok; }
};

/// Structured record of one simulation, for traces.
using TraceHook = std::function<void(const nlohmann::json&)>;

/// Obstacles the person would notice under `gaze`: walls plus in-frustum bodies (the target and
/// the person excluded), with the hypothesized robot replacing the real one when supplied.
OccupancyGrid subjective_grid(const SceneModel& scene, NodeId person, double gaze,
                              std::optional<Pose2> hypothesized_robot, const EngineConfig& config,
                              std::optional<NodeId> exclude_target = std::nullopt);

/// Plans the intention on the person's subjective grid, then walks it through the true scene
/// with the shared walking model; c reports a swept collision on the realized trajectory.
SimOutcome simulate_intention(const SceneModel& scene, const IntentionRecord& intent,
                              std::optional<Pose2> hypothesized_robot, const EngineConfig& config,
                              const TraceHook& trace = {});

/// Point the approach policy keeps the robot's standoff goal closest to.
Vec2 approach_anchor(const SceneModel& scene, const IntentionRecord& person_intent,
                     const EngineConfig& config);

/// Standoff goal for the robot next to `target`, on the side given by `bearing` when set.
Vec2 robot_standoff(const SceneModel& scene, const SceneEntity& target, Vec2 anchor,
                    std::optional<double> bearing, const EngineConfig& config);

/// True when the robot, driven along `robot_plan` with its speed and acceleration limits, comes
/// within touching distance of the person walking `person_trajectory` (one pose per tick).
bool transit_conflict(const Path& robot_plan, const SceneModel& scene, double person_radius,
                      const std::vector<Pose2>& person_trajectory, const EngineConfig& config);

/// Re-enacts `person_intent` with the robot standing at the end of `robot_intent`, after the
/// time-admissibility gate and a transit check against the person's unaided walk. A person who
/// can no longer reach their goal counts as c = true.
SimOutcome co_simulate(const SceneModel& scene, const IntentionRecord& robot_intent,
                       const IntentionRecord& person_intent, const EngineConfig& config,
                       const TraceHook& trace = {});

nlohmann::json outcome_to_json(const SimOutcome& outcome);

}  // namespace atm
