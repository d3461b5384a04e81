#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "atm/geometry.hpp"
#include "atm/navigation.hpp"

namespace atm {

/// Another body in the scene, as seen by a walker.
struct SceneBody {
    std::int64_t id = 0;
    Pose2 pose;
    Shape shape = Shape::circle(0.1, 0.0);
    bool dynamic = false;
};

struct WalkerParams {
    double radius = 0.30;
    double eye_height = 1.6;
    Frustum frustum;
    double speed = 0.5;
    double accel_limit = 10.0;
    double dt = 0.05;
    NavConfig nav;
    Bounds room;
    double standoff = 0.1;
    /// A seen dynamic body that moved this far and now blocks the route forces a re-plan.
    double moved_threshold = 0.1;
};

/// Wall slabs just outside the room, used as planning obstacles.
std::vector<Obstacle> wall_obstacles(const Bounds& room, double thickness = 0.5);

/// Point `standoff` beyond a mover of `radius` touching the target footprint, on the side
/// closest to `from`.
Vec2 standoff_point(const Pose2& target_pose, const Shape& target, Vec2 from, double radius,
                    double standoff);

/// The walking model shared by the ground-truth person and the internal simulation: it plans on
/// the grid of bodies it has seen (never its target), follows the route, and re-plans from its
/// current pose when a new body enters its view or a seen moving body blocks the route.
class GoalWalker {
public:
    enum class Status { walking, arrived, unreachable };

    GoalWalker(WalkerParams params, const Pose2& start, std::int64_t target_id,
               std::span<const SceneBody> bodies);

    /// Velocity command for this tick given the walker pose and the other bodies' current poses.
    std::optional<Vec2> step(const Pose2& pose, std::span<const SceneBody> bodies);

    Status status() const { return status_; }
    bool replanned() const { return replans_ > 0; }
    int replans() const { return replans_; }
    PlanStatus initial_plan_status() const { return initial_status_; }
    const Path& initial_path() const { return initial_path_; }
    const Path& current_path() const { return follower_.path(); }
    Vec2 goal() const { return goal_; }
    std::vector<std::int64_t> known_ids() const;

private:
    bool visible(const Pose2& pose, const SceneBody& body) const;
    PlanStatus replan(const Pose2& pose);
    bool route_blocked_by(const SceneBody& body) const;

    WalkerParams params_;
    std::int64_t target_id_;
    Vec2 goal_;
    std::vector<Obstacle> walls_;
    std::map<std::int64_t, SceneBody> known_;
    std::map<std::int64_t, Vec2> planned_positions_;
    PathFollower follower_;
    Path initial_path_;
    PlanStatus initial_status_ = PlanStatus::no_route;
    Status status_ = Status::walking;
    int replans_ = 0;
};

}  // namespace atm
