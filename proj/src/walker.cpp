#include "atm/walker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace atm {

std::vector<Obstacle> wall_obstacles(const Bounds& room, double t) {
    const double w = room.max_x - room.min_x;
    const double h = room.max_y - room.min_y;
    const double cx = 0.5 * (room.min_x + room.max_x);
    const double cy = 0.5 * (room.min_y + room.max_y);
    return {
        {Pose2(room.min_x - 0.5 * t, cy, 0.0), Shape::box(0.5 * t, 0.5 * h + t, 3.0)},
        {Pose2(room.max_x + 0.5 * t, cy, 0.0), Shape::box(0.5 * t, 0.5 * h + t, 3.0)},
        {Pose2(cx, room.min_y - 0.5 * t, 0.0), Shape::box(0.5 * w + t, 0.5 * t, 3.0)},
        {Pose2(cx, room.max_y + 0.5 * t, 0.0), Shape::box(0.5 * w + t, 0.5 * t, 3.0)},
    };
}

Vec2 standoff_point(const Pose2& target_pose, const Shape& target, Vec2 from, double radius,
                    double standoff) {
    const Vec2 q = closest_footprint_point(target_pose, target, from);
    Vec2 dir = from - q;
    double n = dir.norm();
    if (n < 1e-12) {
        // Inside the footprint: push out along the direction from the body centre.
        dir = from - target_pose.position();
        n = dir.norm();
        if (n < 1e-12) {
            dir = {1.0, 0.0};
            n = 1.0;
        }
        const Vec2 u = dir * (1.0 / n);
        const Vec2 edge = closest_footprint_point(target_pose, target,
                                                  target_pose.position() + u * (target.bounding_radius() + 1.0));
        return edge + u * (radius + standoff);
    }
    return q + dir * ((radius + standoff) / n);
}

GoalWalker::GoalWalker(WalkerParams params, const Pose2& start, std::int64_t target_id,
                       std::span<const SceneBody> bodies)
    : params_(std::move(params)), target_id_(target_id), walls_(wall_obstacles(params_.room)) {
    const SceneBody* target = nullptr;
    for (const auto& b : bodies) {
        if (b.id == target_id) {
            target = &b;
        }
    }
    if (!target) {
        throw std::invalid_argument("walker target " + std::to_string(target_id) + " not in scene");
    }
    goal_ = standoff_point(target->pose, target->shape, start.position(), params_.radius,
                           params_.standoff);
    for (const auto& b : bodies) {
        if (b.id != target_id_ && visible(start, b)) {
            known_.emplace(b.id, b);
        }
    }
    initial_status_ = replan(start);
    if (initial_status_ == PlanStatus::ok) {
        initial_path_ = follower_.path();
    } else {
        status_ = Status::unreachable;
    }
    replans_ = 0;
}

bool GoalWalker::visible(const Pose2& pose, const SceneBody& body) const {
    return in_frustum(pose, params_.eye_height, params_.frustum, body.pose, body.shape);
}

PlanStatus GoalWalker::replan(const Pose2& pose) {
    planned_positions_.clear();
    for (const auto& [id, b] : known_) {
        planned_positions_[id] = b.pose.position();
    }
    std::vector<Obstacle> obstacles = walls_;
    for (const auto& [id, b] : known_) {
        obstacles.push_back({b.pose, b.shape});
    }
    const OccupancyGrid grid = build_grid_serial(obstacles, params_.radius, params_.room,
                                                 params_.nav.resolution, params_.nav.margin);
    const Vec2 start = params_.room.contains(pose.position()) ? pose.position()
                                                               : Vec2{std::clamp(pose.x, params_.room.min_x, params_.room.max_x),
                                                                      std::clamp(pose.y, params_.room.min_y, params_.room.max_y)};
    PlanResult r = plan(grid, start, goal_, params_.nav.snap_radius);
    if (!r.ok()) {
        return r.status;
    }
    follower_ = PathFollower(std::move(r.path), params_.speed, params_.dt, params_.nav.lookahead,
                             params_.nav.arrive_tolerance, 0.0);
    ++replans_;
    return PlanStatus::ok;
}

bool GoalWalker::route_blocked_by(const SceneBody& body) const {
    // The remaining route, sampled densely, must keep the clearance it was planned with.
    const auto& w = follower_.path().waypoints;
    const double clearance = params_.radius + params_.nav.margin;
    const double step = 0.5 * params_.nav.resolution;
    const double from = follower_.progress();
    double s = 0.0;
    for (std::size_t i = 1; i < w.size(); ++i) {
        const Vec2 a = w[i - 1].position();
        const Vec2 b = w[i].position();
        const double len = distance(a, b);
        if (s + len < from) {
            s += len;
            continue;
        }
        const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
        for (int k = 0; k <= n; ++k) {
            const double u = static_cast<double>(k) / n;
            if (s + u * len + 1e-9 < from) continue;
            if (disc_overlaps(a + (b - a) * u, clearance, body.pose, body.shape)) return true;
        }
        s += len;
    }
    return false;
}

std::optional<Vec2> GoalWalker::step(const Pose2& pose, std::span<const SceneBody> bodies) {
    if (status_ != Status::walking) {
        return std::nullopt;
    }
    bool need = false;
    for (const auto& b : bodies) {
        if (b.id == target_id_ || !visible(pose, b)) {
            continue;
        }
        auto it = known_.find(b.id);
        if (it == known_.end()) {
            known_.emplace(b.id, b);
            need = true;
            continue;
        }
        const bool settled = distance(it->second.pose.position(), b.pose.position()) < 1e-9;
        it->second.pose = b.pose;
        if (b.dynamic) {
            // Moving bodies are re-checked every moved_threshold; once one stops anywhere new,
            // its resting place counts too.
            auto pp = planned_positions_.find(b.id);
            const double moved = pp == planned_positions_.end()
                                     ? std::numeric_limits<double>::infinity()
                                     : distance(pp->second, b.pose.position());
            if ((moved > params_.moved_threshold || (settled && moved > 1e-6)) && route_blocked_by(b)) {
                need = true;
            }
        }
    }
    if (need) {
        // A failed re-plan keeps the previous route.
        replan(pose);
    }
    auto cmd = follower_.command(pose.position());
    if (!cmd) {
        status_ = Status::arrived;
    }
    return cmd;
}

std::vector<std::int64_t> GoalWalker::known_ids() const {
    std::vector<std::int64_t> ids;
    for (const auto& [id, b] : known_) ids.push_back(id);
    return ids;
}

}  // namespace atm
