#include "atm/consequence.hpp"

#include <algorithm>
#include <cmath>

#include "atm/perception.hpp"

namespace atm {

void apply_noise_margins(EngineConfig& config, double pos_sigma, double size_sigma) {
    const double min_multiplier = std::max(kMinSizeMultiplier, 1.0 - 3.0 * size_sigma);
    config.size_uncertainty_factor = 1.0 / min_multiplier;
    config.position_uncertainty_pad = 3.0 * std::sqrt(2.0) * pos_sigma;
}

const SceneEntity* SceneModel::find(NodeId node) const {
    for (const auto& e : entities) {
        if (e.node == node) return &e;
    }
    return nullptr;
}

const SceneEntity& SceneModel::at(NodeId node) const {
    if (const auto* e = find(node)) return *e;
    throw std::invalid_argument("node " + std::to_string(node) + " not in scene");
}

SceneModel scene_from_snapshot(const Snapshot& snapshot, const EngineConfig& config) {
    const Graph& g = snapshot.graph();
    const auto robots = g.of_kind(NodeKind::robot);
    if (robots.empty()) {
        throw std::invalid_argument("snapshot has no robot node");
    }
    SceneModel scene;
    const Node& robot = *robots.front();
    scene.robot_node = robot.id;
    scene.robot_pose = *attrs_pose(robot.attrs);
    scene.robot_shape = Shape::circle(attr_real(robot.attrs, "radius").value_or(0.35),
                                      attr_real(robot.attrs, "height").value_or(1.2));
    scene.robot_speed = attr_real(robot.attrs, "speed_limit").value_or(1.0);
    scene.robot_accel = attr_real(robot.attrs, "accel_limit").value_or(1.0);
    const auto room = attr_vec(robot.attrs, "room");
    if (!room || room->size() != 4) {
        throw std::invalid_argument("robot node lacks room bounds");
    }
    scene.room = {(*room)[0], (*room)[1], (*room)[2], (*room)[3]};

    for (const Edge* rt : g.out_edges(robot.id, EdgeLabel::rt)) {
        const Node* n = g.find(rt->to);
        if (!n || (n->kind != NodeKind::person && n->kind != NodeKind::object)) continue;
        auto shape = attrs_shape(n->attrs);
        if (!shape) continue;
        SceneEntity e;
        e.node = n->id;
        e.track_id = attr_int(n->attrs, "track_id").value_or(0);
        e.cls = attr_text(n->attrs, "class").value_or("");
        e.kind = n->kind;
        e.pose = compose(scene.robot_pose, *attrs_pose(rt->attrs));
        e.shape = *shape;
        if (config.size_uncertainty_factor != 1.0) {
            e.shape = e.shape.scaled(config.size_uncertainty_factor);
        }
        if (config.position_uncertainty_pad > 0.0) {
            e.shape = e.shape.padded(config.position_uncertainty_pad);
        }
        e.dynamic = attr_bool(n->attrs, "dynamic").value_or(n->kind == NodeKind::person);
        e.eye_height = attr_real(n->attrs, "eye_height").value_or(1.6);
        scene.entities.push_back(std::move(e));
    }
    return scene;
}

namespace {

/// Every body the subject could meet, keyed by working-memory node id.
std::vector<SceneBody> bodies_for(const SceneModel& scene, NodeId subject,
                                  std::optional<Pose2> hypothesized_robot) {
    std::vector<SceneBody> out;
    for (const auto& e : scene.entities) {
        if (e.node == subject) continue;
        out.push_back({e.node, e.pose, e.shape, false});
    }
    if (subject != scene.robot_node) {
        out.push_back({scene.robot_node, hypothesized_robot.value_or(scene.robot_pose),
                       scene.robot_shape, false});
    }
    return out;
}

WalkerParams person_params(const SceneModel& scene, const SceneEntity& person, double gaze,
                           const EngineConfig& config) {
    WalkerParams p;
    p.radius = person.shape.bounding_radius();
    p.eye_height = person.eye_height;
    p.frustum.half_angle = deg_to_rad(config.fov_half_angle_deg);
    p.frustum.range = config.fov_range_m;
    p.frustum.gaze_depression = gaze;
    p.speed = config.person_speed;
    p.accel_limit = config.person_accel;
    p.dt = config.dt;
    p.nav = config.nav;
    p.room = scene.room;
    p.standoff = config.standoff;
    return p;
}

nlohmann::json path_json(const std::vector<Pose2>& pts) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : pts) a.push_back({p.x, p.y});
    return a;
}

}  // namespace

Vec2 approach_anchor(const SceneModel& scene, const IntentionRecord& person_intent,
                     const EngineConfig& config) {
    switch (config.approach) {
        case RobotApproach::nearest_to_collision:
            if (person_intent.collision_xy) return *person_intent.collision_xy;
            break;
        case RobotApproach::nearest_to_person:
            return scene.at(person_intent.subject).pose.position();
        case RobotApproach::nearest_to_robot:
            break;
    }
    return scene.robot_pose.position();
}

Vec2 robot_standoff(const SceneModel& scene, const SceneEntity& target, Vec2 anchor,
                    std::optional<double> bearing, const EngineConfig& config) {
    if (bearing) {
        // Any point far out along the bearing picks the same side of a convex footprint.
        const double far = 4.0 * (target.shape.bounding_radius() + scene.robot_shape.bounding_radius()) + 10.0;
        anchor = target.pose.position() + Vec2{std::cos(*bearing), std::sin(*bearing)} * far;
    }
    return standoff_point(target.pose, target.shape, anchor, scene.robot_shape.bounding_radius(),
                          config.standoff);
}

bool transit_conflict(const Path& robot_plan, const SceneModel& scene, double person_radius,
                      const std::vector<Pose2>& person_trajectory, const EngineConfig& config) {
    if (robot_plan.waypoints.empty() || person_trajectory.empty()) return false;
    PathFollower follower(robot_plan, scene.robot_speed, config.dt, config.nav.lookahead,
                          config.nav.arrive_tolerance, scene.robot_accel);
    const double reach = scene.robot_shape.bounding_radius() + person_radius + config.robot_clearance;
    Vec2 pos = scene.robot_pose.position();
    Vec2 vel;
    const auto max_ticks = static_cast<std::size_t>(std::ceil(config.horizon / config.dt));
    for (std::size_t k = 1; k <= max_ticks; ++k) {
        const auto cmd = follower.command(pos);
        if (!cmd) return false;
        vel = limit_velocity(vel, *cmd, scene.robot_speed, scene.robot_accel, config.dt);
        pos = pos + vel * config.dt;
        const Vec2 other = person_trajectory[std::min(k, person_trajectory.size() - 1)].position();
        if ((pos - other).norm() < reach) return true;
    }
    return false;
}

OccupancyGrid subjective_grid(const SceneModel& scene, NodeId person, double gaze,
                              std::optional<Pose2> hypothesized_robot, const EngineConfig& config,
                              std::optional<NodeId> exclude_target) {
    const SceneEntity& p = scene.at(person);
    if (p.kind != NodeKind::person) {
        throw std::invalid_argument("node " + std::to_string(person) + " is not a person");
    }
    const WalkerParams params = person_params(scene, p, gaze, config);
    std::vector<Obstacle> obstacles = wall_obstacles(scene.room);
    for (const auto& b : bodies_for(scene, person, hypothesized_robot)) {
        if (exclude_target && b.id == *exclude_target) continue;
        if (in_frustum(p.pose, p.eye_height, params.frustum, b.pose, b.shape)) {
            obstacles.push_back({b.pose, b.shape});
        }
    }
    return build_grid(obstacles, params.radius, scene.room, config.nav.resolution, config.nav.margin);
}

SimOutcome simulate_intention(const SceneModel& scene, const IntentionRecord& intent,
                              std::optional<Pose2> hypothesized_robot, const EngineConfig& config,
                              const TraceHook& trace) {
    const SceneEntity& subject = scene.at(intent.subject);
    if (subject.kind != NodeKind::person) {
        throw std::invalid_argument("simulate_intention expects a person subject");
    }
    if (intent.subject == intent.target) {
        throw std::invalid_argument("intention subject equals target");
    }
    scene.at(intent.target);
    const double gaze = intent.gaze.value_or(0.0);

    SimOutcome out;
    const auto bodies = bodies_for(scene, intent.subject, hypothesized_robot);
    GoalWalker walker(person_params(scene, subject, gaze, config), subject.pose, intent.target, bodies);
    out.plan_status = walker.initial_plan_status();
    if (!out.reachable()) {
        out.c = false;
        out.realized_trajectory = {subject.pose};
    } else {
        out.planned_path = walker.initial_path();
        Pose2 pose = subject.pose;
        Vec2 vel;
        out.realized_trajectory.push_back(pose);
        const auto max_ticks = static_cast<std::int64_t>(std::ceil(config.horizon / config.dt));
        std::int64_t ticks = 0;
        while (auto cmd = walker.step(pose, bodies)) {
            if (++ticks > max_ticks) {
                throw SimulationHorizonExceeded();
            }
            vel = limit_velocity(vel, *cmd, config.person_speed, config.person_accel, config.dt);
            const Vec2 p = pose.position() + vel * config.dt;
            const double theta = vel.norm() > 1e-9 ? std::atan2(vel.y, vel.x) : pose.theta;
            pose = Pose2(p, theta);
            out.realized_trajectory.push_back(pose);
        }
        out.replanned = walker.replanned();

        std::vector<Obstacle> obstacles;
        std::vector<NodeId> ids;
        for (const auto& b : bodies) {
            if (b.id == intent.target) continue;
            obstacles.push_back({b.pose, b.shape});
            ids.push_back(b.id);
        }
        const Shape mover = Shape::circle(subject.shape.bounding_radius(), subject.shape.height());
        if (auto hit = swept_collision(out.realized_trajectory, mover, obstacles, config.collision_step)) {
            out.c = true;
            out.collision_time = hit->arc_length / config.person_speed;
            out.collision_xy = hit->position;
            out.collided_with = ids[hit->obstacle_index];
        }
    }
    if (trace) {
        nlohmann::json rec = outcome_to_json(out);
        rec["kind"] = "simulate_intention";
        rec["subject"] = intent.subject;
        rec["target"] = intent.target;
        rec["gaze_deg"] = rad_to_deg(gaze);
        if (hypothesized_robot) {
            rec["hypothesized_robot"] = {hypothesized_robot->x, hypothesized_robot->y,
                                         hypothesized_robot->theta};
        }
        trace(rec);
    }
    return out;
}

SimOutcome co_simulate(const SceneModel& scene, const IntentionRecord& robot_intent,
                       const IntentionRecord& person_intent, const EngineConfig& config,
                       const TraceHook& trace) {
    if (robot_intent.subject != scene.robot_node) {
        throw std::invalid_argument("co_simulate expects a robot intention");
    }
    if (!person_intent.c.value_or(false) || !person_intent.collision_time) {
        throw std::invalid_argument("co_simulate expects a risky person intention");
    }
    const SceneEntity& target = scene.at(robot_intent.target);

    SimOutcome out;
    auto finish = [&](SimOutcome o) {
        if (trace) {
            nlohmann::json rec = outcome_to_json(o);
            rec["kind"] = "co_simulate";
            rec["robot_target"] = robot_intent.target;
            rec["person"] = person_intent.subject;
            rec["person_target"] = person_intent.target;
            trace(rec);
        }
        return o;
    };

    std::vector<Obstacle> obstacles = wall_obstacles(scene.room);
    for (const auto& e : scene.entities) {
        if (e.node == robot_intent.target) continue;
        obstacles.push_back({e.pose, e.shape});
    }
    const double radius = scene.robot_shape.bounding_radius();
    const OccupancyGrid grid =
        build_grid(obstacles, radius, scene.room, config.nav.resolution, config.nav.margin);
    const Vec2 goal = robot_standoff(scene, target, approach_anchor(scene, person_intent, config),
                                     robot_intent.approach_bearing, config);
    PlanResult r = plan(grid, scene.robot_pose.position(), goal, config.nav.snap_radius);
    out.robot_plan_status = r.status;
    if (!r.ok()) {
        out.c = true;
        return finish(out);
    }
    out.robot_plan = r.path;
    const auto& w = out.robot_plan.waypoints;
    out.robot_goal = Pose2(w.back().position(), w.size() > 1 ? w[w.size() - 2].theta : scene.robot_pose.theta);
    out.robot_arrival = out.robot_plan.total_length / scene.robot_speed;
    out.admissible = *out.robot_arrival + config.admissibility_margin <= *person_intent.collision_time;
    if (!out.admissible) {
        out.c = true;
        return finish(out);
    }
    IntentionRecord again = person_intent;
    again.c.reset();
    again.collision_time.reset();
    again.collision_xy.reset();

    // The static placement ignores the trip itself; a robot that cuts through the person on
    // its way there is no intervention.
    const SimOutcome unaided = simulate_intention(scene, again, std::nullopt, config);
    const SceneEntity& subject = scene.at(person_intent.subject);
    if (transit_conflict(out.robot_plan, scene, subject.shape.bounding_radius(),
                         unaided.realized_trajectory, config)) {
        out.admissible = false;
        out.transit_conflict = true;
        out.c = true;
        return finish(out);
    }

    SimOutcome person = simulate_intention(scene, again, out.robot_goal, config);
    // A robot parked where the person can no longer reach their goal blocks rather than helps:
    // the real person keeps walking their old route.
    if (!person.reachable()) person.c = true;
    person.robot_plan_status = out.robot_plan_status;
    person.robot_plan = std::move(out.robot_plan);
    person.robot_goal = out.robot_goal;
    person.robot_arrival = out.robot_arrival;
    person.admissible = true;
    return finish(std::move(person));
}

nlohmann::json outcome_to_json(const SimOutcome& o) {
    nlohmann::json j;
    j["c"] = o.c;
    j["collision_time"] = o.collision_time ? nlohmann::json(*o.collision_time) : nlohmann::json();
    j["collision_xy"] =
        o.collision_xy ? nlohmann::json({o.collision_xy->x, o.collision_xy->y}) : nlohmann::json();
    j["collided_with"] = o.collided_with ? nlohmann::json(*o.collided_with) : nlohmann::json();
    j["plan_status"] = to_string(o.plan_status);
    j["planned_path"] = path_json(o.planned_path.waypoints);
    j["realized_trajectory"] = path_json(o.realized_trajectory);
    j["replanned"] = o.replanned;
    if (o.robot_goal || o.robot_plan_status != PlanStatus::no_route) {
        j["robot_plan_status"] = to_string(o.robot_plan_status);
        j["robot_plan"] = path_json(o.robot_plan.waypoints);
        j["admissible"] = o.admissible;
        j["transit_conflict"] = o.transit_conflict;
        if (o.robot_arrival) j["robot_arrival"] = *o.robot_arrival;
    }
    return j;
}

}  // namespace atm
