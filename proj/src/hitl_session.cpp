#include <cmath>

#include "atm/hitl.hpp"

namespace atm {

using nlohmann::json;

HitlSession::HitlSession(Scenario scenario, HarnessConfig config, bool run_agents)
    : scenario_(std::move(scenario)), config_(std::move(config)), run_agents_(run_agents) {
    if (!scenario_.person_script.human_steered) {
        throw ScenarioError("live mode needs a human_steered person_script");
    }
    auto robot = scenario_.robot_id();
    if (!robot) throw ScenarioError("scenario has no robot");
    robot_id_ = *robot;
    person_id_ = scenario_.person_script.person_id;
    engine_ = config_.engine;
    if (config_.noise_margins) {
        apply_noise_margins(engine_, config_.perception.noise.pos_sigma,
                            config_.perception.noise.size_inflation_sigma);
    }
    rebuild();
}

HitlSession::~HitlSession() {
    if (agents_) agents_->stop();
}

void HitlSession::rebuild() {
    if (agents_) agents_->stop();
    agents_.reset();
    perception_.reset();
    state_ = initial_state(scenario_);
    wm_ = std::make_unique<WorkingMemory>(false);
    const Entity& robot = state_.entity(robot_id_);
    RobotDescription desc{robot.shape.bounding_radius(), robot.shape.height(), robot.speed_limit,
                          robot.accel_limit, scenario_.room()};
    perception_ = std::make_unique<PerceptionAgent>(*wm_, desc, config_.perception.timeout);
    pending_steer_.reset();
    steer_world_ = {};
    robot_intention_.reset();
    robot_follower_.reset();
    risk_seen_ = false;
    collisions_seen_ = 0;
    events_.clear();
    publish();
    if (run_agents_) {
        agents_ = std::make_unique<AgentRunner>(*wm_, config_.atm, engine_, std::chrono::milliseconds(100));
        agents_->start();
    }
}

void HitlSession::steer(double vx, double vy) {
    if (!std::isfinite(vx) || !std::isfinite(vy)) {
        throw std::invalid_argument("steer components must be finite");
    }
    pending_steer_ = Vec2{vx, vy};
}

void HitlSession::reset() {
    rebuild();
    running_ = false;
}

void HitlSession::publish() {
    PerceptionConfig pc = config_.perception;
    pc.noise.seed = scenario_.seed;
    perception_->publish(observe(state_, robot_id_, pc), state_.entity(robot_id_).pose, state_.time());
}

void HitlSession::run_agents_once() {
    guess_intentions_serial(*wm_, config_.atm, engine_);
    const Snapshot snap = wm_->snapshot();
    bool acting = false;
    for (const Node* n : snap.graph().of_kind(NodeKind::intention)) {
        if (n->attrs.contains("resolves")) acting = true;
    }
    if (!acting) select_action(*wm_, config_.atm, engine_);
}

void HitlSession::check_memory_events() {
    const Snapshot snap = wm_->snapshot();
    const Graph& g = snap.graph();
    bool risky = false;
    const Node* robot_intent = nullptr;
    for (const Node* n : g.of_kind(NodeKind::intention)) {
        if (n->attrs.contains("resolves")) robot_intent = n;
        else if (attr_bool(n->attrs, "c").value_or(false)) risky = true;
    }
    if (risky && !risk_seen_) events_.push_back("risk_detected");
    risk_seen_ = risky;
    if (robot_intent && robot_intent->id != robot_intention_.value_or(0)) {
        robot_intention_ = robot_intent->id;
        const auto flat = attr_vec(robot_intent->attrs, "plan").value_or(std::vector<double>{});
        std::vector<Vec2> pts;
        for (std::size_t i = 0; i + 1 < flat.size(); i += 2) pts.push_back({flat[i], flat[i + 1]});
        if (!pts.empty()) {
            const Entity& robot = state_.entity(robot_id_);
            robot_follower_.emplace(Path::from_points(pts), robot.speed_limit, state_.dt,
                                    engine_.nav.lookahead, engine_.nav.arrive_tolerance, robot.accel_limit);
        }
        events_.push_back("action_committed");
    }
}

void HitlSession::drive_robot(std::map<EntityId, Vec2>& commands) {
    if (!robot_follower_ || robot_follower_->finished()) return;
    if (auto cmd = robot_follower_->command(state_.entity(robot_id_).pose.position())) {
        commands[robot_id_] = *cmd;
    } else {
        events_.push_back("goal_reached");
    }
}

std::optional<json> HitlSession::tick() {
    if (!running_) return std::nullopt;
    check_memory_events();

    std::map<EntityId, Vec2> commands;
    const Entity& person = state_.entity(person_id_);
    if (pending_steer_) {
        const Vec2 body = *pending_steer_;
        pending_steer_.reset();
        const double c = std::cos(person.pose.theta);
        const double s = std::sin(person.pose.theta);
        Vec2 world{c * body.x - s * body.y, s * body.x + c * body.y};
        const double mag = world.norm();
        if (mag > person.speed_limit) world = world * (person.speed_limit / mag);
        steer_world_ = world;
    }
    commands[person_id_] = steer_world_;
    drive_robot(commands);
    state_ = step(state_, commands, scenario_.room());
    publish();

    for (std::size_t i = collisions_seen_; i < state_.collision_events.size(); ++i) {
        const auto& e = state_.collision_events[i];
        if ((e.a == person_id_ || e.b == person_id_) && e.a != kWallId && e.b != kWallId) {
            events_.push_back("collision");
        }
    }
    collisions_seen_ = state_.collision_events.size();
    return frame();
}

std::vector<EntityId> HitlSession::subjective_visible_ids() const {
    const Entity& person = state_.entity(person_id_);
    Frustum f;
    f.half_angle = deg_to_rad(config_.person.fov_half_angle_deg);
    f.range = config_.person.fov_range_m;
    f.gaze_depression = deg_to_rad(config_.hitl_gaze_deg);
    std::vector<EntityId> out;
    for (const auto& e : state_.entities) {
        if (e.id == person_id_) continue;
        if (in_frustum(person.pose, person.eye_height, f, e.pose, e.shape)) out.push_back(e.id);
    }
    return out;
}

json HitlSession::frame() {
    json f;
    f["type"] = "frame";
    f["t"] = state_.time();
    json entities = json::array();
    for (const auto& e : state_.entities) {
        json ext = json::array();
        if (e.shape.is_circle()) {
            ext.push_back(e.shape.radius());
        } else {
            const auto& b = std::get<Box>(e.shape.footprint());
            ext.push_back(b.half_x);
            ext.push_back(b.half_y);
        }
        entities.push_back({{"id", e.id},
                            {"class", e.cls},
                            {"x", e.pose.x},
                            {"y", e.pose.y},
                            {"theta", e.pose.theta},
                            {"radius_or_extents", ext}});
    }
    f["entities"] = std::move(entities);
    f["subjective_visible_ids"] = subjective_visible_ids();

    const Snapshot snap = wm_->snapshot();
    const Graph& g = snap.graph();
    auto track_of = [&](NodeId id) -> json {
        const Node* n = g.find(id);
        if (!n) return nullptr;
        if (n->kind == NodeKind::robot) return robot_id_;
        return attr_int(n->attrs, "track_id").value_or(0);
    };
    std::map<std::pair<NodeId, NodeId>, bool> pairs;
    for (const Node* n : g.of_kind(NodeKind::intention)) {
        if (n->attrs.contains("resolves")) continue;
        const auto key = std::make_pair(attr_int(n->attrs, "subject").value_or(0),
                                        attr_int(n->attrs, "target").value_or(0));
        pairs[key] = pairs[key] || attr_bool(n->attrs, "c").value_or(false);
    }
    json intentions = json::array();
    for (const auto& [key, risky] : pairs) {
        intentions.push_back({{"person", track_of(key.first)}, {"target", track_of(key.second)}, {"risky", risky}});
    }
    f["intentions"] = std::move(intentions);

    json plan = json::array();
    if (robot_follower_) {
        for (const auto& p : robot_follower_->path().waypoints) plan.push_back({p.x, p.y});
    }
    f["robot_plan"] = std::move(plan);
    if (events_.empty()) {
        f["event"] = nullptr;
    } else {
        f["event"] = events_.front();
        events_.pop_front();
    }
    return f;
}

}  // namespace atm
