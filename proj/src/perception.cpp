#include "atm/perception.hpp"

#include <algorithm>
#include <random>

namespace atm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30u)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27u)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31u);
}

std::mt19937_64 noise_stream(const NoiseModel& noise, std::int64_t tick, std::int64_t entity_id) {
    std::uint64_t h = splitmix64(noise.seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(tick));
    h = splitmix64(h ^ static_cast<std::uint64_t>(entity_id));
    return std::mt19937_64(h);
}

}  // namespace

double size_multiplier(const NoiseModel& noise, std::int64_t tick, std::int64_t entity_id) {
    if (noise.size_inflation_sigma == 0.0) {
        return 1.0;
    }
    auto rng = noise_stream(noise, tick, entity_id);
    std::normal_distribution<double> n(1.0, noise.size_inflation_sigma);
    return std::clamp(n(rng), kMinSizeMultiplier, kMaxSizeMultiplier);
}

std::vector<Detection> observe(const WorldState& world, EntityId robot_id,
                               const PerceptionConfig& config) {
    const Entity& robot = world.entity(robot_id);
    const Pose2 to_robot = inverse(robot.pose);
    const NoiseModel& noise = config.noise;
    std::vector<Detection> out;
    for (const auto& e : world.entities) {
        if (e.id == robot_id) continue;
        if (distance(e.pose.position(), robot.pose.position()) > config.sensor_range) continue;

        Detection d;
        d.track_id = e.id;
        d.cls = e.cls;
        d.pose = compose(to_robot, e.pose);
        d.shape = e.shape;
        d.orientation_valid = e.cls == "person";
        d.dynamic = e.dynamic;
        d.eye_height = e.eye_height;
        if (!noise.zero()) {
            // Draw order is fixed: size multiplier first, then x and y offsets.
            auto rng = noise_stream(noise, world.tick, e.id);
            if (noise.size_inflation_sigma > 0.0) {
                std::normal_distribution<double> n(1.0, noise.size_inflation_sigma);
                d.shape = e.shape.scaled(std::clamp(n(rng), kMinSizeMultiplier, kMaxSizeMultiplier));
            }
            if (noise.pos_sigma > 0.0) {
                std::normal_distribution<double> n(0.0, noise.pos_sigma);
                const double dx = n(rng);
                const double dy = n(rng);
                d.pose = Pose2(d.pose.x + dx, d.pose.y + dy, d.pose.theta);
            }
        }
        out.push_back(std::move(d));
    }
    return out;
}

Attrs shape_attrs(const Shape& shape) {
    Attrs a;
    if (shape.is_circle()) {
        a["shape"] = std::string("circle");
        a["extents"] = std::vector<double>{shape.radius()};
    } else {
        const auto& b = std::get<Box>(shape.footprint());
        a["shape"] = std::string("box");
        a["extents"] = std::vector<double>{b.half_x, b.half_y};
    }
    a["height"] = shape.height();
    return a;
}

std::optional<Shape> attrs_shape(const Attrs& attrs) {
    auto kind = attr_text(attrs, "shape");
    auto ext = attr_vec(attrs, "extents");
    const double h = attr_real(attrs, "height").value_or(0.0);
    if (!kind || !ext) return std::nullopt;
    if (*kind == "circle" && ext->size() == 1) return Shape::circle((*ext)[0], h);
    if (*kind == "box" && ext->size() == 2) return Shape::box((*ext)[0], (*ext)[1], h);
    return std::nullopt;
}

PerceptionAgent::PerceptionAgent(WorkingMemory& wm, RobotDescription robot, double timeout)
    : wm_(wm), robot_(robot), timeout_(timeout) {}

std::optional<NodeId> PerceptionAgent::node_for(std::int64_t track_id) const {
    auto it = tracks_.find(track_id);
    if (it == tracks_.end()) return std::nullopt;
    return it->second.node;
}

Version PerceptionAgent::publish(const std::vector<Detection>& detections, const Pose2& robot_pose,
                                 double time) {
    std::vector<Edit> edits;
    Attrs robot_attrs = pose_attrs(robot_pose);
    if (robot_node_ == 0) {
        robot_node_ = wm_.new_id();
        robot_attrs["radius"] = robot_.radius;
        robot_attrs["height"] = robot_.height;
        robot_attrs["speed_limit"] = robot_.speed_limit;
        robot_attrs["accel_limit"] = robot_.accel_limit;
        robot_attrs["room"] = std::vector<double>{robot_.room.min_x, robot_.room.min_y,
                                                  robot_.room.max_x, robot_.room.max_y};
        edits.push_back(edit::AddNode{robot_node_, NodeKind::robot, robot_attrs});
    } else {
        edits.push_back(edit::UpdateNode{robot_node_, robot_attrs, {}});
    }

    for (const auto& d : detections) {
        Attrs attrs = shape_attrs(d.shape);
        attrs["track_id"] = d.track_id;
        attrs["class"] = d.cls;
        attrs["last_seen"] = time;
        attrs["dynamic"] = d.dynamic;
        if (d.cls == "person") {
            attrs["eye_height"] = d.eye_height;
        }
        const NodeKind kind = d.cls == "person" ? NodeKind::person : NodeKind::object;
        Edge rt{robot_node_, 0, EdgeLabel::rt, pose_attrs(d.pose)};
        auto it = tracks_.find(d.track_id);
        if (it == tracks_.end()) {
            const NodeId id = wm_.new_id();
            tracks_[d.track_id] = {id, time};
            rt.to = id;
            edits.push_back(edit::AddNode{id, kind, attrs});
            edits.push_back(edit::AddEdge{rt});
        } else {
            it->second.last_seen = time;
            rt.to = it->second.node;
            edits.push_back(edit::UpdateNode{it->second.node, attrs, {}});
            edits.push_back(edit::UpdateEdge{rt});
        }
    }

    for (auto it = tracks_.begin(); it != tracks_.end();) {
        if (time - it->second.last_seen > timeout_ + 1e-9) {
            edits.push_back(edit::RemoveNode{it->second.node});
            it = tracks_.erase(it);
        } else {
            ++it;
        }
    }
    return wm_.transact(edits);
}

}  // namespace atm
