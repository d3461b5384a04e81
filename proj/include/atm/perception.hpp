#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "atm/geometry.hpp"
#include "atm/working_memory.hpp"
#include "atm/world.hpp"

namespace atm {

struct NoiseModel {
    double pos_sigma = 0.0;
    double size_inflation_sigma = 0.0;
    std::uint64_t seed = 0;

    bool zero() const { return pos_sigma == 0.0 && size_inflation_sigma == 0.0; }
};

inline constexpr double kMinSizeMultiplier = 0.5;
inline constexpr double kMaxSizeMultiplier = 2.0;

struct PerceptionConfig {
    double sensor_range = 10.0;
    double timeout = 1.0;
    NoiseModel noise;
};

struct Detection {
    std::int64_t track_id = 0;
    std::string cls;
    /// Pose in the robot frame.
    Pose2 pose;
    Shape shape = Shape::circle(0.1, 0.0);
    bool orientation_valid = false;
    bool dynamic = false;
    double eye_height = 1.6;
};

/// Size multiplier drawn for one (seed, tick, entity) triple.
double size_multiplier(const NoiseModel& noise, std::int64_t tick, std::int64_t entity_id);

/// Synthetic detector: every entity in sensor range except the robot, with noise that is a
/// pure function of (seed, tick, entity id). Tracking is perfect, so track ids are entity ids.
std::vector<Detection> observe(const WorldState& world, EntityId robot_id,
                               const PerceptionConfig& config);

/// Static robot description published alongside its localized pose.
struct RobotDescription {
    double radius = 0.35;
    double height = 1.2;
    double speed_limit = 1.0;
    double accel_limit = 1.0;
    Bounds room;
};

/// The agent connecting the detector to working memory: upserts person/object nodes with RT
/// edges from the robot node and drops tracks unseen for longer than the timeout.
class PerceptionAgent {
public:
    PerceptionAgent(WorkingMemory& wm, RobotDescription robot, double timeout = 1.0);

    Version publish(const std::vector<Detection>& detections, const Pose2& robot_pose, double time);

    NodeId robot_node() const { return robot_node_; }
    /// Working-memory node for a track, if it is currently published.
    std::optional<NodeId> node_for(std::int64_t track_id) const;

private:
    WorkingMemory& wm_;
    RobotDescription robot_;
    double timeout_;
    NodeId robot_node_ = 0;
    struct Track {
        NodeId node = 0;
        double last_seen = 0.0;
    };
    std::map<std::int64_t, Track> tracks_;
};

Attrs shape_attrs(const Shape& shape);
std::optional<Shape> attrs_shape(const Attrs& attrs);

}  // namespace atm
