#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <variant>

namespace atm {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

inline constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wraps an angle into (-pi, pi].
double normalize_angle(double angle);

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
    friend Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
    friend bool operator==(Vec2 a, Vec2 b) = default;

    double norm() const { return std::hypot(x, y); }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Rigid planar transform. theta is kept in (-pi, pi].
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Pose2() = default;
    Pose2(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}
    Pose2(Vec2 p, double theta_) : Pose2(p.x, p.y, theta_) {}

    Vec2 position() const { return {x, y}; }
    friend bool operator==(const Pose2& a, const Pose2& b) = default;
};

Pose2 compose(const Pose2& a, const Pose2& b);
Pose2 inverse(const Pose2& p);
/// Maps a point given in the frame of `frame` into the parent frame.
Vec2 transform_point(const Pose2& frame, Vec2 local);

struct Circle {
    double radius = 0.0;
    friend bool operator==(const Circle&, const Circle&) = default;
};

/// Axis-aligned in the body frame.
struct Box {
    double half_x = 0.0;
    double half_y = 0.0;
    friend bool operator==(const Box&, const Box&) = default;
};

/// Planar footprint plus the height of the body's top above the floor.
class Shape {
public:
    static Shape circle(double radius, double height);
    static Shape box(double half_x, double half_y, double height);

    bool is_circle() const { return std::holds_alternative<Circle>(footprint_); }
    const std::variant<Circle, Box>& footprint() const { return footprint_; }
    double height() const { return height_; }
    /// Circle radius; throws for boxes.
    double radius() const;
    /// Radius of the smallest disc around the body origin containing the footprint.
    double bounding_radius() const;
    /// Same body with every planar extent multiplied by `factor`.
    Shape scaled(double factor) const;
    /// Same body with every planar extent grown by `pad` meters.
    Shape padded(double pad) const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    Shape(std::variant<Circle, Box> footprint, double height);

    std::variant<Circle, Box> footprint_;
    double height_ = 0.0;
};

/// A person's view volume: horizontal sector plus the vertical gaze cutoff.
struct Frustum {
    double half_angle = deg_to_rad(60.0);
    double range = 8.0;
    double gaze_depression = deg_to_rad(30.0);
    /// Bodies whose top reaches this height (or eye level) are noticed regardless of gaze.
    double tall_height = 1.0;
};

struct Obstacle {
    Pose2 pose;
    Shape shape;
};

/// Distance from `point` to the footprint of `shape` placed at `pose`; zero inside.
double footprint_distance(const Pose2& pose, const Shape& shape, Vec2 point);

/// Point of the footprint boundary closest to `point` (the point itself when inside).
Vec2 closest_footprint_point(const Pose2& pose, const Shape& shape, Vec2 point);

/// True when a disc of `radius` at `center` overlaps the footprint.
bool disc_overlaps(Vec2 center, double radius, const Pose2& pose, const Shape& shape);

/// Perceptual inclusion test: planar range, horizontal bearing, and vertical gaze.
bool in_frustum(const Pose2& observer, double eye_height, const Frustum& frustum,
                const Pose2& body_pose, const Shape& body);

struct SweptHit {
    double arc_length = 0.0;
    std::size_t obstacle_index = 0;
    Vec2 position;
};

inline constexpr double kDefaultCollisionStep = 0.05;

/// Walks `path` in arc-length increments of at most `step` and reports the first
/// place where the circular mover overlaps any obstacle.
std::optional<SweptHit> swept_collision(std::span<const Pose2> path, const Shape& mover,
                                        std::span<const Obstacle> obstacles,
                                        double step = kDefaultCollisionStep);

}  // namespace atm
