#include "atm/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace atm {

double normalize_angle(double angle) {
    double a = std::remainder(angle, 2.0 * kPi);
    if (a <= -kPi) {
        a += 2.0 * kPi;
    }
    return a;
}

Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.theta);
    const double s = std::sin(a.theta);
    return Pose2(a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta);
}

Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    return Pose2(-c * p.x - s * p.y, s * p.x - c * p.y, -p.theta);
}

Vec2 transform_point(const Pose2& frame, Vec2 local) {
    const double c = std::cos(frame.theta);
    const double s = std::sin(frame.theta);
    return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y};
}

namespace {

Vec2 to_local(const Pose2& frame, Vec2 world) {
    const double c = std::cos(frame.theta);
    const double s = std::sin(frame.theta);
    const double dx = world.x - frame.x;
    const double dy = world.y - frame.y;
    return {c * dx + s * dy, -s * dx + c * dy};
}

}  // namespace

Shape::Shape(std::variant<Circle, Box> footprint, double height)
    : footprint_(footprint), height_(height) {}

Shape Shape::circle(double radius, double height) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw std::invalid_argument("circle radius must be positive");
    }
    if (!(height >= 0.0)) {
        throw std::invalid_argument("shape height must be non-negative");
    }
    return Shape(Circle{radius}, height);
}

Shape Shape::box(double half_x, double half_y, double height) {
    if (!(half_x > 0.0) || !(half_y > 0.0) || !std::isfinite(half_x) || !std::isfinite(half_y)) {
        throw std::invalid_argument("box extents must be positive");
    }
    if (!(height >= 0.0)) {
        throw std::invalid_argument("shape height must be non-negative");
    }
    return Shape(Box{half_x, half_y}, height);
}

double Shape::radius() const {
    if (const auto* c = std::get_if<Circle>(&footprint_)) {
        return c->radius;
    }
    throw std::logic_error("radius() called on a box shape");
}

double Shape::bounding_radius() const {
    if (const auto* c = std::get_if<Circle>(&footprint_)) {
        return c->radius;
    }
    const auto& b = std::get<Box>(footprint_);
    return std::hypot(b.half_x, b.half_y);
}

Shape Shape::scaled(double factor) const {
    if (const auto* c = std::get_if<Circle>(&footprint_)) {
        return circle(c->radius * factor, height_);
    }
    const auto& b = std::get<Box>(footprint_);
    return box(b.half_x * factor, b.half_y * factor, height_);
}

Shape Shape::padded(double pad) const {
    if (const auto* c = std::get_if<Circle>(&footprint_)) {
        return circle(c->radius + pad, height_);
    }
    const auto& b = std::get<Box>(footprint_);
    return box(b.half_x + pad, b.half_y + pad, height_);
}

Vec2 closest_footprint_point(const Pose2& pose, const Shape& shape, Vec2 point) {
    if (const auto* c = std::get_if<Circle>(&shape.footprint())) {
        const Vec2 d = point - pose.position();
        const double n = d.norm();
        if (n <= c->radius) {
            return point;
        }
        if (n == 0.0) {
            return pose.position() + Vec2{c->radius, 0.0};
        }
        return pose.position() + d * (c->radius / n);
    }
    const auto& b = std::get<Box>(shape.footprint());
    const Vec2 local = to_local(pose, point);
    const Vec2 clamped{std::clamp(local.x, -b.half_x, b.half_x),
                       std::clamp(local.y, -b.half_y, b.half_y)};
    return transform_point(pose, clamped);
}

double footprint_distance(const Pose2& pose, const Shape& shape, Vec2 point) {
    if (const auto* c = std::get_if<Circle>(&shape.footprint())) {
        return std::max(0.0, distance(point, pose.position()) - c->radius);
    }
    const auto& b = std::get<Box>(shape.footprint());
    const Vec2 local = to_local(pose, point);
    const double dx = std::max(0.0, std::abs(local.x) - b.half_x);
    const double dy = std::max(0.0, std::abs(local.y) - b.half_y);
    return std::hypot(dx, dy);
}

bool disc_overlaps(Vec2 center, double radius, const Pose2& pose, const Shape& shape) {
    if (const auto* c = std::get_if<Circle>(&shape.footprint())) {
        // Compare centre separation directly so the circle-circle case is exact.
        return distance(center, pose.position()) < radius + c->radius;
    }
    return footprint_distance(pose, shape, center) < radius;
}

bool in_frustum(const Pose2& observer, double eye_height, const Frustum& frustum,
                const Pose2& body_pose, const Shape& body) {
    const double dx = body_pose.x - observer.x;
    const double dy = body_pose.y - observer.y;
    const double planar = std::hypot(dx, dy);
    if (planar == 0.0) {
        return true;
    }
    if (planar > frustum.range) {
        return false;
    }
    const double bearing = normalize_angle(std::atan2(dy, dx) - observer.theta);
    if (std::abs(bearing) > frustum.half_angle) {
        return false;
    }
    if (body.height() >= std::min(eye_height, frustum.tall_height)) {
        return true;
    }
    const double depression = std::atan2(eye_height - body.height(), planar);
    return depression <= frustum.gaze_depression;
}

std::optional<SweptHit> swept_collision(std::span<const Pose2> path, const Shape& mover,
                                        std::span<const Obstacle> obstacles, double step) {
    if (path.empty()) {
        throw std::invalid_argument("empty path");
    }
    if (!(step > 0.0)) {
        throw std::invalid_argument("collision step must be positive");
    }
    const double r = mover.radius();

    auto probe = [&](Vec2 p, double s) -> std::optional<SweptHit> {
        for (std::size_t k = 0; k < obstacles.size(); ++k) {
            if (disc_overlaps(p, r, obstacles[k].pose, obstacles[k].shape)) {
                return SweptHit{s, k, p};
            }
        }
        return std::nullopt;
    };

    double arc = 0.0;
    if (auto hit = probe(path.front().position(), 0.0)) {
        return hit;
    }
    for (std::size_t i = 1; i < path.size(); ++i) {
        const Vec2 a = path[i - 1].position();
        const Vec2 b = path[i].position();
        const double len = distance(a, b);
        if (len == 0.0) {
            continue;
        }
        const auto pieces = static_cast<std::size_t>(std::ceil(len / step));
        for (std::size_t k = 1; k <= pieces; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(pieces);
            if (auto hit = probe(a + (b - a) * t, arc + len * t)) {
                return hit;
            }
        }
        arc += len;
    }
    return std::nullopt;
}

}  // namespace atm
