#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "atm/geometry.hpp"

namespace atm {

struct Bounds {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    bool contains(Vec2 p) const {
        return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y;
    }
};

struct NavConfig {
    double resolution = 0.05;
    double margin = 0.10;
    double lookahead = 0.3;
    double snap_radius = 0.3;
    double arrive_tolerance = 0.05;
};

class OccupancyGrid {
public:
    OccupancyGrid() = default;
    OccupancyGrid(Vec2 origin, double resolution, int width, int height);

    Vec2 origin() const { return origin_; }
    double resolution() const { return resolution_; }
    int width() const { return width_; }
    int height() const { return height_; }

    bool in_bounds(int i, int j) const { return i >= 0 && j >= 0 && i < width_ && j < height_; }
    bool occupied(int i, int j) const { return cells_[index(i, j)] != 0; }
    void set(int i, int j, bool occ) { cells_[index(i, j)] = occ ? 1 : 0; }
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(i);
    }
    Vec2 cell_center(int i, int j) const;
    /// Cell containing `p`; nullopt outside the grid.
    std::optional<std::pair<int, int>> cell_of(Vec2 p) const;
    std::size_t occupied_count() const;

    const std::vector<std::uint8_t>& cells() const { return cells_; }
    std::vector<std::uint8_t>& cells() { return cells_; }

    friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

private:
    Vec2 origin_;
    double resolution_ = 0.0;
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> cells_;
};

/// A cell is occupied iff its centre lies within mover_radius + margin of an obstacle footprint.
/// Rows are rasterized in parallel.
OccupancyGrid build_grid(std::span<const Obstacle> obstacles, double mover_radius,
                         const Bounds& bounds, double resolution, double margin);
/// Single-threaded reference rasterizer.
OccupancyGrid build_grid_serial(std::span<const Obstacle> obstacles, double mover_radius,
                                const Bounds& bounds, double resolution, double margin);

struct Path {
    std::vector<Pose2> waypoints;
    double total_length = 0.0;

    static Path from_points(const std::vector<Vec2>& points);
};

double polyline_length(std::span<const Pose2> points);

enum class PlanStatus { ok, start_blocked, goal_blocked, no_route };
const char* to_string(PlanStatus status);

struct PlanResult {
    PlanStatus status = PlanStatus::no_route;
    Path path;
    /// Cost of the raw cell route before shortcutting, in cell units.
    double grid_cost = 0.0;
    std::int64_t straight_moves = 0;
    std::int64_t diagonal_moves = 0;
    std::vector<std::pair<int, int>> cells;

    bool ok() const { return status == PlanStatus::ok; }
};

/// 8-connected A* with octile heuristic, diagonal moves forbidden through occupied corners,
/// then line-of-sight shortcutting and resampling at grid resolution.
PlanResult plan(const OccupancyGrid& grid, Vec2 start, Vec2 goal, double snap_radius = 0.3);

/// Clamps a velocity command to the speed limit and the reachable change in one tick.
Vec2 limit_velocity(Vec2 previous, Vec2 command, double speed_limit, double accel_limit, double dt);

/// Pure-pursuit waypoint follower producing holonomic velocity commands.
class PathFollower {
public:
    PathFollower() = default;
    /// `brake_accel` > 0 caps speed so the mover can stop at the end of the path.
    PathFollower(Path path, double speed, double dt, double lookahead = 0.3,
                 double arrive_tolerance = 0.05, double brake_accel = 0.0);

    /// Next command, or nullopt once the mover is within tolerance of the last waypoint.
    std::optional<Vec2> command(Vec2 position);
    bool finished() const { return finished_; }
    const Path& path() const { return path_; }
    /// Arc length of the current projection onto the path.
    double progress() const { return progress_; }

private:
    double project(Vec2 position);
    Vec2 point_at(double s) const;

    Path path_;
    std::vector<double> cumulative_;
    double speed_ = 0.0;
    double dt_ = 0.05;
    double lookahead_ = 0.3;
    double tolerance_ = 0.05;
    double brake_accel_ = 0.0;
    std::size_t segment_ = 0;
    double progress_ = 0.0;
    bool finished_ = false;
};

}  // namespace atm
