#include "atm/navigation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <tuple>

namespace atm {

namespace {

constexpr double kSqrt2 = 1.41421356237309504880;

struct GridSetup {
    Vec2 origin;
    int width = 0;
    int height = 0;
};

GridSetup grid_setup(const Bounds& bounds, double resolution) {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) {
        throw std::invalid_argument("grid resolution must be positive");
    }
    const double w = bounds.max_x - bounds.min_x;
    const double h = bounds.max_y - bounds.min_y;
    if (!std::isfinite(w) || !std::isfinite(h) || !(w > 0.0) || !(h > 0.0)) {
        throw std::invalid_argument("degenerate grid bounds");
    }
    return {{bounds.min_x, bounds.min_y}, static_cast<int>(std::ceil(w / resolution - 1e-9)),
            static_cast<int>(std::ceil(h / resolution - 1e-9))};
}

void rasterize_row(OccupancyGrid& grid, int j, std::span<const Obstacle> obstacles, double reach) {
    for (int i = 0; i < grid.width(); ++i) {
        const Vec2 c = grid.cell_center(i, j);
        bool occ = false;
        for (const auto& ob : obstacles) {
            if (footprint_distance(ob.pose, ob.shape, c) <= reach) {
                occ = true;
                break;
            }
        }
        grid.set(i, j, occ);
    }
}

}  // namespace

OccupancyGrid::OccupancyGrid(Vec2 origin, double resolution, int width, int height)
    : origin_(origin),
      resolution_(resolution),
      width_(width),
      height_(height),
      cells_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0) {}

Vec2 OccupancyGrid::cell_center(int i, int j) const {
    return {origin_.x + (i + 0.5) * resolution_, origin_.y + (j + 0.5) * resolution_};
}

std::optional<std::pair<int, int>> OccupancyGrid::cell_of(Vec2 p) const {
    const int i = static_cast<int>(std::floor((p.x - origin_.x) / resolution_));
    const int j = static_cast<int>(std::floor((p.y - origin_.y) / resolution_));
    if (!in_bounds(i, j)) {
        return std::nullopt;
    }
    return std::pair{i, j};
}

std::size_t OccupancyGrid::occupied_count() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

OccupancyGrid build_grid(std::span<const Obstacle> obstacles, double mover_radius,
                         const Bounds& bounds, double resolution, double margin) {
    const auto setup = grid_setup(bounds, resolution);
    OccupancyGrid grid(setup.origin, resolution, setup.width, setup.height);
    const double reach = mover_radius + margin;
#pragma omp parallel for schedule(static)
    for (int j = 0; j < setup.height; ++j) {
        rasterize_row(grid, j, obstacles, reach);
    }
    return grid;
}

OccupancyGrid build_grid_serial(std::span<const Obstacle> obstacles, double mover_radius,
                                const Bounds& bounds, double resolution, double margin) {
    const auto setup = grid_setup(bounds, resolution);
    OccupancyGrid grid(setup.origin, resolution, setup.width, setup.height);
    const double reach = mover_radius + margin;
    for (int j = 0; j < setup.height; ++j) {
        rasterize_row(grid, j, obstacles, reach);
    }
    return grid;
}

double polyline_length(std::span<const Pose2> points) {
    double len = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        len += distance(points[i - 1].position(), points[i].position());
    }
    return len;
}

Path Path::from_points(const std::vector<Vec2>& points) {
    Path p;
    p.waypoints.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        double heading = 0.0;
        if (i + 1 < points.size()) {
            const Vec2 d = points[i + 1] - points[i];
            heading = std::atan2(d.y, d.x);
        } else if (i > 0) {
            const Vec2 d = points[i] - points[i - 1];
            heading = std::atan2(d.y, d.x);
        }
        p.waypoints.emplace_back(points[i], heading);
    }
    p.total_length = polyline_length(p.waypoints);
    return p;
}

const char* to_string(PlanStatus status) {
    switch (status) {
        case PlanStatus::ok: return "ok";
        case PlanStatus::start_blocked: return "start_blocked";
        case PlanStatus::goal_blocked: return "goal_blocked";
        case PlanStatus::no_route: return "no_route";
    }
    return "?";
}

namespace {

std::optional<std::pair<int, int>> snap_to_free(const OccupancyGrid& grid, Vec2 p, double radius) {
    const double res = grid.resolution();
    const int ci = static_cast<int>(std::floor((p.x - grid.origin().x) / res));
    const int cj = static_cast<int>(std::floor((p.y - grid.origin().y) / res));
    if (grid.in_bounds(ci, cj) && !grid.occupied(ci, cj)) {
        return std::pair{ci, cj};
    }
    const int span = static_cast<int>(std::ceil(radius / res)) + 1;
    std::optional<std::pair<int, int>> best;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = cj - span; j <= cj + span; ++j) {
        for (int i = ci - span; i <= ci + span; ++i) {
            if (!grid.in_bounds(i, j) || grid.occupied(i, j)) {
                continue;
            }
            const double d = distance(grid.cell_center(i, j), p);
            // Row-major scan order breaks ties deterministically.
            if (d <= radius && d < best_d) {
                best_d = d;
                best = std::pair{i, j};
            }
        }
    }
    return best;
}

bool segment_free(const OccupancyGrid& grid, Vec2 a, Vec2 b, std::size_t a_cell, std::size_t b_cell) {
    // Visits every cell the segment touches (grid traversal), so corners are never clipped.
    const auto ca = grid.cell_of(a);
    const auto cb = grid.cell_of(b);
    if (!ca || !cb) {
        return false;
    }
    auto blocked = [&](int i, int j) {
        if (!grid.in_bounds(i, j)) return true;
        const std::size_t idx = grid.index(i, j);
        return idx != a_cell && idx != b_cell && grid.occupied(i, j);
    };
    const double res = grid.resolution();
    const Vec2 o = grid.origin();
    int i = ca->first;
    int j = ca->second;
    const Vec2 d = b - a;
    const int si = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
    const int sj = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
    const double inf = std::numeric_limits<double>::infinity();
    const double dtx = si != 0 ? res / std::abs(d.x) : inf;
    const double dty = sj != 0 ? res / std::abs(d.y) : inf;
    double tx = si > 0   ? (o.x + (i + 1) * res - a.x) / d.x
                : si < 0 ? (o.x + i * res - a.x) / d.x
                         : inf;
    double ty = sj > 0   ? (o.y + (j + 1) * res - a.y) / d.y
                : sj < 0 ? (o.y + j * res - a.y) / d.y
                         : inf;
    if (blocked(i, j)) return false;
    constexpr double kTie = 1e-12;
    while (i != cb->first || j != cb->second) {
        if (std::min(tx, ty) > 1.0) break;
        if (std::abs(tx - ty) <= kTie) {
            // Through a cell corner: both side neighbours are touched.
            if (blocked(i + si, j) || blocked(i, j + sj)) return false;
            i += si;
            j += sj;
            tx += dtx;
            ty += dty;
        } else if (tx < ty) {
            i += si;
            tx += dtx;
        } else {
            j += sj;
            ty += dty;
        }
        if (blocked(i, j)) return false;
    }
    return true;
}

}  // namespace

PlanResult plan(const OccupancyGrid& grid, Vec2 start, Vec2 goal, double snap_radius) {
    PlanResult result;
    if (!grid.cell_of(start)) {
        throw std::invalid_argument("plan start outside grid bounds");
    }
    const auto s = snap_to_free(grid, start, snap_radius);
    if (!s) {
        result.status = PlanStatus::start_blocked;
        return result;
    }
    const auto g = snap_to_free(grid, goal, snap_radius);
    if (!g) {
        result.status = PlanStatus::goal_blocked;
        return result;
    }

    const int W = grid.width();
    const int H = grid.height();
    const std::size_t n = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);
    const std::size_t start_idx = grid.index(s->first, s->second);
    const std::size_t goal_idx = grid.index(g->first, g->second);

    constexpr std::int32_t kUnset = -1;
    std::vector<double> gcost(n, std::numeric_limits<double>::infinity());
    std::vector<std::int32_t> n_straight(n, 0);
    std::vector<std::int32_t> n_diag(n, 0);
    std::vector<std::int32_t> parent(n, kUnset);
    std::vector<std::uint8_t> closed(n, 0);

    auto heuristic = [&](int i, int j) {
        const int dx = std::abs(i - g->first);
        const int dy = std::abs(j - g->second);
        return static_cast<double>(std::max(dx, dy) - std::min(dx, dy)) +
               kSqrt2 * static_cast<double>(std::min(dx, dy));
    };

    // Ordered by f, then by heuristic, then by cell index.
    using Entry = std::tuple<double, double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    gcost[start_idx] = 0.0;
    open.emplace(heuristic(s->first, s->second), heuristic(s->first, s->second), start_idx);

    static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

    bool found = false;
    while (!open.empty()) {
        const auto [f, h, idx] = open.top();
        open.pop();
        if (closed[idx]) {
            continue;
        }
        closed[idx] = 1;
        if (idx == goal_idx) {
            found = true;
            break;
        }
        const int i = static_cast<int>(idx % static_cast<std::size_t>(W));
        const int j = static_cast<int>(idx / static_cast<std::size_t>(W));
        for (int k = 0; k < 8; ++k) {
            const int ni = i + kDx[k];
            const int nj = j + kDy[k];
            if (!grid.in_bounds(ni, nj) || grid.occupied(ni, nj)) {
                continue;
            }
            const bool diag = k >= 4;
            if (diag && (grid.occupied(i + kDx[k], j) || grid.occupied(i, j + kDy[k]))) {
                continue;
            }
            const std::size_t nidx = grid.index(ni, nj);
            if (closed[nidx]) {
                continue;
            }
            const std::int32_t ns = n_straight[idx] + (diag ? 0 : 1);
            const std::int32_t nd = n_diag[idx] + (diag ? 1 : 0);
            // Costs are recomputed from move counts so equal routes compare bit-exactly.
            const double cand = static_cast<double>(ns) + kSqrt2 * static_cast<double>(nd);
            if (cand < gcost[nidx]) {
                gcost[nidx] = cand;
                n_straight[nidx] = ns;
                n_diag[nidx] = nd;
                parent[nidx] = static_cast<std::int32_t>(idx);
                const double nh = heuristic(ni, nj);
                open.emplace(cand + nh, nh, nidx);
            }
        }
    }
    if (!found) {
        result.status = PlanStatus::no_route;
        return result;
    }

    std::vector<std::size_t> chain;
    for (std::size_t cur = goal_idx;;) {
        chain.push_back(cur);
        if (cur == start_idx) break;
        cur = static_cast<std::size_t>(parent[cur]);
    }
    std::reverse(chain.begin(), chain.end());

    result.status = PlanStatus::ok;
    result.grid_cost = gcost[goal_idx];
    result.straight_moves = n_straight[goal_idx];
    result.diagonal_moves = n_diag[goal_idx];

    std::vector<Vec2> raw;
    raw.reserve(chain.size() + 2);
    raw.push_back(start);
    for (std::size_t idx : chain) {
        const int i = static_cast<int>(idx % static_cast<std::size_t>(W));
        const int j = static_cast<int>(idx / static_cast<std::size_t>(W));
        result.cells.emplace_back(i, j);
        raw.push_back(grid.cell_center(i, j));
    }
    raw.push_back(goal);

    // The cells holding the true endpoints may be occupied (they were snapped); they are
    // exempt from the line-of-sight test.
    const auto start_cell = grid.cell_of(start);
    const auto goal_cell = grid.cell_of(goal);
    const std::size_t sc = grid.index(start_cell->first, start_cell->second);
    const std::size_t gc = goal_cell ? grid.index(goal_cell->first, goal_cell->second) : n;

    std::vector<Vec2> kept{raw.front()};
    std::size_t anchor = 0;
    while (anchor + 1 < raw.size()) {
        std::size_t next = anchor + 1;
        for (std::size_t k = raw.size() - 1; k > anchor + 1; --k) {
            if (segment_free(grid, raw[anchor], raw[k], sc, gc)) {
                next = k;
                break;
            }
        }
        kept.push_back(raw[next]);
        anchor = next;
    }

    // Resample so consecutive waypoints are at most one cell apart.
    std::vector<Vec2> dense{kept.front()};
    for (std::size_t k = 1; k < kept.size(); ++k) {
        const Vec2 a = kept[k - 1];
        const Vec2 b = kept[k];
        const double len = distance(a, b);
        if (len == 0.0) continue;
        const auto pieces =
            std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / grid.resolution())));
        for (std::size_t m = 1; m <= pieces; ++m) {
            dense.push_back(a + (b - a) * (static_cast<double>(m) / static_cast<double>(pieces)));
        }
    }
    result.path = Path::from_points(dense);
    return result;
}

Vec2 limit_velocity(Vec2 previous, Vec2 command, double speed_limit, double accel_limit, double dt) {
    Vec2 v = command;
    const double mag = v.norm();
    if (mag > speed_limit && mag > 0.0) {
        v = v * (speed_limit / mag);
    }
    if (accel_limit > 0.0 && std::isfinite(accel_limit)) {
        const Vec2 dv = v - previous;
        const double dmag = dv.norm();
        const double max_dv = accel_limit * dt;
        if (dmag > max_dv && dmag > 0.0) {
            v = previous + dv * (max_dv / dmag);
        }
    }
    return v;
}

// --- follower -----------------------------------------------------------------

PathFollower::PathFollower(Path path, double speed, double dt, double lookahead,
                           double arrive_tolerance, double brake_accel)
    : path_(std::move(path)),
      speed_(speed),
      dt_(dt),
      lookahead_(lookahead),
      tolerance_(arrive_tolerance),
      brake_accel_(brake_accel) {
    if (path_.waypoints.empty()) {
        throw std::invalid_argument("empty path");
    }
    if (!(speed > 0.0) || !(dt > 0.0)) {
        throw std::invalid_argument("follower speed and dt must be positive");
    }
    cumulative_.assign(path_.waypoints.size(), 0.0);
    for (std::size_t i = 1; i < path_.waypoints.size(); ++i) {
        cumulative_[i] = cumulative_[i - 1] +
                         distance(path_.waypoints[i - 1].position(), path_.waypoints[i].position());
    }
}

Vec2 PathFollower::point_at(double s) const {
    const auto& w = path_.waypoints;
    if (s <= 0.0) return w.front().position();
    if (s >= cumulative_.back()) return w.back().position();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
    const double seg = cumulative_[i] - cumulative_[i - 1];
    const double t = seg > 0.0 ? (s - cumulative_[i - 1]) / seg : 0.0;
    return w[i - 1].position() + (w[i].position() - w[i - 1].position()) * t;
}

double PathFollower::project(Vec2 position) {
    const auto& w = path_.waypoints;
    if (w.size() == 1) {
        return 0.0;
    }
    // Search a short window ahead of the last projection so progress never runs backwards.
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = progress_;
    std::size_t best_seg = segment_;
    const double window_end = progress_ + lookahead_ + 2.0 * speed_ * dt_ + 0.5;
    for (std::size_t i = segment_; i + 1 < w.size(); ++i) {
        if (cumulative_[i] > window_end) break;
        const Vec2 a = w[i].position();
        const Vec2 b = w[i + 1].position();
        const Vec2 ab = b - a;
        const double len2 = dot(ab, ab);
        double t = len2 > 0.0 ? dot(position - a, ab) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double s = cumulative_[i] + t * std::sqrt(len2);
        if (s < progress_) continue;
        const double d = distance(position, a + ab * t);
        if (d < best_d) {
            best_d = d;
            best_s = s;
            best_seg = i;
        }
    }
    segment_ = best_seg;
    return best_s;
}

std::optional<Vec2> PathFollower::command(Vec2 position) {
    if (finished_) {
        return std::nullopt;
    }
    const Vec2 end = path_.waypoints.back().position();
    const double to_end = distance(position, end);
    if (to_end <= tolerance_) {
        finished_ = true;
        return std::nullopt;
    }
    progress_ = project(position);
    const double total = cumulative_.back();
    const double remaining = std::max(total - progress_, to_end);
    const Vec2 look = point_at(std::min(progress_ + lookahead_, total));
    Vec2 dir = look - position;
    double dn = dir.norm();
    if (dn < 1e-9) {
        dir = end - position;
        dn = dir.norm();
    }
    double mag = std::min(speed_, remaining / dt_);
    if (brake_accel_ > 0.0) {
        mag = std::min(mag, std::sqrt(2.0 * brake_accel_ * remaining));
    }
    return dir * (mag / dn);
}

}  // namespace atm
