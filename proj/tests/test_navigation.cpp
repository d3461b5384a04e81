#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "atm/navigation.hpp"
#include "grid_oracle.hpp"

using namespace atm;

namespace {

const Bounds kSquare{-2.0, -2.0, 2.0, 2.0};

double cross_track(Vec2 p, const Path& path) {
    double best = distance(p, path.waypoints.front().position());
    for (std::size_t i = 1; i < path.waypoints.size(); ++i) {
        const Vec2 a = path.waypoints[i - 1].position();
        const Vec2 ab = path.waypoints[i].position() - a;
        const double len2 = dot(ab, ab);
        const double t = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, distance(p, a + ab * t));
    }
    return best;
}

struct Run {
    std::vector<Vec2> trace;
    std::vector<double> progress;
    int ticks = 0;
};

Run drive(PathFollower& f, Vec2 p, double dt, int max_ticks = 10000) {
    Run r;
    r.trace.push_back(p);
    while (r.ticks < max_ticks) {
        const auto cmd = f.command(p);
        if (!cmd) break;
        r.progress.push_back(f.progress());
        p = p + *cmd * dt;
        r.trace.push_back(p);
        ++r.ticks;
    }
    return r;
}

}  // namespace

TEST_CASE("no obstacles leaves every cell free") {
    const std::vector<Obstacle> none;
    const auto g = build_grid(none, 0.3, kSquare, 0.05, 0.05);
    CHECK(g.width() == 80);
    CHECK(g.height() == 80);
    CHECK(g.occupied_count() == 0);
}

TEST_CASE("degenerate bounds and resolution are rejected") {
    const std::vector<Obstacle> none;
    CHECK_THROWS(build_grid(none, 0.3, Bounds{0, 0, 0, 1}, 0.05, 0.05));
    CHECK_THROWS(build_grid(none, 0.3, kSquare, 0.0, 0.05));
}

TEST_CASE("a ball inflates to a disc of half a meter") {
    const std::vector<Obstacle> ball{{Pose2(0.012, -0.007, 0), Shape::circle(0.15, 0.15)}};
    const auto g = build_grid(ball, 0.30, kSquare, 0.05, 0.05);
    const double area = static_cast<double>(g.occupied_count()) * 0.05 * 0.05;
    const double disc = kPi * 0.5 * 0.5;
    const double perimeter_cells = 2 * kPi * 0.5 / 0.05;
    CHECK(std::abs(area - disc) <= perimeter_cells * 0.05 * 0.05);
    for (int j = 0; j < g.height(); ++j) {
        for (int i = 0; i < g.width(); ++i) {
            const double d = distance(g.cell_center(i, j), ball[0].pose.position());
            CHECK(g.occupied(i, j) == (d <= 0.5));
        }
    }
}

TEST_CASE("parallel rasterizer matches the serial reference") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.8, 1.8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Obstacle> obs;
        for (int k = 0; k < 5; ++k) {
            obs.push_back({Pose2(u(rng), u(rng), u(rng)), Shape::box(0.3, 0.1, 0.8)});
            obs.push_back({Pose2(u(rng), u(rng), 0), Shape::circle(0.15, 0.15)});
        }
        const auto a = build_grid(obs, 0.3, kSquare, 0.05, 0.05);
        CHECK(a == build_grid_serial(obs, 0.3, kSquare, 0.05, 0.05));
        CHECK(a == build_grid(obs, 0.3, kSquare, 0.05, 0.05));
    }
}

TEST_CASE("straight plan on an empty grid") {
    const std::vector<Obstacle> none;
    const auto g = build_grid(none, 0.3, Bounds{-1, -1, 1, 5}, 0.05, 0.05);
    const auto r = plan(g, {0, 0}, {0, 4});
    REQUIRE(r.ok());
    CHECK(r.path.total_length == doctest::Approx(4.0).epsilon(0.05 / 4.0));
    CHECK(r.path.total_length == doctest::Approx(polyline_length(r.path.waypoints)).epsilon(1e-9));
}

TEST_CASE("a wall with one gap routes through the gap") {
    // Wall along y = 0 across the square, open between x = 0.8 and x = 1.8.
    const std::vector<Obstacle> wall{{Pose2(-0.6, 0, 0), Shape::box(1.4, 0.05, 1.0)},
                                     {Pose2(1.95, 0, 0), Shape::box(0.05, 0.05, 1.0)}};
    const auto g = build_grid(wall, 0.2, kSquare, 0.05, 0.05);
    const auto r = plan(g, {-1.5, -1.5}, {-1.5, 1.5});
    REQUIRE(r.ok());
    bool through_gap = false;
    for (const auto& w : r.path.waypoints) {
        if (std::abs(w.y) < 0.05) through_gap = through_gap || (w.x > 0.8 && w.x < 1.8);
        const auto cell = g.cell_of(w.position());
        REQUIRE(cell);
    }
    CHECK(through_gap);
    const auto s = g.cell_of({-1.5, -1.5});
    const auto e = g.cell_of({-1.5, 1.5});
    const auto oracle = oracle::dijkstra_cost(g, *s, *e);
    REQUIRE(oracle);
    CHECK(r.grid_cost == *oracle);
}

TEST_CASE("A* cost equals the Dijkstra oracle on random small grids") {
    std::mt19937_64 rng(2024);
    int routed = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto rc = oracle::random_case(rng);
        const auto r = plan(rc.grid, rc.grid.cell_center(rc.start.first, rc.start.second),
                            rc.grid.cell_center(rc.goal.first, rc.goal.second), 0.0);
        const auto expected = oracle::dijkstra_cost(rc.grid, rc.start, rc.goal);
        CHECK(r.ok() == expected.has_value());
        if (r.ok() && expected) {
            ++routed;
            CHECK(r.grid_cost == *expected);
            CHECK(r.grid_cost == static_cast<double>(r.straight_moves) +
                                     std::sqrt(2.0) * static_cast<double>(r.diagonal_moves));
            // Shortcutting never lengthens the route and never enters occupied cells.
            CHECK(r.path.total_length <= r.grid_cost * 0.05 + 1e-9);
            for (std::size_t k = 1; k + 1 < r.path.waypoints.size(); ++k) {
                const auto c = rc.grid.cell_of(r.path.waypoints[k].position());
                REQUIRE(c);
                CHECK_FALSE(rc.grid.occupied(c->first, c->second));
            }
            for (std::size_t k = 1; k < r.path.waypoints.size(); ++k) {
                CHECK(distance(r.path.waypoints[k - 1].position(), r.path.waypoints[k].position()) <=
                      0.05 * std::sqrt(2.0) + 1e-9);
            }
        }
    }
    CHECK(routed > 30);
}

TEST_CASE("plans are deterministic") {
    std::mt19937_64 rng(9);
    const auto rc = oracle::random_case(rng, 0.2, 40);
    const Vec2 s = rc.grid.cell_center(rc.start.first, rc.start.second);
    const Vec2 e = rc.grid.cell_center(rc.goal.first, rc.goal.second);
    const auto a = plan(rc.grid, s, e);
    const auto b = plan(rc.grid, s, e);
    CHECK(a.cells == b.cells);
    CHECK(a.path.waypoints == b.path.waypoints);
}

TEST_CASE("an enclosed goal is unreachable and blocked ends are named") {
    OccupancyGrid g({0, 0}, 0.05, 40, 40);
    for (int k = 20; k <= 30; ++k) {
        g.set(k, 20, true);
        g.set(k, 30, true);
        g.set(20, k, true);
        g.set(30, k, true);
    }
    const auto r = plan(g, g.cell_center(2, 2), g.cell_center(25, 25));
    CHECK(r.status == PlanStatus::no_route);

    for (int j = 0; j < 40; ++j) {
        for (int i = 0; i < 15; ++i) g.set(i, j, true);
    }
    CHECK(plan(g, g.cell_center(2, 2), g.cell_center(35, 35)).status == PlanStatus::start_blocked);
    CHECK(plan(g, g.cell_center(35, 35), g.cell_center(2, 2)).status == PlanStatus::goal_blocked);
    CHECK_THROWS(plan(g, {-1.0, 0.5}, {1.0, 1.0}));
}

TEST_CASE("blocked start within the snap radius is snapped") {
    OccupancyGrid g({0, 0}, 0.05, 40, 40);
    g.set(5, 5, true);
    const auto r = plan(g, g.cell_center(5, 5), g.cell_center(30, 30));
    REQUIRE(r.ok());
    CHECK(r.cells.front() != std::pair{5, 5});
}

TEST_CASE("straight four meters at half a meter per second takes eight seconds") {
    const Path path = Path::from_points({{0, 0}, {0, 4}});
    PathFollower f(path, 0.5, 0.05);
    const auto run = drive(f, {0, 0}, 0.05);
    CHECK(std::abs(run.ticks * 0.05 - 8.0) <= 2 * 0.05 + 1e-9);
    CHECK(distance(run.trace.back(), {0, 4}) <= 0.05);
    for (std::size_t k = 1; k < run.trace.size(); ++k) {
        CHECK(distance(run.trace[k - 1], run.trace[k]) <= 0.5 * 0.05 + 1e-9);
    }
    for (std::size_t k = 1; k < run.progress.size(); ++k) {
        const double dp = run.progress[k] - run.progress[k - 1];
        CHECK(dp > 0.0);
        CHECK(dp <= 0.5 * 0.05 + 1e-9);
    }
}

TEST_CASE("zero-length path finishes at once") {
    PathFollower f(Path::from_points({{1, 1}}), 0.5, 0.05);
    CHECK_FALSE(f.command({1, 1}));
    CHECK(f.finished());
    CHECK_THROWS_WITH(PathFollower(Path{}, 0.5, 0.05), "empty path");
}

TEST_CASE("an L-shaped path is tracked within a tenth of a meter") {
    const std::vector<Obstacle> none;
    const auto g = build_grid(none, 0.3, Bounds{-1, -1, 3, 3}, 0.05, 0.05);
    // Dense resampling as the planner emits it.
    std::vector<Vec2> pts;
    for (int k = 0; k <= 40; ++k) pts.push_back({0.05 * k, 0.0});
    for (int k = 1; k <= 40; ++k) pts.push_back({2.0, 0.05 * k});
    const Path path = Path::from_points(pts);
    PathFollower f(path, 0.5, 0.05);
    const auto run = drive(f, {0, 0}, 0.05);
    REQUIRE(f.finished());
    double worst = 0.0;
    for (const auto& p : run.trace) worst = std::max(worst, cross_track(p, path));
    CHECK(worst < 0.1);
}

TEST_CASE("velocity limiting clamps speed and acceleration") {
    const Vec2 v = limit_velocity({0, 0}, {10, 0}, 0.5, 1.0, 0.05);
    CHECK(v.norm() == doctest::Approx(0.05));
    const Vec2 w = limit_velocity({0.5, 0}, {10, 0}, 0.5, 0.0, 0.05);
    CHECK(w.norm() == doctest::Approx(0.5));
}

TEST_CASE("braking follower stops within its acceleration") {
    PathFollower f(Path::from_points({{0, 0}, {3, 0}}), 1.0, 0.05, 0.3, 0.05, 1.0);
    Vec2 p{0, 0};
    Vec2 v{0, 0};
    for (int k = 0; k < 2000; ++k) {
        const auto cmd = f.command(p);
        if (!cmd) break;
        v = limit_velocity(v, *cmd, 1.0, 1.0, 0.05);
        p = p + v * 0.05;
    }
    CHECK(f.finished());
    CHECK(p.x <= 3.0 + 0.06);
}
