#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "atm/perception.hpp"

using namespace atm;

namespace {

Scenario nominal() { return load_scenario_file(std::string(ATM_SCENARIO_DIR) + "/nominal.json"); }

RobotDescription describe(const Scenario& sc) {
    const Entity& r = sc.entity(*sc.robot_id());
    return {r.shape.bounding_radius(), r.shape.height(), r.speed_limit, r.accel_limit, sc.room()};
}

// Mean of N(1, sigma) clamped to [lo, hi].
double clamped_gaussian_mean(double sigma, double lo, double hi) {
    auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * kPi); };
    auto cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
    const double a = (lo - 1.0) / sigma;
    const double b = (hi - 1.0) / sigma;
    return 1.0 + sigma * (a * cdf(a) + b * (1.0 - cdf(b)) + phi(a) - phi(b));
}

}  // namespace

TEST_CASE("zero noise reproduces ground truth in the robot frame") {
    const Scenario sc = sample_scenario(nominal(), 17);
    const WorldState w = initial_state(sc);
    const EntityId rid = *sc.robot_id();
    const auto dets = observe(w, rid, {});
    CHECK(dets.size() == sc.entities.size() - 1);
    const Pose2 robot = w.entity(rid).pose;
    for (const auto& d : dets) {
        const Entity& e = w.entity(d.track_id);
        CHECK(d.cls == e.cls);
        CHECK(d.shape == e.shape);
        CHECK(d.pose == compose(inverse(robot), e.pose));
        CHECK(d.orientation_valid == (e.cls == "person"));
    }
}

TEST_CASE("entities beyond sensor range are not reported") {
    const Scenario sc = nominal();
    PerceptionConfig cfg;
    cfg.sensor_range = 2.0;
    const auto dets = observe(initial_state(sc), *sc.robot_id(), cfg);
    for (const auto& d : dets) CHECK(d.pose.position().norm() <= 2.0);
    CHECK(dets.size() < sc.entities.size() - 1);
}

TEST_CASE("noisy observations are deterministic in seed and tick") {
    const Scenario sc = nominal();
    PerceptionConfig cfg;
    cfg.noise = {0.05, 0.25, 99};
    WorldState w = initial_state(sc);
    const auto a = observe(w, *sc.robot_id(), cfg);
    const auto b = observe(w, *sc.robot_id(), cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].pose == b[i].pose);
        CHECK(a[i].shape == b[i].shape);
    }
    w.tick += 1;
    const auto c = observe(w, *sc.robot_id(), cfg);
    CHECK_FALSE(a[0].pose == c[0].pose);
}

TEST_CASE("clamped size multiplier has mean one") {
    const NoiseModel noise{0.0, 0.25, 3};
    double sum = 0.0;
    double lo = 10.0;
    double hi = 0.0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        const double m = size_multiplier(noise, k, 4);
        sum += m;
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    const double mean = sum / n;
    CHECK(std::abs(mean - 1.0) <= 0.01);
    CHECK(std::abs(mean - clamped_gaussian_mean(0.25, kMinSizeMultiplier, kMaxSizeMultiplier)) <= 0.01);
    CHECK(lo >= kMinSizeMultiplier);
    CHECK(hi <= kMaxSizeMultiplier);
}

TEST_CASE("position noise is unbiased") {
    const Scenario sc = nominal();
    PerceptionConfig cfg;
    cfg.noise.pos_sigma = 0.05;
    WorldState w = initial_state(sc);
    const EntityId rid = *sc.robot_id();
    const Pose2 truth = compose(inverse(w.entity(rid).pose), w.entity(3).pose);
    double sx = 0.0;
    double sy = 0.0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) {
        cfg.noise.seed = static_cast<std::uint64_t>(k);
        for (const auto& d : observe(w, rid, cfg)) {
            if (d.track_id != 3) continue;
            sx += d.pose.x;
            sy += d.pose.y;
            CHECK(d.cls == "ball");
        }
    }
    CHECK(std::abs(sx / n - truth.x) <= 3 * 0.05 / 100);
    CHECK(std::abs(sy / n - truth.y) <= 3 * 0.05 / 100);
}

TEST_CASE("publishing upserts nodes with RT edges") {
    const Scenario sc = nominal();
    const WorldState w = initial_state(sc);
    const EntityId rid = *sc.robot_id();
    WorkingMemory wm;
    PerceptionAgent agent(wm, describe(sc));
    auto dets = observe(w, rid, {});

    std::vector<Detection> three(dets.begin(), dets.begin() + 3);
    agent.publish(three, w.entity(rid).pose, 0.0);
    Snapshot s = wm.snapshot();
    CHECK(s.graph().nodes.size() == 4);
    CHECK(s.graph().out_edges(agent.robot_node(), EdgeLabel::rt).size() == 3);

    agent.publish(three, w.entity(rid).pose, 0.05);
    CHECK(wm.snapshot().graph().nodes.size() == 4);

    agent.publish(dets, w.entity(rid).pose, 0.1);
    s = wm.snapshot();
    CHECK(query_people(s).size() == 1);
    CHECK(query_objects(s).size() == 3);
}

TEST_CASE("zero-noise memory geometry equals ground truth") {
    const Scenario sc = sample_scenario(nominal(), 8);
    WorldState w = initial_state(sc);
    const EntityId rid = *sc.robot_id();
    WorkingMemory wm;
    PerceptionAgent agent(wm, describe(sc));
    for (int k = 0; k < 20; ++k) {
        w = step(w, {{rid, {0.3, 0.2}}}, sc.room());
        agent.publish(observe(w, rid, {}), w.entity(rid).pose, w.time());
        const Snapshot s = wm.snapshot();
        const auto robot = attrs_pose(s.graph().find(agent.robot_node())->attrs);
        REQUIRE(robot);
        for (const auto* e : s.graph().out_edges(agent.robot_node(), EdgeLabel::rt)) {
            const Node* n = s.graph().find(e->to);
            const Entity& truth = w.entity(*attr_int(n->attrs, "track_id"));
            const Pose2 world = compose(*robot, *attrs_pose(e->attrs));
            CHECK(std::abs(world.x - truth.pose.x) < 1e-9);
            CHECK(std::abs(world.y - truth.pose.y) < 1e-9);
            CHECK(attrs_shape(n->attrs) == truth.shape);
        }
    }
}

TEST_CASE("a track unseen for 25 ticks is dropped") {
    const Scenario sc = nominal();
    const WorldState w = initial_state(sc);
    const EntityId rid = *sc.robot_id();
    WorkingMemory wm;
    PerceptionAgent agent(wm, describe(sc));
    const auto all = observe(w, rid, {});
    agent.publish(all, w.entity(rid).pose, 0.0);
    const auto ball_node = agent.node_for(3);
    REQUIRE(ball_node);

    std::vector<Detection> without_ball;
    for (const auto& d : all) {
        if (d.track_id != 3) without_ball.push_back(d);
    }
    for (int tick = 1; tick <= 25; ++tick) {
        agent.publish(without_ball, w.entity(rid).pose, tick * 0.05);
        if (tick == 20) CHECK(wm.snapshot().graph().find(*ball_node));
    }
    CHECK_FALSE(wm.snapshot().graph().find(*ball_node));
    CHECK_FALSE(agent.node_for(3));
    CHECK(referentially_intact(wm.snapshot().graph()));
}
