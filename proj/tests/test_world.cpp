#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "atm/world.hpp"

using namespace atm;
using nlohmann::json;

namespace {

std::string scenario_path(const char* name) { return std::string(ATM_SCENARIO_DIR) + "/" + name; }

json nominal_doc() {
    std::ifstream in(scenario_path("nominal.json"));
    return json::parse(in);
}

std::string load_error(const json& doc) {
    try {
        load_scenario(doc);
    } catch (const ScenarioError& ex) {
        return ex.what();
    }
    return {};
}

std::vector<std::string> classes(const Scenario& sc) {
    std::vector<std::string> out;
    for (const auto& e : sc.entities) out.push_back(e.cls);
    std::sort(out.begin(), out.end());
    return out;
}

// Asymptotic Kolmogorov survival function.
double ks_p_value(double d, std::size_t n) {
    const double sn = std::sqrt(static_cast<double>(n));
    const double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double p = 0.0;
    for (int k = 1; k < 100; ++k) {
        p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    }
    return std::clamp(p, 0.0, 1.0);
}

Scenario lone_person() {
    Scenario sc;
    sc.width = 10.0;
    sc.depth = 10.0;
    Entity p;
    p.id = 7;
    p.cls = "person";
    p.shape = Shape::circle(0.3, 1.7);
    p.dynamic = true;
    p.speed_limit = 0.5;
    p.accel_limit = 10.0;
    sc.entities.push_back(p);
    return sc;
}

}  // namespace

TEST_CASE("nominal scenario has a robot, a person, and three objects") {
    const Scenario sc = load_scenario_file(scenario_path("nominal.json"));
    CHECK(classes(sc) == std::vector<std::string>{"ball", "couch", "door", "person", "robot"});
    REQUIRE(sc.robot_id());
    CHECK(sc.entity(*sc.robot_id()).shape.height() == doctest::Approx(1.2));
}

TEST_CASE("real-world scenario carries backpack and chair") {
    const Scenario sc = load_scenario_file(scenario_path("real_world.json"));
    const auto cls = classes(sc);
    CHECK(std::count(cls.begin(), cls.end(), "backpack") == 1);
    CHECK(std::count(cls.begin(), cls.end(), "chair") == 1);
}

TEST_CASE("scenario round-trips through its document form") {
    const Scenario sc = load_scenario_file(scenario_path("nominal.json"));
    const Scenario again = load_scenario(scenario_to_json(sc));
    CHECK(scenario_to_json(again) == scenario_to_json(sc));
}

TEST_CASE("bad scenario documents are rejected with the offending entity") {
    json doc = nominal_doc();
    doc["entities"][2]["id"] = 1;
    CHECK(load_error(doc).find("duplicate id") != std::string::npos);

    doc = nominal_doc();
    doc["entities"][3]["pose"] = {40.0, 0.0, 0.0};
    const auto msg = load_error(doc);
    CHECK(msg.find("entity 4") != std::string::npos);
    CHECK(msg.find("outside room") != std::string::npos);

    doc = nominal_doc();
    doc["entities"][0]["colour"] = "red";
    CHECK(load_error(doc).find("unknown field 'colour'") != std::string::npos);

    doc = nominal_doc();
    doc["entities"][2]["shape"] = {{"circle", {{"r", -0.1}}}};
    CHECK_FALSE(load_error(doc).empty());

    CHECK_THROWS_AS(load_scenario_file(scenario_path("missing.json")), ScenarioError);
}

TEST_CASE("sampling is deterministic and radius zero changes nothing") {
    const Scenario base = load_scenario_file(scenario_path("nominal.json"));
    CHECK(scenario_to_json(sample_scenario(base, 42)) == scenario_to_json(sample_scenario(base, 42)));
    CHECK(scenario_to_json(sample_scenario(base, 42)) != scenario_to_json(sample_scenario(base, 43)));
    Scenario still = base;
    still.sampling.radius = 0.0;
    const Scenario s = sample_scenario(still, 42);
    for (std::size_t i = 0; i < s.entities.size(); ++i) CHECK(s.entities[i].pose == base.entities[i].pose);
}

TEST_CASE("sampled placements never overlap and stay in the room") {
    const Scenario base = load_scenario_file(scenario_path("nominal.json"));
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const Scenario s = sample_scenario(base, seed);
        for (EntityId id : base.sampling.ids) {
            CHECK(distance(s.entity(id).pose.position(), base.entity(id).pose.position()) <= 1.5 + 1e-12);
        }
        const WorldState w = initial_state(s);
        const WorldState next = step(w, {}, s.room());
        CHECK(next.collision_events.empty());
    }
}

TEST_CASE("displacement radii are uniform in area") {
    Scenario base = lone_person();
    base.sampling = {1.5, {7}};
    std::vector<double> r;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        r.push_back(sample_scenario(base, seed).entity(7).pose.position().norm());
    }
    std::sort(r.begin(), r.end());
    double d = 0.0;
    const double n = static_cast<double>(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double cdf = r[i] * r[i] / (1.5 * 1.5);
        d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
    }
    CHECK(ks_p_value(d, r.size()) > 0.01);
}

TEST_CASE("an impossible sample is reported") {
    Scenario base = lone_person();
    base.width = 0.6;
    base.depth = 0.6;
    base.sampling = {1.5, {7}};
    CHECK_THROWS_WITH_AS(sample_scenario(base, 1), "unsatisfiable sample for entity 7", ScenarioError);
}

TEST_CASE("one Euler step at half a meter per second") {
    const Scenario sc = lone_person();
    const WorldState w = initial_state(sc);
    const WorldState n = step(w, {{7, {0.0, 0.5}}}, sc.room());
    CHECK(n.entity(7).pose.x == doctest::Approx(0.0));
    CHECK(n.entity(7).pose.y == doctest::Approx(0.025));
    CHECK(n.time() == 0.05);
}

TEST_CASE("oversized commands are clamped to the speed limit") {
    const Scenario sc = lone_person();
    WorldState w = initial_state(sc);
    for (int k = 0; k < 40; ++k) {
        const Vec2 before = w.entity(7).pose.position();
        w = step(w, {{7, {10.0, 0.0}}}, sc.room());
        const double moved = distance(before, w.entity(7).pose.position());
        CHECK(moved <= 0.5 * 0.05 + 1e-9);
        if (k > 0) CHECK(moved == doctest::Approx(0.025));
    }
    CHECK(w.tick == 40);
    CHECK(w.time() == 40 * 0.05);
}

TEST_CASE("commands for static bodies are errors") {
    const Scenario sc = load_scenario_file(scenario_path("nominal.json"));
    CHECK_THROWS(step(initial_state(sc), {{3, {0.1, 0.0}}}, sc.room()));
}

TEST_CASE("walls clamp the body and log an event") {
    const Scenario sc = lone_person();
    WorldState w = initial_state(sc);
    for (int k = 0; k < 500; ++k) w = step(w, {{7, {0.5, 0.0}}}, sc.room());
    CHECK(w.entity(7).pose.x == doctest::Approx(5.0 - 0.3));
    CHECK(std::any_of(w.collision_events.begin(), w.collision_events.end(),
                      [](const CollisionEvent& e) { return e.b == kWallId; }));
    CHECK_FALSE(collided(w, 7));
}

TEST_CASE("walking through the ball logs one event that agrees with the swept test") {
    Scenario sc = lone_person();
    sc.entities[0].pose = Pose2(-2.0, 0.1, 0.0);
    Entity ball;
    ball.id = 8;
    ball.cls = "ball";
    ball.pose = Pose2(0.0, 0.0, 0.0);
    ball.shape = Shape::circle(0.15, 0.15);
    sc.entities.push_back(ball);

    WorldState w = initial_state(sc);
    std::vector<Pose2> realized{w.entity(7).pose};
    for (int k = 0; k < 200; ++k) {
        w = step(w, {{7, {0.5, 0.0}}}, sc.room());
        realized.push_back(w.entity(7).pose);
    }
    std::vector<CollisionEvent> hits;
    for (const auto& e : w.collision_events) {
        if (e.b != kWallId) hits.push_back(e);
    }
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].a == 7);
    CHECK(hits[0].b == 8);

    const std::vector<Obstacle> obstacles{{ball.pose, ball.shape}};
    const auto swept = swept_collision(realized, sc.entities[0].shape, obstacles, 0.025);
    REQUIRE(swept);
    const double event_arc = polyline_length(std::span(realized).first(
        static_cast<std::size_t>(std::lround(hits[0].time / 0.05)) + 1));
    CHECK(std::abs(event_arc - swept->arc_length) <= 0.025 + 1e-9);
}

TEST_CASE("identical command streams give identical worlds") {
    const Scenario sc = sample_scenario(load_scenario_file(scenario_path("nominal.json")), 5);
    auto run = [&] {
        WorldState w = initial_state(sc);
        ScriptedPerson person(sc, w, PersonModel{}, NavConfig{});
        std::vector<Pose2> trace;
        for (int k = 0; k < 300; ++k) {
            std::map<EntityId, Vec2> cmd;
            if (auto c = person.command(w)) cmd[sc.person_script.person_id] = *c;
            w = step(w, cmd, sc.room());
            trace.push_back(w.entity(sc.person_script.person_id).pose);
        }
        return std::pair{trace, w.collision_events};
    };
    CHECK(run() == run());
}

TEST_CASE("the scripted person reaches the couch in the nominal scene") {
    const Scenario sc = load_scenario_file(scenario_path("nominal.json"));
    WorldState w = initial_state(sc);
    ScriptedPerson person(sc, w, PersonModel{}, NavConfig{});
    const EntityId pid = sc.person_script.person_id;
    for (int k = 0; k < 600 && !person.done(); ++k) {
        std::map<EntityId, Vec2> cmd;
        if (auto c = person.command(w)) cmd[pid] = *c;
        const Vec2 before = w.entity(pid).pose.position();
        w = step(w, cmd, sc.room());
        CHECK(distance(before, w.entity(pid).pose.position()) <= 0.5 * 0.05 + 1e-9);
    }
    CHECK(person.done());
    // Low gaze: the ball is never seen, so the walk goes through it.
    CHECK(collided(w, pid));
}
