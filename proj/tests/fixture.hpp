// Working memory seeded with one zero-noise observation of a scenario.
#pragma once

#include <string>

#include "atm/consequence.hpp"
#include "atm/perception.hpp"
#include "atm/world.hpp"

namespace atm::fixture {

inline Scenario scenario(const char* name) {
    return load_scenario_file(std::string(ATM_SCENARIO_DIR) + "/" + name);
}

struct Seeded {
    Scenario scenario;
    WorldState world;
    WorkingMemory wm{false};
    PerceptionAgent agent;

    explicit Seeded(Scenario sc)
        : scenario(std::move(sc)), world(initial_state(scenario)), agent(wm, describe(scenario)) {
        const EntityId rid = *scenario.robot_id();
        agent.publish(observe(world, rid, {}), world.entity(rid).pose, 0.0);
    }

    /// Working-memory node of a scenario entity.
    NodeId node(EntityId id) const { return *agent.node_for(id); }
    NodeId person() const { return node(scenario.person_script.person_id); }
    SceneModel scene(const EngineConfig& cfg = {}) const { return scene_from_snapshot(wm.snapshot(), cfg); }

    static RobotDescription describe(const Scenario& sc) {
        const Entity& r = sc.entity(*sc.robot_id());
        return {r.shape.bounding_radius(), r.shape.height(), r.speed_limit, r.accel_limit, sc.room()};
    }
};

}  // namespace atm::fixture
