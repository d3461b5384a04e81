#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atm/agents.hpp"
#include "atm/harness.hpp"
#include "atm/perception.hpp"
#include "atm/world.hpp"

namespace atm {

/// Live session state: the world, the robot's perception and agents, and the steered person.
/// Not thread-safe; the server drives it from one thread while the agents run on their own.
class HitlSession {
public:
    HitlSession(Scenario scenario, HarnessConfig config, bool run_agents = true);
    ~HitlSession();
    HitlSession(const HitlSession&) = delete;
    HitlSession& operator=(const HitlSession&) = delete;

    /// Body-frame velocity for the person, applied at the next tick; the last one per tick wins.
    void steer(double vx, double vy);
    /// Reloads the scenario at t = 0 and pauses.
    void reset();
    void start() { running_ = true; }
    void pause() { running_ = false; }
    bool running() const { return running_; }

    /// Advances one tick when running and returns its frame.
    std::optional<nlohmann::json> tick();
    /// Frame for the current state without advancing.
    nlohmann::json frame();

    std::vector<EntityId> subjective_visible_ids() const;
    const WorldState& state() const { return state_; }
    const Scenario& scenario() const { return scenario_; }
    WorkingMemory& memory() { return *wm_; }
    /// Runs one intention sweep and action selection on the calling thread.
    void run_agents_once();

private:
    void rebuild();
    void publish();
    void check_memory_events();
    void drive_robot(std::map<EntityId, Vec2>& commands);

    Scenario scenario_;
    HarnessConfig config_;
    EngineConfig engine_;
    bool run_agents_;
    bool running_ = true;
    EntityId person_id_ = 0;
    EntityId robot_id_ = 0;
    WorldState state_;
    std::unique_ptr<WorkingMemory> wm_;
    std::unique_ptr<PerceptionAgent> perception_;
    std::unique_ptr<AgentRunner> agents_;
    std::optional<Vec2> pending_steer_;
    Vec2 steer_world_;
    std::optional<NodeId> robot_intention_;
    std::optional<PathFollower> robot_follower_;
    bool risk_seen_ = false;
    std::size_t collisions_seen_ = 0;
    std::deque<std::string> events_;
};

/// WebSocket front end: one steering client, any number of observers, frames at the tick rate.
class HitlServer {
public:
    HitlServer(Scenario scenario, HarnessConfig config, unsigned short port,
               std::string static_dir = {}, bool run_agents = true);
    ~HitlServer();

    unsigned short port() const;
    /// Blocks until stop().
    void run();
    void start_background();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace atm
