#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "atm/consequence.hpp"
#include "atm/working_memory.hpp"

namespace atm {

enum class SearchOrder {
    /// Objects sorted by distance to the predicted collision point.
    collision_distance,
    /// Objects in node-id order.
    index,
};

SearchOrder search_order_from_string(const std::string& text);
const char* to_string(SearchOrder order);

struct AtmConfig {
    double gaze_min = deg_to_rad(10.0);
    double gaze_max = deg_to_rad(50.0);
    int gaze_samples = 3;
    std::vector<std::string> actions{"move_to"};
    int max_people = 4;
    SearchOrder search_order = SearchOrder::collision_distance;
    /// Sides of each object the robot may stop at: the approach policy's own side first, then
    /// this many evenly spaced bearings nearest the policy anchor first. 0 keeps only the first.
    int approach_samples = 8;

    void validate() const;
};

/// Uniform samples over [gaze_min, gaze_max], endpoints included.
std::vector<double> sample_gazes(const AtmConfig& config);

struct GuessResult {
    Version version = 0;
    bool committed = false;
    std::size_t intentions = 0;
    std::size_t risky = 0;
    /// Records whose simulation failed; they are committed with c unknown.
    std::size_t failed = 0;
};

/// Intention guessing and enacting: for every person, in-view target, action and sampled gaze,
/// simulate the intention and annotate working memory with the outcome. Simulations run in
/// parallel; results are committed in one transaction in enumeration order.
GuessResult guess_intentions(WorkingMemory& wm, const AtmConfig& atm, const EngineConfig& engine,
                             const TraceHook& trace = {});
/// Same sweep with every simulation run on the calling thread.
GuessResult guess_intentions_serial(WorkingMemory& wm, const AtmConfig& atm,
                                    const EngineConfig& engine, const TraceHook& trace = {});

/// Targets a person could be heading to: objects in view even under the lowest sampled gaze.
std::vector<NodeId> person_targets(const SceneModel& scene, const SceneEntity& person,
                                   const AtmConfig& atm, const EngineConfig& engine);

IntentionRecord intention_from_node(const Node& node);

struct Candidate {
    NodeId risky_intention = 0;
    IntentionRecord robot;
    SimOutcome outcome;
    bool failed = false;
};

/// Robot candidates in search order for the risky intentions of `snapshot`. With
/// `stop_at_first`, evaluation ends at the first candidate that cancels its risk.
std::vector<Candidate> evaluate_candidates(const Snapshot& snapshot, const AtmConfig& atm,
                                           const EngineConfig& engine, bool stop_at_first,
                                           const TraceHook& trace = {});

struct RobotAction {
    NodeId node = 0;
    NodeId resolves = 0;
    IntentionRecord record;
    SimOutcome outcome;
    Version version = 0;
};

/// Action selection: commits the first robot intention whose co-simulation cancels a risk.
std::optional<RobotAction> select_action(WorkingMemory& wm, const AtmConfig& atm,
                                         const EngineConfig& engine, const TraceHook& trace = {});

struct ReactionSample {
    NodeId intention = 0;
    std::optional<double> seconds;
};

/// Wall-clock time from a risk being committed to the commit of the robot intention resolving
/// it; absent when nothing resolves the risk.
std::vector<ReactionSample> reaction_timer(const WorkingMemory& wm);

/// Runs both agents on their own threads, coordinating only through working memory.
class AgentRunner {
public:
    AgentRunner(WorkingMemory& wm, AtmConfig atm, EngineConfig engine,
                std::chrono::milliseconds min_guess_interval = std::chrono::milliseconds(200));
    ~AgentRunner();
    AgentRunner(const AgentRunner&) = delete;
    AgentRunner& operator=(const AgentRunner&) = delete;

    void start();
    void stop();
    std::size_t guess_sweeps() const { return guess_sweeps_; }
    std::size_t select_sweeps() const { return select_sweeps_; }

private:
    void guess_loop();
    void select_loop();

    WorkingMemory& wm_;
    AtmConfig atm_;
    EngineConfig engine_;
    std::chrono::milliseconds interval_;
    std::atomic<bool> running_{false};
    std::atomic<std::size_t> guess_sweeps_{0};
    std::atomic<std::size_t> select_sweeps_{0};
    std::shared_ptr<Subscription> percepts_;
    std::shared_ptr<Subscription> intentions_;
    std::thread guesser_;
    std::thread selector_;
};

}  // namespace atm
