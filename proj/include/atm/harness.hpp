#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atm/agents.hpp"
#include "atm/consequence.hpp"
#include "atm/perception.hpp"
#include "atm/world.hpp"

namespace atm {

struct HarnessConfig {
    AtmConfig atm;
    EngineConfig engine;
    PerceptionConfig perception;
    PersonModel person;
    /// Simulated seconds between intention sweeps during an episode.
    double guess_period = 0.5;
    /// Episodes stop after this many simulated seconds.
    double episode_timeout = 60.0;
    /// Grow internal-simulator bodies to cover the configured perception noise.
    bool noise_margins = true;
    /// Fixed gaze of the human-steered person in live mode.
    double hitl_gaze_deg = 20.0;
};

/// Reads a config document (`atm`, `nav`, `perception`, `person`, `engine`, `harness`, `hitl`
/// sections); unknown keys are rejected.
HarnessConfig load_config(const nlohmann::json& document, HarnessConfig base = {});
HarnessConfig load_config_file(const std::string& path, HarnessConfig base = {});

struct EpisodeResult {
    std::uint64_t seed = 0;
    bool discarded = false;
    bool truth_collision = false;
    bool predicted_risky = false;
    bool action_found = false;
    /// Wall-clock seconds; kept out of the results file.
    std::optional<double> reaction_time;
    std::optional<std::int64_t> selected_target;
    bool final_person_collided = false;
    /// An agent or simulation error aborted the episode; it is also marked discarded.
    bool failed = false;
    /// The committed robot action re-verified as risk-cancelling by an independent co-simulation.
    bool action_verified = false;

    friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

struct MetricsReport {
    std::size_t total = 0;
    std::size_t discarded = 0;
    std::size_t failed = 0;
    std::size_t valid = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    double accuracy = 0.0;
    double fp_rate = 0.0;
    double fn_rate = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double f2 = 0.0;
    std::size_t reaction_count = 0;
    double reaction_mean = 0.0;
    double reaction_std = 0.0;
    /// Share of predicted-risky episodes that produced a robot action.
    double detected_and_action_rate = 0.0;
    /// Share of truth-collision episodes that got an action and ended without a person collision.
    double effective_intervention_rate = 0.0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

double f_beta(double precision, double recall, double beta);
/// Rate metrics for a confusion matrix over `tp + fp + tn + fn` valid episodes.
MetricsReport metrics_from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
MetricsReport compute_metrics(const std::vector<EpisodeResult>& results);
nlohmann::json metrics_to_json(const MetricsReport& report);

/// Per-episode seed: splitmix64(master_seed + index).
std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t index);

struct EpisodeTrace {
    nlohmann::json records = nlohmann::json::array();
};

/// Runs one episode on `scenario` as given (no resampling).
EpisodeResult run_episode(const Scenario& scenario, const HarnessConfig& config,
                          EpisodeTrace* trace = nullptr);

/// Ground truth: the scripted person walks the un-intervened world with a motionless robot.
bool truth_collision(const Scenario& scenario, const HarnessConfig& config);

/// Samples episode `index` of a batch from the base scenario and runs it.
EpisodeResult run_batch_episode(const Scenario& base, std::uint64_t master_seed, std::uint64_t index,
                                const HarnessConfig& config);

/// Episodes run in parallel; results come back in episode order.
std::vector<EpisodeResult> run_batch(const Scenario& base, std::size_t n, std::uint64_t master_seed,
                                     const HarnessConfig& config);
std::vector<EpisodeResult> run_batch_serial(const Scenario& base, std::size_t n,
                                            std::uint64_t master_seed, const HarnessConfig& config);

/// Deterministic per-episode columns.
void write_results_csv(const std::string& path, const std::vector<EpisodeResult>& results);
std::vector<EpisodeResult> read_results_csv(const std::string& path);
/// Wall-clock reaction times, one row per episode, keyed by seed.
void write_timings_csv(const std::string& path, const std::vector<EpisodeResult>& results);
void merge_timings_csv(const std::string& path, std::vector<EpisodeResult>& results);

}  // namespace atm
