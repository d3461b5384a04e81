#include "atm/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

namespace atm {

namespace {

using nlohmann::json;

void check_keys(const json& section, const std::string& name, std::initializer_list<const char*> keys) {
    if (!section.is_object()) throw std::invalid_argument("config: '" + name + "' must be an object");
    for (const auto& [k, v] : section.items()) {
        bool known = false;
        for (const char* key : keys) known = known || k == key;
        if (!known) throw std::invalid_argument("config: unknown key '" + name + "." + k + "'");
    }
}

template <class T>
void read(const json& section, const char* key, T& out) {
    if (section.contains(key)) out = section.at(key).get<T>();
}

}  // namespace

HarnessConfig load_config(const json& doc, HarnessConfig c) {
    check_keys(doc, "config", {"atm", "nav", "perception", "person", "engine", "harness", "hitl"});
    if (doc.contains("atm")) {
        const auto& s = doc["atm"];
        check_keys(s, "atm", {"gaze_min_deg", "gaze_max_deg", "gaze_samples", "admissibility_margin_s",
                              "max_people", "search_order", "actions", "approach_samples"});
        if (s.contains("gaze_min_deg")) c.atm.gaze_min = deg_to_rad(s["gaze_min_deg"].get<double>());
        if (s.contains("gaze_max_deg")) c.atm.gaze_max = deg_to_rad(s["gaze_max_deg"].get<double>());
        read(s, "gaze_samples", c.atm.gaze_samples);
        read(s, "admissibility_margin_s", c.engine.admissibility_margin);
        read(s, "max_people", c.atm.max_people);
        read(s, "approach_samples", c.atm.approach_samples);
        read(s, "actions", c.atm.actions);
        if (s.contains("search_order")) {
            c.atm.search_order = search_order_from_string(s["search_order"].get<std::string>());
        }
    }
    if (doc.contains("nav")) {
        const auto& s = doc["nav"];
        check_keys(s, "nav", {"resolution_m", "margin_m", "lookahead_m", "snap_radius_m", "arrive_tolerance_m"});
        read(s, "resolution_m", c.engine.nav.resolution);
        read(s, "margin_m", c.engine.nav.margin);
        read(s, "lookahead_m", c.engine.nav.lookahead);
        read(s, "snap_radius_m", c.engine.nav.snap_radius);
        read(s, "arrive_tolerance_m", c.engine.nav.arrive_tolerance);
    }
    if (doc.contains("perception")) {
        const auto& s = doc["perception"];
        check_keys(s, "perception", {"sensor_range_m", "pos_sigma_m", "size_inflation_sigma", "timeout_s"});
        read(s, "sensor_range_m", c.perception.sensor_range);
        read(s, "pos_sigma_m", c.perception.noise.pos_sigma);
        read(s, "size_inflation_sigma", c.perception.noise.size_inflation_sigma);
        read(s, "timeout_s", c.perception.timeout);
    }
    if (doc.contains("person")) {
        const auto& s = doc["person"];
        check_keys(s, "person", {"fov_half_angle_deg", "fov_range_m", "speed_mps", "accel_mps2"});
        read(s, "fov_half_angle_deg", c.person.fov_half_angle_deg);
        read(s, "fov_range_m", c.person.fov_range_m);
        read(s, "speed_mps", c.engine.person_speed);
        read(s, "accel_mps2", c.engine.person_accel);
        c.engine.fov_half_angle_deg = c.person.fov_half_angle_deg;
        c.engine.fov_range_m = c.person.fov_range_m;
    }
    if (doc.contains("engine")) {
        const auto& s = doc["engine"];
        check_keys(s, "engine", {"horizon_s", "collision_step_m", "standoff_m", "approach", "noise_margins",
                                   "robot_clearance_m"});
        read(s, "horizon_s", c.engine.horizon);
        read(s, "collision_step_m", c.engine.collision_step);
        read(s, "standoff_m", c.engine.standoff);
        read(s, "robot_clearance_m", c.engine.robot_clearance);
        read(s, "noise_margins", c.noise_margins);
        if (s.contains("approach")) {
            const auto a = s["approach"].get<std::string>();
            if (a == "nearest_to_collision") c.engine.approach = RobotApproach::nearest_to_collision;
            else if (a == "nearest_to_robot") c.engine.approach = RobotApproach::nearest_to_robot;
            else if (a == "nearest_to_person") c.engine.approach = RobotApproach::nearest_to_person;
            else throw std::invalid_argument("config: unknown engine.approach '" + a + "'");
        }
    }
    if (doc.contains("harness")) {
        const auto& s = doc["harness"];
        check_keys(s, "harness", {"guess_period_s", "episode_timeout_s"});
        read(s, "guess_period_s", c.guess_period);
        read(s, "episode_timeout_s", c.episode_timeout);
    }
    if (doc.contains("hitl")) {
        const auto& s = doc["hitl"];
        check_keys(s, "hitl", {"gaze_deg"});
        read(s, "gaze_deg", c.hitl_gaze_deg);
    }
    c.atm.validate();
    if (!(c.guess_period > 0.0) || !(c.episode_timeout > 0.0)) {
        throw std::invalid_argument("config: harness periods must be positive");
    }
    return c;
}

HarnessConfig load_config_file(const std::string& path, HarnessConfig base) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
    return load_config(json::parse(in), base);
}

// --- metrics -------------------------------------------------------------------

double f_beta(double precision, double recall, double beta) {
    const double b2 = beta * beta;
    const double den = b2 * precision + recall;
    return den == 0.0 ? 0.0 : (1.0 + b2) * precision * recall / den;
}

MetricsReport metrics_from_confusion(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    MetricsReport m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    m.valid = tp + fp + tn + fn;
    m.total = m.valid;
    if (m.valid == 0) throw std::invalid_argument("no valid episodes");
    const auto v = static_cast<double>(m.valid);
    m.accuracy = static_cast<double>(tp + tn) / v;
    m.fp_rate = static_cast<double>(fp) / v;
    m.fn_rate = static_cast<double>(fn) / v;
    m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = f_beta(m.precision, m.recall, 1.0);
    m.f2 = f_beta(m.precision, m.recall, 2.0);
    return m;
}

MetricsReport compute_metrics(const std::vector<EpisodeResult>& results) {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0, discarded = 0, failed = 0;
    std::size_t predicted = 0, predicted_with_action = 0, truth = 0, effective = 0;
    std::vector<double> reactions;
    for (const auto& r : results) {
        if (r.failed) ++failed;
        if (r.discarded) {
            ++discarded;
            continue;
        }
        if (r.truth_collision && r.predicted_risky) ++tp;
        else if (!r.truth_collision && r.predicted_risky) ++fp;
        else if (r.truth_collision) ++fn;
        else ++tn;
        if (r.predicted_risky) {
            ++predicted;
            if (r.action_found) ++predicted_with_action;
        }
        if (r.truth_collision) {
            ++truth;
            if (r.action_found && !r.final_person_collided) ++effective;
        }
        if (r.action_found && r.reaction_time) reactions.push_back(*r.reaction_time);
    }
    MetricsReport m = metrics_from_confusion(tp, fp, tn, fn);
    m.total = results.size();
    m.discarded = discarded;
    m.failed = failed;
    m.detected_and_action_rate =
        predicted == 0 ? 0.0 : static_cast<double>(predicted_with_action) / static_cast<double>(predicted);
    m.effective_intervention_rate = truth == 0 ? 0.0 : static_cast<double>(effective) / static_cast<double>(truth);
    m.reaction_count = reactions.size();
    if (!reactions.empty()) {
        double sum = 0.0;
        for (double x : reactions) sum += x;
        m.reaction_mean = sum / static_cast<double>(reactions.size());
        if (reactions.size() > 1) {
            double ss = 0.0;
            for (double x : reactions) ss += (x - m.reaction_mean) * (x - m.reaction_mean);
            m.reaction_std = std::sqrt(ss / static_cast<double>(reactions.size() - 1));
        }
    }
    return m;
}

json metrics_to_json(const MetricsReport& m) {
    return {{"total", m.total},
            {"discarded", m.discarded},
            {"failed", m.failed},
            {"valid", m.valid},
            {"tp", m.tp},
            {"fp", m.fp},
            {"tn", m.tn},
            {"fn", m.fn},
            {"accuracy", m.accuracy},
            {"fp_rate", m.fp_rate},
            {"fn_rate", m.fn_rate},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"f2", m.f2},
            {"reaction_count", m.reaction_count},
            {"reaction_mean", m.reaction_mean},
            {"reaction_std", m.reaction_std},
            {"detected_and_action_rate", m.detected_and_action_rate},
            {"effective_intervention_rate", m.effective_intervention_rate}};
}

// --- episodes -----------------------------------------------------------------

std::uint64_t episode_seed(std::uint64_t master_seed, std::uint64_t index) {
    std::uint64_t x = master_seed + index + 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30u)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27u)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31u);
}

namespace {

EntityId require_robot(const Scenario& scenario) {
    auto id = scenario.robot_id();
    if (!id) throw ScenarioError("scenario has no robot");
    return *id;
}

std::int64_t ticks_for(double seconds, double dt) {
    return static_cast<std::int64_t>(std::llround(seconds / dt));
}

}  // namespace

bool truth_collision(const Scenario& scenario, const HarnessConfig& config) {
    require_robot(scenario);
    WorldState state = initial_state(scenario);
    ScriptedPerson person(scenario, state, config.person, config.engine.nav);
    const EntityId pid = scenario.person_script.person_id;
    const auto max_ticks = ticks_for(config.episode_timeout, state.dt);
    while (state.tick < max_ticks) {
        auto cmd = person.command(state);
        if (!cmd) break;
        state = step(state, {{pid, *cmd}}, scenario.room());
    }
    return collided(state, pid);
}

EpisodeResult run_episode(const Scenario& scenario, const HarnessConfig& config, EpisodeTrace* trace) {
    EpisodeResult r;
    r.seed = scenario.seed;
    const EntityId robot_id = require_robot(scenario);
    if (scenario.person_script.human_steered) {
        throw ScenarioError("batch episodes need a scripted person");
    }
    r.truth_collision = truth_collision(scenario, config);

    EngineConfig engine = config.engine;
    if (config.noise_margins) {
        apply_noise_margins(engine, config.perception.noise.pos_sigma,
                            config.perception.noise.size_inflation_sigma);
    }
    PerceptionConfig perception = config.perception;
    perception.noise.seed = scenario.seed;

    TraceHook hook;
    if (trace) {
        hook = [trace](const json& j) { trace->records.push_back(j); };
    }

    try {
        WorldState state = initial_state(scenario);
        const Entity& robot = state.entity(robot_id);
        WorkingMemory wm(trace != nullptr);
        RobotDescription desc{robot.shape.bounding_radius(), robot.shape.height(), robot.speed_limit,
                              robot.accel_limit, scenario.room()};
        PerceptionAgent agent(wm, desc, perception.timeout);
        ScriptedPerson person(scenario, state, config.person, engine.nav);
        const EntityId pid = scenario.person_script.person_id;

        std::optional<PathFollower> robot_follower;
        // The spawn-time sweep decides whether the episode counts: a person who sees nothing
        // at the start has no intentions to predict.
        std::optional<bool> spawn_intentions;
        const auto period = std::max<std::int64_t>(1, ticks_for(config.guess_period, state.dt));
        const auto max_ticks = ticks_for(config.episode_timeout, state.dt);
        bool person_done = false;
        json tracks = json::object();

        while (state.tick < max_ticks) {
            agent.publish(observe(state, robot_id, perception), state.entity(robot_id).pose, state.time());

            if (!robot_follower && !person_done && spawn_intentions.value_or(true) && state.tick % period == 0) {
                const GuessResult g = guess_intentions_serial(wm, config.atm, engine, hook);
                if (!spawn_intentions) spawn_intentions = g.intentions > 0;
                r.predicted_risky = r.predicted_risky || g.risky > 0;
                if (trace) {
                    trace->records.push_back({{"kind", "working_memory"},
                                              {"t", state.time()},
                                              {"graph", dump_graph(wm.snapshot())}});
                }
                if (g.risky > 0) {
                    const Snapshot before = wm.snapshot();
                    if (auto act = select_action(wm, config.atm, engine, hook)) {
                        r.action_found = true;
                        const Node* target = before.graph().find(act->record.target);
                        r.selected_target = attr_int(target->attrs, "track_id");
                        for (const auto& s : reaction_timer(wm)) {
                            if (s.intention == act->resolves) r.reaction_time = s.seconds;
                        }
                        // Independent re-check of the committed action on the same snapshot.
                        const SceneModel scene = scene_from_snapshot(before, engine);
                        const IntentionRecord risky = intention_from_node(*before.graph().find(act->resolves));
                        r.action_verified = !co_simulate(scene, act->record, risky, engine).c;
                        robot_follower.emplace(act->outcome.robot_plan, desc.speed_limit, state.dt,
                                               engine.nav.lookahead, engine.nav.arrive_tolerance,
                                               desc.accel_limit);
                        if (trace) {
                            trace->records.push_back({{"kind", "robot_action"},
                                                      {"t", state.time()},
                                                      {"target", *r.selected_target},
                                                      {"outcome", outcome_to_json(act->outcome)}});
                        }
                    }
                }
            }

            std::map<EntityId, Vec2> commands;
            if (!person_done) {
                if (auto cmd = person.command(state)) commands[pid] = *cmd;
                else person_done = true;
            }
            bool robot_moving = false;
            if (robot_follower && !robot_follower->finished()) {
                if (auto cmd = robot_follower->command(state.entity(robot_id).pose.position())) {
                    commands[robot_id] = *cmd;
                    robot_moving = true;
                }
            }
            if (person_done && !robot_moving) break;
            state = step(state, commands, scenario.room());
            if (trace) {
                for (EntityId id : {pid, robot_id}) {
                    const Pose2& p = state.entity(id).pose;
                    tracks[std::to_string(id)].push_back({p.x, p.y, p.theta});
                }
            }
        }
        r.final_person_collided = collided(state, pid);
        r.discarded = !spawn_intentions.value_or(false);
        if (trace) {
            json events = json::array();
            for (const auto& e : state.collision_events) events.push_back({e.time, e.a, e.b});
            trace->records.push_back({{"kind", "episode_end"},
                                      {"t", state.time()},
                                      {"collision_events", events},
                                      {"person_replans", person.walker().replans()},
                                      {"tracks", tracks}});
        }
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::exception& ex) {
        std::cerr << "episode " << scenario.seed << " failed: " << ex.what() << "\n";
        r.failed = true;
        r.discarded = true;
    }
    if (r.discarded) {
        r.predicted_risky = false;
        r.action_found = false;
        r.action_verified = false;
        r.reaction_time.reset();
        r.selected_target.reset();
        r.final_person_collided = false;
    }
    return r;
}

EpisodeResult run_batch_episode(const Scenario& base, std::uint64_t master_seed, std::uint64_t index,
                                const HarnessConfig& config) {
    const std::uint64_t seed = episode_seed(master_seed, index);
    Scenario sc;
    try {
        sc = sample_scenario(base, seed);
    } catch (const ScenarioError& ex) {
        std::cerr << "episode " << seed << ": " << ex.what() << "\n";
        EpisodeResult r;
        r.seed = seed;
        r.failed = true;
        r.discarded = true;
        return r;
    }
    sc.seed = seed;
    return run_episode(sc, config);
}

std::vector<EpisodeResult> run_batch(const Scenario& base, std::size_t n, std::uint64_t master_seed,
                                     const HarnessConfig& config) {
    if (n < 1) throw std::invalid_argument("batch needs at least one episode");
    std::vector<EpisodeResult> out(n);
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = run_batch_episode(base, master_seed, static_cast<std::uint64_t>(i), config);
    }
    return out;
}

std::vector<EpisodeResult> run_batch_serial(const Scenario& base, std::size_t n, std::uint64_t master_seed,
                                            const HarnessConfig& config) {
    if (n < 1) throw std::invalid_argument("batch needs at least one episode");
    std::vector<EpisodeResult> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(run_batch_episode(base, master_seed, i, config));
    }
    return out;
}

// --- persistence --------------------------------------------------------------

namespace {

constexpr const char* kResultsHeader =
    "seed,discarded,truth_collision,predicted_risky,action_found,selected_target,final_person_collided,failed,"
    "action_verified";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_flag(const std::string& cell, const std::string& path) {
    if (cell.empty() || cell == "0") return false;
    if (cell == "1") return true;
    throw std::runtime_error(path + ": bad flag '" + cell + "'");
}

}  // namespace

void write_results_csv(const std::string& path, const std::vector<EpisodeResult>& results) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << kResultsHeader << "\n";
    for (const auto& r : results) {
        const auto pred = [&](bool v) { return r.discarded ? std::string() : std::string(v ? "1" : "0"); };
        out << r.seed << ',' << (r.discarded ? 1 : 0) << ',' << (r.truth_collision ? 1 : 0) << ','
            << pred(r.predicted_risky) << ',' << pred(r.action_found) << ','
            << (r.selected_target ? std::to_string(*r.selected_target) : std::string()) << ','
            << pred(r.final_person_collided) << ',' << (r.failed ? 1 : 0) << ','
            << pred(r.action_verified) << "\n";
    }
}

std::vector<EpisodeResult> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kResultsHeader) {
        throw std::runtime_error(path + ": unexpected header");
    }
    std::vector<EpisodeResult> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 9) throw std::runtime_error(path + ": malformed row '" + line + "'");
        EpisodeResult r;
        r.seed = std::stoull(cells[0]);
        r.discarded = parse_flag(cells[1], path);
        r.truth_collision = parse_flag(cells[2], path);
        r.predicted_risky = parse_flag(cells[3], path);
        r.action_found = parse_flag(cells[4], path);
        if (!cells[5].empty()) r.selected_target = std::stoll(cells[5]);
        r.final_person_collided = parse_flag(cells[6], path);
        r.failed = parse_flag(cells[7], path);
        r.action_verified = parse_flag(cells[8], path);
        out.push_back(r);
    }
    return out;
}

void write_timings_csv(const std::string& path, const std::vector<EpisodeResult>& results) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "seed,reaction_time\n" << std::setprecision(17);
    for (const auto& r : results) {
        out << r.seed << ',';
        if (r.reaction_time) out << *r.reaction_time;
        out << "\n";
    }
}

void merge_timings_csv(const std::string& path, std::vector<EpisodeResult>& results) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != "seed,reaction_time") {
        throw std::runtime_error(path + ": unexpected header");
    }
    std::size_t i = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != 2 || i >= results.size() || std::stoull(cells[0]) != results[i].seed) {
            throw std::runtime_error(path + ": timings do not match the results file");
        }
        if (!cells[1].empty()) results[i].reaction_time = std::stod(cells[1]);
        ++i;
    }
    if (i != results.size()) throw std::runtime_error(path + ": timings do not match the results file");
}

}  // namespace atm
