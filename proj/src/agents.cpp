#include "atm/agents.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <tuple>

namespace atm {

SearchOrder search_order_from_string(const std::string& text) {
    if (text == "collision_distance") return SearchOrder::collision_distance;
    if (text == "index") return SearchOrder::index;
    throw std::invalid_argument("unknown search order '" + text + "'");
}

const char* to_string(SearchOrder order) {
    return order == SearchOrder::index ? "index" : "collision_distance";
}

void AtmConfig::validate() const {
    if (gaze_samples < 1) throw std::invalid_argument("atm.gaze_samples must be >= 1");
    if (!(gaze_min < gaze_max)) throw std::invalid_argument("atm.gaze_min must be below atm.gaze_max");
    if (max_people < 1) throw std::invalid_argument("atm.max_people must be >= 1");
    if (approach_samples < 0) throw std::invalid_argument("atm.approach_samples must be >= 0");
    for (const auto& a : actions) {
        if (a != "move_to") throw std::invalid_argument("unsupported action '" + a + "'");
    }
}

std::vector<double> sample_gazes(const AtmConfig& config) {
    if (config.gaze_samples == 1) {
        return {config.gaze_min};
    }
    std::vector<double> out;
    const int n = config.gaze_samples;
    for (int l = 0; l < n; ++l) {
        out.push_back(config.gaze_min + (config.gaze_max - config.gaze_min) * l / (n - 1));
    }
    return out;
}

std::vector<NodeId> person_targets(const SceneModel& scene, const SceneEntity& person,
                                   const AtmConfig& atm, const EngineConfig& engine) {
    Frustum f;
    f.half_angle = deg_to_rad(engine.fov_half_angle_deg);
    f.range = engine.fov_range_m;
    f.gaze_depression = atm.gaze_min;
    std::vector<NodeId> out;
    for (const auto& e : scene.entities) {
        if (e.kind == NodeKind::object && in_frustum(person.pose, person.eye_height, f, e.pose, e.shape)) {
            out.push_back(e.node);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

IntentionRecord intention_from_node(const Node& node) {
    IntentionRecord r;
    r.subject = attr_int(node.attrs, "subject").value_or(0);
    r.target = attr_int(node.attrs, "target").value_or(0);
    r.action = attr_text(node.attrs, "action").value_or("move_to");
    r.gaze = attr_real(node.attrs, "gaze");
    r.approach_bearing = attr_real(node.attrs, "approach_bearing");
    r.c = attr_bool(node.attrs, "c");
    r.collision_time = attr_real(node.attrs, "collision_time");
    if (auto xy = attr_vec(node.attrs, "collision_xy"); xy && xy->size() == 2) {
        r.collision_xy = Vec2{(*xy)[0], (*xy)[1]};
    }
    return r;
}

namespace {

struct Enactment {
    IntentionRecord record;
    std::optional<SimOutcome> outcome;
    std::vector<nlohmann::json> traces;
};

using IntentKey = std::tuple<NodeId, NodeId, std::string, double>;

IntentKey key_of(const IntentionRecord& r) { return {r.subject, r.target, r.action, r.gaze.value_or(0.0)}; }

std::vector<Enactment> enumerate(const SceneModel& scene, const AtmConfig& atm, const EngineConfig& engine) {
    std::vector<const SceneEntity*> people;
    for (const auto& e : scene.entities) {
        if (e.kind == NodeKind::person) people.push_back(&e);
    }
    std::stable_sort(people.begin(), people.end(), [&](const auto* a, const auto* b) {
        const double da = distance(a->pose.position(), scene.robot_pose.position());
        const double db = distance(b->pose.position(), scene.robot_pose.position());
        return da < db || (da == db && a->node < b->node);
    });
    if (people.size() > static_cast<std::size_t>(atm.max_people)) {
        people.resize(static_cast<std::size_t>(atm.max_people));
    }
    const auto gazes = sample_gazes(atm);
    std::vector<Enactment> out;
    for (const auto* p : people) {
        for (NodeId t : person_targets(scene, *p, atm, engine)) {
            for (const auto& action : atm.actions) {
                for (double g : gazes) {
                    Enactment e;
                    e.record = IntentionRecord{p->node, t, action, g, std::nullopt, std::nullopt, std::nullopt};
                    out.push_back(std::move(e));
                }
            }
        }
    }
    return out;
}

void enact(const SceneModel& scene, Enactment& e, const EngineConfig& engine, bool want_trace) {
    TraceHook hook;
    if (want_trace) {
        hook = [&e](const nlohmann::json& j) { e.traces.push_back(j); };
    }
    try {
        e.outcome = simulate_intention(scene, e.record, std::nullopt, engine, hook);
    } catch (const std::exception& ex) {
        e.outcome.reset();
        e.traces.push_back({{"kind", "simulate_intention"},
                            {"subject", e.record.subject},
                            {"target", e.record.target},
                            {"error", ex.what()}});
    }
}

Attrs intention_attrs(const Enactment& e) {
    Attrs a;
    a["subject"] = e.record.subject;
    a["target"] = e.record.target;
    a["action"] = e.record.action;
    a["gaze"] = e.record.gaze.value_or(0.0);
    if (e.outcome) {
        a["c"] = e.outcome->c;
        a["reachable"] = e.outcome->reachable();
        a["replanned"] = e.outcome->replanned;
        if (e.outcome->c) {
            a["collision_time"] = *e.outcome->collision_time;
            a["collision_xy"] = std::vector<double>{e.outcome->collision_xy->x, e.outcome->collision_xy->y};
        }
    }
    return a;
}

GuessResult commit_sweep(WorkingMemory& wm, const Snapshot& snap, std::vector<Enactment>& sweep,
                         const TraceHook& trace) {
    if (trace) {
        for (const auto& e : sweep) {
            for (const auto& t : e.traces) trace(t);
        }
    }
    const Graph& g = snap.graph();
    std::map<IntentKey, const Node*> existing;
    for (const Node* n : g.of_kind(NodeKind::intention)) {
        const auto r = intention_from_node(*n);
        const Node* subj = g.find(r.subject);
        if (subj && subj->kind == NodeKind::robot) continue;
        existing[key_of(r)] = n;
    }

    GuessResult result;
    std::vector<Edit> edits;
    std::set<IntentKey> current;
    for (const auto& e : sweep) {
        const IntentKey key = key_of(e.record);
        current.insert(key);
        ++result.intentions;
        if (!e.outcome) {
            ++result.failed;
            std::cerr << "guess_intentions: simulation failed for person " << e.record.subject
                      << " -> " << e.record.target << "\n";
        } else if (e.outcome->c) {
            ++result.risky;
        }
        const Attrs attrs = intention_attrs(e);
        const bool risky = e.outcome && e.outcome->c;
        auto it = existing.find(key);
        if (it == existing.end()) {
            const NodeId id = wm.new_id();
            edits.push_back(edit::AddNode{id, NodeKind::intention, attrs});
            edits.push_back(edit::AddEdge{Edge{e.record.subject, id, EdgeLabel::has_intention, {}}});
            edits.push_back(edit::AddEdge{Edge{id, e.record.target, EdgeLabel::target, {}}});
            if (risky) {
                const NodeId cid = wm.new_id();
                edits.push_back(edit::AddNode{cid, NodeKind::collision,
                                              {{"time", attrs.at("collision_time")},
                                               {"xy", attrs.at("collision_xy")}}});
                edits.push_back(edit::AddEdge{Edge{id, cid, EdgeLabel::collision, {}}});
            }
            continue;
        }
        const Node& node = *it->second;
        if (node.attrs != attrs) {
            std::vector<std::string> erase;
            for (const auto& [k, v] : node.attrs) {
                if (!attrs.contains(k)) erase.push_back(k);
            }
            edits.push_back(edit::UpdateNode{node.id, attrs, erase});
        }
        const auto coll = g.out_edges(node.id, EdgeLabel::collision);
        if (risky && coll.empty()) {
            const NodeId cid = wm.new_id();
            edits.push_back(edit::AddNode{cid, NodeKind::collision,
                                          {{"time", attrs.at("collision_time")},
                                           {"xy", attrs.at("collision_xy")}}});
            edits.push_back(edit::AddEdge{Edge{node.id, cid, EdgeLabel::collision, {}}});
        } else if (risky) {
            const Node* cn = g.find(coll.front()->to);
            const Attrs cattrs{{"time", attrs.at("collision_time")}, {"xy", attrs.at("collision_xy")}};
            if (cn && cn->attrs != cattrs) {
                edits.push_back(edit::UpdateNode{cn->id, cattrs, {}});
            }
        } else {
            for (const Edge* ce : coll) edits.push_back(edit::RemoveNode{ce->to});
        }
        // Person or target may have been re-added under the same node; restore links.
        if (!g.find(EdgeKey{e.record.subject, node.id, EdgeLabel::has_intention})) {
            edits.push_back(edit::AddEdge{Edge{e.record.subject, node.id, EdgeLabel::has_intention, {}}});
        }
        if (!g.find(EdgeKey{node.id, e.record.target, EdgeLabel::target})) {
            edits.push_back(edit::AddEdge{Edge{node.id, e.record.target, EdgeLabel::target, {}}});
        }
    }
    // Retire intentions whose (person, target, action, gaze) no longer arises.
    for (const auto& [key, node] : existing) {
        if (current.contains(key)) continue;
        for (const Edge* ce : g.out_edges(node->id, EdgeLabel::collision)) {
            edits.push_back(edit::RemoveNode{ce->to});
        }
        edits.push_back(edit::RemoveNode{node->id});
    }
    if (edits.empty()) {
        result.version = snap.version();
        return result;
    }
    result.version = wm.transact(edits);
    result.committed = true;
    return result;
}

GuessResult guess_impl(WorkingMemory& wm, const AtmConfig& atm, const EngineConfig& engine,
                       const TraceHook& trace, bool parallel) {
    atm.validate();
    const Snapshot snap = wm.snapshot();
    if (snap.graph().of_kind(NodeKind::person).empty() || snap.graph().of_kind(NodeKind::robot).empty()) {
        return GuessResult{snap.version(), false, 0, 0, 0};
    }
    const SceneModel scene = scene_from_snapshot(snap, engine);
    std::vector<Enactment> sweep = enumerate(scene, atm, engine);
    const bool want_trace = static_cast<bool>(trace);
    const auto n = static_cast<std::int64_t>(sweep.size());
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n; ++i) {
            enact(scene, sweep[static_cast<std::size_t>(i)], engine, want_trace);
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            enact(scene, sweep[static_cast<std::size_t>(i)], engine, want_trace);
        }
    }
    return commit_sweep(wm, snap, sweep, trace);
}

/// The policy's side (no bearing) first, then sampled bearings by goal distance to `anchor`.
std::vector<std::optional<double>> approach_bearings(const SceneModel& scene, const SceneEntity& target,
                                                     Vec2 anchor, const AtmConfig& atm,
                                                     const EngineConfig& engine) {
    std::vector<std::optional<double>> out{std::nullopt};
    const Vec2 first = robot_standoff(scene, target, anchor, std::nullopt, engine);
    std::vector<std::pair<double, double>> ranked;
    for (int k = 0; k < atm.approach_samples; ++k) {
        const double bearing = 2.0 * kPi * k / atm.approach_samples;
        const Vec2 goal = robot_standoff(scene, target, anchor, bearing, engine);
        if ((goal - first).norm() < 1e-6) continue;
        ranked.emplace_back((goal - anchor).norm(), bearing);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& r : ranked) out.push_back(r.second);
    return out;
}

}  // namespace

GuessResult guess_intentions(WorkingMemory& wm, const AtmConfig& atm, const EngineConfig& engine,
                             const TraceHook& trace) {
    return guess_impl(wm, atm, engine, trace, true);
}

GuessResult guess_intentions_serial(WorkingMemory& wm, const AtmConfig& atm,
                                    const EngineConfig& engine, const TraceHook& trace) {
    return guess_impl(wm, atm, engine, trace, false);
}

std::vector<Candidate> evaluate_candidates(const Snapshot& snap, const AtmConfig& atm,
                                           const EngineConfig& engine, bool stop_at_first,
                                           const TraceHook& trace) {
    std::vector<Candidate> out;
    const Graph& g = snap.graph();
    if (g.of_kind(NodeKind::robot).empty()) return out;
    const SceneModel scene = scene_from_snapshot(snap, engine);

    std::vector<std::pair<const Node*, IntentionRecord>> risky;
    for (const Node* n : g.of_kind(NodeKind::intention)) {
        IntentionRecord r = intention_from_node(*n);
        const Node* subj = g.find(r.subject);
        if (!subj || subj->kind != NodeKind::person || !r.c.value_or(false)) continue;
        if (!scene.find(r.subject) || !scene.find(r.target)) continue;
        risky.emplace_back(n, r);
    }
    std::stable_sort(risky.begin(), risky.end(), [](const auto& a, const auto& b) {
        const double ta = *a.second.collision_time;
        const double tb = *b.second.collision_time;
        return ta < tb || (ta == tb && a.first->id < b.first->id);
    });

    std::vector<const SceneEntity*> objects;
    for (const auto& e : scene.entities) {
        if (e.kind == NodeKind::object) objects.push_back(&e);
    }

    for (const auto& [node, person_intent] : risky) {
        std::vector<const SceneEntity*> order = objects;
        if (atm.search_order == SearchOrder::collision_distance && person_intent.collision_xy) {
            const Vec2 at = *person_intent.collision_xy;
            std::stable_sort(order.begin(), order.end(), [&](const auto* a, const auto* b) {
                const double da = footprint_distance(a->pose, a->shape, at);
                const double db = footprint_distance(b->pose, b->shape, at);
                return da < db || (da == db && a->node < b->node);
            });
        }
        const Vec2 anchor = approach_anchor(scene, person_intent, engine);
        for (const auto& action : atm.actions) {
            for (const auto* obj : order) {
                for (const auto bearing : approach_bearings(scene, *obj, anchor, atm, engine)) {
                    Candidate cand;
                    cand.risky_intention = node->id;
                    cand.robot.subject = scene.robot_node;
                    cand.robot.target = obj->node;
                    cand.robot.action = action;
                    cand.robot.approach_bearing = bearing;
                    try {
                        cand.outcome = co_simulate(scene, cand.robot, person_intent, engine, trace);
                    } catch (const std::exception& ex) {
                        std::cerr << "select_action: co-simulation failed: " << ex.what() << "\n";
                        cand.failed = true;
                        cand.outcome.c = true;
                    }
                    cand.robot.c = cand.outcome.c;
                    out.push_back(cand);
                    if (stop_at_first && !cand.outcome.c) {
                        return out;
                    }
                }
            }
        }
    }
    return out;
}

std::optional<RobotAction> select_action(WorkingMemory& wm, const AtmConfig& atm,
                                         const EngineConfig& engine, const TraceHook& trace) {
    const Snapshot snap = wm.snapshot();
    const auto candidates = evaluate_candidates(snap, atm, engine, true, trace);
    if (candidates.empty() || candidates.back().outcome.c) {
        return std::nullopt;
    }
    const Candidate& win = candidates.back();
    const Graph& g = snap.graph();
    std::vector<Edit> edits;
    for (const Node* n : g.of_kind(NodeKind::intention)) {
        const Node* subj = g.find(attr_int(n->attrs, "subject").value_or(0));
        if (subj && subj->kind == NodeKind::robot) {
            edits.push_back(edit::RemoveNode{n->id});
        }
    }
    RobotAction action;
    action.node = wm.new_id();
    action.resolves = win.risky_intention;
    action.record = win.robot;
    action.outcome = win.outcome;
    std::vector<double> plan;
    for (const auto& p : win.outcome.robot_plan.waypoints) {
        plan.push_back(p.x);
        plan.push_back(p.y);
    }
    const Pose2 goal = *win.outcome.robot_goal;
    Attrs attrs{{"subject", win.robot.subject},
                {"target", win.robot.target},
                {"action", win.robot.action},
                {"c", false},
                {"resolves", win.risky_intention},
                {"goal", std::vector<double>{goal.x, goal.y, goal.theta}},
                {"plan", plan}};
    if (win.robot.approach_bearing) attrs["approach_bearing"] = *win.robot.approach_bearing;
    edits.push_back(edit::AddNode{action.node, NodeKind::intention, attrs});
    edits.push_back(edit::AddEdge{Edge{win.robot.subject, action.node, EdgeLabel::has_intention, {}}});
    edits.push_back(edit::AddEdge{Edge{action.node, win.robot.target, EdgeLabel::target, {}}});
    action.version = wm.transact(edits);
    return action;
}

std::vector<ReactionSample> reaction_timer(const WorkingMemory& wm) {
    const Snapshot snap = wm.snapshot();
    const Graph& g = snap.graph();
    std::map<NodeId, const Node*> resolvers;
    for (const Node* n : g.of_kind(NodeKind::intention)) {
        if (auto r = attr_int(n->attrs, "resolves")) resolvers[*r] = n;
    }
    std::vector<ReactionSample> out;
    for (const Node* n : g.of_kind(NodeKind::intention)) {
        if (!attr_bool(n->attrs, "c").value_or(false)) continue;
        const auto coll = g.out_edges(n->id, EdgeLabel::collision);
        ReactionSample s{n->id, std::nullopt};
        auto it = resolvers.find(n->id);
        if (it != resolvers.end() && !coll.empty()) {
            const Node* cn = g.find(coll.front()->to);
            const Version risk_v = cn ? cn->created_version : n->created_version;
            const Version act_v = it->second->created_version;
            if (act_v > risk_v) {
                s.seconds = std::chrono::duration<double>(wm.version_time(act_v) - wm.version_time(risk_v)).count();
            }
        }
        out.push_back(s);
    }
    return out;
}

// --- concurrent runner ---------------------------------------------------------

AgentRunner::AgentRunner(WorkingMemory& wm, AtmConfig atm, EngineConfig engine,
                         std::chrono::milliseconds min_guess_interval)
    : wm_(wm), atm_(std::move(atm)), engine_(engine), interval_(min_guess_interval) {}

AgentRunner::~AgentRunner() { stop(); }

void AgentRunner::start() {
    if (running_.exchange(true)) return;
    percepts_ = wm_.subscribe({{NodeKind::person, NodeKind::object}, {EdgeLabel::rt}});
    intentions_ = wm_.subscribe({{NodeKind::intention, NodeKind::collision}, {}});
    guesser_ = std::thread([this] { guess_loop(); });
    selector_ = std::thread([this] { select_loop(); });
}

void AgentRunner::stop() {
    if (!running_.exchange(false)) return;
    if (percepts_) percepts_->close();
    if (intentions_) intentions_->close();
    if (guesser_.joinable()) guesser_.join();
    if (selector_.joinable()) selector_.join();
}

void AgentRunner::guess_loop() {
    auto last = Clock::now() - interval_;
    while (running_) {
        auto d = percepts_->next(std::chrono::milliseconds(50));
        if (d.status == Subscription::Status::closed && !running_) break;
        if (d.status == Subscription::Status::timeout) continue;
        if (d.status == Subscription::Status::overflow || d.status == Subscription::Status::closed) {
            // Resynchronize from a fresh snapshot on a new subscription.
            percepts_ = wm_.subscribe({{NodeKind::person, NodeKind::object}, {EdgeLabel::rt}});
        }
        while (percepts_->try_next()) {
        }
        const auto wait = interval_ - (Clock::now() - last);
        if (wait > Clock::duration::zero()) std::this_thread::sleep_for(wait);
        last = Clock::now();
        try {
            guess_intentions(wm_, atm_, engine_);
        } catch (const std::exception& ex) {
            std::cerr << "intention agent: " << ex.what() << "\n";
        }
        ++guess_sweeps_;
    }
}

void AgentRunner::select_loop() {
    while (running_) {
        auto d = intentions_->next(std::chrono::milliseconds(50));
        if (d.status == Subscription::Status::closed && !running_) break;
        if (d.status == Subscription::Status::timeout) continue;
        if (d.status == Subscription::Status::overflow || d.status == Subscription::Status::closed) {
            intentions_ = wm_.subscribe({{NodeKind::intention, NodeKind::collision}, {}});
        }
        const Snapshot snap = wm_.snapshot();
        bool risky = false;
        bool acting = false;
        for (const Node* n : snap.graph().of_kind(NodeKind::intention)) {
            const Node* subj = snap.graph().find(attr_int(n->attrs, "subject").value_or(0));
            if (subj && subj->kind == NodeKind::robot) acting = true;
            if (subj && subj->kind == NodeKind::person && attr_bool(n->attrs, "c").value_or(false)) risky = true;
        }
        if (!risky || acting) continue;
        try {
            select_action(wm_, atm_, engine_);
        } catch (const std::exception& ex) {
            std::cerr << "action agent: " << ex.what() << "\n";
        }
        ++select_sweeps_;
    }
}

}  // namespace atm
