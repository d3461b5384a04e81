#include "atm/working_memory.hpp"

#include <algorithm>
#include <limits>
#include <utility>

namespace atm {

const char* to_string(NodeKind kind) {
    switch (kind) {
        case NodeKind::robot: return "robot";
        case NodeKind::person: return "person";
        case NodeKind::object: return "object";
        case NodeKind::intention: return "intention";
        case NodeKind::collision: return "collision";
    }
    return "?";
}

const char* to_string(EdgeLabel label) {
    switch (label) {
        case EdgeLabel::rt: return "RT";
        case EdgeLabel::has_intention: return "has_intention";
        case EdgeLabel::target: return "target";
        case EdgeLabel::collision: return "collision";
        case EdgeLabel::approaching: return "approaching";
    }
    return "?";
}

NodeKind node_kind_from_string(const std::string& text) {
    for (NodeKind k : {NodeKind::robot, NodeKind::person, NodeKind::object, NodeKind::intention,
                       NodeKind::collision}) {
        if (text == to_string(k)) {
            return k;
        }
    }
    throw std::invalid_argument("unknown node kind '" + text + "'");
}

EdgeLabel edge_label_from_string(const std::string& text) {
    for (EdgeLabel l : {EdgeLabel::rt, EdgeLabel::has_intention, EdgeLabel::target,
                        EdgeLabel::collision, EdgeLabel::approaching}) {
        if (text == to_string(l)) {
            return l;
        }
    }
    throw std::invalid_argument("unknown edge label '" + text + "'");
}

// --- graph lookups -----------------------------------------------------------

const Node* Graph::find(NodeId id) const {
    auto it = nodes.find(id);
    return it == nodes.end() ? nullptr : &it->second;
}

const Edge* Graph::find(const EdgeKey& key) const {
    auto it = edges.find(key);
    return it == edges.end() ? nullptr : &it->second;
}

std::vector<const Node*> Graph::of_kind(NodeKind kind) const {
    std::vector<const Node*> out;
    for (const auto& [id, node] : nodes) {
        if (node.kind == kind) {
            out.push_back(&node);
        }
    }
    return out;
}

std::vector<const Edge*> Graph::out_edges(NodeId from, EdgeLabel label) const {
    std::vector<const Edge*> out;
    auto it = edges.lower_bound(EdgeKey{from, std::numeric_limits<NodeId>::min(), EdgeLabel::rt});
    for (; it != edges.end() && it->first.from == from; ++it) {
        if (it->first.label == label) {
            out.push_back(&it->second);
        }
    }
    return out;
}

std::vector<const Edge*> Graph::in_edges(NodeId to, EdgeLabel label) const {
    std::vector<const Edge*> out;
    for (const auto& [key, e] : edges) {
        if (key.to == to && key.label == label) {
            out.push_back(&e);
        }
    }
    return out;
}

// --- schema ------------------------------------------------------------------

namespace {

enum class VType { integer, real, text, boolean, vector };

struct AttrSpec {
    const char* name;
    VType type;
    bool required;
};

VType type_of(const Value& v) {
    switch (v.index()) {
        case 0: return VType::integer;
        case 1: return VType::real;
        case 2: return VType::text;
        case 3: return VType::boolean;
        default: return VType::vector;
    }
}

const std::vector<AttrSpec>& schema_for(NodeKind kind) {
    static const std::vector<AttrSpec> robot{{"x", VType::real, true},
                                             {"y", VType::real, true},
                                             {"theta", VType::real, true},
                                             {"radius", VType::real, false},
                                             {"height", VType::real, false},
                                             {"speed_limit", VType::real, false},
                                             {"accel_limit", VType::real, false},
                                             {"room", VType::vector, false}};
    static const std::vector<AttrSpec> body{{"track_id", VType::integer, true},
                                            {"class", VType::text, true},
                                            {"shape", VType::text, false},
                                            {"extents", VType::vector, false},
                                            {"height", VType::real, false},
                                            {"last_seen", VType::real, false}};
    static const std::vector<AttrSpec> intention{{"subject", VType::integer, true},
                                                 {"target", VType::integer, true},
                                                 {"action", VType::text, true},
                                                 {"gaze", VType::real, false},
                                                 {"c", VType::boolean, false},
                                                 {"collision_time", VType::real, false},
                                                 {"collision_xy", VType::vector, false},
                                                 {"reachable", VType::boolean, false},
                                                 {"replanned", VType::boolean, false},
                                                 {"resolves", VType::integer, false},
                                                 {"goal", VType::vector, false},
                                                 {"plan", VType::vector, false}};
    static const std::vector<AttrSpec> collision{{"time", VType::real, true},
                                                 {"xy", VType::vector, true}};
    switch (kind) {
        case NodeKind::robot: return robot;
        case NodeKind::person:
        case NodeKind::object: return body;
        case NodeKind::intention: return intention;
        case NodeKind::collision: return collision;
    }
    return body;
}

void check_node_schema(const Node& node) {
    for (const auto& spec : schema_for(node.kind)) {
        auto it = node.attrs.find(spec.name);
        if (it == node.attrs.end()) {
            if (spec.required) {
                throw TransactionError(std::string(to_string(node.kind)) + " node " +
                                       std::to_string(node.id) + " lacks attribute '" +
                                       spec.name + "'");
            }
            continue;
        }
        if (type_of(it->second) != spec.type) {
            throw TransactionError(std::string("attribute '") + spec.name + "' of node " +
                                   std::to_string(node.id) + " has the wrong type");
        }
    }
    if (node.kind == NodeKind::intention) {
        const bool risky = attr_bool(node.attrs, "c").value_or(false);
        if (risky != node.attrs.contains("collision_time")) {
            throw TransactionError("intention " + std::to_string(node.id) +
                                   ": collision_time must be present iff c is true");
        }
    }
}

void check_edge_schema(const Edge& e) {
    if (e.label != EdgeLabel::rt) {
        return;
    }
    for (const char* k : {"x", "y", "theta"}) {
        auto it = e.attrs.find(k);
        if (it == e.attrs.end() || type_of(it->second) != VType::real) {
            throw TransactionError("RT edge " + std::to_string(e.from) + "->" +
                                   std::to_string(e.to) + " lacks a valid SE(2) value");
        }
    }
    const double theta = std::get<double>(e.attrs.at("theta"));
    if (!(theta > -kPi && theta <= kPi)) {
        throw TransactionError("RT edge theta outside (-pi, pi]");
    }
}

}  // namespace

Graph apply_edits(const Graph& graph, const std::vector<Edit>& edits, Version version,
                  std::set<NodeKind>* kinds, std::set<EdgeLabel>* labels) {
    Graph g = graph;
    std::set<NodeId> touched_nodes;
    std::set<EdgeKey> touched_edges;
    auto note_kind = [&](NodeKind k) {
        if (kinds) kinds->insert(k);
    };
    auto note_label = [&](EdgeLabel l) {
        if (labels) labels->insert(l);
    };

    for (const Edit& e : edits) {
        std::visit(
            [&](const auto& op) {
                using T = std::decay_t<decltype(op)>;
                if constexpr (std::is_same_v<T, edit::AddNode>) {
                    if (g.nodes.contains(op.id)) {
                        throw TransactionError("duplicate node id " + std::to_string(op.id));
                    }
                    g.nodes.emplace(op.id, Node{op.id, op.kind, op.attrs, version, version});
                    touched_nodes.insert(op.id);
                    note_kind(op.kind);
                } else if constexpr (std::is_same_v<T, edit::UpdateNode>) {
                    auto it = g.nodes.find(op.id);
                    if (it == g.nodes.end()) {
                        throw TransactionError("update of missing node " + std::to_string(op.id));
                    }
                    for (const auto& name : op.erase) {
                        it->second.attrs.erase(name);
                    }
                    for (const auto& [k, v] : op.attrs) {
                        it->second.attrs[k] = v;
                    }
                    it->second.updated_version = version;
                    touched_nodes.insert(op.id);
                    note_kind(it->second.kind);
                } else if constexpr (std::is_same_v<T, edit::RemoveNode>) {
                    auto it = g.nodes.find(op.id);
                    if (it == g.nodes.end()) {
                        throw TransactionError("removal of missing node " + std::to_string(op.id));
                    }
                    note_kind(it->second.kind);
                    g.nodes.erase(it);
                    touched_nodes.erase(op.id);
                    for (auto eit = g.edges.begin(); eit != g.edges.end();) {
                        if (eit->first.from == op.id || eit->first.to == op.id) {
                            note_label(eit->first.label);
                            eit = g.edges.erase(eit);
                        } else {
                            ++eit;
                        }
                    }
                } else if constexpr (std::is_same_v<T, edit::AddEdge>) {
                    const EdgeKey key = op.edge.key();
                    if (g.edges.contains(key)) {
                        throw TransactionError("duplicate edge " + std::to_string(key.from) +
                                               "->" + std::to_string(key.to) + " " +
                                               to_string(key.label));
                    }
                    g.edges.emplace(key, op.edge);
                    touched_edges.insert(key);
                    note_label(key.label);
                } else if constexpr (std::is_same_v<T, edit::UpdateEdge>) {
                    auto it = g.edges.find(op.edge.key());
                    if (it == g.edges.end()) {
                        throw TransactionError("update of missing edge");
                    }
                    it->second.attrs = op.edge.attrs;
                    touched_edges.insert(op.edge.key());
                    note_label(op.edge.label);
                } else if constexpr (std::is_same_v<T, edit::RemoveEdge>) {
                    if (g.edges.erase(op.key) == 0) {
                        throw TransactionError("removal of missing edge");
                    }
                    note_label(op.key.label);
                }
            },
            e);
    }

    for (NodeId id : touched_nodes) {
        if (auto it = g.nodes.find(id); it != g.nodes.end()) {
            check_node_schema(it->second);
        }
    }
    for (const auto& key : touched_edges) {
        auto it = g.edges.find(key);
        if (it == g.edges.end()) {
            continue;
        }
        if (!g.nodes.contains(key.from) || !g.nodes.contains(key.to)) {
            throw TransactionError("dangling edge endpoint " + std::to_string(key.from) + "->" +
                                   std::to_string(key.to));
        }
        check_edge_schema(it->second);
    }
    return g;
}

bool referentially_intact(const Graph& graph) {
    return std::all_of(graph.edges.begin(), graph.edges.end(), [&](const auto& kv) {
        return graph.nodes.contains(kv.first.from) && graph.nodes.contains(kv.first.to);
    });
}

// --- subscriptions -----------------------------------------------------------

bool SubscriptionFilter::matches(const Delta& delta) const {
    if (kinds.empty() && labels.empty()) {
        return true;
    }
    for (NodeKind k : delta.kinds) {
        if (kinds.contains(k)) return true;
    }
    for (EdgeLabel l : delta.labels) {
        if (labels.contains(l)) return true;
    }
    return false;
}

Subscription::Subscription(SubscriptionFilter filter, std::size_t capacity)
    : filter_(std::move(filter)), capacity_(std::max<std::size_t>(capacity, 1)) {}

void Subscription::push(const Delta& delta) {
    {
        std::lock_guard lock(mutex_);
        if (closed_ || overflowed_) {
            return;
        }
        if (queue_.size() >= capacity_) {
            overflowed_ = true;
        } else {
            queue_.push_back(delta);
        }
    }
    cv_.notify_all();
}

Subscription::Delivery Subscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || overflowed_ || closed_; });
    if (!queue_.empty()) {
        Delivery d{Status::delta, std::move(queue_.front())};
        queue_.pop_front();
        return d;
    }
    if (overflowed_ && !overflow_reported_) {
        overflow_reported_ = true;
        return {Status::overflow, {}};
    }
    if (closed_ || overflowed_) {
        return {Status::closed, {}};
    }
    return {Status::timeout, {}};
}

std::optional<Delta> Subscription::try_next() {
    std::lock_guard lock(mutex_);
    if (queue_.empty()) {
        return std::nullopt;
    }
    Delta d = std::move(queue_.front());
    queue_.pop_front();
    return d;
}

bool Subscription::overflowed() const {
    std::lock_guard lock(mutex_);
    return overflowed_;
}

void Subscription::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

// --- store -------------------------------------------------------------------

WorkingMemory::WorkingMemory(bool keep_log)
    : graph_(std::make_shared<const Graph>()), keep_log_(keep_log) {
    version_times_.push_back(Clock::now());
}

Version WorkingMemory::transact(const std::vector<Edit>& edits) {
    std::lock_guard lock(mutex_);
    const Version next = version_ + 1;
    Delta delta;
    auto g = std::make_shared<const Graph>(
        apply_edits(*graph_, edits, next, &delta.kinds, &delta.labels));
    graph_ = std::move(g);
    version_ = next;
    delta.version = next;
    delta.time = Clock::now();
    // Commit times are kept monotone even if the clock reports a tie.
    if (delta.time <= version_times_.back()) {
        delta.time = version_times_.back() + Clock::duration(1);
    }
    version_times_.push_back(delta.time);
    for (const Edit& e : edits) {
        if (const auto* add = std::get_if<edit::AddNode>(&e)) {
            next_id_ = std::max(next_id_, add->id + 1);
        }
    }
    if (keep_log_) {
        log_.push_back(edits);
    }
    delta.edits = edits;

    // Delivered under the store lock so every subscriber sees versions in order.
    std::erase_if(subscribers_, [](const auto& w) { return w.expired(); });
    for (auto& weak : subscribers_) {
        if (auto sub = weak.lock(); sub && sub->filter().matches(delta)) {
            sub->push(delta);
        }
    }
    return next;
}

Snapshot WorkingMemory::snapshot() const {
    std::lock_guard lock(mutex_);
    return Snapshot(graph_, version_);
}

Version WorkingMemory::version() const {
    std::lock_guard lock(mutex_);
    return version_;
}

std::shared_ptr<Subscription> WorkingMemory::subscribe(SubscriptionFilter filter,
                                                       std::size_t capacity) {
    auto sub = std::make_shared<Subscription>(std::move(filter), capacity);
    std::lock_guard lock(mutex_);
    subscribers_.push_back(sub);
    return sub;
}

NodeId WorkingMemory::new_id() {
    std::lock_guard lock(mutex_);
    return next_id_++;
}

Clock::time_point WorkingMemory::version_time(Version v) const {
    std::lock_guard lock(mutex_);
    if (v < 0 || static_cast<std::size_t>(v) >= version_times_.size()) {
        throw std::out_of_range("unknown version " + std::to_string(v));
    }
    return version_times_[static_cast<std::size_t>(v)];
}

std::vector<std::vector<Edit>> WorkingMemory::log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

Graph WorkingMemory::replay(const std::vector<std::vector<Edit>>& log) {
    Graph g;
    Version v = 0;
    for (const auto& edits : log) {
        g = apply_edits(g, edits, ++v);
    }
    return g;
}

// --- attributes and dumps ----------------------------------------------------

nlohmann::json to_json(const Value& value) {
    return std::visit([](const auto& v) { return nlohmann::json(v); }, value);
}

nlohmann::json dump_graph(const Snapshot& snapshot) {
    nlohmann::json out;
    out["version"] = snapshot.version();
    out["nodes"] = nlohmann::json::array();
    out["edges"] = nlohmann::json::array();
    for (const auto& [id, node] : snapshot.graph().nodes) {
        nlohmann::json attrs = nlohmann::json::object();
        for (const auto& [k, v] : node.attrs) {
            attrs[k] = to_json(v);
        }
        out["nodes"].push_back({{"id", id}, {"kind", to_string(node.kind)}, {"attrs", attrs}});
    }
    for (const auto& [key, e] : snapshot.graph().edges) {
        nlohmann::json attrs = nlohmann::json::object();
        for (const auto& [k, v] : e.attrs) {
            attrs[k] = to_json(v);
        }
        out["edges"].push_back(
            {{"from", key.from}, {"to", key.to}, {"label", to_string(key.label)}, {"attrs", attrs}});
    }
    return out;
}

namespace {
template <typename T>
std::optional<T> get_attr(const Attrs& attrs, const std::string& name) {
    auto it = attrs.find(name);
    if (it == attrs.end()) {
        return std::nullopt;
    }
    if (const T* v = std::get_if<T>(&it->second)) {
        return *v;
    }
    return std::nullopt;
}
}  // namespace

std::optional<double> attr_real(const Attrs& a, const std::string& n) { return get_attr<double>(a, n); }
std::optional<std::int64_t> attr_int(const Attrs& a, const std::string& n) {
    return get_attr<std::int64_t>(a, n);
}
std::optional<bool> attr_bool(const Attrs& a, const std::string& n) { return get_attr<bool>(a, n); }
std::optional<std::string> attr_text(const Attrs& a, const std::string& n) {
    return get_attr<std::string>(a, n);
}
std::optional<std::vector<double>> attr_vec(const Attrs& a, const std::string& n) {
    return get_attr<std::vector<double>>(a, n);
}

Attrs pose_attrs(const Pose2& pose) {
    return {{"x", pose.x}, {"y", pose.y}, {"theta", pose.theta}};
}

std::optional<Pose2> attrs_pose(const Attrs& attrs) {
    auto x = attr_real(attrs, "x");
    auto y = attr_real(attrs, "y");
    auto t = attr_real(attrs, "theta");
    if (!x || !y || !t) {
        return std::nullopt;
    }
    return Pose2(*x, *y, *t);
}

std::vector<const Node*> query_people(const Snapshot& s) { return s.graph().of_kind(NodeKind::person); }
std::vector<const Node*> query_objects(const Snapshot& s) { return s.graph().of_kind(NodeKind::object); }
std::vector<const Node*> query_intentions(const Snapshot& s) {
    return s.graph().of_kind(NodeKind::intention);
}

}  // namespace atm
