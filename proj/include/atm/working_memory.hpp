#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "atm/geometry.hpp"

namespace atm {

using NodeId = std::int64_t;
using Version = std::int64_t;
using Clock = std::chrono::steady_clock;

enum class NodeKind { robot, person, object, intention, collision };
enum class EdgeLabel { rt, has_intention, target, collision, approaching };

const char* to_string(NodeKind kind);
const char* to_string(EdgeLabel label);
NodeKind node_kind_from_string(const std::string& text);
EdgeLabel edge_label_from_string(const std::string& text);

using Value = std::variant<std::int64_t, double, std::string, bool, std::vector<double>>;
using Attrs = std::map<std::string, Value>;

/// Thrown when a transaction is rejected; the store is left untouched.
class TransactionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Node {
    NodeId id = 0;
    NodeKind kind = NodeKind::object;
    Attrs attrs;
    // Maintained by the store.
    Version created_version = 0;
    Version updated_version = 0;

    friend bool operator==(const Node&, const Node&) = default;
};

struct EdgeKey {
    NodeId from = 0;
    NodeId to = 0;
    EdgeLabel label = EdgeLabel::rt;

    friend auto operator<=>(const EdgeKey&, const EdgeKey&) = default;
};

struct Edge {
    NodeId from = 0;
    NodeId to = 0;
    EdgeLabel label = EdgeLabel::rt;
    Attrs attrs;

    EdgeKey key() const { return {from, to, label}; }
    friend bool operator==(const Edge&, const Edge&) = default;
};

namespace edit {
struct AddNode {
    NodeId id = 0;
    NodeKind kind = NodeKind::object;
    Attrs attrs;
};
/// Merges `attrs` into the node's attribute map.
struct UpdateNode {
    NodeId id = 0;
    Attrs attrs;
    std::vector<std::string> erase;
};
/// Removes the node together with every incident edge.
struct RemoveNode {
    NodeId id = 0;
};
struct AddEdge {
    Edge edge;
};
/// Replaces the attributes of an existing edge.
struct UpdateEdge {
    Edge edge;
};
struct RemoveEdge {
    EdgeKey key;
};
}  // namespace edit

using Edit = std::variant<edit::AddNode, edit::UpdateNode, edit::RemoveNode, edit::AddEdge,
                          edit::UpdateEdge, edit::RemoveEdge>;

/// Immutable graph content.
struct Graph {
    std::map<NodeId, Node> nodes;
    std::map<EdgeKey, Edge> edges;

    friend bool operator==(const Graph&, const Graph&) = default;

    const Node* find(NodeId id) const;
    const Edge* find(const EdgeKey& key) const;
    std::vector<const Node*> of_kind(NodeKind kind) const;
    std::vector<const Edge*> out_edges(NodeId from, EdgeLabel label) const;
    std::vector<const Edge*> in_edges(NodeId to, EdgeLabel label) const;
};

class Snapshot {
public:
    Snapshot() : graph_(std::make_shared<const Graph>()) {}
    Snapshot(std::shared_ptr<const Graph> graph, Version version)
        : graph_(std::move(graph)), version_(version) {}

    const Graph& graph() const { return *graph_; }
    Version version() const { return version_; }

private:
    std::shared_ptr<const Graph> graph_;
    Version version_ = 0;
};

struct Delta {
    Version version = 0;
    Clock::time_point time;
    std::vector<Edit> edits;
    std::set<NodeKind> kinds;
    std::set<EdgeLabel> labels;
};

struct SubscriptionFilter {
    std::set<NodeKind> kinds;
    std::set<EdgeLabel> labels;

    bool matches(const Delta& delta) const;
};

/// Bounded per-subscriber queue. Once full, the subscription flips to overflowed and
/// stops buffering; the consumer sees an overflow delivery after draining what it has.
class Subscription {
public:
    enum class Status { delta, overflow, timeout, closed };
    struct Delivery {
        Status status = Status::timeout;
        Delta delta;
    };

    Subscription(SubscriptionFilter filter, std::size_t capacity);

    Delivery next(std::chrono::milliseconds timeout);
    std::optional<Delta> try_next();
    bool overflowed() const;
    void close();

    const SubscriptionFilter& filter() const { return filter_; }

private:
    friend class WorkingMemory;
    void push(const Delta& delta);

    SubscriptionFilter filter_;
    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::deque<Delta> queue_;
    bool overflowed_ = false;
    bool overflow_reported_ = false;
    bool closed_ = false;
};

/// Shared context of the architecture: a typed attributed graph edited through
/// serialized all-or-nothing transactions.
class WorkingMemory {
public:
    explicit WorkingMemory(bool keep_log = true);

    /// Applies every edit or none; returns the new version.
    Version transact(const std::vector<Edit>& edits);
    Snapshot snapshot() const;
    Version version() const;
    std::shared_ptr<Subscription> subscribe(SubscriptionFilter filter, std::size_t capacity = 1024);

    /// Allocates a fresh node id.
    NodeId new_id();
    /// Commit time of a version; version 0 is the store's creation time.
    Clock::time_point version_time(Version v) const;

    /// Committed transactions in version order (empty when logging is off).
    std::vector<std::vector<Edit>> log() const;
    static Graph replay(const std::vector<std::vector<Edit>>& log);

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const Graph> graph_;
    Version version_ = 0;
    NodeId next_id_ = 1;
    bool keep_log_;
    std::vector<std::vector<Edit>> log_;
    std::vector<Clock::time_point> version_times_;
    std::vector<std::weak_ptr<Subscription>> subscribers_;
};

/// Applies edits to a copy of `graph` at `version`; throws TransactionError on any violation.
Graph apply_edits(const Graph& graph, const std::vector<Edit>& edits, Version version,
                  std::set<NodeKind>* kinds = nullptr, std::set<EdgeLabel>* labels = nullptr);

/// Full-scan referential integrity check.
bool referentially_intact(const Graph& graph);

nlohmann::json to_json(const Value& value);
nlohmann::json dump_graph(const Snapshot& snapshot);

// Typed attribute access.
std::optional<double> attr_real(const Attrs& attrs, const std::string& name);
std::optional<std::int64_t> attr_int(const Attrs& attrs, const std::string& name);
std::optional<bool> attr_bool(const Attrs& attrs, const std::string& name);
std::optional<std::string> attr_text(const Attrs& attrs, const std::string& name);
std::optional<std::vector<double>> attr_vec(const Attrs& attrs, const std::string& name);

Attrs pose_attrs(const Pose2& pose);
std::optional<Pose2> attrs_pose(const Attrs& attrs);

// Graph queries used by the agents.
std::vector<const Node*> query_people(const Snapshot& snapshot);
std::vector<const Node*> query_objects(const Snapshot& snapshot);
std::vector<const Node*> query_intentions(const Snapshot& snapshot);

}  // namespace atm
