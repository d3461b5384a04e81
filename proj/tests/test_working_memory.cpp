#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <random>
#include <thread>

#include "atm/working_memory.hpp"

using namespace atm;
using namespace std::chrono_literals;

namespace {

edit::AddNode robot_node(NodeId id) { return {id, NodeKind::robot, pose_attrs(Pose2{})}; }

edit::AddNode body_node(NodeId id, NodeKind kind, const std::string& cls) {
    return {id, kind, {{"track_id", std::int64_t{id}}, {"class", cls}}};
}

edit::AddEdge rt_edge(NodeId from, NodeId to, double x, double y) {
    return {Edge{from, to, EdgeLabel::rt, pose_attrs(Pose2(x, y, 0.0))}};
}

edit::AddNode collision_node(NodeId id) {
    return {id, NodeKind::collision, {{"time", 1.0}, {"xy", std::vector<double>{0.0, 0.0}}}};
}

}  // namespace

TEST_CASE("person with an RT edge is visible at the returned version") {
    WorkingMemory wm;
    wm.transact({robot_node(1)});
    const Version v = wm.transact({body_node(2, NodeKind::person, "person"), rt_edge(1, 2, 1.0, 2.0)});
    const Snapshot s = wm.snapshot();
    CHECK(s.version() == v);
    REQUIRE(s.graph().find(2));
    REQUIRE(s.graph().find(EdgeKey{1, 2, EdgeLabel::rt}));
    CHECK(query_people(s).size() == 1);
}

TEST_CASE("a dangling edge rejects the whole transaction") {
    WorkingMemory wm;
    wm.transact({robot_node(1)});
    const Graph before = wm.snapshot().graph();
    CHECK_THROWS_AS(wm.transact({body_node(2, NodeKind::object, "ball"), rt_edge(1, 99, 0, 0)}),
                    TransactionError);
    CHECK(wm.snapshot().graph() == before);
    CHECK(wm.version() == 1);
}

TEST_CASE("duplicate edges and duplicate ids are rejected") {
    WorkingMemory wm;
    wm.transact({robot_node(1), body_node(2, NodeKind::object, "ball"), rt_edge(1, 2, 0, 0)});
    CHECK_THROWS_AS(wm.transact({rt_edge(1, 2, 1, 1)}), TransactionError);
    CHECK_THROWS_AS(wm.transact({robot_node(1)}), TransactionError);
    CHECK(wm.version() == 1);
}

TEST_CASE("RT edges must carry a valid pose") {
    WorkingMemory wm;
    wm.transact({robot_node(1), body_node(2, NodeKind::object, "ball")});
    CHECK_THROWS_AS(wm.transact({edit::AddEdge{Edge{1, 2, EdgeLabel::rt, {{"x", 0.0}}}}}), TransactionError);
    CHECK_THROWS_AS(wm.transact({edit::AddEdge{Edge{1, 2, EdgeLabel::rt,
                                                    {{"x", 0.0}, {"y", 0.0}, {"theta", 4.0}}}}}),
                    TransactionError);
}

TEST_CASE("schema types are checked per kind") {
    WorkingMemory wm;
    CHECK_THROWS_AS(wm.transact({edit::AddNode{5, NodeKind::object, {{"track_id", 2.5}, {"class", std::string("x")}}}}),
                    TransactionError);
    CHECK_THROWS_AS(wm.transact({edit::AddNode{5, NodeKind::collision, {{"time", 1.0}}}}), TransactionError);
    // A risky intention needs its collision time.
    CHECK_THROWS_AS(wm.transact({edit::AddNode{6, NodeKind::intention,
                                               {{"subject", std::int64_t{1}},
                                                {"target", std::int64_t{2}},
                                                {"action", std::string("reach")},
                                                {"c", true}}}}),
                    TransactionError);
}

TEST_CASE("sequential transactions produce consecutive versions") {
    WorkingMemory wm;
    const Version a = wm.transact({robot_node(1)});
    const Version b = wm.transact({body_node(2, NodeKind::object, "ball")});
    CHECK(b == a + 1);
}

TEST_CASE("snapshots are isolated from later edits") {
    WorkingMemory wm;
    wm.transact({robot_node(1), body_node(2, NodeKind::object, "ball"), rt_edge(1, 2, 0, 0)});
    const Snapshot s1 = wm.snapshot();
    const Snapshot s2 = wm.snapshot();
    CHECK(s1.graph() == s2.graph());
    wm.transact({edit::RemoveNode{2}});
    CHECK(s1.graph().find(2));
    CHECK(s1.graph().edges.size() == 1);
    CHECK_FALSE(wm.snapshot().graph().find(2));
    CHECK(wm.snapshot().graph().edges.empty());
}

TEST_CASE("removing a node removes incident edges") {
    WorkingMemory wm;
    wm.transact({robot_node(1), body_node(2, NodeKind::person, "person"), rt_edge(1, 2, 0, 0)});
    wm.transact({edit::RemoveNode{1}});
    CHECK(referentially_intact(wm.snapshot().graph()));
}

TEST_CASE("concurrent snapshots always equal some committed version") {
    WorkingMemory wm;
    wm.transact({robot_node(1)});
    std::atomic<bool> done{false};
    std::vector<Snapshot> seen;

    std::thread reader([&] {
        while (!done.load()) seen.push_back(wm.snapshot());
    });
    std::vector<std::thread> writers;
    for (int w = 0; w < 4; ++w) {
        writers.emplace_back([&, w] {
            for (int k = 0; k < 25; ++k) {
                const NodeId id = wm.new_id() + 1000;
                wm.transact({body_node(id, NodeKind::object, "ball"), rt_edge(1, id, w, k)});
            }
        });
    }
    for (auto& t : writers) t.join();
    done = true;
    reader.join();
    seen.push_back(wm.snapshot());

    CHECK(wm.version() == 101);
    const auto log = wm.log();
    REQUIRE(log.size() == 101);
    CHECK(WorkingMemory::replay(log) == wm.snapshot().graph());

    for (const auto& s : seen) {
        const std::vector<std::vector<Edit>> prefix(log.begin(), log.begin() + s.version());
        const Graph replayed = WorkingMemory::replay(prefix);
        CHECK(replayed == s.graph());
        CHECK(referentially_intact(s.graph()));
    }
}

TEST_CASE("filtered subscription sees matching deltas only") {
    WorkingMemory wm;
    auto sub = wm.subscribe({{NodeKind::collision}, {}});
    wm.transact({robot_node(1), body_node(2, NodeKind::object, "ball"), rt_edge(1, 2, 0, 0)});
    wm.transact({edit::UpdateEdge{Edge{1, 2, EdgeLabel::rt, pose_attrs(Pose2(1, 1, 0))}}});
    CHECK(sub->next(10ms).status == Subscription::Status::timeout);
    const Version v = wm.transact({collision_node(3)});
    const auto d = sub->next(100ms);
    REQUIRE(d.status == Subscription::Status::delta);
    CHECK(d.delta.version == v);
    CHECK_FALSE(sub->try_next());
}

TEST_CASE("RT-only updates do not wake a collision subscriber") {
    WorkingMemory wm;
    wm.transact({robot_node(1), body_node(2, NodeKind::object, "ball"), rt_edge(1, 2, 0, 0)});
    auto sub = wm.subscribe({{NodeKind::collision}, {}});
    for (int i = 0; i < 10; ++i) {
        wm.transact({edit::UpdateEdge{Edge{1, 2, EdgeLabel::rt, pose_attrs(Pose2(i, 0, 0))}}});
    }
    CHECK_FALSE(sub->try_next());
}

TEST_CASE("a thousand commits arrive once each and in order") {
    WorkingMemory wm(false);
    auto sub = wm.subscribe({}, 2000);
    std::vector<Version> got;
    std::thread consumer([&] {
        while (got.size() < 1000) {
            auto d = sub->next(1000ms);
            if (d.status != Subscription::Status::delta) break;
            got.push_back(d.delta.version);
        }
    });
    for (int i = 0; i < 1000; ++i) wm.transact({body_node(wm.new_id(), NodeKind::object, "ball")});
    consumer.join();
    REQUIRE(got.size() == 1000);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == static_cast<Version>(i + 1));
}

TEST_CASE("a slow consumer gets an explicit overflow") {
    WorkingMemory wm(false);
    auto sub = wm.subscribe({}, 4);
    for (int i = 0; i < 10; ++i) wm.transact({body_node(wm.new_id(), NodeKind::object, "ball")});
    CHECK(sub->overflowed());
    int deltas = 0;
    for (;;) {
        auto d = sub->next(10ms);
        if (d.status == Subscription::Status::delta) {
            ++deltas;
            continue;
        }
        CHECK(d.status == Subscription::Status::overflow);
        break;
    }
    CHECK(deltas == 4);
    CHECK(sub->next(10ms).status == Subscription::Status::closed);
}

TEST_CASE("replaying the log reproduces the graph") {
    std::mt19937_64 rng(3);
    WorkingMemory wm;
    wm.transact({robot_node(1)});
    std::vector<NodeId> live;
    for (int i = 0; i < 300; ++i) {
        const auto choice = rng() % 3;
        if (choice == 0 || live.empty()) {
            const NodeId id = wm.new_id() + 10;
            wm.transact({body_node(id, NodeKind::object, "ball"), rt_edge(1, id, i, 0)});
            live.push_back(id);
        } else if (choice == 1) {
            const NodeId id = live[rng() % live.size()];
            wm.transact({edit::UpdateNode{id, {{"height", 0.1 * i}}, {}}});
        } else {
            const std::size_t k = rng() % live.size();
            wm.transact({edit::RemoveNode{live[k]}});
            live.erase(live.begin() + static_cast<std::ptrdiff_t>(k));
        }
        // A bad transaction in the mix must not touch the log.
        CHECK_THROWS(wm.transact({edit::RemoveNode{-1}}));
    }
    CHECK(wm.log().size() == static_cast<std::size_t>(wm.version()));
    CHECK(WorkingMemory::replay(wm.log()) == wm.snapshot().graph());
}

TEST_CASE("empty graph queries are empty") {
    WorkingMemory wm;
    const Snapshot s = wm.snapshot();
    CHECK(query_people(s).empty());
    CHECK(query_objects(s).empty());
    CHECK(query_intentions(s).empty());
}

TEST_CASE("graph dump lists nodes and edges") {
    WorkingMemory wm;
    wm.transact({robot_node(1), body_node(2, NodeKind::object, "ball"), rt_edge(1, 2, 0, 0)});
    const auto doc = dump_graph(wm.snapshot());
    CHECK(doc["nodes"].size() == 2);
    CHECK(doc["edges"].size() == 1);
}
