#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <deque>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "atm/hitl.hpp"

using namespace atm;
using namespace std::chrono_literals;
using nlohmann::json;

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;

namespace {

constexpr EntityId kPerson = 2;

Scenario hitl_scenario() { return load_scenario_file(std::string(ATM_SCENARIO_DIR) + "/hitl.json"); }

// Keeps one read outstanding so a timed-out wait never cancels the stream.
class Client {
public:
    explicit Client(unsigned short port) {
        asio::ip::tcp::resolver resolver(io_);
        beast::get_lowest_layer(ws_).connect(resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", "/");
        read_next();
    }

    ~Client() {
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().shutdown(asio::ip::tcp::socket::shutdown_both, ec);
        beast::get_lowest_layer(ws_).close();
    }

    void send(const std::string& text) { ws_.write(asio::buffer(text)); }
    void send(const json& j) { send(j.dump()); }

    std::optional<json> next(std::chrono::milliseconds timeout = 2000ms) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (inbox_.empty() && !closed_ && std::chrono::steady_clock::now() < deadline) {
            io_.restart();
            io_.run_one_until(deadline);
        }
        if (inbox_.empty()) return std::nullopt;
        json j = std::move(inbox_.front());
        inbox_.pop_front();
        return j;
    }

    /// Next message that is not a frame.
    std::optional<json> reply(std::chrono::milliseconds timeout = 2000ms) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (std::chrono::steady_clock::now() < deadline) {
            auto m = next(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()));
            if (!m) return std::nullopt;
            if ((*m)["type"] != "frame") return m;
        }
        return std::nullopt;
    }

    std::optional<json> frame(std::chrono::milliseconds timeout = 2000ms) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (std::chrono::steady_clock::now() < deadline) {
            auto m = next(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()));
            if (!m) return std::nullopt;
            if ((*m)["type"] == "frame") return m;
        }
        return std::nullopt;
    }

    void drain() {
        while (next(0ms)) {
        }
    }

private:
    void read_next() {
        ws_.async_read(buffer_, [this](beast::error_code ec, std::size_t) {
            if (ec) {
                closed_ = true;
                return;
            }
            inbox_.push_back(json::parse(beast::buffers_to_string(buffer_.data())));
            buffer_.consume(buffer_.size());
            read_next();
        });
    }

    asio::io_context io_;
    websocket::stream<beast::tcp_stream> ws_{io_};
    beast::flat_buffer buffer_;
    std::deque<json> inbox_;
    bool closed_ = false;
};

struct Server {
    HitlServer server{hitl_scenario(), HarnessConfig{}, 0, {}, false};
    Server() { server.start_background(); }
    ~Server() { server.stop(); }
    unsigned short port() const { return server.port(); }
};

Vec2 person_xy(const json& frame) {
    for (const auto& e : frame["entities"]) {
        if (e["id"] == kPerson) return {e["x"].get<double>(), e["y"].get<double>()};
    }
    FAIL("person missing from frame");
    return {};
}

}  // namespace

TEST_CASE("session clamps steering to the person's speed limit") {
    HitlSession s(hitl_scenario(), HarnessConfig{}, false);
    const Vec2 start = s.state().entity(kPerson).pose.position();
    s.steer(5.0, 0.0);
    for (int i = 0; i < 10; ++i) REQUIRE(s.tick());
    const double travelled = (s.state().entity(kPerson).pose.position() - start).norm();
    CHECK(travelled <= 0.5 * s.state().time() + 1e-9);
    CHECK(travelled > 0.0);
    CHECK_THROWS(s.steer(std::nan(""), 0.0));
}

TEST_CASE("paused sessions do not advance and reset returns to zero") {
    HitlSession s(hitl_scenario(), HarnessConfig{}, false);
    REQUIRE(s.tick());
    s.pause();
    const double t = s.state().time();
    CHECK_FALSE(s.tick());
    CHECK(s.state().time() == t);
    s.reset();
    CHECK(s.state().time() == 0.0);
    CHECK_FALSE(s.running());
}

TEST_CASE("first client steers and a second one observes") {
    Server srv;
    Client a(srv.port());
    const auto hello = a.reply();
    REQUIRE(hello);
    CHECK((*hello)["type"] == "ack");
    CHECK((*hello)["of"] == "connect");
    CHECK((*hello)["role"] == "steering");
    CHECK((*hello)["session"].is_string());

    Client b(srv.port());
    const auto hello_b = b.reply();
    REQUIRE(hello_b);
    CHECK((*hello_b)["role"] == "observer");
    CHECK_FALSE(hello_b->contains("session"));
    b.send(json{{"type", "steer"}, {"session", (*hello)["session"]}, {"vx", 0.1}, {"vy", 0.0}});
    const auto busy = b.reply();
    REQUIRE(busy);
    CHECK((*busy)["type"] == "error");
    CHECK((*busy)["message"] == "session busy");
}

TEST_CASE("bad messages get error replies and the session survives") {
    Server srv;
    Client a(srv.port());
    const auto hello = a.reply();
    REQUIRE(hello);
    const std::string token = (*hello)["session"];

    a.send(std::string("{not json"));
    auto r = a.reply();
    REQUIRE(r);
    CHECK((*r)["message"] == "malformed message");

    a.send(json{{"vx", 1.0}});
    r = a.reply();
    REQUIRE(r);
    CHECK((*r)["message"] == "malformed message: missing type");

    a.send(json{{"type", "fly"}});
    r = a.reply();
    REQUIRE(r);
    CHECK((*r)["message"] == "unknown message type 'fly'");

    a.send(json{{"type", "steer"}, {"session", "nope"}, {"vx", 0.1}, {"vy", 0.0}});
    r = a.reply();
    REQUIRE(r);
    CHECK((*r)["message"] == "invalid session");

    a.send(json{{"type", "steer"}, {"session", token}, {"vx", 0.1}});
    r = a.reply();
    REQUIRE(r);
    CHECK((*r)["type"] == "error");

    CHECK(a.frame());
}

TEST_CASE("frames stream without commands") {
    Server srv;
    Client a(srv.port());
    REQUIRE(a.reply());
    double last = -1.0;
    for (int i = 0; i < 4; ++i) {
        const auto f = a.frame();
        REQUIRE(f);
        CHECK((*f)["t"].get<double>() > last);
        last = (*f)["t"];
        CHECK((*f)["entities"].size() == 5);
        CHECK(f->contains("subjective_visible_ids"));
    }
}

TEST_CASE("pause stops frames and reset rewinds") {
    Server srv;
    Client a(srv.port());
    REQUIRE(a.reply());
    REQUIRE(a.frame());

    a.send(json{{"type", "pause"}});
    auto ack = a.reply();
    REQUIRE(ack);
    CHECK((*ack)["of"] == "pause");
    CHECK((*ack)["state"] == "paused");
    CHECK_FALSE(a.next(150ms));

    a.send(json{{"type", "reset"}});
    ack = a.reply();
    REQUIRE(ack);
    CHECK((*ack)["of"] == "reset");
    CHECK((*ack)["t"] == 0.0);
    const auto f = a.frame();
    REQUIRE(f);
    CHECK((*f)["t"] == 0.0);
    CHECK_FALSE(a.next(150ms));

    a.send(json{{"type", "start"}});
    ack = a.reply();
    REQUIRE(ack);
    CHECK((*ack)["state"] == "running");
    CHECK(a.frame());
}

TEST_CASE("a fast steer is clamped on the wire") {
    Server srv;
    Client a(srv.port());
    const auto hello = a.reply();
    REQUIRE(hello);
    a.send(json{{"type", "pause"}});
    REQUIRE(a.reply());
    a.drain();
    a.send(json{{"type", "steer"}, {"session", (*hello)["session"]}, {"vx", 5.0}, {"vy", 0.0}});
    a.send(json{{"type", "start"}});
    REQUIRE(a.reply());
    auto prev = a.frame();
    REQUIRE(prev);
    double fastest = 0.0;
    for (int i = 0; i < 8; ++i) {
        const auto f = a.frame();
        REQUIRE(f);
        const double dt = (*f)["t"].get<double>() - (*prev)["t"].get<double>();
        REQUIRE(dt > 0.0);
        const double v = (person_xy(*f) - person_xy(*prev)).norm() / dt;
        CHECK(v <= 0.5 + 1e-9);
        fastest = std::max(fastest, v);
        prev = f;
    }
    CHECK(fastest == doctest::Approx(0.5).epsilon(1e-6));
}
