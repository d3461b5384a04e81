#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "atm/hitl.hpp"

namespace atm {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

constexpr std::size_t kMaxQueuedFrames = 64;
constexpr auto kTick = std::chrono::milliseconds(50);

std::string mime_for(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".html") return "text/html";
    if (ext == ".js") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

}  // namespace

struct HitlServer::Impl {
    class Client;

    asio::io_context io;
    tcp::acceptor acceptor;
    asio::steady_timer timer;
    HitlSession session;
    std::string static_dir;
    std::set<std::shared_ptr<Client>> clients;
    std::weak_ptr<Client> steering;
    std::string token;
    std::thread background;
    std::mt19937_64 token_rng{std::random_device{}()};

    Impl(Scenario scenario, HarnessConfig config, unsigned short port, std::string dir, bool run_agents)
        : acceptor(io, tcp::endpoint(asio::ip::address_v4::loopback(), port)),
          timer(io),
          session(std::move(scenario), std::move(config), run_agents),
          static_dir(std::move(dir)) {}

    void accept();
    void schedule_tick(std::chrono::steady_clock::time_point at);
    void broadcast(const std::string& text);
    void on_message(const std::shared_ptr<Client>& client, const std::string& text);
    void on_closed(const std::shared_ptr<Client>& client);
};

class HitlServer::Impl::Client : public std::enable_shared_from_this<Client> {
public:
    Client(Impl& server, tcp::socket socket) : server_(server), stream_(std::move(socket)) {}

    void start() { read_request(); }

    void send(std::string text, bool droppable) {
        if (!ws_) return;
        if (droppable && queue_.size() >= kMaxQueuedFrames) {
            // Frames are full state snapshots, so the oldest queued one is the cheapest loss.
            for (auto it = queue_.begin() + (writing_ ? 1 : 0); it != queue_.end(); ++it) {
                if (it->second) {
                    queue_.erase(it);
                    break;
                }
            }
        }
        queue_.emplace_back(std::move(text), droppable);
        if (!writing_) write_next();
    }

    void close() {
        if (ws_) {
            beast::error_code ec;
            beast::get_lowest_layer(*ws_).socket().close(ec);
        } else {
            beast::error_code ec;
            stream_.socket().close(ec);
        }
    }

    std::string role;

private:
    void read_request() {
        auto self = shared_from_this();
        http::async_read(stream_, buffer_, request_, [self](beast::error_code ec, std::size_t) {
            if (ec) return self->server_.on_closed(self);
            if (websocket::is_upgrade(self->request_)) {
                self->upgrade();
            } else {
                self->serve_file();
            }
        });
    }

    void upgrade() {
        ws_.emplace(std::move(stream_));
        ws_->text(true);
        auto self = shared_from_this();
        ws_->async_accept(request_, [self](beast::error_code ec) {
            if (ec) return self->server_.on_closed(self);
            self->server_.clients.insert(self);
            json hello{{"type", "ack"}, {"of", "connect"}};
            if (self->server_.steering.expired()) {
                self->server_.steering = self;
                self->server_.token = std::to_string(self->server_.token_rng());
                self->role = "steering";
                hello["session"] = self->server_.token;
            } else {
                self->role = "observer";
            }
            hello["role"] = self->role;
            hello["state"] = self->server_.session.running() ? "running" : "paused";
            self->send(hello.dump(), false);
            self->read_message();
        });
    }

    void serve_file() {
        auto self = shared_from_this();
        auto res = std::make_shared<http::response<http::string_body>>();
        res->version(request_.version());
        res->keep_alive(false);
        std::filesystem::path root = server_.static_dir;
        std::string target(request_.target());
        if (target == "/") target = "/index.html";
        const bool safe = target.find("..") == std::string::npos;
        const auto file = root / target.substr(1);
        if (server_.static_dir.empty() || !safe || !std::filesystem::is_regular_file(file)) {
            res->result(http::status::not_found);
            res->set(http::field::content_type, "text/plain");
            res->body() = "not found\n";
        } else {
            std::ifstream in(file, std::ios::binary);
            res->body().assign(std::istreambuf_iterator<char>(in), {});
            res->result(http::status::ok);
            res->set(http::field::content_type, mime_for(file));
        }
        res->prepare_payload();
        http::async_write(stream_, *res, [self, res](beast::error_code, std::size_t) {
            beast::error_code ec;
            self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        });
    }

    void read_message() {
        auto self = shared_from_this();
        ws_->async_read(read_buffer_, [self](beast::error_code ec, std::size_t) {
            if (ec) return self->server_.on_closed(self);
            const std::string text = beast::buffers_to_string(self->read_buffer_.data());
            self->read_buffer_.consume(self->read_buffer_.size());
            self->server_.on_message(self, text);
            self->read_message();
        });
    }

    void write_next() {
        if (queue_.empty()) {
            writing_ = false;
            return;
        }
        writing_ = true;
        auto self = shared_from_this();
        ws_->async_write(asio::buffer(queue_.front().first), [self](beast::error_code ec, std::size_t) {
            self->queue_.pop_front();
            if (ec) {
                self->writing_ = false;
                return self->server_.on_closed(self);
            }
            self->write_next();
        });
    }

    Impl& server_;
    beast::tcp_stream stream_;
    std::optional<websocket::stream<beast::tcp_stream>> ws_;
    beast::flat_buffer buffer_;
    beast::flat_buffer read_buffer_;
    http::request<http::string_body> request_;
    std::deque<std::pair<std::string, bool>> queue_;
    bool writing_ = false;
};

void HitlServer::Impl::accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;
        std::make_shared<Client>(*this, std::move(socket))->start();
        accept();
    });
}

void HitlServer::Impl::schedule_tick(std::chrono::steady_clock::time_point at) {
    timer.expires_at(at);
    timer.async_wait([this, at](beast::error_code ec) {
        if (ec) return;
        try {
            if (auto frame = session.tick()) broadcast(frame->dump());
        } catch (const std::exception& ex) {
            std::cerr << "tick failed: " << ex.what() << "\n";
        }
        auto next = at + kTick;
        const auto now = std::chrono::steady_clock::now();
        if (next < now) next = now;
        schedule_tick(next);
    });
}

void HitlServer::Impl::broadcast(const std::string& text) {
    for (const auto& c : clients) c->send(text, true);
}

void HitlServer::Impl::on_closed(const std::shared_ptr<Client>& client) {
    clients.erase(client);
    if (steering.lock() == client) {
        steering.reset();
        token.clear();
    }
}

void HitlServer::Impl::on_message(const std::shared_ptr<Client>& client, const std::string& text) {
    auto reply_error = [&](const std::string& message) {
        client->send(json{{"type", "error"}, {"message", message}}.dump(), false);
    };
    json msg;
    try {
        msg = json::parse(text);
    } catch (const json::exception&) {
        return reply_error("malformed message");
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
        return reply_error("malformed message: missing type");
    }
    const std::string type = msg["type"];
    if (type != "steer" && type != "reset" && type != "start" && type != "pause") {
        return reply_error("unknown message type '" + type + "'");
    }
    if (steering.lock() != client) {
        return reply_error("session busy");
    }
    if (type == "steer") {
        if (!msg.contains("session") || !msg["session"].is_string() || msg["session"] != token) {
            return reply_error("invalid session");
        }
        if (!msg.contains("vx") || !msg.contains("vy") || !msg["vx"].is_number() || !msg["vy"].is_number()) {
            return reply_error("malformed message: steer needs numeric vx and vy");
        }
        try {
            session.steer(msg["vx"].get<double>(), msg["vy"].get<double>());
        } catch (const std::exception& ex) {
            reply_error(ex.what());
        }
        return;
    }
    if (type == "reset") {
        session.reset();
    } else if (type == "start") {
        session.start();
    } else {
        session.pause();
    }
    client->send(json{{"type", "ack"},
                      {"of", type},
                      {"state", session.running() ? "running" : "paused"},
                      {"t", session.state().time()}}
                     .dump(),
                 false);
    if (type == "reset") broadcast(session.frame().dump());
}

HitlServer::HitlServer(Scenario scenario, HarnessConfig config, unsigned short port, std::string static_dir,
                       bool run_agents)
    : impl_(std::make_unique<Impl>(std::move(scenario), std::move(config), port, std::move(static_dir),
                                   run_agents)) {
    impl_->accept();
    impl_->schedule_tick(std::chrono::steady_clock::now() + kTick);
}

HitlServer::~HitlServer() { stop(); }

unsigned short HitlServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void HitlServer::run() { impl_->io.run(); }

void HitlServer::start_background() {
    impl_->background = std::thread([this] { impl_->io.run(); });
}

void HitlServer::stop() {
    if (!impl_) return;
    asio::post(impl_->io, [this] {
        beast::error_code ec;
        impl_->acceptor.close(ec);
        impl_->timer.cancel();
        for (const auto& c : impl_->clients) c->close();
        impl_->clients.clear();
    });
    if (impl_->background.joinable()) {
        impl_->background.join();
    } else {
        impl_->io.stop();
    }
    impl_->io.stop();
}

}  // namespace atm
