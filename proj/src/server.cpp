#include "gesturemap/error.hpp"
#include "gesturemap/server.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <deque>
#include <future>
#include <thread>

namespace gesturemap::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;

namespace {

struct Shared
{
    Hub& hub;
    std::chrono::nanoseconds live_interval;
};

class WsSession : public std::enable_shared_from_this<WsSession>
{
public:
    WsSession(tcp::socket&& socket, Shared& shared)
        : ws_(std::move(socket)), timer_(ws_.get_executor()), shared_(shared)
    {
    }

    void run(http::request<http::string_body> req)
    {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

private:
    void on_accept(beast::error_code ec)
    {
        if (!ec)
            do_read();
    }

    void do_read()
    {
        ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec)
            return;
        const auto text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());

        json cmd;
        bool live = false;
        std::vector<json> events;
        try {
            cmd = json::parse(text);
            live = cmd.is_object() && cmd.value("cmd", "") == "frame";
            events = shared_.hub.handle(connection_, cmd);
        } catch (const json::parse_error& e) {
            events = {error_event(ErrorKind::parse, e.what())};
        }

        const bool failed = events.size() == 1 && events.front().value("evt", "") == "error";
        if (live && !failed)
            throttle(std::move(events));
        else
            for (auto& e : events)
                send(e.dump());
        do_read();
    }

    // Live results go out at most once per interval; newer ones replace a
    // pending batch.
    void throttle(std::vector<json> events)
    {
        if (events.empty())
            return;
        const auto now = std::chrono::steady_clock::now();
        if (!sent_live_ || now - last_live_ >= shared_.live_interval) {
            last_live_ = now;
            sent_live_ = true;
            for (auto& e : events)
                send(e.dump());
            return;
        }
        pending_ = std::move(events);
        if (timer_armed_)
            return;
        timer_armed_ = true;
        timer_.expires_at(last_live_ + shared_.live_interval);
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            self->timer_armed_ = false;
            if (ec)
                return;
            self->last_live_ = std::chrono::steady_clock::now();
            for (auto& e : self->pending_)
                self->send(e.dump());
            self->pending_.clear();
        });
    }

    void send(std::string text)
    {
        queue_.push_back(std::move(text));
        if (queue_.size() == 1)
            do_write();
    }

    void do_write()
    {
        ws_.text(true);
        ws_.async_write(asio::buffer(queue_.front()),
                        beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t)
    {
        if (ec)
            return;
        queue_.pop_front();
        if (!queue_.empty())
            do_write();
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    asio::steady_timer timer_;
    Shared& shared_;
    Connection connection_;
    std::deque<std::string> queue_;
    std::vector<json> pending_;
    std::chrono::steady_clock::time_point last_live_{};
    bool sent_live_ = false;
    bool timer_armed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession>
{
public:
    HttpSession(tcp::socket&& socket, Shared& shared) : stream_(std::move(socket)), shared_(shared) {}

    void run() { do_read(); }

private:
    void do_read()
    {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t)
    {
        if (ec == http::error::end_of_stream) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        if (ec)
            return;
        if (websocket::is_upgrade(req_)) {
            if (req_.target() == "/ws") {
                stream_.expires_never();
                std::make_shared<WsSession>(stream_.release_socket(), shared_)->run(std::move(req_));
                return;
            }
            respond(http::status::not_found, error_event(ErrorKind::protocol, "websocket endpoint is /ws"));
            return;
        }
        route();
    }

    void route()
    {
        const std::string target(req_.target());
        const auto method = req_.method();
        try {
            if (target == "/health") {
                if (method != http::verb::get)
                    return respond(http::status::method_not_allowed, error_event(ErrorKind::protocol, "use GET"));
                return respond(http::status::ok, {{"status", "ok"},
                                                  {"v", protocol_version},
                                                  {"sessions", shared_.hub.session_count()}});
            }
            if (target == "/mappings") {
                if (method != http::verb::get)
                    return respond(http::status::method_not_allowed, error_event(ErrorKind::protocol, "use GET"));
                return respond(http::status::ok, {{"mappings", shared_.hub.mappings().index()}});
            }
            if (target.rfind("/mappings/", 0) == 0) {
                if (method != http::verb::get)
                    return respond(http::status::method_not_allowed, error_event(ErrorKind::protocol, "use GET"));
                const auto id = target.substr(10);
                const auto record = shared_.hub.mappings().get(id);
                if (!record)
                    return respond(http::status::not_found,
                                   error_event(ErrorKind::registry, "unknown mapping '" + id + "'"));
                return respond(http::status::ok, json::parse(session::mapping_to_json(*record)));
            }
            if (target == "/sessions") {
                if (method != http::verb::post)
                    return respond(http::status::method_not_allowed, error_event(ErrorKind::protocol, "use POST"));
                json config = req_.body().empty() ? json::object() : json::parse(req_.body());
                return respond(http::status::created, shared_.hub.create(config));
            }
            respond(http::status::not_found, error_event(ErrorKind::protocol, "no route for " + target));
        } catch (const Error& e) {
            respond(http::status::bad_request, error_event(e.kind(), e.what()));
        } catch (const json::exception& e) {
            respond(http::status::bad_request, error_event(ErrorKind::parse, e.what()));
        }
    }

    void respond(http::status status, const json& body)
    {
        auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
        res->set(http::field::content_type, "application/json");
        res->keep_alive(req_.keep_alive());
        res->body() = body.dump() + "\n";
        res->prepare_payload();
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
            if (ec)
                return;
            if (res->keep_alive())
                self->do_read();
            else
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    Shared& shared_;
};

} // namespace

struct Server::Impl
{
    explicit Impl(ServerOptions o)
        : options(std::move(o)), hub(options.hub), ioc(std::in_place), acceptor(std::in_place, *ioc),
          shared{hub, std::chrono::nanoseconds(static_cast<long long>(1e9 / options.params_rate_hz))}
    {
    }

    void do_accept()
    {
        acceptor->async_accept(asio::make_strand(*ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec == asio::error::operation_aborted || !acceptor->is_open())
                return;
            if (!ec)
                std::make_shared<HttpSession>(std::move(socket), shared)->run();
            do_accept();
        });
    }

    ServerOptions options;
    Hub hub;
    // Destroying these drops every pending handler, which closes open
    // connections.
    std::optional<asio::io_context> ioc;
    std::optional<tcp::acceptor> acceptor;
    unsigned short port = 0;
    Shared shared;
    std::vector<std::thread> threads;
    std::mutex stop_mutex;
    bool started = false;
    bool stopped = false;
};

Server::Server(ServerOptions options)
{
    if (!(options.params_rate_hz > 0.0))
        fail(ErrorKind::parameter, "params rate must be positive");
    impl_ = std::make_unique<Impl>(std::move(options));
    auto& a = *impl_->acceptor;
    const auto where = impl_->options.address + ":" + std::to_string(impl_->options.port);
    try {
        const tcp::endpoint ep(asio::ip::make_address(impl_->options.address), impl_->options.port);
        a.open(ep.protocol());
        a.set_option(asio::socket_base::reuse_address(true));
        a.bind(ep);
        a.listen(asio::socket_base::max_listen_connections);
        impl_->port = a.local_endpoint().port();
    } catch (const boost::system::system_error& e) {
        fail(ErrorKind::io, "cannot listen on " + where + ": " + e.code().message());
    }
}

Server::~Server()
{
    try {
        stop();
    } catch (...) {
    }
}

unsigned short Server::port() const
{
    return impl_->port;
}

Hub& Server::hub()
{
    return impl_->hub;
}

void Server::start()
{
    std::lock_guard lock(impl_->stop_mutex);
    if (impl_->started)
        return;
    impl_->started = true;
    impl_->do_accept();
    const std::size_t n = std::max<std::size_t>(1, impl_->options.threads);
    for (std::size_t i = 0; i < n; ++i)
        impl_->threads.emplace_back([this] { impl_->ioc->run(); });
}

void Server::run_until_signal()
{
    {
        std::promise<void> signalled;
        asio::signal_set signals(*impl_->ioc, SIGINT, SIGTERM);
        signals.async_wait([&](beast::error_code ec, int) {
            if (!ec)
                signalled.set_value();
        });
        start();
        signalled.get_future().wait();
    }
    stop();
}

void Server::stop()
{
    std::lock_guard lock(impl_->stop_mutex);
    if (impl_->stopped)
        return;
    impl_->stopped = true;
    impl_->ioc->stop();
    for (auto& t : impl_->threads)
        t.join();
    impl_->threads.clear();
    impl_->acceptor.reset();
    impl_->ioc.reset();
    impl_->hub.persist();
}

} // namespace gesturemap::server
