#pragma once

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <json.hpp>

#include <string>
#include <vector>

namespace testutil {

// Blocking WebSocket client for the server's /ws endpoint.
class WsClient
{
public:
    explicit WsClient(unsigned short port) : ws_(ioc_)
    {
        boost::asio::ip::tcp::resolver resolver(ioc_);
        boost::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
        ws_.handshake("127.0.0.1", "/ws");
    }

    ~WsClient()
    {
        boost::beast::error_code ec;
        ws_.close(boost::beast::websocket::close_code::normal, ec);
    }

    void send(nlohmann::json cmd)
    {
        if (!cmd.contains("v"))
            cmd["v"] = 1;
        ws_.write(boost::asio::buffer(cmd.dump()));
    }

    nlohmann::json receive()
    {
        boost::beast::flat_buffer buffer;
        ws_.read(buffer);
        return nlohmann::json::parse(boost::beast::buffers_to_string(buffer.data()));
    }

    /// Sends a tagged command and collects its replies up to the one marked done.
    /// Untagged events arriving meanwhile are kept in `stray`.
    std::vector<nlohmann::json> request(nlohmann::json cmd)
    {
        const int id = next_++;
        cmd["req"] = id;
        send(std::move(cmd));
        std::vector<nlohmann::json> out;
        while (true) {
            auto e = receive();
            if (e.value("req", -1) != id) {
                stray.push_back(std::move(e));
                continue;
            }
            const bool done = e.value("done", false);
            out.push_back(std::move(e));
            if (done)
                return out;
        }
    }

    std::vector<nlohmann::json> stray;

private:
    boost::asio::io_context ioc_;
    boost::beast::websocket::stream<boost::asio::ip::tcp::socket> ws_;
    int next_ = 1;
};

struct HttpReply
{
    int status = 0;
    std::string body;
};

inline HttpReply http_request(unsigned short port, boost::beast::http::verb verb, const std::string& target,
                              const std::string& body = {})
{
    namespace http = boost::beast::http;
    boost::asio::io_context ioc;
    boost::beast::tcp_stream stream(ioc);
    boost::asio::ip::tcp::resolver resolver(ioc);
    stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
    http::request<http::string_body> req{verb, target, 11};
    req.set(http::field::host, "127.0.0.1");
    req.keep_alive(false);
    if (!body.empty()) {
        req.set(http::field::content_type, "application/json");
        req.body() = body;
        req.prepare_payload();
    }
    http::write(stream, req);
    boost::beast::flat_buffer buffer;
    http::response<http::string_body> res;
    http::read(stream, buffer, res);
    boost::beast::error_code ec;
    stream.socket().shutdown(boost::asio::ip::tcp::socket::shutdown_both, ec);
    return {static_cast<int>(res.result_int()), res.body()};
}

} // namespace testutil
