#pragma once

#include "gesturemap/error.hpp"
#include "gesturemap/session.hpp"

#include <json.hpp>

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace gesturemap::server {

constexpr int protocol_version = 1;

/// Saved mappings, mirrored to `<dir>/mappings/` when a directory is set.
class MappingStore
{
public:
    explicit MappingStore(std::string dir = {});

    void put(const session::MappingRecord& record);
    std::optional<session::MappingRecord> get(const std::string& id) const;
    nlohmann::json index() const; // [{id, created_at, provenance}] by id

private:
    std::string dir_;
    mutable std::mutex mutex_;
    std::map<std::string, session::MappingRecord> records_;
};

/// Per-connection state: the bound session and the live frame buffer.
struct Connection
{
    std::string session;
    std::optional<ingest::FrameStream> live;
};

struct HubOptions
{
    std::string session_dir; // empty keeps everything in memory
    std::shared_ptr<const corpus::Corpus> corpus;
    std::function<std::string()> clock; // created_at for saved mappings; UTC ISO-8601 when unset
};

/// Transport-free command handling shared by the WebSocket and HTTP paths.
/// Commands on one session are serialized by that session's mutex.
class Hub
{
public:
    explicit Hub(HubOptions options = {});

    /// One command in, the events it produces out. Errors become an
    /// "error" event; nothing throws.
    std::vector<nlohmann::json> handle(Connection& connection, const nlohmann::json& command);
    std::vector<nlohmann::json> handle_text(Connection& connection, const std::string& text);

    /// Creates a session from a config and returns its "state" event.
    nlohmann::json create(const nlohmann::json& config);

    std::size_t session_count() const;
    const MappingStore& mappings() const { return store_; }

    /// Writes every live session to `<session_dir>/sessions/`.
    void persist() const;

private:
    struct Slot
    {
        std::mutex mutex;
        session::Session session;
    };

    std::shared_ptr<Slot> find(const std::string& id) const;
    std::string add(session::Session s);
    nlohmann::json state_event(const session::Session& s) const;
    std::vector<nlohmann::json> dispatch(Connection& c, const nlohmann::json& cmd, const std::string& name);

    HubOptions options_;
    MappingStore store_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Slot>> sessions_;
    std::size_t next_id_ = 1;
};

nlohmann::json error_event(ErrorKind kind, const std::string& message);

struct ServerOptions
{
    std::string address = "127.0.0.1";
    unsigned short port = 0; // 0 picks a free port
    std::size_t threads = 2;
    double params_rate_hz = 60.0; // live "frame" results per connection
    HubOptions hub;
};

/// HTTP and WebSocket ("/ws") on one port.
///   GET /health, GET /mappings, GET /mappings/{id}, POST /sessions
class Server
{
public:
    /// Binds immediately; an unavailable port is an io error.
    explicit Server(ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const;
    Hub& hub();

    /// Serves on background threads.
    void start();
    /// Serves until SIGINT or SIGTERM, then persists sessions.
    void run_until_signal();
    /// Stops serving and persists sessions. Idempotent.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace gesturemap::server
