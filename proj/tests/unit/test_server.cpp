#include "gesturemap/server.hpp"

#include "test_util.hpp"
#include "ws_client.hpp"

#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <random>

using namespace gesturemap;
using namespace gesturemap::server;
using nlohmann::json;
using testutil::kind_of;
namespace http = boost::beast::http;

namespace {

ingest::FrameStream posture(double x, double y, double spread, std::size_t frames = 8)
{
    ingest::MarkerFrames out;
    for (std::size_t i = 0; i < frames; ++i) {
        ingest::MarkerFrame f;
        f.t = static_cast<double>(i) / 100.0;
        f.markers.push_back({"a", {x, y, 0.0}, 1.0});
        f.markers.push_back({"b", {x + spread, y, 0.1}, 1.0});
        f.markers.push_back({"c", {x, y + spread, 0.2}, 1.0});
        out.push_back(std::move(f));
    }
    return {100.0, std::move(out)};
}

const json config = json::parse(R"({
  "features": {"features": ["pos_xy", "ci"], "window": 8, "hop": 4},
  "presets": [[0.0, 1.0, 1.0, 0.0, 20000.0, 0.707],
              [0.5, 0.5, 2.0, 12.0, 800.0, 2.0],
              [1.0, 2.0, 0.5, -12.0, 200.0, 0.5],
              [0.25, 0.25, 1.5, 7.0, 5000.0, 4.0]]
})");

const std::vector<std::array<double, 3>> poses{{0.0, 0.0, 0.2}, {1.0, 0.0, 0.5}, {0.0, 1.0, 0.1}, {1.0, 1.0, 0.8}};

json last_of(const std::vector<json>& events, const std::string& evt)
{
    for (auto it = events.rbegin(); it != events.rend(); ++it)
        if (it->value("evt", "") == evt)
            return *it;
    FAIL("no '" << evt << "' event");
    return {};
}

std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("gesturemap-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_CASE("hub command errors")
{
    Hub hub;
    Connection c;
    auto e = hub.handle(c, json{{"cmd", "create"}}).front();
    CHECK(e["evt"] == "error");
    CHECK(e["kind"] == "version");

    e = hub.handle(c, json{{"v", 1}, {"cmd", "train"}}).front();
    CHECK(e["kind"] == "protocol");

    e = hub.handle_text(c, "{oops").front();
    CHECK(e["kind"] == "parse");

    const auto created = hub.handle(c, json{{"v", 1}, {"cmd", "create"}, {"req", 7}, {"config", config}});
    REQUIRE(created.size() == 1);
    CHECK(created[0]["evt"] == "state");
    CHECK(created[0]["phase"] == "idle");
    CHECK(created[0]["req"] == 7);
    CHECK(created[0]["done"] == true);
    CHECK(c.session == created[0]["session"]);

    e = hub.handle(c, json{{"v", 1}, {"cmd", "dance"}}).front();
    CHECK(e["kind"] == "protocol");
    e = hub.handle(c, json{{"v", 1}, {"cmd", "train"}}).front();
    CHECK(e["kind"] == "protocol");
    CHECK(e["message"].get<std::string>().find("expected one of: record") != std::string::npos);

    auto aiml = config;
    aiml["mode"] = "aiml";
    aiml["features"]["features"] = {"pos_xy"};
    Connection a;
    hub.handle(a, json{{"v", 1}, {"cmd", "create"}, {"config", aiml}});
    e = hub.handle(a, json{{"v", 1}, {"cmd", "guiding"}, {"sign", 1}}).front();
    CHECK(e["kind"] == "protocol");
    const auto proposal = hub.handle(a, json{{"v", 1}, {"cmd", "propose"}});
    CHECK(proposal.front()["evt"] == "proposal");
    CHECK(proposal.front()["points"].size() == 4);
    CHECK(hub.handle(a, json{{"v", 1}, {"cmd", "guiding"}, {"sign", 1}}).front()["phase"] == "proposing");

    e = hub.handle(a, json{{"v", 1}, {"cmd", "load"}, {"mapping", "nothing"}}).front();
    CHECK(e["kind"] == "registry");
    CHECK(hub.session_count() == 2);

    Connection fresh;
    e = hub.handle(fresh, json{{"v", 1}, {"cmd", "propose"}}).front();
    CHECK(e["kind"] == "protocol");
}

TEST_CASE("websocket results equal in-process results")
{
    Server server(ServerOptions{});
    server.start();
    testutil::WsClient ws(server.port());

    auto local = session::create_session(session::config_from_json(config));
    const auto created = ws.request({{"cmd", "create"}, {"config", config}});
    CHECK(created.front()["phase"] == "idle");

    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto text = ingest::write_frames_jsonl(posture(poses[i][0], poses[i][1], poses[i][2]));
        session::record_example(local, ingest::parse_frames_jsonl(text), i);
        const auto r = ws.request({{"cmd", "record"}, {"frames", text}, {"preset", i}});
        CHECK(r.back()["examples"] == i + 1);
    }
    const double local_loss = session::train_session(local);
    const auto trained = ws.request({{"cmd", "train"}});
    CHECK(trained.back()["phase"] == "trained");
    CHECK(trained.back()["loss"].get<double>() == local_loss);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.5, 1.5);
    for (int i = 0; i < 20; ++i) {
        const auto text = ingest::write_frames_jsonl(posture(u(rng), u(rng), 0.1 + 0.5 * (u(rng) + 0.5) / 2.0));
        const auto expected = session::run_predict(local, ingest::parse_frames_jsonl(text));
        const auto events = ws.request({{"cmd", "predict"}, {"frames", text}});
        const auto got = last_of(events, "params")["values"].get<std::vector<double>>();
        CHECK(got == expected.params);
    }
    CHECK(ws.stray.empty());
    server.stop();
}

TEST_CASE("live frames are rate limited, latest wins")
{
    ServerOptions options;
    options.params_rate_hz = 60.0;
    Server server(options);
    server.start();
    testutil::WsClient ws(server.port());

    auto cfg = config;
    cfg["features"]["window"] = 4;
    auto local = session::create_session(session::config_from_json(cfg));
    ws.request({{"cmd", "create"}, {"config", cfg}});
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const auto text = ingest::write_frames_jsonl(posture(poses[i][0], poses[i][1], poses[i][2], 4));
        session::record_example(local, ingest::parse_frames_jsonl(text), i);
        ws.request({{"cmd", "record"}, {"frames", text}, {"preset", i}});
    }
    session::train_session(local);
    ws.request({{"cmd", "train"}});

    // One frame per message, moving steadily.
    const std::size_t n = 200;
    ingest::MarkerFrames all;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) / n;
        auto f = posture(x, 1.0 - x, 0.3, 1);
        auto frame = std::get<ingest::MarkerFrames>(f.frames).front();
        frame.t = static_cast<double>(i) / 100.0;
        all.push_back(frame);
    }
    const ingest::FrameStream whole{100.0, all};
    const auto expected = session::run_predict(local, whole.slice(n - 4, 4)).params;

    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < n; ++i)
        ws.send({{"cmd", "frame"}, {"frames", ingest::write_frames_jsonl(whole.slice(i, 1))}});
    std::size_t params = 0;
    while (true) {
        const auto e = ws.receive();
        REQUIRE(e["evt"] != "error");
        if (e["evt"] != "params")
            continue;
        ++params;
        if (e["values"].get<std::vector<double>>() == expected)
            break;
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(params < n);
    CHECK(static_cast<double>(params) <= elapsed * 60.0 + 2.0);
    server.stop();
}

TEST_CASE("http routes and mapping storage")
{
    const auto dir = scratch_dir("http");
    ServerOptions options;
    options.hub.session_dir = dir.string();
    options.hub.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
    std::string mapping;
    {
        Server server(options);
        server.start();
        const auto port = server.port();

        auto r = testutil::http_request(port, http::verb::get, "/health");
        CHECK(r.status == 200);
        CHECK(json::parse(r.body)["status"] == "ok");

        r = testutil::http_request(port, http::verb::post, "/sessions", config.dump());
        CHECK(r.status == 201);
        const auto sid = json::parse(r.body)["session"].get<std::string>();

        r = testutil::http_request(port, http::verb::post, "/sessions", R"({"features":{"features":["zzz"]}})");
        CHECK(r.status == 400);
        CHECK(json::parse(r.body)["kind"] == "parameter");

        // Drive the HTTP-created session over the socket.
        testutil::WsClient ws(port);
        for (std::size_t i = 0; i < poses.size(); ++i) {
            const auto text = ingest::write_frames_jsonl(posture(poses[i][0], poses[i][1], poses[i][2]));
            const auto rec = ws.request({{"cmd", "record"}, {"session", sid}, {"frames", text}, {"preset", i}});
            CHECK(rec.back()["evt"] == "state");
        }
        ws.request({{"cmd", "train"}});
        const auto saved = ws.request({{"cmd", "save"}});
        mapping = saved.back()["mapping"].get<std::string>();
        CHECK(mapping == sid + "-1");

        r = testutil::http_request(port, http::verb::get, "/mappings");
        CHECK(r.status == 200);
        const auto listed = json::parse(r.body)["mappings"];
        REQUIRE(listed.size() == 1);
        CHECK(listed[0]["id"] == mapping);
        CHECK(listed[0]["created_at"] == "2026-01-01T00:00:00Z");

        r = testutil::http_request(port, http::verb::get, "/mappings/" + mapping);
        CHECK(r.status == 200);
        CHECK(session::mapping_from_json(r.body).id == mapping);
        CHECK(testutil::http_request(port, http::verb::get, "/mappings/none").status == 404);
        CHECK(testutil::http_request(port, http::verb::get, "/nowhere").status == 404);
        CHECK(testutil::http_request(port, http::verb::delete_, "/health").status == 405);

        // Loading yields a new session that predicts like the saved one.
        const auto text = ingest::write_frames_jsonl(posture(0.3, 0.6, 0.4));
        const auto before = last_of(ws.request({{"cmd", "predict"}, {"frames", text}}), "params");
        const auto loaded = ws.request({{"cmd", "load"}, {"mapping", mapping}});
        CHECK(loaded.back()["session"] != sid);
        CHECK(loaded.back()["phase"] == "trained");
        const auto after = last_of(ws.request({{"cmd", "predict"}, {"frames", text}}), "params");
        CHECK(before["values"] == after["values"]);
        server.stop();
    }
    CHECK(std::filesystem::exists(dir / "sessions"));
    CHECK(std::filesystem::exists(dir / "mappings" / (mapping + ".json")));

    // A new hub over the same directory picks everything up.
    Hub hub(HubOptions{dir.string(), nullptr, nullptr});
    CHECK(hub.session_count() == 2);
    CHECK(hub.mappings().get(mapping));
    std::filesystem::remove_all(dir);
}

TEST_CASE("busy port")
{
    Server a(ServerOptions{});
    ServerOptions same;
    same.port = a.port();
    CHECK(kind_of([&] { Server b(same); }) == ErrorKind::io);
}
