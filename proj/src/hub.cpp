#include "gesturemap/error.hpp"
#include "gesturemap/server.hpp"

#include <ctime>
#include <filesystem>

namespace gesturemap::server {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json with_version(json j)
{
    j["v"] = protocol_version;
    return j;
}

// Appends `incoming` to the live buffer and keeps the newest `window` frames.
void append_live(std::optional<ingest::FrameStream>& live, ingest::FrameStream incoming, std::size_t window)
{
    if (!live || live->kind() != incoming.kind()) {
        live = std::move(incoming);
    } else {
        std::visit(
            [&](auto& frames) {
                auto& add = std::get<std::decay_t<decltype(frames)>>(incoming.frames);
                frames.insert(frames.end(), std::make_move_iterator(add.begin()), std::make_move_iterator(add.end()));
            },
            live->frames);
    }
    const std::size_t n = live->size();
    if (n > window)
        live = live->slice(n - window, window);
    if (live->size() > 1) {
        const double span = live->time_at(live->size() - 1) - live->time_at(0);
        if (span > 0.0)
            live->rate = static_cast<double>(live->size() - 1) / span;
    }
}

std::optional<ingest::FrameStream> frames_of(const json& cmd)
{
    if (!cmd.contains("frames"))
        return std::nullopt;
    auto s = ingest::parse_frames_jsonl(cmd.at("frames").get<std::string>());
    if (s.empty())
        fail(ErrorKind::empty_input, "'frames' holds no frames");
    return s;
}

models::Vector input_of(const session::Session& s, const json& cmd)
{
    if (auto frames = frames_of(cmd))
        return session::window_features(s, *frames);
    if (cmd.contains("features"))
        return cmd.at("features").get<models::Vector>();
    fail(ErrorKind::schema, "command needs 'frames' or 'features'");
}

std::vector<json> prediction_events(const session::Session& s, const models::Vector& x,
                                    const session::Prediction& p)
{
    std::vector<json> out;
    out.push_back(with_version({{"evt", "features"}, {"session", s.config.id}, {"values", x}}));
    out.push_back(with_version({{"evt", "params"}, {"session", s.config.id}, {"values", p.params}}));
    if (p.unit) {
        json u = {{"evt", "unit"}, {"session", s.config.id}, {"unit", p.unit->unit}, {"distance", p.unit->distance}};
        if (s.corpus) {
            const auto& unit = s.corpus->units[p.unit->unit];
            u["source"] = s.corpus->sources.empty() ? std::string() : s.corpus->sources[unit.source].id;
            u["start"] = unit.span.start;
            u["length"] = unit.span.length;
        }
        out.push_back(with_version(std::move(u)));
    }
    return out;
}

} // namespace

json error_event(ErrorKind kind, const std::string& message)
{
    return with_version({{"evt", "error"}, {"kind", std::string(to_string(kind))}, {"message", message}});
}

// ---------------------------------------------------------------------------

MappingStore::MappingStore(std::string dir) : dir_(std::move(dir))
{
    if (dir_.empty())
        return;
    const fs::path root = fs::path(dir_) / "mappings";
    if (!fs::is_directory(root))
        return;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.path().extension() != ".json" || entry.path().filename() == "index.json")
            continue;
        auto r = session::mapping_from_json(ingest::read_text_file(entry.path().string()));
        records_[r.id] = std::move(r);
    }
}

void MappingStore::put(const session::MappingRecord& record)
{
    std::lock_guard lock(mutex_);
    records_[record.id] = record;
    if (dir_.empty())
        return;
    const fs::path root = fs::path(dir_) / "mappings";
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec)
        fail(ErrorKind::io, "cannot create " + root.string() + ": " + ec.message());
    ingest::write_text_file((root / (record.id + ".json")).string(), session::mapping_to_json(record));
    json idx = json::array();
    for (const auto& [id, r] : records_)
        idx.push_back({{"id", id}, {"created_at", r.created_at}, {"provenance", session::to_string(r.provenance)}});
    ingest::write_text_file((root / "index.json").string(), idx.dump(2) + "\n");
}

std::optional<session::MappingRecord> MappingStore::get(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    const auto it = records_.find(id);
    if (it == records_.end())
        return std::nullopt;
    return it->second;
}

json MappingStore::index() const
{
    std::lock_guard lock(mutex_);
    json out = json::array();
    for (const auto& [id, r] : records_)
        out.push_back({{"id", id}, {"created_at", r.created_at}, {"provenance", session::to_string(r.provenance)}});
    return out;
}

// ---------------------------------------------------------------------------

Hub::Hub(HubOptions options) : options_(std::move(options)), store_(options_.session_dir)
{
    if (!options_.clock)
        options_.clock = utc_now;
    if (options_.session_dir.empty())
        return;
    const fs::path root = fs::path(options_.session_dir) / "sessions";
    if (!fs::is_directory(root))
        return;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
        add(session::session_from_json(ingest::read_text_file(f.string())));
}

std::shared_ptr<Hub::Slot> Hub::find(const std::string& id) const
{
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end())
        fail(ErrorKind::protocol, id.empty() ? "no session; send 'create' or 'load' first"
                                             : "unknown session '" + id + "'");
    return it->second;
}

std::string Hub::add(session::Session s)
{
    if (options_.corpus && s.config.target == session::Target::corpus)
        session::attach_corpus(s, options_.corpus);
    std::lock_guard lock(mutex_);
    if (s.config.id.empty()) {
        do
            s.config.id = "s" + std::to_string(next_id_++);
        while (sessions_.count(s.config.id));
    } else if (sessions_.count(s.config.id)) {
        fail(ErrorKind::parameter, "session id '" + s.config.id + "' is already in use");
    }
    const auto id = s.config.id;
    auto slot = std::make_shared<Slot>();
    slot->session = std::move(s);
    sessions_[id] = std::move(slot);
    return id;
}

std::size_t Hub::session_count() const
{
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

json Hub::state_event(const session::Session& s) const
{
    json j = {{"evt", "state"},
              {"session", s.config.id},
              {"mode", session::to_string(s.config.mode)},
              {"target", session::to_string(s.config.target)},
              {"phase", session::to_string(s.phase)},
              {"legal", session::legal_actions(s)},
              {"examples", s.examples.size()}};
    if (!s.loss.empty())
        j["loss"] = s.loss.back();
    if (s.agent)
        j["proposals"] = s.agent->proposals;
    return with_version(std::move(j));
}

json Hub::create(const json& config)
{
    auto s = session::create_session(session::config_from_json(config.is_null() ? json::object() : config));
    const auto id = add(std::move(s));
    const auto slot = find(id);
    std::lock_guard lock(slot->mutex);
    return state_event(slot->session);
}

void Hub::persist() const
{
    if (options_.session_dir.empty())
        return;
    const fs::path root = fs::path(options_.session_dir) / "sessions";
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec)
        fail(ErrorKind::io, "cannot create " + root.string() + ": " + ec.message());
    std::map<std::string, std::shared_ptr<Slot>> copy;
    {
        std::lock_guard lock(mutex_);
        copy = sessions_;
    }
    for (const auto& [id, slot] : copy) {
        std::lock_guard lock(slot->mutex);
        ingest::write_text_file((root / (id + ".json")).string(), session::session_to_json(slot->session));
    }
}

std::vector<json> Hub::handle_text(Connection& c, const std::string& text)
{
    json cmd;
    try {
        cmd = json::parse(text);
    } catch (const json::parse_error& e) {
        return {error_event(ErrorKind::parse, e.what())};
    }
    return handle(c, cmd);
}

std::vector<json> Hub::handle(Connection& c, const json& cmd)
{
    std::vector<json> out;
    try {
        if (!cmd.is_object() || !cmd.contains("cmd") || !cmd.at("cmd").is_string())
            fail(ErrorKind::schema, "a command is an object with a string 'cmd'");
        if (!cmd.contains("v") || cmd.at("v") != protocol_version)
            fail(ErrorKind::version, "protocol version must be " + std::to_string(protocol_version));
        out = dispatch(c, cmd, cmd.at("cmd").get<std::string>());
    } catch (const Error& e) {
        out = {error_event(e.kind(), e.what())};
    } catch (const json::exception& e) {
        out = {error_event(ErrorKind::schema, e.what())};
    } catch (const std::exception& e) {
        out = {error_event(ErrorKind::io, e.what())};
    }
    // Requests tagged with "req" get it echoed, and the last reply is marked.
    if (cmd.is_object() && cmd.contains("req") && !out.empty()) {
        for (auto& e : out)
            e["req"] = cmd.at("req");
        out.back()["done"] = true;
    }
    return out;
}

std::vector<json> Hub::dispatch(Connection& c, const json& cmd, const std::string& name)
{
    if (name == "create") {
        auto state = create(cmd.value("config", json::object()));
        c.session = state.at("session").get<std::string>();
        c.live.reset();
        return {state};
    }
    if (name == "load") {
        const auto id = cmd.at("mapping").get<std::string>();
        const auto record = store_.get(id);
        if (!record)
            fail(ErrorKind::registry, "unknown mapping '" + id + "'");
        auto s = session::load_mapping(*record);
        s.config.id.clear();
        c.session = add(std::move(s));
        c.live.reset();
        const auto slot = find(c.session);
        std::lock_guard lock(slot->mutex);
        return {state_event(slot->session)};
    }

    if (cmd.contains("session")) {
        const auto id = cmd.at("session").get<std::string>();
        if (id != c.session)
            c.live.reset();
        c.session = id;
    }
    const auto slot = find(c.session);
    std::lock_guard lock(slot->mutex);
    auto& s = slot->session;

    if (name == "state")
        return {state_event(s)};
    if (name == "record") {
        session::require_action(s, "record");
        const auto x = input_of(s, cmd);
        if (cmd.contains("preset")) {
            const auto i = cmd.at("preset").get<std::size_t>();
            if (i >= s.config.presets.size())
                fail(ErrorKind::parameter, "preset index " + std::to_string(i) + " out of range");
            session::record_vector(s, x, s.config.presets[i]);
        } else {
            session::record_vector(s, x, cmd.at("target").get<models::Vector>());
        }
        return {state_event(s)};
    }
    if (name == "train") {
        std::optional<session::TrainParams> params;
        if (cmd.contains("training")) {
            auto cfg = session::config_to_json(s.config);
            cfg["training"].update(cmd.at("training"));
            params = session::config_from_json(cfg).training;
        }
        session::train_session(s, params);
        return {state_event(s)};
    }
    if (name == "predict") {
        session::require_action(s, "predict");
        const auto x = input_of(s, cmd);
        const auto p = session::predict_vector(s, x);
        return prediction_events(s, x, p);
    }
    if (name == "frame") {
        auto incoming = frames_of(cmd);
        if (!incoming)
            fail(ErrorKind::schema, "'frame' needs 'frames'");
        append_live(c.live, std::move(*incoming), s.config.features.window);
        if (c.live->size() < s.config.features.window)
            return {};
        const auto x = session::window_features(s, *c.live);
        const auto legal = session::legal_actions(s);
        if (std::find(legal.begin(), legal.end(), "predict") == legal.end())
            return {with_version({{"evt", "features"}, {"session", s.config.id}, {"values", x}})};
        return prediction_events(s, x, session::predict_vector(s, x));
    }
    if (name == "propose") {
        const auto p = session::aiml_propose(s);
        return {with_version({{"evt", "proposal"},
                              {"session", s.config.id},
                              {"id", p.id},
                              {"points", p.points},
                              {"presets", p.presets}}),
                state_event(s)};
    }
    if (name == "guiding") {
        session::aiml_guiding(s, cmd.at("sign").get<int>());
        return {state_event(s)};
    }
    if (name == "zone") {
        session::aiml_zone(s);
        return {state_event(s)};
    }
    if (name == "save") {
        const auto created = cmd.contains("created_at") ? cmd.at("created_at").get<std::string>() : options_.clock();
        const auto record = session::save_mapping(s, created);
        store_.put(record);
        auto state = state_event(s);
        state["mapping"] = record.id;
        return {state};
    }
    fail(ErrorKind::protocol, "unknown command '" + name +
                                  "'; expected create, record, train, predict, frame, propose, guiding, zone, "
                                  "save, load or state");
}

} // namespace gesturemap::server
