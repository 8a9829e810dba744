#include "gesturemap/session.hpp"

#include "gesturemap/error.hpp"
#include "gesturemap/granular.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gesturemap::session {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

std::string_view to_string(Mode m)
{
    return m == Mode::iml ? "iml" : "aiml";
}

std::string_view to_string(Target t)
{
    return t == Target::granular ? "granular" : "corpus";
}

std::string_view to_string(Phase p)
{
    switch (p) {
    case Phase::idle: return "idle";
    case Phase::recording: return "recording";
    case Phase::proposing: return "proposing";
    case Phase::trained: return "trained";
    case Phase::running: return "running";
    }
    return "?";
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where)
{
    if (!j.is_object())
        fail(ErrorKind::schema, where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            fail(ErrorKind::schema, "unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out)
{
    if (j.contains(key))
        out = j.at(key).get<T>();
}

Mode parse_mode(const std::string& s)
{
    if (s == "iml")
        return Mode::iml;
    if (s == "aiml")
        return Mode::aiml;
    fail(ErrorKind::parameter, "unknown mode '" + s + "'; expected iml or aiml");
}

Target parse_target(const std::string& s)
{
    if (s == "granular")
        return Target::granular;
    if (s == "corpus")
        return Target::corpus;
    fail(ErrorKind::parameter, "unknown target '" + s + "'; expected granular or corpus");
}

Vector preset_vector(const json& j)
{
    if (j.is_object()) {
        granular::SynthPreset p;
        auto v = p.to_vector();
        const auto& names = granular::SynthPreset::field_names();
        for (const auto& [key, value] : j.items()) {
            const auto it = std::find(names.begin(), names.end(), key);
            if (it == names.end())
                fail(ErrorKind::schema, "unknown preset field '" + key + "'");
            v[static_cast<std::size_t>(it - names.begin())] = value.get<double>();
        }
        return v;
    }
    return j.get<Vector>();
}

ojson agent_config_json(const agent::AgentConfig& c)
{
    return {{"step_size", c.step_size},
            {"jitter", c.jitter},
            {"grow", c.grow},
            {"shrink", c.shrink},
            {"min_step", c.min_step},
            {"max_step", c.max_step},
            {"zone_fraction", c.zone_fraction},
            {"zone_attempts", c.zone_attempts},
            {"shared_direction", c.shared_direction},
            {"revert", c.revert}};
}

agent::AgentConfig agent_config_from(const json& j)
{
    check_keys(j,
               {"step_size", "jitter", "grow", "shrink", "min_step", "max_step", "zone_fraction", "zone_attempts",
                "shared_direction", "revert"},
               "agent config");
    agent::AgentConfig c;
    read(j, "step_size", c.step_size);
    read(j, "jitter", c.jitter);
    read(j, "grow", c.grow);
    read(j, "shrink", c.shrink);
    read(j, "min_step", c.min_step);
    read(j, "max_step", c.max_step);
    read(j, "zone_fraction", c.zone_fraction);
    read(j, "zone_attempts", c.zone_attempts);
    read(j, "shared_direction", c.shared_direction);
    read(j, "revert", c.revert);
    return c;
}

void check_target(const Session& s, const Vector& target)
{
    for (double v : target)
        if (!std::isfinite(v))
            fail(ErrorKind::data, "target contains a non-finite value");
    if (s.config.target == Target::granular) {
        if (target.size() != granular::SynthPreset::size)
            fail(ErrorKind::schema, "granular targets have " + std::to_string(granular::SynthPreset::size) +
                                        " values, got " + std::to_string(target.size()));
        granular::validate_preset(granular::SynthPreset::from_vector(target));
    } else if (target.size() != corpus::descriptor_size) {
        fail(ErrorKind::schema, "corpus targets have " + std::to_string(corpus::descriptor_size) + " values, got " +
                                    std::to_string(target.size()));
    }
}

void check_input(const Session& s, std::span<const double> features)
{
    if (!s.model)
        fail(ErrorKind::protocol, "session has no trained model");
    if (features.size() != s.model->input_size())
        fail(ErrorKind::parameter, "model expects " + std::to_string(s.model->input_size()) + " features, got " +
                                       std::to_string(features.size()));
}

models::MlpModel fit(const models::RegressionSet& set, const TrainParams& p, Vector& loss)
{
    std::vector<std::size_t> sizes{set.inputs.front().size()};
    sizes.insert(sizes.end(), p.hidden.begin(), p.hidden.end());
    sizes.push_back(set.targets.front().size());
    auto result = models::mlp_train(models::mlp_init(sizes, p.seed), set, p.epochs, p.learning_rate);
    loss = std::move(result.loss);
    return std::move(result.model);
}

} // namespace

// ---------------------------------------------------------------------------
// Configuration

json features_to_json(const features::FeatureConfig& c)
{
    ojson j = {{"features", c.features},
               {"window", c.window},
               {"hop", c.hop},
               {"marker_index", c.marker_index},
               {"fi_epsilon", c.fi_epsilon},
               {"bands",
                {{"tempo_bpm", c.bands.tempo_bpm},
                 {"subdivisions", c.bands.subdivisions},
                 {"bandwidth_hz", c.bands.bandwidth_hz}}},
               {"bayes",
                {{"grid_size", c.bayes.grid_size},
                 {"diffusion", c.bayes.diffusion},
                 {"jump_prob", c.bayes.jump_prob}}}};
    return json::parse(j.dump());
}

features::FeatureConfig features_from_json(const json& j)
{
    check_keys(j, {"features", "window", "hop", "marker_index", "fi_epsilon", "bands", "bayes"}, "feature config");
    features::FeatureConfig c;
    try {
        read(j, "features", c.features);
        read(j, "window", c.window);
        read(j, "hop", c.hop);
        read(j, "marker_index", c.marker_index);
        read(j, "fi_epsilon", c.fi_epsilon);
        if (j.contains("bands")) {
            const auto& b = j.at("bands");
            check_keys(b, {"tempo_bpm", "subdivisions", "bandwidth_hz"}, "bands");
            read(b, "tempo_bpm", c.bands.tempo_bpm);
            read(b, "subdivisions", c.bands.subdivisions);
            read(b, "bandwidth_hz", c.bands.bandwidth_hz);
        }
        if (j.contains("bayes")) {
            const auto& b = j.at("bayes");
            check_keys(b, {"grid_size", "diffusion", "jump_prob"}, "bayes");
            read(b, "grid_size", c.bayes.grid_size);
            read(b, "diffusion", c.bayes.diffusion);
            read(b, "jump_prob", c.bayes.jump_prob);
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, std::string("feature config: ") + e.what());
    }
    features::validate_features(c);
    return c;
}

json config_to_json(const SessionConfig& c)
{
    ojson j;
    j["id"] = c.id;
    j["mode"] = to_string(c.mode);
    j["target"] = to_string(c.target);
    j["features"] = ojson::parse(features_to_json(c.features).dump());
    j["presets"] = c.presets;
    j["space"] = {{"names", c.space.names}, {"lo", c.space.lo}, {"hi", c.space.hi}};
    j["seed"] = c.seed;
    j["agent"] = agent_config_json(c.agent);
    j["training"] = {{"hidden", c.training.hidden},
                     {"epochs", c.training.epochs},
                     {"learning_rate", c.training.learning_rate},
                     {"seed", c.training.seed}};
    return json::parse(j.dump());
}

SessionConfig config_from_json(const json& j)
{
    check_keys(j, {"id", "mode", "target", "features", "presets", "space", "seed", "agent", "training"},
               "session config");
    SessionConfig c;
    try {
        read(j, "id", c.id);
        if (j.contains("mode"))
            c.mode = parse_mode(j.at("mode").get<std::string>());
        if (j.contains("target"))
            c.target = parse_target(j.at("target").get<std::string>());
        if (j.contains("features"))
            c.features = features_from_json(j.at("features"));
        if (j.contains("presets"))
            for (const auto& p : j.at("presets"))
                c.presets.push_back(preset_vector(p));
        if (j.contains("space")) {
            const auto& sp = j.at("space");
            check_keys(sp, {"names", "lo", "hi"}, "space");
            c.space = {};
            read(sp, "names", c.space.names);
            read(sp, "lo", c.space.lo);
            read(sp, "hi", c.space.hi);
        }
        read(j, "seed", c.seed);
        if (j.contains("agent"))
            c.agent = agent_config_from(j.at("agent"));
        if (j.contains("training")) {
            const auto& t = j.at("training");
            check_keys(t, {"hidden", "epochs", "learning_rate", "seed"}, "training");
            read(t, "hidden", c.training.hidden);
            read(t, "epochs", c.training.epochs);
            read(t, "learning_rate", c.training.learning_rate);
            read(t, "seed", c.training.seed);
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, std::string("session config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// State machine

std::vector<std::string> legal_actions(const Session& s)
{
    if (s.config.mode == Mode::iml) {
        switch (s.phase) {
        case Phase::idle: return {"record"};
        case Phase::recording: return {"record", "train"};
        default: return {"record", "train", "predict", "save"};
        }
    }
    switch (s.phase) {
    case Phase::idle: return {"propose"};
    case Phase::proposing: return {"propose", "train", "predict", "save"};
    default: return {"propose", "guiding", "zone", "train", "predict", "save"};
    }
}

void require_action(const Session& s, std::string_view action)
{
    const auto legal = legal_actions(s);
    if (std::find(legal.begin(), legal.end(), action) != legal.end())
        return;
    std::string expected;
    for (const auto& a : legal)
        expected += (expected.empty() ? "" : ", ") + a;
    fail(ErrorKind::protocol, "'" + std::string(action) + "' is not allowed in " + std::string(to_string(s.config.mode)) +
                                  " phase " + std::string(to_string(s.phase)) + "; expected one of: " + expected);
}

Session create_session(const SessionConfig& config)
{
    features::validate_features(config.features);
    if (config.training.epochs == 0 || !(config.training.learning_rate > 0.0))
        fail(ErrorKind::parameter, "training needs at least one epoch and a positive learning rate");
    for (std::size_t h : config.training.hidden)
        if (h == 0)
            fail(ErrorKind::parameter, "hidden layers need at least one unit");
    Session s;
    s.config = config;
    for (const auto& p : config.presets)
        check_target(s, p);
    if (config.mode == Mode::aiml) {
        if (config.presets.size() < 2)
            fail(ErrorKind::parameter, "aiml sessions need at least two presets");
        s.agent = agent::agent_init(config.space, config.presets, config.seed, config.agent);
    }
    return s;
}

void attach_corpus(Session& s, std::shared_ptr<const corpus::Corpus> c)
{
    s.corpus = std::move(c);
}

Vector window_features(const Session& s, const ingest::FrameStream& window)
{
    return features::extract(s.config.features, window).values;
}

void record_vector(Session& s, const Vector& features, const Vector& target)
{
    require_action(s, "record");
    check_target(s, target);
    if (features.empty())
        fail(ErrorKind::empty_input, "example has no features");
    for (double v : features)
        if (!std::isfinite(v))
            fail(ErrorKind::data, "example features contain a non-finite value");
    if (s.examples.size() > 0 && features.size() != s.examples.inputs.front().size())
        fail(ErrorKind::schema, "example has " + std::to_string(features.size()) + " features, earlier ones have " +
                                    std::to_string(s.examples.inputs.front().size()));
    s.examples.add(features, target);
    if (s.phase == Phase::idle)
        s.phase = Phase::recording;
}

void record_example(Session& s, const ingest::FrameStream& window, const Vector& target)
{
    require_action(s, "record");
    record_vector(s, window_features(s, window), target);
}

void record_example(Session& s, const ingest::FrameStream& window, std::size_t preset)
{
    require_action(s, "record");
    if (preset >= s.config.presets.size())
        fail(ErrorKind::parameter, "preset index " + std::to_string(preset) + " out of range (" +
                                       std::to_string(s.config.presets.size()) + " presets)");
    record_vector(s, window_features(s, window), s.config.presets[preset]);
}

double train_session(Session& s, const std::optional<TrainParams>& params)
{
    require_action(s, "train");
    const auto& p = params ? *params : s.config.training;
    models::RegressionSet set;
    if (s.config.mode == Mode::iml) {
        if (s.examples.size() < 2)
            fail(ErrorKind::insufficient_data, "training needs at least 2 examples, have " +
                                                   std::to_string(s.examples.size()));
        set = s.examples;
    } else {
        set = agent::build_training_set(*s.proposal);
    }
    Vector loss;
    s.model = fit(set, p, loss);
    s.loss = std::move(loss);
    if (s.phase != Phase::running)
        s.phase = Phase::trained;
    return s.loss.empty() ? models::mlp_loss(*s.model, set) : s.loss.back();
}

Prediction predict_vector(Session& s, std::span<const double> features)
{
    require_action(s, "predict");
    check_input(s, features);
    Prediction out;
    auto y = models::mlp_predict(*s.model, features);
    if (s.config.target == Target::granular) {
        out.params = granular::clamp_preset(granular::SynthPreset::from_vector(y)).to_vector();
    } else {
        out.params = std::move(y);
        if (s.corpus && !s.corpus->units.empty())
            out.unit = corpus::retrieve_knn(*s.corpus, out.params, 1).front();
    }
    if (s.phase == Phase::trained)
        s.phase = Phase::running;
    return out;
}

Prediction run_predict(Session& s, const ingest::FrameStream& window)
{
    require_action(s, "predict");
    const auto x = window_features(s, window);
    return predict_vector(s, x);
}

agent::MappingProposal aiml_propose(Session& s)
{
    require_action(s, "propose");
    // Presets may have been edited since the last proposal.
    s.agent->presets = s.config.presets;
    auto p = agent::agent_propose(*s.agent);
    s.proposal = p;
    Vector loss;
    s.model = fit(agent::build_training_set(p), s.config.training, loss);
    s.loss = std::move(loss);
    s.phase = Phase::trained;
    return p;
}

void aiml_guiding(Session& s, int sign)
{
    require_action(s, "guiding");
    agent::apply_guiding_feedback(*s.agent, sign);
    s.phase = Phase::proposing;
}

void aiml_zone(Session& s)
{
    require_action(s, "zone");
    agent::apply_zone_feedback(*s.agent);
    s.phase = Phase::proposing;
}

// ---------------------------------------------------------------------------
// Persistence

MappingRecord save_mapping(Session& s, const std::string& created_at)
{
    require_action(s, "save");
    MappingRecord r;
    r.id = (s.config.id.empty() ? std::string("mapping") : s.config.id) + "-" + std::to_string(++s.saves);
    r.created_at = created_at;
    r.config = s.config;
    r.model = models::mlp_to_json(*s.model);
    r.provenance = s.config.mode;
    if (s.agent)
        r.history = agent::history_to_jsonl(s.agent->history);
    return r;
}

namespace {

void restore_agent(Session& s, const std::string& history)
{
    if (history.empty())
        return;
    s.agent = agent::replay(agent::history_from_jsonl(history));
    for (auto it = s.agent->history.rbegin(); it != s.agent->history.rend(); ++it)
        if (const auto* p = std::get_if<agent::ProposalEvent>(&*it)) {
            s.proposal = p->proposal;
            break;
        }
}

} // namespace

Session load_mapping(const MappingRecord& record)
{
    auto config = record.config;
    config.mode = record.provenance;
    Session s = create_session(config);
    s.model = models::mlp_from_json(record.model);
    restore_agent(s, record.history);
    s.phase = Phase::trained;
    return s;
}

std::string mapping_to_json(const MappingRecord& r)
{
    ojson j;
    j["format"] = "gesturemap-mapping";
    j["version"] = mapping_version;
    j["id"] = r.id;
    j["created_at"] = r.created_at;
    j["provenance"] = to_string(r.provenance);
    j["config"] = ojson::parse(config_to_json(r.config).dump());
    j["model"] = ojson::parse(r.model);
    j["history"] = r.history;
    return j.dump(2) + "\n";
}

MappingRecord mapping_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::parse, std::string("mapping: ") + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "gesturemap-mapping")
        fail(ErrorKind::schema, "not a gesturemap mapping record");
    if (!j.contains("version") || !j.at("version").is_number_integer())
        fail(ErrorKind::schema, "mapping record has no version");
    if (j.at("version").get<int>() != mapping_version)
        fail(ErrorKind::version, "mapping record version " + std::to_string(j.at("version").get<int>()) +
                                     " is not supported (expected " + std::to_string(mapping_version) + ")");
    MappingRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.created_at = j.at("created_at").get<std::string>();
        r.provenance = parse_mode(j.at("provenance").get<std::string>());
        r.config = config_from_json(j.at("config"));
        r.model = models::mlp_to_json(models::mlp_from_json(j.at("model").dump()));
        r.history = j.at("history").get<std::string>();
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, std::string("mapping: ") + e.what());
    }
    return r;
}

std::string session_to_json(const Session& s)
{
    ojson j;
    j["format"] = "gesturemap-session";
    j["version"] = mapping_version;
    j["config"] = ojson::parse(config_to_json(s.config).dump());
    j["phase"] = to_string(s.phase);
    j["examples"] = {{"inputs", s.examples.inputs}, {"targets", s.examples.targets}};
    j["model"] = s.model ? ojson::parse(models::mlp_to_json(*s.model)) : ojson();
    j["history"] = s.agent ? agent::history_to_jsonl(s.agent->history) : std::string();
    j["saves"] = s.saves;
    return j.dump(2) + "\n";
}

Session session_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::parse, std::string("session: ") + e.what());
    }
    if (!j.is_object() || j.value("format", "") != "gesturemap-session")
        fail(ErrorKind::schema, "not a gesturemap session snapshot");
    if (j.value("version", 0) != mapping_version)
        fail(ErrorKind::version, "unsupported session snapshot version");
    try {
        Session s = create_session(config_from_json(j.at("config")));
        s.examples.inputs = j.at("examples").at("inputs").get<std::vector<Vector>>();
        s.examples.targets = j.at("examples").at("targets").get<std::vector<Vector>>();
        if (!j.at("model").is_null())
            s.model = models::mlp_from_json(j.at("model").dump());
        restore_agent(s, j.at("history").get<std::string>());
        const auto phase = j.at("phase").get<std::string>();
        for (auto p : {Phase::idle, Phase::recording, Phase::proposing, Phase::trained, Phase::running})
            if (phase == to_string(p))
                s.phase = p;
        s.saves = j.at("saves").get<std::size_t>();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::schema, std::string("session: ") + e.what());
    }
}

} // namespace gesturemap::session
