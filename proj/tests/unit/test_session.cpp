#include "gesturemap/granular.hpp"
#include "gesturemap/session.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace gesturemap;
using namespace gesturemap::session;
using testutil::kind_of;

namespace {

// Held pose: every frame identical.
ingest::FrameStream posture(const std::vector<Vec3>& points, std::size_t frames = 32)
{
    ingest::MarkerFrames out;
    for (std::size_t i = 0; i < frames; ++i) {
        ingest::MarkerFrame f;
        f.t = static_cast<double>(i) / 100.0;
        for (std::size_t m = 0; m < points.size(); ++m)
            f.markers.push_back({"m" + std::to_string(m), points[m], 1.0});
        out.push_back(std::move(f));
    }
    return {100.0, std::move(out)};
}

const std::vector<std::vector<Vec3>> postures{
    {{0.0, 0.0, 0.0}, {0.2, 0.1, 0.0}, {0.1, 0.3, 0.1}},
    {{0.5, 0.5, 0.0}, {1.2, 0.4, 0.1}, {0.6, 1.4, 0.3}},
    {{-0.4, 0.2, 0.5}, {0.3, -0.6, 0.2}, {0.0, 0.0, 1.0}},
    {{1.0, 1.0, 1.0}, {1.1, 1.0, 1.0}, {1.0, 1.1, 1.1}},
    {{0.2, -0.8, 0.4}, {-0.5, 0.1, 0.3}, {0.9, 0.2, -0.2}},
};

const std::vector<models::Vector> presets{
    {0.0, 1.0, 1.0, 0.0, 20000.0, 0.707},
    {0.5, 0.5, 2.0, 12.0, 800.0, 2.0},
    {1.0, 2.0, 0.5, -12.0, 200.0, 0.5},
    {0.25, 0.25, 1.5, 7.0, 5000.0, 4.0},
    {0.75, 1.5, 0.8, -5.0, 1200.0, 1.0},
};

SessionConfig posture_config()
{
    SessionConfig c;
    c.id = "poses";
    c.features.features = {"ci", "bbox", "pos"};
    c.presets = {presets.begin(), presets.begin() + 4};
    return c;
}

// Largest per-field error relative to the presets' range.
double normalized_error(const models::Vector& y, const models::Vector& target,
                        const std::vector<models::Vector>& all)
{
    double worst = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& p : all) {
            lo = std::min(lo, p[j]);
            hi = std::max(hi, p[j]);
        }
        const double range = hi > lo ? hi - lo : 1.0;
        worst = std::max(worst, std::abs(y[j] - target[j]) / range);
    }
    return worst;
}

SessionConfig aiml_config()
{
    SessionConfig c;
    c.id = "explore";
    c.mode = Mode::aiml;
    c.features.features = {"pos_xy"};
    c.presets = {presets.begin(), presets.begin() + 4};
    c.seed = 42;
    return c;
}

} // namespace

TEST_CASE("create sessions")
{
    const auto plain = create_session({});
    CHECK(plain.config.mode == Mode::iml);
    CHECK(plain.config.target == Target::granular);
    CHECK(plain.phase == Phase::idle);
    CHECK_FALSE(plain.agent);

    const auto a = create_session(aiml_config());
    REQUIRE(a.agent);
    CHECK(a.agent->n_presets() == 4);
    CHECK(a.agent->positions == create_session(aiml_config()).agent->positions);

    SessionConfig bad;
    bad.features.features = {"qom", "wobble"};
    CHECK(kind_of([&] { create_session(bad); }) == ErrorKind::parameter);
    CHECK(testutil::message_of([&] { create_session(bad); }).find("wobble") != std::string::npos);

    auto few = aiml_config();
    few.presets.resize(1);
    CHECK(kind_of([&] { create_session(few); }) == ErrorKind::parameter);

    auto wrong = posture_config();
    wrong.presets.push_back({1.0, 2.0});
    CHECK(kind_of([&] { create_session(wrong); }) == ErrorKind::schema);
    wrong.presets.back() = {0.0, 1.0, 1.0, 30.0, 1000.0, 1.0};
    CHECK(kind_of([&] { create_session(wrong); }) == ErrorKind::range);
}

TEST_CASE("config json round trip")
{
    auto c = aiml_config();
    c.training.hidden = {6, 4};
    c.agent.zone_fraction = 0.3;
    const auto j = config_to_json(c);
    const auto back = config_from_json(j);
    CHECK(config_to_json(back) == j);
    CHECK(back.training == c.training);
    CHECK(back.agent == c.agent);
    CHECK(back.presets == c.presets);

    const auto objects = config_from_json(nlohmann::json::parse(R"({"presets":[{"speed":2.0,"pitch_shift":-3}]})"));
    REQUIRE(objects.presets.size() == 1);
    CHECK(objects.presets[0] == models::Vector{0.0, 1.0, 2.0, -3.0, 20000.0, 0.707});

    CHECK(kind_of([] { config_from_json(nlohmann::json::parse(R"({"colour":1})")); }) == ErrorKind::schema);
    CHECK(kind_of([] { config_from_json(nlohmann::json::parse(R"({"mode":"dream"})")); }) == ErrorKind::parameter);
    CHECK(kind_of([] { config_from_json(nlohmann::json::parse(R"({"features":{"features":["nope"]}})")); }) ==
          ErrorKind::parameter);
}

TEST_CASE("phase rules")
{
    auto s = create_session(posture_config());
    CHECK(legal_actions(s) == std::vector<std::string>{"record"});
    CHECK(kind_of([&] { train_session(s); }) == ErrorKind::protocol);
    CHECK(kind_of([&] { predict_vector(s, std::vector<double>{1.0}); }) == ErrorKind::protocol);
    CHECK(kind_of([&] { save_mapping(s, "t"); }) == ErrorKind::protocol);
    CHECK(kind_of([&] { aiml_propose(s); }) == ErrorKind::protocol);
    const auto msg = testutil::message_of([&] { aiml_propose(s); });
    CHECK(msg.find("expected one of: record") != std::string::npos);

    record_example(s, posture(postures[0]), std::size_t{0});
    CHECK(s.phase == Phase::recording);
    CHECK(kind_of([&] { train_session(s); }) == ErrorKind::insufficient_data);
    CHECK(kind_of([&] { record_example(s, posture(postures[1]), std::size_t{9}); }) == ErrorKind::parameter);
    CHECK(kind_of([&] { record_vector(s, {1.0, 2.0}, presets[0]); }) == ErrorKind::schema);

    auto a = create_session(aiml_config());
    CHECK(kind_of([&] { aiml_guiding(a, 1); }) == ErrorKind::protocol);
    CHECK(kind_of([&] { aiml_zone(a); }) == ErrorKind::protocol);
    CHECK(kind_of([&] { record_vector(a, {0.5, 0.5}, presets[0]); }) == ErrorKind::protocol);
    aiml_propose(a);
    CHECK(a.phase == Phase::trained);
    aiml_guiding(a, -1);
    CHECK(a.phase == Phase::proposing);
    CHECK(kind_of([&] { aiml_guiding(a, 1); }) == ErrorKind::protocol);
    CHECK(kind_of([&] { aiml_zone(a); }) == ErrorKind::protocol);
    aiml_propose(a);
    aiml_zone(a);
    CHECK(a.agent->history.size() == 5);
}

TEST_CASE("four postures train and reproduce their presets")
{
    auto s = create_session(posture_config());
    for (std::size_t i = 0; i < 4; ++i)
        record_example(s, posture(postures[i]), i);
    CHECK(s.examples.size() == 4);
    for (const auto& x : s.examples.inputs)
        CHECK(x.size() == 7);
    const double loss = train_session(s);
    CHECK(loss < 1e-2);
    CHECK(s.phase == Phase::trained);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto y = run_predict(s, posture(postures[i])).params;
        CHECK(normalized_error(y, presets[i], s.config.presets) < 0.05);
    }
    CHECK(s.phase == Phase::running);

    // A fifth example and a retrain keep all five.
    record_example(s, posture(postures[4]), presets[4]);
    train_session(s);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto y = run_predict(s, posture(postures[i])).params;
        CHECK(normalized_error(y, presets[i], presets) < 0.05);
    }
}

TEST_CASE("granular predictions are always valid presets")
{
    auto s = create_session(posture_config());
    for (std::size_t i = 0; i < 4; ++i)
        record_example(s, posture(postures[i]), i);
    train_session(s);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> x(7);
        for (auto& v : x)
            v = u(rng);
        const auto y = predict_vector(s, x).params;
        CHECK_NOTHROW(granular::validate_preset(granular::SynthPreset::from_vector(y)));
    }
    CHECK(kind_of([&] { predict_vector(s, std::vector<double>{1.0}); }) == ErrorKind::parameter);
}

TEST_CASE("corpus target retrieves the unit whose descriptor is predicted")
{
    auto c = std::make_shared<corpus::Corpus>();
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int i = 0; i < 30; ++i) {
        corpus::AudioUnit unit;
        for (auto& v : unit.descriptor)
            v = u(rng);
        c->units.push_back(unit);
    }
    c->update_normalization();

    SessionConfig cfg;
    cfg.target = Target::corpus;
    cfg.features.features = {"pos_xy"};
    auto s = create_session(cfg);
    attach_corpus(s, c);
    const auto target = [&](int i) {
        return models::Vector(c->units[i].descriptor.begin(), c->units[i].descriptor.end());
    };
    record_vector(s, {0.0, 0.0}, target(3));
    record_vector(s, {1.0, 1.0}, target(17));
    train_session(s);
    // The predicted descriptor need not hit the unit exactly; feed the
    // model's own output back through retrieval instead.
    const auto p = predict_vector(s, std::vector<double>{1.0, 1.0});
    REQUIRE(p.unit);
    CHECK(p.unit->unit == corpus::retrieve_knn(*c, p.params, 1).front().unit);
    CHECK(p.unit->unit == 17);

    // A unit's own descriptor retrieves it at distance zero.
    const auto hit = corpus::retrieve_knn(*c, target(5), 1).front();
    CHECK(hit.unit == 5);
    CHECK(hit.distance == 0.0);
}

TEST_CASE("aiml propose trains on the proposal")
{
    auto s = create_session(aiml_config());
    for (int round = 0; round < 3; ++round) {
        const auto p = aiml_propose(s);
        for (std::size_t i = 0; i < p.points.size(); ++i) {
            const auto y = predict_vector(s, p.points[i]).params;
            CHECK(normalized_error(y, presets[i], s.config.presets) < 0.05);
        }
        aiml_guiding(s, round % 2 ? 1 : -1);
    }
    CHECK(s.examples.size() == 0);
}

TEST_CASE("mappings save and load")
{
    auto s = create_session(aiml_config());
    aiml_propose(s);
    aiml_guiding(s, 1);
    aiml_propose(s);
    const auto record = save_mapping(s, "2026-01-01T00:00:00Z");
    CHECK(record.provenance == Mode::aiml);
    CHECK(record.id == "explore-1");
    const auto text = mapping_to_json(record);
    const auto back = mapping_from_json(text);
    CHECK(mapping_to_json(back) == text);
    CHECK(back.model == models::mlp_to_json(*s.model));

    auto loaded = load_mapping(back);
    CHECK(loaded.phase == Phase::trained);
    REQUIRE(loaded.agent);
    CHECK(agent::state_hash(*loaded.agent) == agent::state_hash(*s.agent));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> x{u(rng), u(rng)};
        const auto a = predict_vector(s, x).params;
        const auto b = predict_vector(loaded, x).params;
        for (std::size_t j = 0; j < a.size(); ++j)
            CHECK(std::abs(a[j] - b[j]) <= 1e-9);
    }
    // The loaded agent continues where the saved one stopped.
    CHECK(aiml_propose(loaded) == aiml_propose(s));

    auto bumped = nlohmann::json::parse(text);
    bumped["version"] = 2;
    CHECK(kind_of([&] { mapping_from_json(bumped.dump()); }) == ErrorKind::version);
    CHECK(kind_of([] { mapping_from_json("[]"); }) == ErrorKind::schema);
    CHECK(kind_of([] { mapping_from_json("{"); }) == ErrorKind::parse);

    auto untrained = create_session(posture_config());
    CHECK(kind_of([&] { save_mapping(untrained, "t"); }) == ErrorKind::protocol);

    auto iml = create_session(posture_config());
    for (std::size_t i = 0; i < 4; ++i)
        record_example(iml, posture(postures[i]), i);
    train_session(iml);
    CHECK(save_mapping(iml, "t").provenance == Mode::iml);
}

TEST_CASE("session snapshots restore")
{
    auto s = create_session(posture_config());
    for (std::size_t i = 0; i < 3; ++i)
        record_example(s, posture(postures[i]), i);
    train_session(s);
    const auto text = session_to_json(s);
    const auto back = session_from_json(text);
    CHECK(session_to_json(back) == text);
    CHECK(back.examples.inputs == s.examples.inputs);
    CHECK(back.phase == Phase::trained);

    auto a = create_session(aiml_config());
    aiml_propose(a);
    aiml_zone(a);
    const auto restored = session_from_json(session_to_json(a));
    CHECK(restored.phase == Phase::proposing);
    CHECK(agent::state_hash(*restored.agent) == agent::state_hash(*a.agent));
}
