#include "gesturemap/agent.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace gesturemap;
using namespace gesturemap::agent;
using testutil::kind_of;

namespace {

FeatureSpace unit_square()
{
    return {{"x", "y"}, {0.0, 0.0}, {1.0, 1.0}};
}

const std::vector<Vector> four_presets{{0.0, 100.0, 0.5}, {1.0, 200.0, 0.25}, {0.5, 800.0, 1.0}, {0.25, 50.0, 0.0}};

double dot(const Vector& a, const Vector& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

double cosine(const Vector& a, const Vector& b)
{
    return dot(a, b) / std::sqrt(dot(a, a) * dot(b, b));
}

double distance(const Vector& a, const Vector& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

Vector flatten(const std::vector<Vector>& points)
{
    Vector out;
    for (const auto& p : points)
        out.insert(out.end(), p.begin(), p.end());
    return out;
}

std::vector<Vector> random_targets(std::uint64_t seed, std::size_t n)
{
    Rng rng(seed);
    std::vector<Vector> t;
    for (std::size_t i = 0; i < n; ++i)
        t.push_back({rng.uniform(), rng.uniform()});
    return t;
}

} // namespace

TEST_CASE("init is seeded and in bounds")
{
    const auto a = agent_init(unit_square(), four_presets, 11);
    const auto b = agent_init(unit_square(), four_presets, 11);
    const auto c = agent_init(unit_square(), four_presets, 12);
    CHECK(a.positions == b.positions);
    CHECK(a.direction == b.direction);
    CHECK(a.positions != c.positions);
    CHECK(a.n_presets() == 4);
    CHECK(a.direction.size() == 8);
    CHECK(std::abs(dot(a.direction, a.direction) - 1.0) < 1e-9);
    for (const auto& p : a.positions)
        CHECK(unit_square().contains(p));

    AgentConfig shared;
    shared.shared_direction = true;
    CHECK(agent_init(unit_square(), four_presets, 11, shared).direction.size() == 2);

    auto sa = agent_init(unit_square(), four_presets, 11);
    auto sb = agent_init(unit_square(), four_presets, 11);
    auto sc = agent_init(unit_square(), four_presets, 12);
    CHECK(agent_propose(sa) == agent_propose(sb));
    CHECK_FALSE(agent_propose(sa).points == agent_propose(sc).points);
}

TEST_CASE("init errors")
{
    CHECK(kind_of([] { agent_init(unit_square(), {{1.0}}, 1); }) == ErrorKind::parameter);
    CHECK(kind_of([] { agent_init({{"x"}, {1.0}, {1.0}}, four_presets, 1); }) == ErrorKind::parameter);
    CHECK(kind_of([] { agent_init({{}, {}, {}}, four_presets, 1); }) == ErrorKind::parameter);
    CHECK(kind_of([] { agent_init({{"x"}, {0.0}, {INFINITY}}, four_presets, 1); }) == ErrorKind::parameter);
    AgentConfig big;
    big.step_size = 0.6;
    CHECK(kind_of([&] { agent_init(unit_square(), four_presets, 1, big); }) == ErrorKind::parameter);
}

TEST_CASE("zero step and jitter propose the current positions")
{
    AgentConfig still;
    still.step_size = 0.0;
    still.jitter = 0.0;
    auto s = agent_init(unit_square(), four_presets, 3, still);
    const auto before = s.positions;
    const auto p = agent_propose(s);
    CHECK(p.points == before);
    CHECK(p.presets == four_presets);
    CHECK(p.id == 1);
    CHECK(agent_propose(s).id == 2);
}

TEST_CASE("proposals stay in bounds")
{
    AgentConfig wide;
    wide.step_size = 0.5;
    wide.jitter = 2.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto s = agent_init(unit_square(), four_presets, seed, wide);
        for (int i = 0; i < 50; ++i) {
            const auto p = agent_propose(s);
            for (const auto& pt : p.points)
                CHECK(unit_square().contains(pt));
            if (i % 7 == 6)
                apply_zone_feedback(s);
            else
                apply_guiding_feedback(s, i % 2 ? 1 : -1);
            for (const auto& pt : s.positions)
                CHECK(unit_square().contains(pt));
        }
    }
}

TEST_CASE("positive feedback keeps moving along the direction")
{
    // Large box so clamping stays out of the way.
    const FeatureSpace box{{"x", "y"}, {-100.0, -100.0}, {100.0, 100.0}};
    AgentConfig c;
    c.step_size = 0.01;
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto s = agent_init(box, four_presets, seed, c);
        for (auto& p : s.positions)
            p = {0.0, 0.0};
        const auto first = agent_propose(s);
        apply_guiding_feedback(s, 1);
        const auto dir = s.direction;
        const auto second = agent_propose(s);
        Vector step = flatten(second.points);
        const auto from = flatten(first.points);
        for (std::size_t i = 0; i < step.size(); ++i)
            step[i] -= from[i];
        total += cosine(step, dir);
    }
    CHECK(total / 100.0 > 0.7);
}

TEST_CASE("guiding feedback rules")
{
    auto s = agent_init(unit_square(), four_presets, 5);
    CHECK(kind_of([&] { apply_guiding_feedback(s, 1); }) == ErrorKind::protocol);
    CHECK(kind_of([&] { apply_zone_feedback(s); }) == ErrorKind::protocol);
    agent_propose(s);
    CHECK(kind_of([&] { apply_guiding_feedback(s, 0); }) == ErrorKind::parameter);

    const auto dir = s.direction;
    const double step = s.step_size;
    apply_guiding_feedback(s, 1);
    CHECK(cosine(dir, s.direction) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.step_size == doctest::Approx(step * 1.1));

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto t = agent_init(unit_square(), four_presets, seed);
        agent_propose(t);
        const auto before = t.direction;
        const auto before_positions = t.previous;
        apply_guiding_feedback(t, -1);
        CHECK(cosine(before, t.direction) <= 1e-12);
        CHECK(std::abs(dot(t.direction, t.direction) - 1.0) < 1e-9);
        CHECK(t.step_size == doctest::Approx(0.09));
        CHECK(t.positions == before_positions);
    }

    for (int i = 0; i < 40; ++i)
        apply_guiding_feedback(s, 1);
    CHECK(s.step_size == 0.5);
    for (int i = 0; i < 80; ++i)
        apply_guiding_feedback(s, -1);
    CHECK(s.step_size == 0.01);
}

TEST_CASE("negative feedback in one dimension negates")
{
    auto s = agent_init({{"x"}, {0.0}, {1.0}}, {{1.0}, {2.0}}, 9, AgentConfig{.shared_direction = true});
    agent_propose(s);
    const auto d = s.direction;
    apply_guiding_feedback(s, -1);
    CHECK(s.direction[0] == -d[0]);
}

TEST_CASE("zone feedback jumps far enough")
{
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto s = agent_init(unit_square(), four_presets, seed);
        agent_propose(s);
        s.step_size = 0.3;
        const auto before = s.positions;
        auto copy = s;
        apply_zone_feedback(s);
        apply_zone_feedback(copy);
        CHECK(s.positions == copy.positions);
        for (std::size_t i = 0; i < before.size(); ++i)
            CHECK(distance(before[i], s.positions[i]) >= 0.25 * std::sqrt(2.0));
        CHECK(s.step_size == 0.1);
    }

    AgentConfig still;
    still.step_size = 0.0;
    still.jitter = 0.0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto s = agent_init({{"x"}, {0.0}, {1.0}}, {{1.0}, {2.0}}, seed, still);
        agent_propose(s);
        s.positions[0] = {0.1};
        apply_zone_feedback(s);
        CHECK(s.positions[0][0] >= 0.35);
        CHECK(s.positions[0][0] <= 1.0);
    }
}

TEST_CASE("zone feedback falls back to the farthest sample")
{
    // A jump of the full diagonal is impossible from the centre.
    AgentConfig c;
    c.zone_fraction = 1.0;
    c.zone_attempts = 50;
    auto s = agent_init({{"x"}, {0.0}, {1.0}}, {{1.0}, {2.0}}, 2, c);
    agent_propose(s);
    s.positions = {{0.5}, {0.5}};
    apply_zone_feedback(s);
    for (const auto& p : s.positions) {
        CHECK(std::abs(p[0] - 0.5) > 0.4);
        CHECK(std::abs(p[0] - 0.5) <= 0.5);
    }
}

TEST_CASE("training set from a proposal")
{
    auto s = agent_init(unit_square(), four_presets, 21);
    const auto p = agent_propose(s);
    const auto set = build_training_set(p);
    REQUIRE(set.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(set.inputs[i] == p.points[i]);
        CHECK(set.targets[i] == four_presets[i]);
    }

    const std::vector<std::size_t> sizes{2, 8, 3};
    const auto trained = models::mlp_train(models::mlp_init(sizes, 4), set, 5000, 0.5).model;
    Vector lo(3, INFINITY), hi(3, -INFINITY);
    for (const auto& t : four_presets)
        for (std::size_t j = 0; j < 3; ++j) {
            lo[j] = std::min(lo[j], t[j]);
            hi[j] = std::max(hi[j], t[j]);
        }
    for (std::size_t i = 0; i < 4; ++i) {
        const auto y = models::mlp_predict(trained, p.points[i]);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::abs(y[j] - four_presets[i][j]) / (hi[j] - lo[j]) < 0.05);
    }

    auto broken = p;
    broken.presets.pop_back();
    CHECK(kind_of([&] { build_training_set(broken); }) == ErrorKind::schema);
}

TEST_CASE("feedback oracle rules")
{
    const std::vector<Vector> targets{{0.2, 0.2}, {0.8, 0.8}};
    FeedbackOracle oracle(targets, 3);
    MappingProposal p;
    p.points = targets;
    CHECK(oracle.judge(p) == FeedbackOracle::Feedback::positive);
    CHECK(oracle.judge(p) == FeedbackOracle::Feedback::positive);

    FeedbackOracle approach(targets, 3);
    for (double off = 0.5; off > 0.0; off -= 0.05) {
        p.points = {{0.2 + off, 0.2}, {0.8, 0.8 - off}};
        CHECK(approach.judge(p) == FeedbackOracle::Feedback::positive);
    }

    FeedbackOracle stuck(targets, 3);
    p.points = {{0.5, 0.5}, {0.5, 0.5}};
    CHECK(stuck.judge(p) == FeedbackOracle::Feedback::positive);
    CHECK(stuck.judge(p) == FeedbackOracle::Feedback::negative);
    CHECK(stuck.judge(p) == FeedbackOracle::Feedback::negative);
    CHECK(stuck.judge(p) == FeedbackOracle::Feedback::zone);
    CHECK(stuck.judge(p) == FeedbackOracle::Feedback::negative);

    CHECK(oracle.mean_distance({{0.2, 0.2}, {0.8, 0.5}}) == doctest::Approx(0.15));
    CHECK(kind_of([&] { oracle.mean_distance({{0.2, 0.2}}); }) == ErrorKind::schema);
    CHECK(kind_of([] { FeedbackOracle({}, 3); }) == ErrorKind::parameter);
}

TEST_CASE("simulated loop converges")
{
    std::vector<double> ratios;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r = simulate(agent_init(unit_square(), four_presets, seed),
                                FeedbackOracle(random_targets(1000 + seed, 4)), 200);
        ratios.push_back(r.final_distance / r.initial_distance);
        CHECK(r.state.history.size() == 1 + 2 * 200);
    }
    std::sort(ratios.begin(), ratios.end());
    CHECK(0.5 * (ratios[9] + ratios[10]) < 0.5);
}

TEST_CASE("history replays to the same state")
{
    for (std::uint64_t seed : {3u, 17u}) {
        const auto r = simulate(agent_init(unit_square(), four_presets, seed),
                                FeedbackOracle(random_targets(seed, 4)), 120);
        const auto log = history_to_jsonl(r.state.history);
        const auto events = history_from_jsonl(log);
        CHECK(events.size() == r.state.history.size());
        const auto again = replay(events);
        CHECK(state_hash(again) == state_hash(r.state));
        CHECK(again.positions == r.state.positions);
        CHECK(history_to_jsonl(again.history) == log);
    }

    auto s = agent_init(unit_square(), four_presets, 8);
    agent_propose(s);
    apply_guiding_feedback(s, 1);
    const auto before = state_hash(s);
    agent_propose(s);
    CHECK(state_hash(s) != before);

    auto events = s.history;
    std::get<ProposalEvent>(events[3]).proposal.points[0][0] += 1e-12;
    CHECK(kind_of([&] { replay(events); }) == ErrorKind::data);
    CHECK(testutil::message_of([&] { replay(events); }).find("event 4") != std::string::npos);

    CHECK(kind_of([] { replay({}); }) == ErrorKind::empty_input);
    CHECK(kind_of([] { replay({ZoneEvent{}}); }) == ErrorKind::schema);
    CHECK(kind_of([] { history_from_jsonl("{\"event\":\"dance\"}\n"); }) == ErrorKind::schema);
    CHECK(kind_of([] { history_from_jsonl("{nope\n"); }) == ErrorKind::parse);
}
