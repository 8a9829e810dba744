#include "gesturemap/agent.hpp"

#include "gesturemap/error.hpp"
#include "text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace gesturemap::agent {

namespace {

double dist(const Vector& a, const Vector& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

double norm(const Vector& v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

Vector random_unit(Rng& rng, std::size_t n)
{
    Vector v(n);
    while (true) {
        for (auto& x : v)
            x = rng.normal();
        const double len = norm(v);
        if (len > 1e-12) {
            for (auto& x : v)
                x /= len;
            return v;
        }
    }
}

Vector random_point(Rng& rng, const FeatureSpace& space)
{
    Vector p(space.dims());
    for (std::size_t j = 0; j < p.size(); ++j)
        p[j] = space.lo[j] + rng.uniform() * (space.hi[j] - space.lo[j]);
    return p;
}

std::size_t direction_size(const AgentState& s)
{
    return s.config.shared_direction ? s.space.dims() : s.space.dims() * s.n_presets();
}

void validate_config(const AgentConfig& c)
{
    if (!(c.min_step > 0.0 && c.min_step <= c.max_step && c.max_step <= 0.5))
        fail(ErrorKind::parameter, "agent step bounds must satisfy 0 < min_step <= max_step <= 0.5");
    if (!(c.step_size >= 0.0 && c.step_size <= c.max_step))
        fail(ErrorKind::parameter, "agent step_size must be in [0, max_step]");
    if (!(c.jitter >= 0.0) || !(c.grow >= 1.0) || !(c.shrink > 0.0 && c.shrink <= 1.0))
        fail(ErrorKind::parameter, "agent jitter must be >= 0, grow >= 1 and shrink in (0, 1]");
    if (!(c.zone_fraction >= 0.0) || c.zone_attempts < 1)
        fail(ErrorKind::parameter, "agent zone settings must be non-negative with at least one attempt");
}

void require_proposal(const AgentState& s, const char* what)
{
    if (s.proposals == 0)
        fail(ErrorKind::protocol, std::string(what) + " feedback needs a prior proposal");
}

} // namespace

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const
{
    std::ostringstream os;
    os << engine_;
    return os.str();
}

double FeatureSpace::diagonal() const
{
    double s = 0.0;
    for (std::size_t j = 0; j < dims(); ++j)
        s += (hi[j] - lo[j]) * (hi[j] - lo[j]);
    return std::sqrt(s);
}

bool FeatureSpace::contains(const Vector& p) const
{
    if (p.size() != dims())
        return false;
    for (std::size_t j = 0; j < dims(); ++j)
        if (!(p[j] >= lo[j] && p[j] <= hi[j]))
            return false;
    return true;
}

void validate_space(const FeatureSpace& space)
{
    if (space.lo.empty())
        fail(ErrorKind::parameter, "feature space needs at least one dimension");
    if (space.hi.size() != space.lo.size() || (!space.names.empty() && space.names.size() != space.lo.size()))
        fail(ErrorKind::parameter, "feature space names and bounds disagree in length");
    for (std::size_t j = 0; j < space.dims(); ++j)
        if (!std::isfinite(space.lo[j]) || !std::isfinite(space.hi[j]) || !(space.lo[j] < space.hi[j]))
            fail(ErrorKind::parameter, "feature space bounds must be finite with lo < hi (dimension " +
                                           std::to_string(j) + ")");
}

AgentState agent_init(const FeatureSpace& space, const std::vector<Vector>& presets, std::uint64_t seed,
                      const AgentConfig& config)
{
    validate_space(space);
    validate_config(config);
    if (presets.size() < 2)
        fail(ErrorKind::parameter, "the agent needs at least two presets");
    for (const auto& p : presets)
        if (p.size() != presets.front().size())
            fail(ErrorKind::schema, "presets must share one dimension");

    AgentState s;
    s.space = space;
    s.config = config;
    s.presets = presets;
    s.rng = Rng(seed);
    for (std::size_t i = 0; i < presets.size(); ++i)
        s.positions.push_back(random_point(s.rng, space));
    s.direction = random_unit(s.rng, direction_size(s));
    s.step_size = config.step_size;
    s.history.push_back(InitEvent{space, presets, seed, config});
    return s;
}

MappingProposal agent_propose(AgentState& s)
{
    const std::size_t d = s.space.dims();
    const double stride = s.step_size * s.space.diagonal();
    const double sigma = s.config.jitter * stride;
    MappingProposal p;
    p.id = s.next_id++;
    p.presets = s.presets;
    for (std::size_t i = 0; i < s.n_presets(); ++i) {
        const std::size_t offset = s.config.shared_direction ? 0 : i * d;
        Vector point(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double jitter = sigma > 0.0 ? sigma * s.rng.normal() : 0.0;
            point[j] = std::clamp(s.positions[i][j] + stride * s.direction[offset + j] + jitter, s.space.lo[j],
                                  s.space.hi[j]);
        }
        p.points.push_back(std::move(point));
    }
    s.previous = std::move(s.positions);
    s.positions = p.points;
    ++s.proposals;
    s.history.push_back(ProposalEvent{p});
    return p;
}

void apply_guiding_feedback(AgentState& s, int signal)
{
    require_proposal(s, "guiding");
    if (signal != 1 && signal != -1)
        fail(ErrorKind::parameter, "guiding feedback must be +1 or -1");
    if (signal > 0) {
        s.step_size = std::min(s.step_size * s.config.grow, s.config.max_step);
    } else {
        for (auto& x : s.direction)
            x = -x;
        if (s.direction.size() > 1) {
            // Rotate toward a random orthogonal unit vector by up to 90 degrees.
            Vector u(s.direction.size());
            double len = 0.0;
            while (len < 1e-12) {
                for (auto& x : u)
                    x = s.rng.normal();
                double along = 0.0;
                for (std::size_t k = 0; k < u.size(); ++k)
                    along += u[k] * s.direction[k];
                for (std::size_t k = 0; k < u.size(); ++k)
                    u[k] -= along * s.direction[k];
                len = norm(u);
            }
            const double theta = 0.5 * std::numbers::pi * s.rng.uniform();
            for (std::size_t k = 0; k < u.size(); ++k)
                s.direction[k] = std::cos(theta) * s.direction[k] + std::sin(theta) * u[k] / len;
            const double n = norm(s.direction);
            for (auto& x : s.direction)
                x /= n;
        }
        s.step_size = std::max(s.step_size * s.config.shrink, s.config.min_step);
        if (s.config.revert)
            s.positions = s.previous;
    }
    s.history.push_back(GuidingEvent{signal});
}

void apply_zone_feedback(AgentState& s)
{
    require_proposal(s, "zone");
    const double min_jump = s.config.zone_fraction * s.space.diagonal();
    for (auto& pos : s.positions) {
        Vector best;
        double best_dist = -1.0;
        for (int attempt = 0; attempt < s.config.zone_attempts; ++attempt) {
            auto candidate = random_point(s.rng, s.space);
            const double d = dist(candidate, pos);
            if (d > best_dist) {
                best = std::move(candidate);
                best_dist = d;
            }
            if (best_dist >= min_jump)
                break;
        }
        pos = std::move(best);
    }
    s.direction = random_unit(s.rng, direction_size(s));
    s.step_size = s.config.step_size;
    s.history.push_back(ZoneEvent{});
}

models::RegressionSet build_training_set(const MappingProposal& proposal)
{
    if (proposal.presets.size() != proposal.points.size())
        fail(ErrorKind::schema, "proposal pairs " + std::to_string(proposal.points.size()) + " points with " +
                                    std::to_string(proposal.presets.size()) + " presets");
    models::RegressionSet set;
    for (std::size_t i = 0; i < proposal.points.size(); ++i)
        set.add(proposal.points[i], proposal.presets[i]);
    return set;
}

std::string state_hash(const AgentState& s)
{
    std::string text;
    const auto add = [&](double v) {
        text += detail::to_hex(v);
        text += ',';
    };
    for (const auto& p : s.positions)
        for (double v : p)
            add(v);
    text += '|';
    for (const auto& p : s.previous)
        for (double v : p)
            add(v);
    text += '|';
    for (double v : s.direction)
        add(v);
    text += '|';
    add(s.step_size);
    for (const auto& p : s.presets)
        for (double v : p)
            add(v);
    text += '|' + s.rng.state() + '|' + std::to_string(s.next_id) + '|' + std::to_string(s.proposals) + '|' +
            std::to_string(s.history.size());
    return detail::sha256_hex(text);
}

// ---------------------------------------------------------------------------
// History log

namespace {

using ojson = nlohmann::ordered_json;

ojson config_json(const AgentConfig& c)
{
    return {{"step_size", c.step_size},         {"jitter", c.jitter},       {"grow", c.grow},
            {"shrink", c.shrink},               {"min_step", c.min_step},   {"max_step", c.max_step},
            {"zone_fraction", c.zone_fraction}, {"zone_attempts", c.zone_attempts}, {"shared_direction", c.shared_direction},
            {"revert", c.revert}};
}

AgentConfig read_config(const nlohmann::json& j)
{
    AgentConfig c;
    c.step_size = j.at("step_size");
    c.jitter = j.at("jitter");
    c.grow = j.at("grow");
    c.shrink = j.at("shrink");
    c.min_step = j.at("min_step");
    c.max_step = j.at("max_step");
    c.zone_fraction = j.at("zone_fraction");
    c.zone_attempts = j.at("zone_attempts");
    c.shared_direction = j.at("shared_direction");
    c.revert = j.at("revert");
    return c;
}

} // namespace

std::string history_to_jsonl(const std::vector<HistoryEvent>& history)
{
    std::string out;
    for (const auto& e : history) {
        ojson j;
        if (const auto* init = std::get_if<InitEvent>(&e)) {
            j["event"] = "init";
            j["seed"] = init->seed;
            j["space"] = {{"names", init->space.names}, {"lo", init->space.lo}, {"hi", init->space.hi}};
            j["presets"] = init->presets;
            j["config"] = config_json(init->config);
        } else if (const auto* p = std::get_if<ProposalEvent>(&e)) {
            j["event"] = "proposal";
            j["id"] = p->proposal.id;
            j["points"] = p->proposal.points;
        } else if (const auto* g = std::get_if<GuidingEvent>(&e)) {
            j["event"] = "guiding";
            j["signal"] = g->signal;
        } else {
            j["event"] = "zone";
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<HistoryEvent> history_from_jsonl(const std::string& text)
{
    std::vector<HistoryEvent> out;
    for (const auto& line : detail::split_lines(text)) {
        const auto where = "history line " + std::to_string(line.number);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line.text);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::parse, where + ": " + e.what());
        }
        try {
            const auto kind = j.at("event").get<std::string>();
            if (kind == "init") {
                InitEvent e;
                e.seed = j.at("seed").get<std::uint64_t>();
                const auto& sp = j.at("space");
                e.space = {sp.at("names"), sp.at("lo"), sp.at("hi")};
                e.presets = j.at("presets").get<std::vector<Vector>>();
                e.config = read_config(j.at("config"));
                out.emplace_back(std::move(e));
            } else if (kind == "proposal") {
                MappingProposal p;
                p.id = j.at("id").get<std::uint64_t>();
                p.points = j.at("points").get<std::vector<Vector>>();
                out.emplace_back(ProposalEvent{std::move(p)});
            } else if (kind == "guiding") {
                out.emplace_back(GuidingEvent{j.at("signal").get<int>()});
            } else if (kind == "zone") {
                out.emplace_back(ZoneEvent{});
            } else {
                fail(ErrorKind::schema, where + ": unknown event '" + kind + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::schema, where + ": " + e.what());
        }
    }
    return out;
}

AgentState replay(const std::vector<HistoryEvent>& history)
{
    if (history.empty())
        fail(ErrorKind::empty_input, "history is empty");
    const auto* init = std::get_if<InitEvent>(&history.front());
    if (!init)
        fail(ErrorKind::schema, "history must start with an init event");
    AgentState s = agent_init(init->space, init->presets, init->seed, init->config);
    for (std::size_t i = 1; i < history.size(); ++i) {
        const auto& e = history[i];
        if (const auto* p = std::get_if<ProposalEvent>(&e)) {
            const auto again = agent_propose(s);
            if (again.id != p->proposal.id || again.points != p->proposal.points)
                fail(ErrorKind::data, "replay diverged at event " + std::to_string(i + 1) + " (proposal " +
                                          std::to_string(p->proposal.id) + ")");
        } else if (const auto* g = std::get_if<GuidingEvent>(&e)) {
            apply_guiding_feedback(s, g->signal);
        } else if (std::holds_alternative<ZoneEvent>(e)) {
            apply_zone_feedback(s);
        } else {
            fail(ErrorKind::schema, "init event in the middle of a history (event " + std::to_string(i + 1) + ")");
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Simulated feedback

FeedbackOracle::FeedbackOracle(std::vector<Vector> targets, int patience)
    : targets_(std::move(targets)), patience_(patience)
{
    if (targets_.empty())
        fail(ErrorKind::parameter, "the feedback oracle needs target points");
    if (patience_ < 1)
        fail(ErrorKind::parameter, "oracle patience must be at least 1");
}

double FeedbackOracle::mean_distance(const std::vector<Vector>& points) const
{
    if (points.size() != targets_.size())
        fail(ErrorKind::schema, "oracle has " + std::to_string(targets_.size()) + " targets but got " +
                                    std::to_string(points.size()) + " points");
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i)
        total += dist(points[i], targets_[i]);
    return total / static_cast<double>(points.size());
}

FeedbackOracle::Feedback FeedbackOracle::judge(const MappingProposal& proposal)
{
    const double d = mean_distance(proposal.points);
    const bool improved = previous_ < 0.0 || d < previous_ || d == 0.0;
    previous_ = d;
    if (improved) {
        misses_ = 0;
        return Feedback::positive;
    }
    if (++misses_ >= patience_) {
        misses_ = 0;
        return Feedback::zone;
    }
    return Feedback::negative;
}

SimulationResult simulate(AgentState state, FeedbackOracle oracle, std::size_t iterations)
{
    SimulationResult r;
    r.initial_distance = oracle.mean_distance(state.positions);
    for (std::size_t i = 0; i < iterations; ++i) {
        const auto proposal = agent_propose(state);
        switch (oracle.judge(proposal)) {
        case FeedbackOracle::Feedback::positive: apply_guiding_feedback(state, 1); break;
        case FeedbackOracle::Feedback::negative: apply_guiding_feedback(state, -1); break;
        case FeedbackOracle::Feedback::zone: apply_zone_feedback(state); break;
        }
    }
    r.final_distance = oracle.mean_distance(state.positions);
    r.state = std::move(state);
    return r;
}

} // namespace gesturemap::agent
