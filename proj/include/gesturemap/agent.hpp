#pragma once

#include "gesturemap/models.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace gesturemap::agent {

using models::Vector;

/// Axis-aligned box the agent explores.
struct FeatureSpace
{
    std::vector<std::string> names;
    Vector lo;
    Vector hi;

    std::size_t dims() const { return lo.size(); }
    double diagonal() const;
    bool contains(const Vector& p) const;
    bool operator==(const FeatureSpace&) const = default;
};

void validate_space(const FeatureSpace& space);

struct AgentConfig
{
    double step_size = 0.1;     // fraction of the bounds diagonal, [0, 0.5]
    double jitter = 0.25;       // jitter sigma as a fraction of the step length
    double grow = 1.1;          // step multiplier on positive guiding feedback
    double shrink = 0.9;        // step multiplier on negative guiding feedback
    double min_step = 0.01;
    double max_step = 0.5;
    double zone_fraction = 0.25; // minimum jump per point, fraction of the diagonal
    int zone_attempts = 1000;
    bool shared_direction = false; // one direction for all points instead of the product space
    bool revert = true;          // negative feedback returns the points to where they were

    bool operator==(const AgentConfig&) const = default;
};

/// mt19937_64 with hand-written conversions, so a seed gives the same stream
/// with any standard library.
class Rng
{
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
    double uniform(); // [0, 1)
    double normal();  // standard normal, Box-Muller without caching
    std::string state() const;
    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

struct MappingProposal
{
    std::uint64_t id = 0;
    std::vector<Vector> points;  // one per preset slot
    std::vector<Vector> presets; // paired synthesis parameters, same order

    bool operator==(const MappingProposal&) const = default;
};

struct InitEvent
{
    FeatureSpace space;
    std::vector<Vector> presets;
    std::uint64_t seed = 0;
    AgentConfig config;
};
struct ProposalEvent
{
    MappingProposal proposal;
};
struct GuidingEvent
{
    int signal = 0;
};
struct ZoneEvent
{
};

using HistoryEvent = std::variant<InitEvent, ProposalEvent, GuidingEvent, ZoneEvent>;

struct AgentState
{
    FeatureSpace space;
    AgentConfig config;
    std::vector<Vector> presets;
    std::vector<Vector> positions;
    std::vector<Vector> previous; // positions before the latest proposal
    Vector direction; // unit; dims x presets, or dims when shared
    double step_size = 0.0;
    Rng rng;
    std::uint64_t next_id = 1;
    std::size_t proposals = 0;
    std::vector<HistoryEvent> history;

    std::size_t n_presets() const { return positions.size(); }
};

/// Random positions and direction from `seed`. Needs at least two presets.
AgentState agent_init(const FeatureSpace& space, const std::vector<Vector>& presets, std::uint64_t seed,
                      const AgentConfig& config = {});

/// Moves every point by step * diagonal along its direction plus Gaussian
/// jitter, clamps to the bounds, and records the proposal.
MappingProposal agent_propose(AgentState& state);

/// +1 keeps the direction and grows the step; -1 reverses it, rotates it by
/// up to 90 degrees and shrinks the step, and with `revert` set moves the
/// points back to where they were before the rejected proposal.
void apply_guiding_feedback(AgentState& state, int signal);

/// Jumps every point at least zone_fraction * diagonal away, re-randomizes
/// the direction and resets the step size.
void apply_zone_feedback(AgentState& state);

models::RegressionSet build_training_set(const MappingProposal& proposal);

/// SHA-256 over the full state, hex.
std::string state_hash(const AgentState& state);

std::string history_to_jsonl(const std::vector<HistoryEvent>& history);
std::vector<HistoryEvent> history_from_jsonl(const std::string& text);

/// Rebuilds the state by re-running every event; recorded proposals must be
/// reproduced exactly.
AgentState replay(const std::vector<HistoryEvent>& history);

/// Simulated user: +1 when the mean point-to-target distance drops, -1
/// otherwise, and a zone request after `patience` non-improvements in a row.
class FeedbackOracle
{
public:
    enum class Feedback { positive, negative, zone };

    explicit FeedbackOracle(std::vector<Vector> targets, int patience = 10);

    Feedback judge(const MappingProposal& proposal);
    double mean_distance(const std::vector<Vector>& points) const;

private:
    std::vector<Vector> targets_;
    int patience_;
    int misses_ = 0;
    double previous_ = -1.0;
};

struct SimulationResult
{
    double initial_distance = 0.0;
    double final_distance = 0.0;
    AgentState state;
};

/// Runs `iterations` propose/feedback rounds against the oracle.
SimulationResult simulate(AgentState state, FeedbackOracle oracle, std::size_t iterations);

} // namespace gesturemap::agent
