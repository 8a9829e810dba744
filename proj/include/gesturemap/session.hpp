#pragma once

#include "gesturemap/agent.hpp"
#include "gesturemap/corpus.hpp"
#include "gesturemap/features.hpp"
#include "gesturemap/ingest.hpp"
#include "gesturemap/models.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gesturemap::session {

using models::Vector;

enum class Mode { iml, aiml };
enum class Target { granular, corpus };
enum class Phase { idle, recording, proposing, trained, running };

std::string_view to_string(Mode m);
std::string_view to_string(Target t);
std::string_view to_string(Phase p);

struct TrainParams
{
    std::vector<std::size_t> hidden{8};
    std::size_t epochs = 5000;
    double learning_rate = 0.5;
    std::uint64_t seed = 1;

    bool operator==(const TrainParams&) const = default;
};

struct SessionConfig
{
    std::string id;
    Mode mode = Mode::iml;
    Target target = Target::granular;
    features::FeatureConfig features;
    // Granular targets hold six-field presets; corpus targets hold 19
    // descriptors.
    std::vector<Vector> presets;
    // Agent settings, used in aiml mode only.
    agent::FeatureSpace space{{"pos_x", "pos_y"}, {0.0, 0.0}, {1.0, 1.0}};
    std::uint64_t seed = 0;
    agent::AgentConfig agent;
    TrainParams training;
};

nlohmann::json config_to_json(const SessionConfig& config);
/// Missing keys keep their defaults; unknown keys are a schema error.
SessionConfig config_from_json(const nlohmann::json& j);

nlohmann::json features_to_json(const features::FeatureConfig& config);
features::FeatureConfig features_from_json(const nlohmann::json& j);

struct Session
{
    SessionConfig config;
    Phase phase = Phase::idle;
    models::RegressionSet examples; // iml only
    std::optional<models::MlpModel> model;
    std::optional<agent::AgentState> agent;
    std::optional<agent::MappingProposal> proposal;
    Vector loss; // curve of the latest training run
    std::shared_ptr<const corpus::Corpus> corpus;
    std::size_t saves = 0;
};

/// Actions accepted in the session's current phase, in a fixed order.
std::vector<std::string> legal_actions(const Session& s);
/// Protocol error naming the legal actions unless `action` is one of them.
void require_action(const Session& s, std::string_view action);

Session create_session(const SessionConfig& config);

/// Features of the window in config order.
Vector window_features(const Session& s, const ingest::FrameStream& window);

void record_example(Session& s, const ingest::FrameStream& window, const Vector& target);
void record_vector(Session& s, const Vector& features, const Vector& target);
/// Target given as an index into the session presets.
void record_example(Session& s, const ingest::FrameStream& window, std::size_t preset);

/// Trains a fresh network from the configured seed on the examples (iml)
/// or on the latest proposal (aiml). Returns the final loss.
double train_session(Session& s, const std::optional<TrainParams>& params = std::nullopt);

struct Prediction
{
    Vector params; // clamped preset, or the predicted descriptor for corpus targets
    std::optional<corpus::Match> unit;
};

Prediction run_predict(Session& s, const ingest::FrameStream& window);
Prediction predict_vector(Session& s, std::span<const double> features);

void attach_corpus(Session& s, std::shared_ptr<const corpus::Corpus> corpus);

// AIML loop.
agent::MappingProposal aiml_propose(Session& s);
void aiml_guiding(Session& s, int sign);
void aiml_zone(Session& s);

struct MappingRecord
{
    std::string id;
    std::string created_at;
    SessionConfig config;
    std::string model; // mlp JSON
    Mode provenance = Mode::iml;
    std::string history; // agent history JSONL for aiml mappings
};

constexpr int mapping_version = 1;

MappingRecord save_mapping(Session& s, const std::string& created_at);
/// Runnable session; aiml mappings get their agent back by replay.
Session load_mapping(const MappingRecord& record);

std::string mapping_to_json(const MappingRecord& record);
MappingRecord mapping_from_json(const std::string& text);

/// Full snapshot, used to persist live sessions on shutdown.
std::string session_to_json(const Session& s);
Session session_from_json(const std::string& text);

} // namespace gesturemap::session
