#pragma once

#include "gesturemap/ingest.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace gesturemap::granular {

/// Six control parameters of the sample-based granular synthesiser.
struct SynthPreset
{
    double start_s = 0.0;
    double duration_s = 1.0;
    double speed = 1.0;       // read-head rate, > 0
    double pitch_shift = 0.0; // semitones, [-24, 24]
    double cutoff_hz = 20000.0;
    double resonance = 0.707; // filter Q, [0.1, 20]

    static constexpr std::size_t size = 6;
    static const std::array<std::string, size>& field_names();

    std::vector<double> to_vector() const;
    /// Throws a schema error unless `v` has exactly six entries.
    static SynthPreset from_vector(std::span<const double> v);

    bool operator==(const SynthPreset&) const = default;
};

/// Returns the preset unchanged, or throws a range error naming every
/// violated field.
SynthPreset validate_preset(const SynthPreset& candidate);
/// Same, and also checks that the selection fits in a source of the given length.
SynthPreset validate_preset(const SynthPreset& candidate, double source_length_s);

/// Nearest valid preset. Used on model predictions, which are unbounded.
SynthPreset clamp_preset(const SynthPreset& candidate);

struct Anchor
{
    double time = 0.0; // fraction of the gesture, [0, 1]
    SynthPreset preset;

    bool operator==(const Anchor&) const = default;
};

/// Four anchors at strictly increasing times, first at 0 and last at 1.
struct AnchorEnvelope
{
    std::array<Anchor, 4> anchors;

    bool operator==(const AnchorEnvelope&) const = default;
};

void validate_envelope(const AnchorEnvelope& env);

/// Piecewise-linear per field; cutoff is interpolated in the log domain.
SynthPreset envelope_eval(const AnchorEnvelope& env, double t);

struct ParamTimeline
{
    double rate = 0.0; // control steps per second
    std::vector<SynthPreset> presets;

    double duration_s() const { return rate > 0.0 ? static_cast<double>(presets.size()) / rate : 0.0; }
    bool operator==(const ParamTimeline&) const = default;
};

/// ceil(duration * rate) presets; entry i samples the envelope at i / (n - 1).
ParamTimeline envelope_to_timeline(const AnchorEnvelope& env, double duration_s, double rate);

struct GrainSettings
{
    double size_ms = 100.0; // [10, 500]
    int overlap = 4;        // grains sounding at once, [1, 8]
};

/// Offline granular rendering of `timeline` from the mono mix of `source`.
/// The output is mono at the source rate and lasts timeline.duration_s().
ingest::AudioBuffer render_offline(const ingest::AudioBuffer& source, const ParamTimeline& timeline,
                                   const GrainSettings& grain = {});

std::string preset_to_json(const SynthPreset& preset);
SynthPreset preset_from_json(const std::string& text);
std::string envelope_to_json(const AnchorEnvelope& env);
AnchorEnvelope envelope_from_json(const std::string& text);
std::string timeline_to_json(const ParamTimeline& timeline);
ParamTimeline timeline_from_json(const std::string& text);

} // namespace gesturemap::granular
