#pragma once

#include "gesturemap/ingest.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gesturemap::corpus {

struct Span
{
    std::size_t start = 0;  // first sample
    std::size_t length = 0; // samples

    bool operator==(const Span&) const = default;
};

struct SegmentParams
{
    double frame_ms = 20.0;
    double hop_ms = 10.0;
    double threshold_ratio = 4.0; // energy must exceed ratio x running median
    double min_unit_ms = 50.0;
    std::size_t median_window = 16; // preceding frames in the running median
    double energy_floor = 1e-8;     // absolute mean-square floor for an onset
};

/// Onset-to-onset spans of the mono mix. Silence yields no spans.
std::vector<Span> segment_onsets(const ingest::AudioBuffer& buffer, const SegmentParams& params = {});

struct AnalysisParams
{
    double frame_ms = 46.0;
    double hop_ms = 23.0;
    double min_pitch_hz = 50.0;
    double max_pitch_hz = 2000.0;
};

constexpr std::size_t descriptor_size = 19;
using Descriptor = std::array<double, descriptor_size>;

/// Duration, then mean and std of frequency, energy, periodicity, AC1,
/// loudness, centroid, spread, skewness, kurtosis.
const std::array<std::string, descriptor_size>& descriptor_names();

/// Needs at least two analysis frames inside the span.
Descriptor analyze_unit(const ingest::AudioBuffer& buffer, const Span& span, const AnalysisParams& params = {});
Descriptor analyze_unit(std::span<const float> mono, double sample_rate, const Span& span,
                        const AnalysisParams& params = {});

struct Source
{
    std::string id;
    std::string path;   // WAV file; empty for in-memory sources
    std::string sha256; // of the file bytes, when path is set
    double sample_rate = 44100.0;
    std::vector<float> samples; // mono mix
};

/// Reads and hashes a WAV file.
Source load_source(const std::string& path, const std::string& id = {});
Source memory_source(const std::string& id, const ingest::AudioBuffer& buffer);

struct AudioUnit
{
    std::size_t source = 0; // index into Corpus::sources
    Span span;
    Descriptor descriptor{};

    double duration_s() const { return descriptor[0]; }
};

struct Corpus
{
    std::vector<Source> sources;
    std::vector<AudioUnit> units;
    Descriptor mean{};
    Descriptor std{};
    SegmentParams segmentation;
    AnalysisParams analysis;

    /// Recomputes the per-dimension mean and std (floored at 1e-9).
    void update_normalization();
};

struct BuildReport
{
    std::size_t units = 0;
    std::size_t skipped = 0; // spans too short to analyze
    double mean_duration_s = 0.0;
};

Corpus build_corpus(std::vector<Source> sources, const SegmentParams& segmentation = {},
                    const AnalysisParams& analysis = {}, BuildReport* report = nullptr);

/// Adds one unit and refreshes normalization.
void add_unit(Corpus& corpus, AudioUnit unit);

struct Match
{
    std::size_t unit = 0;
    double distance = 0.0;
};

/// Z-scored, optionally weighted Euclidean distance; ascending, ties by index.
/// k is clamped to the corpus size.
std::vector<Match> retrieve_knn(const Corpus& corpus, std::span<const double> target, std::size_t k,
                                std::span<const double> weights = {});

/// Concatenation with equal-power crossfades, peak-normalized only on clipping.
ingest::AudioBuffer render_unit_sequence(const Corpus& corpus, std::span<const std::size_t> units,
                                         double crossfade_ms);

/// JSON index; descriptors and statistics are stored as hex floats.
std::string corpus_to_json(const Corpus& corpus);
/// Loads an index, re-reading every source file relative to `base_dir` and
/// checking its hash.
Corpus corpus_from_json(const std::string& text, const std::string& base_dir = ".");

} // namespace gesturemap::corpus
