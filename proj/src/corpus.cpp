#include "gesturemap/corpus.hpp"

#include "gesturemap/error.hpp"
#include "text_util.hpp"

#include <fftw3.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <mutex>
#include <numbers>

namespace gesturemap::corpus {

namespace {

constexpr int corpus_format_version = 1;

std::size_t samples_for(double ms, double fs)
{
    return static_cast<std::size_t>(std::llround(ms * 1e-3 * fs));
}

double mean_square(std::span<const float> x)
{
    double s = 0.0;
    for (float v : x)
        s += static_cast<double>(v) * v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

double median_of(std::vector<double> v)
{
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1)
        return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

} // namespace

// ---------------------------------------------------------------------------
// Segmentation

std::vector<Span> segment_onsets(const ingest::AudioBuffer& buffer, const SegmentParams& p)
{
    if (buffer.frames() == 0)
        fail(ErrorKind::empty_input, "cannot segment an empty buffer");
    const double fs = buffer.sample_rate;
    const std::size_t frame = samples_for(p.frame_ms, fs);
    const std::size_t hop = samples_for(p.hop_ms, fs);
    if (frame == 0 || hop == 0 || hop > frame)
        fail(ErrorKind::parameter, "segmentation needs 0 < hop <= frame");
    if (!(p.threshold_ratio > 0.0) || p.median_window == 0)
        fail(ErrorKind::parameter, "segmentation threshold ratio and median window must be positive");

    const auto mono = buffer.mono();
    std::vector<double> energy;
    for (std::size_t start = 0; start < mono.size(); start += hop) {
        const std::size_t len = std::min(frame, mono.size() - start);
        energy.push_back(mean_square(std::span(mono).subspan(start, len)));
    }

    std::vector<std::size_t> onsets;
    bool was_above = false;
    for (std::size_t f = 0; f < energy.size(); ++f) {
        const std::size_t from = f >= p.median_window ? f - p.median_window : 0;
        const double median = f == 0 ? 0.0 : median_of({energy.begin() + static_cast<std::ptrdiff_t>(from),
                                                         energy.begin() + static_cast<std::ptrdiff_t>(f)});
        const bool above = energy[f] > p.energy_floor && energy[f] > p.threshold_ratio * median;
        if (above && !was_above)
            onsets.push_back(f * hop);
        was_above = above;
    }
    if (onsets.empty())
        return {};

    const std::size_t min_len = samples_for(p.min_unit_ms, fs);
    // Short units absorb the following onset; a short last unit joins its predecessor.
    std::vector<std::size_t> kept{onsets.front()};
    for (std::size_t i = 1; i < onsets.size(); ++i)
        if (onsets[i] - kept.back() >= min_len)
            kept.push_back(onsets[i]);
    if (kept.size() > 1 && mono.size() - kept.back() < min_len)
        kept.pop_back();

    std::vector<Span> spans;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const std::size_t end = i + 1 < kept.size() ? kept[i + 1] : mono.size();
        spans.push_back({kept[i], end - kept[i]});
    }
    return spans;
}

// ---------------------------------------------------------------------------
// Descriptors

const std::array<std::string, descriptor_size>& descriptor_names()
{
    static const std::array<std::string, descriptor_size> names{
        "duration",      "frequency_mean", "frequency_std", "energy_mean",   "energy_std",
        "periodicity_mean", "periodicity_std", "ac1_mean",   "ac1_std",       "loudness_mean",
        "loudness_std",  "centroid_mean",  "centroid_std",  "spread_mean",   "spread_std",
        "skewness_mean", "skewness_std",   "kurtosis_mean", "kurtosis_std"};
    return names;
}

namespace {

std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

/// Hann-windowed magnitude spectrum of one frame size, reusing an FFTW plan.
class Spectrum
{
public:
    explicit Spectrum(std::size_t n) : n_(n), window_(n)
    {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        {
            std::lock_guard lock(fftw_planner_mutex());
            plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
        }
        for (std::size_t i = 0; i < n; ++i)
            window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    ~Spectrum()
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    Spectrum(const Spectrum&) = delete;
    Spectrum& operator=(const Spectrum&) = delete;

    std::vector<double> magnitudes(std::span<const float> frame)
    {
        for (std::size_t i = 0; i < n_; ++i)
            in_[i] = window_[i] * frame[i];
        fftw_execute(plan_);
        std::vector<double> mag(n_ / 2 + 1);
        for (std::size_t k = 0; k < mag.size(); ++k)
            mag[k] = std::hypot(out_[k][0], out_[k][1]);
        return mag;
    }

private:
    std::size_t n_;
    std::vector<double> window_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

struct FrameMeasures
{
    double frequency = 0, energy = 0, periodicity = 0, ac1 = 0, loudness = 0;
    double centroid = 0, spread = 0, skewness = 0, kurtosis = 0;
};

/// Normalized autocorrelation over the overlapping part of the frame.
double normalized_acf(std::span<const float> x, std::size_t lag)
{
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t n = 0; n + lag < x.size(); ++n) {
        const double a = x[n];
        const double b = x[n + lag];
        xy += a * b;
        xx += a * a;
        yy += b * b;
    }
    return xx > 0 && yy > 0 ? xy / std::sqrt(xx * yy) : 0.0;
}

void pitch(std::span<const float> x, double fs, const AnalysisParams& p, FrameMeasures& m)
{
    const auto lo = static_cast<std::size_t>(std::ceil(fs / p.max_pitch_hz));
    const auto hi = std::min(static_cast<std::size_t>(std::floor(fs / p.min_pitch_hz)), x.size() / 2);
    if (hi < lo + 2)
        return;
    std::vector<double> r(hi + 2);
    for (std::size_t lag = lo - 1; lag <= hi + 1; ++lag)
        r[lag] = normalized_acf(x, lag);
    double top = 0.0;
    for (std::size_t lag = lo; lag <= hi; ++lag)
        if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1])
            top = std::max(top, r[lag]);
    if (top <= 0.0)
        return;
    for (std::size_t lag = lo; lag <= hi; ++lag) {
        if (r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] >= 0.9 * top) {
            const double a = r[lag - 1];
            const double b = r[lag];
            const double c = r[lag + 1];
            const double denom = a - 2.0 * b + c;
            const double shift = denom < 0.0 ? std::clamp(0.5 * (a - c) / denom, -0.5, 0.5) : 0.0;
            m.frequency = fs / (static_cast<double>(lag) + shift);
            m.periodicity = std::clamp(b, 0.0, 1.0);
            return;
        }
    }
}

void spectral_moments(const std::vector<double>& mag, double fs, std::size_t n, FrameMeasures& m)
{
    double total = 0.0;
    double first = 0.0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        total += mag[k];
        first += mag[k] * static_cast<double>(k) * fs / static_cast<double>(n);
    }
    if (!(total > 0.0))
        return;
    m.centroid = first / total;
    double m2 = 0, m3 = 0, m4 = 0;
    for (std::size_t k = 0; k < mag.size(); ++k) {
        const double d = static_cast<double>(k) * fs / static_cast<double>(n) - m.centroid;
        const double w = mag[k] / total;
        m2 += w * d * d;
        m3 += w * d * d * d;
        m4 += w * d * d * d * d;
    }
    m.spread = std::sqrt(m2);
    if (m.spread > 0.0) {
        m.skewness = m3 / (m.spread * m.spread * m.spread);
        m.kurtosis = m4 / (m2 * m2);
    }
}

} // namespace

Descriptor analyze_unit(std::span<const float> mono, double fs, const Span& span, const AnalysisParams& p)
{
    if (span.start + span.length > mono.size() || span.length == 0)
        fail(ErrorKind::range, "unit span lies outside the buffer");
    const std::size_t frame = samples_for(p.frame_ms, fs);
    const std::size_t hop = samples_for(p.hop_ms, fs);
    if (frame < 4 || hop == 0)
        fail(ErrorKind::parameter, "analysis frame and hop are too short for this sample rate");
    if (span.length < frame + hop)
        fail(ErrorKind::insufficient_data, "unit of " + std::to_string(span.length) + " samples is shorter than two " +
                                               std::to_string(frame) + "-sample analysis frames");

    const auto unit = mono.subspan(span.start, span.length);
    Spectrum spectrum(frame);
    std::vector<FrameMeasures> frames;
    for (std::size_t start = 0; start + frame <= unit.size(); start += hop) {
        const auto x = unit.subspan(start, frame);
        FrameMeasures m;
        m.energy = mean_square(x);
        m.loudness = 10.0 * std::log10(m.energy + 1e-12);
        double lag1 = 0.0;
        for (std::size_t n = 0; n + 1 < x.size(); ++n)
            lag1 += static_cast<double>(x[n]) * x[n + 1];
        m.ac1 = m.energy > 0.0 ? lag1 / (m.energy * static_cast<double>(x.size())) : 0.0;
        pitch(x, fs, p, m);
        spectral_moments(spectrum.magnitudes(x), fs, frame, m);
        frames.push_back(m);
    }

    Descriptor d{};
    d[0] = static_cast<double>(span.length) / fs;
    const auto stats = [&](std::size_t slot, double FrameMeasures::*field) {
        double mean = 0.0;
        for (const auto& f : frames)
            mean += f.*field;
        mean /= static_cast<double>(frames.size());
        double var = 0.0;
        for (const auto& f : frames)
            var += (f.*field - mean) * (f.*field - mean);
        d[slot] = mean;
        d[slot + 1] = std::sqrt(var / static_cast<double>(frames.size()));
    };
    stats(1, &FrameMeasures::frequency);
    stats(3, &FrameMeasures::energy);
    stats(5, &FrameMeasures::periodicity);
    stats(7, &FrameMeasures::ac1);
    stats(9, &FrameMeasures::loudness);
    stats(11, &FrameMeasures::centroid);
    stats(13, &FrameMeasures::spread);
    stats(15, &FrameMeasures::skewness);
    stats(17, &FrameMeasures::kurtosis);
    return d;
}

Descriptor analyze_unit(const ingest::AudioBuffer& buffer, const Span& span, const AnalysisParams& params)
{
    const auto mono = buffer.mono();
    return analyze_unit(mono, buffer.sample_rate, span, params);
}

// ---------------------------------------------------------------------------
// Corpus

Source load_source(const std::string& path, const std::string& id)
{
    const auto bytes = ingest::read_binary_file(path);
    const auto audio = ingest::read_wav(bytes);
    Source s;
    s.id = id.empty() ? std::filesystem::path(path).stem().string() : id;
    s.path = path;
    s.sha256 = detail::sha256_hex({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
    s.sample_rate = audio.sample_rate;
    s.samples = audio.mono();
    return s;
}

Source memory_source(const std::string& id, const ingest::AudioBuffer& buffer)
{
    return {id, "", "", buffer.sample_rate, buffer.mono()};
}

void Corpus::update_normalization()
{
    mean.fill(0.0);
    std.fill(1.0);
    if (units.empty())
        return;
    const auto n = static_cast<double>(units.size());
    for (std::size_t j = 0; j < descriptor_size; ++j) {
        double m = 0.0;
        for (const auto& u : units)
            m += u.descriptor[j];
        m /= n;
        double v = 0.0;
        for (const auto& u : units)
            v += (u.descriptor[j] - m) * (u.descriptor[j] - m);
        mean[j] = m;
        std[j] = std::max(std::sqrt(v / n), 1e-9);
    }
}

Corpus build_corpus(std::vector<Source> sources, const SegmentParams& segmentation, const AnalysisParams& analysis,
                    BuildReport* report)
{
    if (sources.empty())
        fail(ErrorKind::empty_input, "a corpus needs at least one source");
    Corpus c;
    c.segmentation = segmentation;
    c.analysis = analysis;
    c.sources = std::move(sources);
    BuildReport r;
    for (std::size_t s = 0; s < c.sources.size(); ++s) {
        const auto& src = c.sources[s];
        ingest::AudioBuffer view;
        view.sample_rate = src.sample_rate;
        view.channels = {src.samples};
        if (src.samples.empty())
            continue;
        for (const auto& span : segment_onsets(view, segmentation)) {
            try {
                c.units.push_back({s, span, analyze_unit(src.samples, src.sample_rate, span, analysis)});
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::insufficient_data)
                    throw;
                ++r.skipped;
            }
        }
    }
    c.update_normalization();
    r.units = c.units.size();
    for (const auto& u : c.units)
        r.mean_duration_s += u.duration_s() / static_cast<double>(c.units.size());
    if (report)
        *report = r;
    return c;
}

void add_unit(Corpus& corpus, AudioUnit unit)
{
    if (unit.source >= corpus.sources.size())
        fail(ErrorKind::registry, "unit references unknown source " + std::to_string(unit.source));
    corpus.units.push_back(unit);
    corpus.update_normalization();
}

std::vector<Match> retrieve_knn(const Corpus& corpus, std::span<const double> target, std::size_t k,
                                std::span<const double> weights)
{
    if (corpus.units.empty())
        fail(ErrorKind::empty_input, "corpus has no units");
    if (target.size() != descriptor_size)
        fail(ErrorKind::schema, "target needs 19 descriptors, got " + std::to_string(target.size()));
    if (!weights.empty() && weights.size() != descriptor_size)
        fail(ErrorKind::schema, "weights need 19 entries, got " + std::to_string(weights.size()));
    if (k < 1)
        fail(ErrorKind::parameter, "k must be at least 1");
    for (double w : weights)
        if (!(w >= 0.0) || !std::isfinite(w))
            fail(ErrorKind::parameter, "weights must be finite and non-negative");

    std::array<double, descriptor_size> scale{};
    for (std::size_t j = 0; j < descriptor_size; ++j)
        scale[j] = (weights.empty() ? 1.0 : weights[j]) / (corpus.std[j] * corpus.std[j]);

    std::vector<Match> all(corpus.units.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto& d = corpus.units[i].descriptor;
        double s = 0.0;
        for (std::size_t j = 0; j < descriptor_size; ++j) {
            const double diff = d[j] - target[j];
            s += scale[j] * diff * diff;
        }
        all[i] = {i, std::sqrt(s)};
    }
    k = std::min(k, all.size());
    const auto closer = [](const Match& a, const Match& b) {
        return a.distance != b.distance ? a.distance < b.distance : a.unit < b.unit;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    all.resize(k);
    return all;
}

ingest::AudioBuffer render_unit_sequence(const Corpus& corpus, std::span<const std::size_t> units, double crossfade_ms)
{
    if (!(crossfade_ms >= 0.0))
        fail(ErrorKind::parameter, "crossfade must be non-negative");
    ingest::AudioBuffer out;
    out.channels.assign(1, {});
    if (units.empty())
        return out;
    std::vector<double> mix;
    for (std::size_t n = 0; n < units.size(); ++n) {
        if (units[n] >= corpus.units.size())
            fail(ErrorKind::registry, "unknown unit " + std::to_string(units[n]));
        const auto& unit = corpus.units[units[n]];
        if (unit.source >= corpus.sources.size())
            fail(ErrorKind::registry, "unit " + std::to_string(units[n]) + " references a missing source");
        const auto& src = corpus.sources[unit.source];
        if (unit.span.start + unit.span.length > src.samples.size())
            fail(ErrorKind::registry, "unit " + std::to_string(units[n]) + " lies outside its source");
        if (n == 0)
            out.sample_rate = src.sample_rate;
        else if (src.sample_rate != out.sample_rate)
            fail(ErrorKind::parameter, "units come from sources with different sample rates");

        const auto x = std::span(src.samples).subspan(unit.span.start, unit.span.length);
        const std::size_t fade = n == 0 ? 0
                                        : std::min({samples_for(crossfade_ms, out.sample_rate), x.size(), mix.size()});
        const std::size_t base = mix.size() - fade;
        for (std::size_t i = 0; i < fade; ++i) {
            const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(fade);
            mix[base + i] = mix[base + i] * std::cos(0.5 * std::numbers::pi * u) +
                            x[i] * std::sin(0.5 * std::numbers::pi * u);
        }
        for (std::size_t i = fade; i < x.size(); ++i)
            mix.push_back(x[i]);
    }
    double peak = 0.0;
    for (double v : mix)
        peak = std::max(peak, std::abs(v));
    const double norm = peak > 1.0 ? 1.0 / peak : 1.0;
    out.channels[0].resize(mix.size());
    for (std::size_t i = 0; i < mix.size(); ++i)
        out.channels[0][i] = static_cast<float>(mix[i] * norm);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

nlohmann::json hex_array(std::span<const double> v)
{
    auto a = nlohmann::json::array();
    for (double x : v)
        a.push_back(detail::to_hex(x));
    return a;
}

Descriptor read_descriptor(const nlohmann::json& a, const char* what)
{
    if (!a.is_array() || a.size() != descriptor_size)
        fail(ErrorKind::schema, std::string(what) + " needs 19 values");
    Descriptor d{};
    for (std::size_t j = 0; j < descriptor_size; ++j)
        d[j] = detail::from_hex(a[j].get<std::string>());
    return d;
}

} // namespace

std::string corpus_to_json(const Corpus& corpus)
{
    nlohmann::ordered_json doc;
    doc["format"] = "gesturemap-corpus";
    doc["version"] = corpus_format_version;
    const auto& sp = corpus.segmentation;
    doc["segmentation"] = {{"frame_ms", sp.frame_ms},           {"hop_ms", sp.hop_ms},
                           {"threshold_ratio", sp.threshold_ratio}, {"min_unit_ms", sp.min_unit_ms},
                           {"median_window", sp.median_window}, {"energy_floor", sp.energy_floor}};
    const auto& ap = corpus.analysis;
    doc["analysis"] = {{"frame_ms", ap.frame_ms},
                       {"hop_ms", ap.hop_ms},
                       {"min_pitch_hz", ap.min_pitch_hz},
                       {"max_pitch_hz", ap.max_pitch_hz}};
    auto sources = nlohmann::ordered_json::array();
    for (const auto& s : corpus.sources) {
        if (s.path.empty())
            fail(ErrorKind::parameter, "source '" + s.id + "' has no file and cannot be saved");
        sources.push_back({{"id", s.id},
                           {"path", s.path},
                           {"sha256", s.sha256},
                           {"sample_rate", s.sample_rate},
                           {"frames", s.samples.size()}});
    }
    doc["sources"] = sources;
    doc["descriptor_names"] = descriptor_names();
    auto units = nlohmann::ordered_json::array();
    for (const auto& u : corpus.units)
        units.push_back({{"source", u.source},
                         {"start", u.span.start},
                         {"length", u.span.length},
                         {"descriptor", hex_array(u.descriptor)}});
    doc["units"] = units;
    doc["normalization"] = {{"mean", hex_array(corpus.mean)}, {"std", hex_array(corpus.std)}};
    return doc.dump(2) + "\n";
}

Corpus corpus_from_json(const std::string& text, const std::string& base_dir)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, std::string("corpus json: ") + e.what());
    }
    try {
        if (doc.value("format", "") != "gesturemap-corpus")
            fail(ErrorKind::schema, "not a corpus index");
        const int version = doc.at("version").get<int>();
        if (version != corpus_format_version)
            fail(ErrorKind::version, "unsupported corpus version " + std::to_string(version));
        Corpus c;
        const auto& sp = doc.at("segmentation");
        c.segmentation = {sp.at("frame_ms"),        sp.at("hop_ms"),        sp.at("threshold_ratio"),
                          sp.at("min_unit_ms"),     sp.at("median_window"), sp.at("energy_floor")};
        const auto& ap = doc.at("analysis");
        c.analysis = {ap.at("frame_ms"), ap.at("hop_ms"), ap.at("min_pitch_hz"), ap.at("max_pitch_hz")};
        for (const auto& s : doc.at("sources")) {
            const auto path = s.at("path").get<std::string>();
            const auto resolved = (std::filesystem::path(base_dir) / path).string();
            auto src = load_source(resolved, s.at("id").get<std::string>());
            if (src.sha256 != s.at("sha256").get<std::string>())
                fail(ErrorKind::data, "source '" + path + "' changed since the corpus was built (hash mismatch)");
            src.path = path;
            c.sources.push_back(std::move(src));
        }
        for (const auto& u : doc.at("units")) {
            AudioUnit unit{u.at("source"), {u.at("start"), u.at("length")}, read_descriptor(u.at("descriptor"), "unit")};
            if (unit.source >= c.sources.size())
                fail(ErrorKind::registry, "unit references unknown source " + std::to_string(unit.source));
            if (unit.span.start + unit.span.length > c.sources[unit.source].samples.size())
                fail(ErrorKind::schema, "unit span lies outside its source");
            c.units.push_back(unit);
        }
        c.mean = read_descriptor(doc.at("normalization").at("mean"), "normalization mean");
        c.std = read_descriptor(doc.at("normalization").at("std"), "normalization std");
        return c;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::schema, std::string("corpus json: ") + e.what());
    }
}

} // namespace gesturemap::corpus
