#include "gesturemap/granular.hpp"

#include "gesturemap/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gesturemap::granular {

namespace {

constexpr double min_cutoff = 20.0;
constexpr double max_cutoff = 20000.0;
constexpr double min_q = 0.1;
constexpr double max_q = 20.0;
constexpr double max_semitones = 24.0;
constexpr double min_duration = 1e-3; // clamp target for predicted durations
constexpr int preset_format_version = 1;

double lerp(double a, double b, double u) { return a + (b - a) * u; }

} // namespace

const std::array<std::string, SynthPreset::size>& SynthPreset::field_names()
{
    static const std::array<std::string, size> names{"start_s",     "duration_s", "speed",
                                                     "pitch_shift", "cutoff_hz",  "resonance"};
    return names;
}

std::vector<double> SynthPreset::to_vector() const
{
    return {start_s, duration_s, speed, pitch_shift, cutoff_hz, resonance};
}

SynthPreset SynthPreset::from_vector(std::span<const double> v)
{
    if (v.size() != size)
        fail(ErrorKind::schema, "a synth preset has 6 parameters, got " + std::to_string(v.size()));
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
}

SynthPreset validate_preset(const SynthPreset& p)
{
    std::vector<std::string> bad;
    const auto check = [&](bool ok, const char* what) {
        if (!ok)
            bad.emplace_back(what);
    };
    check(p.start_s >= 0.0 && std::isfinite(p.start_s), "start_s must be >= 0");
    check(p.duration_s > 0.0 && std::isfinite(p.duration_s), "duration_s must be > 0");
    check(p.speed > 0.0 && std::isfinite(p.speed), "speed must be > 0");
    check(std::abs(p.pitch_shift) <= max_semitones, "pitch_shift must be in [-24, 24]");
    check(p.cutoff_hz >= min_cutoff && p.cutoff_hz <= max_cutoff, "cutoff_hz must be in [20, 20000]");
    check(p.resonance >= min_q && p.resonance <= max_q, "resonance must be in [0.1, 20]");
    if (!bad.empty()) {
        std::string msg = "invalid preset:";
        for (const auto& b : bad)
            msg += " " + b + ";";
        msg.pop_back();
        fail(ErrorKind::range, msg);
    }
    return p;
}

SynthPreset validate_preset(const SynthPreset& p, double source_length_s)
{
    validate_preset(p);
    if (p.start_s + p.duration_s > source_length_s * (1.0 + 1e-12))
        fail(ErrorKind::range, "selection [start_s, start_s + duration_s) ends at " +
                                   std::to_string(p.start_s + p.duration_s) + " s, beyond the " +
                                   std::to_string(source_length_s) + " s source");
    return p;
}

SynthPreset clamp_preset(const SynthPreset& p)
{
    const auto finite_or = [](double v, double fallback) { return std::isfinite(v) ? v : fallback; };
    SynthPreset c;
    c.start_s = std::max(0.0, finite_or(p.start_s, 0.0));
    c.duration_s = std::max(min_duration, finite_or(p.duration_s, min_duration));
    c.speed = std::max(1e-3, finite_or(p.speed, 1.0));
    c.pitch_shift = std::clamp(finite_or(p.pitch_shift, 0.0), -max_semitones, max_semitones);
    c.cutoff_hz = std::clamp(finite_or(p.cutoff_hz, max_cutoff), min_cutoff, max_cutoff);
    c.resonance = std::clamp(finite_or(p.resonance, 0.707), min_q, max_q);
    return c;
}

// ---------------------------------------------------------------------------
// Envelopes

void validate_envelope(const AnchorEnvelope& env)
{
    const auto& a = env.anchors;
    if (a.front().time != 0.0 || a.back().time != 1.0)
        fail(ErrorKind::range, "envelope anchors must start at time 0 and end at time 1");
    for (std::size_t i = 1; i < a.size(); ++i)
        if (!(a[i].time > a[i - 1].time))
            fail(ErrorKind::range, "envelope anchor times must be strictly increasing");
    for (std::size_t i = 0; i < a.size(); ++i) {
        try {
            validate_preset(a[i].preset);
        } catch (const Error& e) {
            fail(ErrorKind::range, "anchor " + std::to_string(i + 1) + ": " + e.what());
        }
    }
}

SynthPreset envelope_eval(const AnchorEnvelope& env, double t)
{
    if (!(t >= 0.0 && t <= 1.0))
        fail(ErrorKind::range, "envelope time must be in [0, 1], got " + std::to_string(t));
    const auto& a = env.anchors;
    std::size_t seg = 0;
    while (seg + 2 < a.size() && t > a[seg + 1].time)
        ++seg;
    const auto& lo = a[seg];
    const auto& hi = a[seg + 1];
    if (t == lo.time)
        return lo.preset;
    if (t == hi.time)
        return hi.preset;
    const double u = (t - lo.time) / (hi.time - lo.time);
    const auto& p = lo.preset;
    const auto& q = hi.preset;
    SynthPreset out;
    out.start_s = lerp(p.start_s, q.start_s, u);
    out.duration_s = lerp(p.duration_s, q.duration_s, u);
    out.speed = lerp(p.speed, q.speed, u);
    out.pitch_shift = lerp(p.pitch_shift, q.pitch_shift, u);
    out.cutoff_hz = p.cutoff_hz == q.cutoff_hz ? p.cutoff_hz
                                               : std::exp(lerp(std::log(p.cutoff_hz), std::log(q.cutoff_hz), u));
    out.resonance = lerp(p.resonance, q.resonance, u);
    return out;
}

ParamTimeline envelope_to_timeline(const AnchorEnvelope& env, double duration_s, double rate)
{
    if (!(duration_s > 0.0) || !(rate > 0.0) || !std::isfinite(duration_s * rate))
        fail(ErrorKind::parameter, "timeline duration and rate must be positive");
    validate_envelope(env);
    const auto n = static_cast<std::size_t>(std::ceil(duration_s * rate - 1e-9));
    ParamTimeline tl;
    tl.rate = rate;
    tl.presets.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        tl.presets.push_back(envelope_eval(env, t));
    }
    return tl;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

/// Topology-preserving-transform state-variable filter, low-pass output.
class SvfLowpass
{
public:
    void set(double cutoff_hz, double q, double sample_rate)
    {
        const double fc = std::min(cutoff_hz, 0.49 * sample_rate);
        const double g = std::tan(std::numbers::pi * fc / sample_rate);
        const double k = 1.0 / q;
        a1_ = 1.0 / (1.0 + g * (g + k));
        a2_ = g * a1_;
        a3_ = g * a2_;
    }

    double process(double v0)
    {
        const double v3 = v0 - ic2_;
        const double v1 = a1_ * ic1_ + a2_ * v3;
        const double v2 = ic2_ + a2_ * ic1_ + a3_ * v3;
        ic1_ = 2.0 * v1 - ic1_;
        ic2_ = 2.0 * v2 - ic2_;
        return v2;
    }

private:
    double a1_ = 0, a2_ = 0, a3_ = 0;
    double ic1_ = 0, ic2_ = 0;
};

/// Linear interpolation inside [lo, lo + len) with wrap-around.
double read_looped(const std::vector<float>& x, double lo, double len, double pos)
{
    double rel = std::fmod(pos - lo, len);
    if (rel < 0.0)
        rel += len;
    const double p = lo + rel;
    const auto i = static_cast<std::size_t>(p);
    const double frac = p - static_cast<double>(i);
    const auto last = static_cast<std::size_t>(std::ceil(lo + len)) - 1;
    const std::size_t j = i + 1 > last ? static_cast<std::size_t>(lo) : i + 1;
    const double a = x[std::min(i, x.size() - 1)];
    const double b = x[std::min(j, x.size() - 1)];
    return a + (b - a) * frac;
}

} // namespace

ingest::AudioBuffer render_offline(const ingest::AudioBuffer& source, const ParamTimeline& timeline,
                                   const GrainSettings& grain)
{
    if (source.frames() == 0)
        fail(ErrorKind::empty_input, "source audio is empty");
    if (timeline.presets.empty())
        fail(ErrorKind::empty_input, "timeline is empty");
    if (!(timeline.rate > 0.0))
        fail(ErrorKind::parameter, "timeline rate must be positive");
    if (!(grain.size_ms >= 10.0 && grain.size_ms <= 500.0))
        fail(ErrorKind::parameter, "grain size must be in [10, 500] ms");
    if (grain.overlap < 1 || grain.overlap > 8)
        fail(ErrorKind::parameter, "grain overlap must be in [1, 8]");

    const double fs = source.sample_rate;
    const auto mono = source.mono();
    const double source_len_s = static_cast<double>(mono.size()) / fs;
    for (std::size_t i = 0; i < timeline.presets.size(); ++i) {
        try {
            validate_preset(timeline.presets[i], source_len_s);
        } catch (const Error& e) {
            fail(ErrorKind::range, "timeline step " + std::to_string(i) + ": " + e.what());
        }
    }

    const auto n_out = static_cast<std::size_t>(std::llround(timeline.duration_s() * fs));
    const auto step_at = [&](std::size_t sample) {
        const auto k = static_cast<std::size_t>(static_cast<double>(sample) / fs * timeline.rate);
        return std::min(k, timeline.presets.size() - 1);
    };

    const auto grain_len = std::max<std::size_t>(2, static_cast<std::size_t>(std::llround(grain.size_ms * 1e-3 * fs)));
    const std::size_t hop = std::max<std::size_t>(1, grain_len / static_cast<std::size_t>(grain.overlap));
    std::vector<double> window(grain_len);
    for (std::size_t i = 0; i < grain_len; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(grain_len));
    // Periodic Hann at this hop sums to overlap / 2.
    const double gain = 2.0 * static_cast<double>(hop) / static_cast<double>(grain_len);

    std::vector<double> mix(n_out, 0.0);
    double head = 0.0; // read position relative to the selection start, in seconds
    for (std::size_t onset = 0; onset < n_out; onset += hop) {
        const auto& p = timeline.presets[step_at(onset)];
        head = std::fmod(head, p.duration_s);
        const double lo = p.start_s * fs;
        const double len = std::max(1.0, p.duration_s * fs);
        const double ratio = std::exp2(p.pitch_shift / 12.0);
        const double begin = lo + head * fs;
        for (std::size_t i = 0; i < grain_len && onset + i < n_out; ++i)
            mix[onset + i] += window[i] * read_looped(mono, lo, len, begin + static_cast<double>(i) * ratio);
        head += static_cast<double>(hop) / fs * p.speed;
    }

    SvfLowpass filter;
    std::size_t current_step = timeline.presets.size();
    double peak = 0.0;
    for (std::size_t s = 0; s < n_out; ++s) {
        const auto k = step_at(s);
        if (k != current_step) {
            filter.set(timeline.presets[k].cutoff_hz, timeline.presets[k].resonance, fs);
            current_step = k;
        }
        mix[s] = filter.process(mix[s] * gain);
        peak = std::max(peak, std::abs(mix[s]));
    }
    const double norm = peak > 1.0 ? 1.0 / peak : 1.0;

    ingest::AudioBuffer out;
    out.sample_rate = fs;
    out.channels.assign(1, std::vector<float>(n_out));
    for (std::size_t s = 0; s < n_out; ++s)
        out.channels[0][s] = std::clamp(static_cast<float>(mix[s] * norm), -1.0f, 1.0f);
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::ordered_json preset_json(const SynthPreset& p)
{
    nlohmann::ordered_json j;
    const auto v = p.to_vector();
    for (std::size_t i = 0; i < SynthPreset::size; ++i)
        j[SynthPreset::field_names()[i]] = v[i];
    return j;
}

SynthPreset read_preset(const nlohmann::json& j)
{
    if (!j.is_object())
        fail(ErrorKind::schema, "a preset must be a JSON object");
    std::vector<double> v;
    for (const auto& name : SynthPreset::field_names()) {
        if (!j.contains(name) || !j.at(name).is_number())
            fail(ErrorKind::schema, "preset field '" + name + "' is missing or not a number");
        v.push_back(j.at(name).get<double>());
    }
    for (const auto& [key, value] : j.items()) {
        const auto& names = SynthPreset::field_names();
        if (std::find(names.begin(), names.end(), key) == names.end())
            fail(ErrorKind::schema, "unknown preset field '" + key + "'");
    }
    return validate_preset(SynthPreset::from_vector(v));
}

nlohmann::json parse(const std::string& text, const char* what)
{
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::parse, std::string(what) + ": " + e.what());
    }
}

void check_version(const nlohmann::json& doc, const char* what)
{
    if (!doc.is_object() || !doc.contains("version") || !doc.at("version").is_number_integer())
        fail(ErrorKind::schema, std::string(what) + " needs an integer 'version'");
    const int v = doc.at("version").get<int>();
    if (v != preset_format_version)
        fail(ErrorKind::version, std::string("unsupported ") + what + " version " + std::to_string(v));
}

} // namespace

std::string preset_to_json(const SynthPreset& preset)
{
    return preset_json(preset).dump(2) + "\n";
}

SynthPreset preset_from_json(const std::string& text)
{
    return read_preset(parse(text, "preset json"));
}

std::string envelope_to_json(const AnchorEnvelope& env)
{
    nlohmann::ordered_json doc;
    doc["version"] = preset_format_version;
    auto anchors = nlohmann::ordered_json::array();
    for (const auto& a : env.anchors)
        anchors.push_back({{"time", a.time}, {"preset", preset_json(a.preset)}});
    doc["anchors"] = anchors;
    return doc.dump(2) + "\n";
}

AnchorEnvelope envelope_from_json(const std::string& text)
{
    const auto doc = parse(text, "envelope json");
    check_version(doc, "envelope");
    const auto& anchors = doc.value("anchors", nlohmann::json());
    if (!anchors.is_array() || anchors.size() != 4)
        fail(ErrorKind::schema, "an envelope needs exactly 4 anchors");
    AnchorEnvelope env;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& a = anchors[i];
        if (!a.is_object() || !a.contains("time") || !a.at("time").is_number() || !a.contains("preset"))
            fail(ErrorKind::schema, "anchor " + std::to_string(i + 1) + " needs 'time' and 'preset'");
        env.anchors[i] = {a.at("time").get<double>(), read_preset(a.at("preset"))};
    }
    validate_envelope(env);
    return env;
}

std::string timeline_to_json(const ParamTimeline& timeline)
{
    nlohmann::ordered_json doc;
    doc["version"] = preset_format_version;
    doc["rate"] = timeline.rate;
    auto presets = nlohmann::ordered_json::array();
    for (const auto& p : timeline.presets)
        presets.push_back(preset_json(p));
    doc["presets"] = presets;
    return doc.dump(2) + "\n";
}

ParamTimeline timeline_from_json(const std::string& text)
{
    const auto doc = parse(text, "timeline json");
    check_version(doc, "timeline");
    if (!doc.contains("rate") || !doc.at("rate").is_number() || !(doc.at("rate").get<double>() > 0.0))
        fail(ErrorKind::schema, "timeline needs a positive 'rate'");
    const auto& presets = doc.value("presets", nlohmann::json());
    if (!presets.is_array())
        fail(ErrorKind::schema, "timeline needs a 'presets' array");
    ParamTimeline tl;
    tl.rate = doc.at("rate").get<double>();
    for (const auto& p : presets)
        tl.presets.push_back(read_preset(p));
    return tl;
}

} // namespace gesturemap::granular
