#include "gesturemap/ingest.hpp"

#include "gesturemap/error.hpp"
#include "text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

namespace gesturemap::ingest {

using nlohmann::ordered_json;

std::string_view to_string(StreamKind kind)
{
    switch (kind) {
    case StreamKind::marker: return "marker";
    case StreamKind::imu: return "imu";
    case StreamKind::emg: return "emg";
    }
    return "unknown";
}

std::vector<float> AudioBuffer::mono() const
{
    if (channels.size() == 1)
        return channels.front();
    std::vector<float> out(frames(), 0.0f);
    for (const auto& ch : channels)
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] += ch[i];
    const auto scale = 1.0f / static_cast<float>(channels.size());
    for (auto& v : out)
        v *= scale;
    return out;
}

std::size_t FrameStream::size() const
{
    return std::visit([](const auto& f) { return f.size(); }, frames);
}

double FrameStream::time_at(std::size_t i) const
{
    return std::visit([i](const auto& f) { return f.at(i).t; }, frames);
}

const MarkerFrames& FrameStream::markers() const
{
    if (const auto* f = std::get_if<MarkerFrames>(&frames))
        return *f;
    fail(ErrorKind::schema, "expected a marker stream, got " + std::string(to_string(kind())));
}

const ImuFrames& FrameStream::imu() const
{
    if (const auto* f = std::get_if<ImuFrames>(&frames))
        return *f;
    fail(ErrorKind::schema, "expected an imu stream, got " + std::string(to_string(kind())));
}

const EmgFrames& FrameStream::emg() const
{
    if (const auto* f = std::get_if<EmgFrames>(&frames))
        return *f;
    fail(ErrorKind::schema, "expected an emg stream, got " + std::string(to_string(kind())));
}

FrameStream FrameStream::slice(std::size_t first, std::size_t count) const
{
    if (first + count > size())
        fail(ErrorKind::range, "slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                                   ") exceeds stream of " + std::to_string(size()) + " frames");
    FrameStream out;
    out.rate = rate;
    std::visit(
        [&](const auto& f) {
            using V = std::decay_t<decltype(f)>;
            out.frames = V(f.begin() + static_cast<std::ptrdiff_t>(first),
                           f.begin() + static_cast<std::ptrdiff_t>(first + count));
        },
        frames);
    return out;
}

namespace {

template <class Frames>
double mean_rate(const Frames& frames)
{
    if (frames.size() < 2)
        return 0.0;
    const double span = frames.back().t - frames.front().t;
    return static_cast<double>(frames.size() - 1) / span;
}

template <class Frames>
void check_monotone(const Frames& frames, const char* unit)
{
    for (std::size_t i = 1; i < frames.size(); ++i)
        if (!(frames[i].t > frames[i - 1].t))
            fail(ErrorKind::data, std::string("timestamps not strictly increasing at ") + unit + " " +
                                      std::to_string(i + 1));
}

void check_finite(const Vec3& v, const std::string& where)
{
    for (double c : v)
        if (!std::isfinite(c))
            fail(ErrorKind::data, "non-finite value in " + where);
}

} // namespace

// ---------------------------------------------------------------------------
// MoCap CSV: header `t,<label>_x,<label>_y,<label>_z,...`

FrameStream parse_mocap_csv(std::string_view text, const MassMap& masses)
{
    const auto lines = detail::split_lines(text);
    if (lines.empty())
        fail(ErrorKind::empty_input, "empty mocap csv");

    const auto header = detail::split(lines.front().text, ',');
    if (header.size() % 3 != 1)
        fail(ErrorKind::schema, "mocap csv has " + std::to_string(header.size()) +
                                    " columns; expected 1 + 3 per marker");
    if (detail::trim(header[0]) != "t")
        fail(ErrorKind::schema, "first mocap csv column must be 't'");

    std::vector<std::string> labels;
    for (std::size_t c = 1; c < header.size(); c += 3) {
        const auto name = detail::trim(header[c]);
        if (name.size() < 3 || name.substr(name.size() - 2) != "_x")
            fail(ErrorKind::schema, "column " + std::to_string(c + 1) + " must be <label>_x");
        auto label = std::string(name.substr(0, name.size() - 2));
        if (detail::trim(header[c + 1]) != label + "_y" || detail::trim(header[c + 2]) != label + "_z")
            fail(ErrorKind::schema, "columns " + std::to_string(c + 2) + "-" + std::to_string(c + 3) +
                                        " must be " + label + "_y," + label + "_z");
        if (std::find(labels.begin(), labels.end(), label) != labels.end())
            fail(ErrorKind::schema, "duplicate marker label '" + label + "'");
        labels.push_back(std::move(label));
    }

    MarkerFrames frames;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto& line = lines[r];
        const auto cells = detail::split(line.text, ',');
        if (cells.size() != header.size())
            fail(ErrorKind::schema, "row " + std::to_string(line.number) + " has " + std::to_string(cells.size()) +
                                        " columns; header has " + std::to_string(header.size()));
        std::vector<double> values(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c) {
            const auto v = detail::parse_double(cells[c]);
            if (!v || !std::isfinite(*v))
                fail(ErrorKind::parse, "row " + std::to_string(line.number) + ", column " + std::to_string(c + 1) +
                                           ": not a number: '" + std::string(detail::trim(cells[c])) + "'");
            values[c] = *v;
        }
        MarkerFrame frame;
        frame.t = values[0];
        for (std::size_t m = 0; m < labels.size(); ++m) {
            Marker marker;
            marker.label = labels[m];
            marker.position = {values[1 + 3 * m], values[2 + 3 * m], values[3 + 3 * m]};
            if (auto it = masses.find(labels[m]); it != masses.end())
                marker.mass = it->second;
            frame.markers.push_back(std::move(marker));
        }
        frames.push_back(std::move(frame));
    }
    check_monotone(frames, "row");

    FrameStream stream;
    stream.rate = mean_rate(frames);
    stream.frames = std::move(frames);
    return stream;
}

std::string write_mocap_csv(const FrameStream& stream)
{
    const auto& frames = stream.markers();
    std::string out = "t";
    if (!frames.empty())
        for (const auto& m : frames.front().markers)
            out += "," + m.label + "_x," + m.label + "_y," + m.label + "_z";
    out += '\n';
    for (const auto& f : frames) {
        out += detail::format_double(f.t);
        for (const auto& m : f.markers)
            for (double c : m.position) {
                out += ',';
                out += detail::format_double(c);
            }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSONL frames

namespace {

Vec3 read_vec3(const ordered_json& j, const char* key)
{
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        fail(ErrorKind::schema, std::string("'") + key + "' must be an array of 3 numbers");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v[0], v[1], v[2]}); }

} // namespace

FrameStream parse_frames_jsonl(std::string_view text)
{
    const auto lines = detail::split_lines(text);
    if (lines.empty())
        fail(ErrorKind::empty_input, "empty jsonl stream");

    std::string kind;
    MarkerFrames markers;
    ImuFrames imu;
    EmgFrames emg;
    std::size_t emg_channels = 0;

    for (const auto& line : lines) {
        const auto where = "line " + std::to_string(line.number);
        ordered_json j;
        try {
            j = ordered_json::parse(line.text);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse, where + ": " + e.what());
        }
        try {
            if (!j.is_object())
                fail(ErrorKind::parse, where + ": expected a JSON object");
            const auto line_kind = j.at("kind").get<std::string>();
            if (kind.empty())
                kind = line_kind;
            else if (line_kind != kind)
                fail(ErrorKind::schema, where + ": mixed stream kinds ('" + kind + "' then '" + line_kind + "')");
            const double t = j.at("t").get<double>();
            if (!std::isfinite(t))
                fail(ErrorKind::data, where + ": non-finite t");

            if (kind == "imu") {
                ImuFrame f;
                f.t = t;
                f.accel = read_vec3(j, "accel");
                f.gyro = read_vec3(j, "gyro");
                f.mag = read_vec3(j, "mag");
                const auto& q = j.at("quat");
                if (!q.is_array() || q.size() != 4)
                    fail(ErrorKind::schema, where + ": 'quat' must be [w,x,y,z]");
                f.quat = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
                check_finite(f.accel, where);
                check_finite(f.gyro, where);
                check_finite(f.mag, where);
                const double n = f.quat.norm();
                if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6)
                    fail(ErrorKind::data, where + ": quaternion norm " + detail::format_double(n) + " is not 1");
                imu.push_back(f);
            } else if (kind == "emg") {
                EmgFrame f;
                f.t = t;
                f.channels = j.at("channels").get<std::vector<double>>();
                if (emg.empty())
                    emg_channels = f.channels.size();
                else if (f.channels.size() != emg_channels)
                    fail(ErrorKind::schema, where + ": " + std::to_string(f.channels.size()) +
                                                " channels; stream has " + std::to_string(emg_channels));
                for (double v : f.channels)
                    if (!std::isfinite(v))
                        fail(ErrorKind::data, where + ": non-finite emg sample");
                emg.push_back(std::move(f));
            } else if (kind == "marker") {
                MarkerFrame f;
                f.t = t;
                for (const auto& m : j.at("markers")) {
                    Marker marker;
                    marker.label = m.at("label").get<std::string>();
                    marker.position = read_vec3(m, "p");
                    marker.mass = m.value("mass", 1.0);
                    check_finite(marker.position, where);
                    if (!(marker.mass >= 0.0))
                        fail(ErrorKind::data, where + ": negative marker mass");
                    for (const auto& other : f.markers)
                        if (other.label == marker.label)
                            fail(ErrorKind::schema, where + ": duplicate marker label '" + marker.label + "'");
                    f.markers.push_back(std::move(marker));
                }
                markers.push_back(std::move(f));
            } else {
                fail(ErrorKind::schema, where + ": unknown kind '" + kind + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::schema, where + ": " + e.what());
        }
    }

    FrameStream stream;
    if (kind == "imu") {
        check_monotone(imu, "line");
        stream.rate = mean_rate(imu);
        stream.frames = std::move(imu);
    } else if (kind == "emg") {
        check_monotone(emg, "line");
        stream.rate = mean_rate(emg);
        stream.frames = std::move(emg);
    } else {
        check_monotone(markers, "line");
        stream.rate = mean_rate(markers);
        stream.frames = std::move(markers);
    }
    return stream;
}

std::string write_frames_jsonl(const FrameStream& stream)
{
    std::string out;
    const auto emit = [&out](const ordered_json& j) {
        out += j.dump();
        out += '\n';
    };
    std::visit(
        [&](const auto& frames) {
            using V = std::decay_t<decltype(frames)>;
            for (const auto& f : frames) {
                ordered_json j;
                j["t"] = f.t;
                if constexpr (std::is_same_v<V, ImuFrames>) {
                    j["kind"] = "imu";
                    j["accel"] = vec3_json(f.accel);
                    j["gyro"] = vec3_json(f.gyro);
                    j["mag"] = vec3_json(f.mag);
                    j["quat"] = ordered_json::array({f.quat.w, f.quat.x, f.quat.y, f.quat.z});
                } else if constexpr (std::is_same_v<V, EmgFrames>) {
                    j["kind"] = "emg";
                    j["channels"] = f.channels;
                } else {
                    j["kind"] = "marker";
                    j["markers"] = ordered_json::array();
                    for (const auto& m : f.markers)
                        j["markers"].push_back({{"label", m.label}, {"p", vec3_json(m.position)}, {"mass", m.mass}});
                }
                emit(j);
            }
        },
        stream.frames);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

FrameStream gen_synthetic_gesture(const GestureSpec& spec)
{
    if (!(spec.rate_hz > 0.0) || !(spec.duration_s > 0.0))
        fail(ErrorKind::parameter, "rate_hz and duration_s must be positive");
    if (spec.shape != GestureShape::still && !(spec.rate_hz > 2.0 * spec.freq_hz))
        fail(ErrorKind::parameter, "rate_hz must exceed 2 * freq_hz");

    const auto n = static_cast<std::size_t>(std::floor(spec.duration_s * spec.rate_hz + 1e-9)) + 1;
    const double w = 2.0 * std::numbers::pi * spec.freq_hz;
    MarkerFrames frames(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.rate_hz;
        Vec3 p{};
        switch (spec.shape) {
        case GestureShape::circle: p = {spec.radius_m * std::cos(w * t), spec.radius_m * std::sin(w * t), 0.0}; break;
        case GestureShape::sine: p = {spec.radius_m * std::sin(w * t), 0.0, 0.0}; break;
        case GestureShape::still: break;
        }
        frames[i].t = t;
        frames[i].markers.push_back({"m0", p, 1.0});
    }
    FrameStream stream;
    stream.rate = spec.rate_hz;
    stream.frames = std::move(frames);
    return stream;
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

double lerp(double a, double b, double u) { return a + (b - a) * u; }
Vec3 lerp(const Vec3& a, const Vec3& b, double u) { return {lerp(a[0], b[0], u), lerp(a[1], b[1], u), lerp(a[2], b[2], u)}; }

Quat nlerp(const Quat& a, Quat b, double u)
{
    if (a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z < 0.0)
        b = {-b.w, -b.x, -b.y, -b.z};
    return Quat{lerp(a.w, b.w, u), lerp(a.x, b.x, u), lerp(a.y, b.y, u), lerp(a.z, b.z, u)}.normalized();
}

MarkerFrame interpolate(const MarkerFrame& a, const MarkerFrame& b, double u)
{
    if (a.markers.size() != b.markers.size())
        fail(ErrorKind::schema, "marker count changes between frames");
    MarkerFrame out;
    out.markers.reserve(a.markers.size());
    for (std::size_t m = 0; m < a.markers.size(); ++m) {
        if (a.markers[m].label != b.markers[m].label)
            fail(ErrorKind::schema, "marker order changes between frames");
        out.markers.push_back({a.markers[m].label, lerp(a.markers[m].position, b.markers[m].position, u),
                               a.markers[m].mass});
    }
    return out;
}

ImuFrame interpolate(const ImuFrame& a, const ImuFrame& b, double u)
{
    ImuFrame out;
    out.accel = lerp(a.accel, b.accel, u);
    out.gyro = lerp(a.gyro, b.gyro, u);
    out.mag = lerp(a.mag, b.mag, u);
    out.quat = nlerp(a.quat, b.quat, u);
    return out;
}

EmgFrame interpolate(const EmgFrame& a, const EmgFrame& b, double u)
{
    EmgFrame out;
    out.channels.resize(a.channels.size());
    for (std::size_t c = 0; c < a.channels.size(); ++c)
        out.channels[c] = lerp(a.channels[c], b.channels[c], u);
    return out;
}

} // namespace

FrameStream resample_stream(const FrameStream& stream, double target_rate_hz)
{
    if (!(target_rate_hz > 0.0))
        fail(ErrorKind::parameter, "target rate must be positive");
    if (stream.empty())
        fail(ErrorKind::empty_input, "cannot resample an empty stream");

    FrameStream out;
    std::visit(
        [&](const auto& frames) {
            using V = std::decay_t<decltype(frames)>;
            const double t0 = frames.front().t;
            const double t1 = frames.back().t;
            if (frames.size() == 1) {
                out.rate = target_rate_hz;
                out.frames = frames;
                return;
            }
            // The grid spans [t0, t1] exactly; the rate is the uniform rate
            // closest to the target that lands on both endpoints.
            const auto intervals =
                std::max<std::size_t>(1, static_cast<std::size_t>(std::llround((t1 - t0) * target_rate_hz)));
            const double step = (t1 - t0) / static_cast<double>(intervals);
            V result;
            result.reserve(intervals + 1);
            std::size_t seg = 0;
            for (std::size_t i = 0; i <= intervals; ++i) {
                const double t = (i == intervals) ? t1 : t0 + static_cast<double>(i) * step;
                while (seg + 2 < frames.size() && frames[seg + 1].t <= t)
                    ++seg;
                const auto& a = frames[seg];
                const auto& b = frames[seg + 1];
                const double u = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
                auto f = (u == 0.0) ? a : (u == 1.0) ? b : interpolate(a, b, u);
                f.t = t;
                result.push_back(std::move(f));
            }
            out.rate = static_cast<double>(intervals) / (t1 - t0);
            out.frames = std::move(result);
        },
        stream.frames);
    return out;
}

// ---------------------------------------------------------------------------
// Files

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_binary_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::io, "cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text_file(const std::string& path, std::string_view text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorKind::io, "cannot write '" + path + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void write_binary_file(const std::string& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        fail(ErrorKind::io, "cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace gesturemap::ingest
