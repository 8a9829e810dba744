#pragma once

#include "gesturemap/geometry.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gesturemap::ingest {

struct Marker
{
    std::string label;
    Vec3 position{};
    double mass = 1.0;

    bool operator==(const Marker&) const = default;
};

struct MarkerFrame
{
    double t = 0.0;
    std::vector<Marker> markers;

    bool operator==(const MarkerFrame&) const = default;
};

struct ImuFrame
{
    double t = 0.0;
    Vec3 accel{};
    Vec3 gyro{};
    Vec3 mag{};
    Quat quat{};

    bool operator==(const ImuFrame&) const = default;
};

struct EmgFrame
{
    double t = 0.0;
    std::vector<double> channels;

    bool operator==(const EmgFrame&) const = default;
};

struct AudioBuffer
{
    double sample_rate = 44100.0;
    std::vector<std::vector<float>> channels;

    std::size_t frames() const { return channels.empty() ? 0 : channels.front().size(); }
    /// Average of all channels.
    std::vector<float> mono() const;
};

enum class StreamKind { marker, imu, emg };

std::string_view to_string(StreamKind kind);

using MarkerFrames = std::vector<MarkerFrame>;
using ImuFrames = std::vector<ImuFrame>;
using EmgFrames = std::vector<EmgFrame>;

/// Time-ordered frames of one sensor kind. `rate` is the mean frame rate
/// for parsed streams and exact after resampling.
struct FrameStream
{
    double rate = 0.0;
    std::variant<MarkerFrames, ImuFrames, EmgFrames> frames;

    StreamKind kind() const { return static_cast<StreamKind>(frames.index()); }
    std::size_t size() const;
    bool empty() const { return size() == 0; }
    double time_at(std::size_t i) const;

    // Typed access; throws a schema error on kind mismatch.
    const MarkerFrames& markers() const;
    const ImuFrames& imu() const;
    const EmgFrames& emg() const;

    /// Contiguous sub-range [first, first + count) with the same rate.
    FrameStream slice(std::size_t first, std::size_t count) const;

    bool operator==(const FrameStream&) const = default;
};

using MassMap = std::map<std::string, double, std::less<>>;

FrameStream parse_mocap_csv(std::string_view text, const MassMap& masses = {});
std::string write_mocap_csv(const FrameStream& stream);

FrameStream parse_frames_jsonl(std::string_view text);
std::string write_frames_jsonl(const FrameStream& stream);

AudioBuffer read_wav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_wav(const AudioBuffer& buffer, int bits_per_sample = 16);

enum class GestureShape { circle, sine, still };

struct GestureSpec
{
    GestureShape shape = GestureShape::circle;
    double rate_hz = 100.0;
    double duration_s = 1.0;
    double freq_hz = 1.0;
    double radius_m = 1.0;
};

/// Single marker "m0". circle: r(cos 2πft, sin 2πft, 0); sine: (r sin 2πft, 0, 0).
FrameStream gen_synthetic_gesture(const GestureSpec& spec);

FrameStream resample_stream(const FrameStream& stream, double target_rate_hz);

// File helpers shared by the CLI and server.
std::string read_text_file(const std::string& path);
std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);
void write_binary_file(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace gesturemap::ingest
