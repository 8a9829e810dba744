#include "gesturemap/error.hpp"
#include "gesturemap/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace gesturemap::ingest {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at)
{
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at)
{
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag)
{
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

} // namespace

AudioBuffer read_wav(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE"))
        fail(ErrorKind::unsupported_format, "not a RIFF/WAVE file");

    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
    bool have_fmt = false;
    std::span<const std::uint8_t> data;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const auto size = le32(bytes, pos + 4);
        const auto body = pos + 8;
        if (body + size > bytes.size())
            fail(ErrorKind::parse, "truncated WAV chunk");
        if (tag_is(bytes, pos, "fmt ")) {
            if (size < 16)
                fail(ErrorKind::parse, "short fmt chunk");
            format = le16(bytes, body);
            channels = le16(bytes, body + 2);
            sample_rate = le32(bytes, body + 4);
            bits = le16(bytes, body + 14);
            if (format == kFormatExtensible) {
                if (size < 40)
                    fail(ErrorKind::parse, "short WAVE_FORMAT_EXTENSIBLE chunk");
                format = le16(bytes, body + 24);
            }
            have_fmt = true;
        } else if (tag_is(bytes, pos, "data")) {
            data = bytes.subspan(body, size);
        }
        pos = body + size + (size & 1u);
    }

    if (!have_fmt || data.data() == nullptr)
        fail(ErrorKind::parse, "WAV file lacks fmt or data chunk");
    if (format != kFormatPcm)
        fail(ErrorKind::unsupported_format, "unsupported WAV codec " + std::to_string(format) + " (PCM only)");
    if (bits != 16 && bits != 24)
        fail(ErrorKind::unsupported_format, "unsupported bit depth " + std::to_string(bits));
    if (channels != 1 && channels != 2)
        fail(ErrorKind::unsupported_format, "unsupported channel count " + std::to_string(channels));
    if (sample_rate == 0)
        fail(ErrorKind::unsupported_format, "zero sample rate");

    const std::size_t width = bits / 8;
    const std::size_t frames = data.size() / (width * channels);
    AudioBuffer buffer;
    buffer.sample_rate = sample_rate;
    buffer.channels.assign(channels, std::vector<float>(frames));
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t at = (i * channels + c) * width;
            float v = 0.0f;
            if (bits == 16) {
                v = static_cast<float>(static_cast<std::int16_t>(le16(data, at))) / 32768.0f;
            } else {
                std::int32_t s = data[at] | (data[at + 1] << 8) | (data[at + 2] << 16);
                if (s & 0x800000)
                    s -= 0x1000000;
                v = static_cast<float>(s) / 8388608.0f;
            }
            buffer.channels[c][i] = v;
        }
    }
    return buffer;
}

std::vector<std::uint8_t> write_wav(const AudioBuffer& buffer, int bits_per_sample)
{
    if (bits_per_sample != 16 && bits_per_sample != 24)
        fail(ErrorKind::unsupported_format, "can only write 16- or 24-bit PCM");
    if (buffer.channels.empty() || buffer.channels.size() > 2)
        fail(ErrorKind::unsupported_format, "can only write mono or stereo");
    const auto channels = static_cast<std::uint16_t>(buffer.channels.size());
    const auto frames = buffer.frames();
    const std::uint32_t width = static_cast<std::uint32_t>(bits_per_sample) / 8;
    const auto data_size = static_cast<std::uint32_t>(frames * channels * width);
    const auto rate = static_cast<std::uint32_t>(std::lround(buffer.sample_rate));

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_size);
    put_tag(out, "RIFF");
    put32(out, 36 + data_size);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put32(out, 16);
    put16(out, kFormatPcm);
    put16(out, channels);
    put32(out, rate);
    put32(out, rate * channels * width);
    put16(out, static_cast<std::uint16_t>(channels * width));
    put16(out, static_cast<std::uint16_t>(bits_per_sample));
    put_tag(out, "data");
    put32(out, data_size);

    const double full = bits_per_sample == 16 ? 32768.0 : 8388608.0;
    for (std::size_t i = 0; i < frames; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double scaled = std::clamp(std::round(buffer.channels[c][i] * full), -full, full - 1.0);
            const auto s = static_cast<std::int32_t>(scaled);
            for (std::uint32_t b = 0; b < width; ++b)
                out.push_back(static_cast<std::uint8_t>(s >> (8 * b)));
        }
    }
    return out;
}

} // namespace gesturemap::ingest
