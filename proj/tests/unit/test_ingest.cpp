#include "gesturemap/error.hpp"
#include "gesturemap/ingest.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>

using namespace gesturemap;
using namespace gesturemap::ingest;
using testutil::kind_of;
using testutil::message_of;

namespace {

std::vector<std::uint8_t> pcm16_wav(const std::vector<std::int16_t>& samples, std::uint32_t rate, std::uint16_t format = 1,
                                    std::uint16_t bits = 16)
{
    AudioBuffer b;
    b.sample_rate = rate;
    b.channels.assign(1, {});
    for (auto s : samples)
        b.channels[0].push_back(static_cast<float>(s) / 32768.0f);
    auto bytes = write_wav(b);
    bytes[20] = static_cast<std::uint8_t>(format);
    bytes[21] = static_cast<std::uint8_t>(format >> 8);
    bytes[34] = static_cast<std::uint8_t>(bits);
    return bytes;
}

} // namespace

TEST_CASE("mocap csv parses frames and markers")
{
    const auto s = parse_mocap_csv("t,a_x,a_y,a_z,b_x,b_y,b_z\n0,1,2,3,4,5,6\n0.01,1,2,3,4,5,7\n");
    REQUIRE(s.kind() == StreamKind::marker);
    REQUIRE(s.size() == 2);
    CHECK(s.markers()[0].markers.size() == 2);
    CHECK(s.markers()[1].markers[1].position[2] == 7.0);
    CHECK(s.markers()[0].markers[0].mass == 1.0);
    CHECK(s.rate == doctest::Approx(100.0));

    const auto one = parse_mocap_csv("t,m_x,m_y,m_z\n0.0,1.0,2.0,3.0\n");
    CHECK(one.markers()[0].t == 0.0);
    CHECK(one.markers()[0].markers[0].position == Vec3{1, 2, 3});
}

TEST_CASE("mocap csv errors name the row and reject bad layouts")
{
    const std::string text = "t,m_x,m_y,m_z\n0,1,2,3\n0.1,1,oops,3\n";
    CHECK(kind_of([&] { parse_mocap_csv(text); }) == ErrorKind::parse);
    CHECK(message_of([&] { parse_mocap_csv(text); }).find("row 3") != std::string::npos);

    CHECK(kind_of([] { parse_mocap_csv("t,m_x,m_y\n0,1,2\n"); }) == ErrorKind::schema);
    CHECK(kind_of([] { parse_mocap_csv("t,m_x,m_y,m_z\n1,0,0,0\n0.5,0,0,0\n"); }) == ErrorKind::data);
    CHECK(kind_of([] { parse_mocap_csv(""); }) == ErrorKind::empty_input);
}

TEST_CASE("mocap csv applies a sidecar mass map")
{
    const auto s = parse_mocap_csv("t,a_x,a_y,a_z,b_x,b_y,b_z\n0,0,0,0,1,1,1\n", MassMap{{"b", 2.5}});
    CHECK(s.markers()[0].markers[0].mass == 1.0);
    CHECK(s.markers()[0].markers[1].mass == 2.5);
}

TEST_CASE("jsonl streams are typed by the first line")
{
    const std::string imu =
        R"({"t":0,"kind":"imu","accel":[0,0,9.8],"gyro":[0,0,0],"mag":[1,0,0],"quat":[0.5,0.5,0.5,0.5]})"
        "\n"
        R"({"t":0.01,"kind":"imu","accel":[0,0,9.8],"gyro":[0,0,0],"mag":[1,0,0],"quat":[1,0,0,0]})"
        "\n"
        R"({"t":0.02,"kind":"imu","accel":[0,0,9.8],"gyro":[0,0,0.1],"mag":[1,0,0],"quat":[1,0,0,0]})"
        "\n";
    const auto s = parse_frames_jsonl(imu);
    CHECK(s.kind() == StreamKind::imu);
    CHECK(s.size() == 3);
    CHECK(s.imu()[0].quat == Quat{0.5, 0.5, 0.5, 0.5});

    const std::string mixed = R"({"t":0,"kind":"emg","channels":[0.1,0.2]})"
                              "\n"
                              R"({"t":0.01,"kind":"imu","accel":[0,0,0],"gyro":[0,0,0],"mag":[1,0,0],"quat":[1,0,0,0]})";
    CHECK(kind_of([&] { parse_frames_jsonl(mixed); }) == ErrorKind::schema);

    const std::string broken = R"({"t":0,"kind":"emg","channels":[0.1]})"
                               "\n{not json\n";
    CHECK(kind_of([&] { parse_frames_jsonl(broken); }) == ErrorKind::parse);
    CHECK(message_of([&] { parse_frames_jsonl(broken); }).find("line 2") != std::string::npos);

    CHECK(kind_of([] {
              parse_frames_jsonl(R"({"t":0,"kind":"imu","accel":[0,0,0],"gyro":[0,0,0],"mag":[1,0,0],"quat":[1,1,0,0]})");
          }) == ErrorKind::data);
    CHECK(kind_of([] {
              parse_frames_jsonl(R"({"t":0,"kind":"emg","channels":[0.1]})"
                                 "\n"
                                 R"({"t":1,"kind":"emg","channels":[0.1,0.2]})");
          }) == ErrorKind::schema);
}

TEST_CASE("text formats round-trip exactly")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        MarkerFrames frames;
        for (int i = 0; i < 6; ++i) {
            MarkerFrame f;
            f.t = 0.01 * i + 1e-3 * u(rng) * 0.1;
            f.markers = {{"hand", {u(rng), u(rng), u(rng)}, 1.0}, {"head", {u(rng), u(rng), u(rng)}, 1.0}};
            frames.push_back(f);
        }
        FrameStream s;
        s.frames = frames;
        const auto csv = parse_mocap_csv(write_mocap_csv(s));
        CHECK(csv.markers() == s.markers());
        CHECK(parse_mocap_csv(write_mocap_csv(csv)) == csv);
        const auto jl = parse_frames_jsonl(write_frames_jsonl(s));
        CHECK(jl.markers() == s.markers());

        EmgFrames emg;
        for (int i = 0; i < 5; ++i)
            emg.push_back({0.001 * i, {u(rng) / 2, u(rng) / 2, u(rng) / 2}});
        FrameStream e;
        e.frames = emg;
        CHECK(parse_frames_jsonl(write_frames_jsonl(e)).emg() == emg);
    }
}

TEST_CASE("wav reading scales pcm and rejects float")
{
    const auto bytes = pcm16_wav({16384, -32768, 0}, 44100);
    const auto b = read_wav(bytes);
    CHECK(b.sample_rate == 44100.0);
    CHECK(b.channels.size() == 1);
    CHECK(b.channels[0][0] == doctest::Approx(0.5).epsilon(1.0 / 32768));
    CHECK(b.channels[0][1] == -1.0f);

    const auto second = read_wav(pcm16_wav(std::vector<std::int16_t>(44100, 100), 44100));
    CHECK(second.frames() == 44100);

    CHECK(kind_of([] { read_wav(pcm16_wav({1, 2}, 44100, 3, 32)); }) == ErrorKind::unsupported_format);
    CHECK(kind_of([] { read_wav(pcm16_wav({1, 2}, 44100, 1, 8)); }) == ErrorKind::unsupported_format);

    AudioBuffer stereo;
    stereo.sample_rate = 48000;
    stereo.channels = {{0.25f, -0.5f, 0.999f}, {0.0f, 0.125f, -1.0f}};
    const auto back = read_wav(write_wav(stereo, 24));
    REQUIRE(back.channels.size() == 2);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 3; ++i)
            CHECK(back.channels[c][i] == doctest::Approx(stereo.channels[c][i]).epsilon(1e-6));
}

TEST_CASE("wav scaling stays within unit magnitude")
{
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> d(-32768, 32767);
    std::vector<std::int16_t> s(2000);
    for (auto& v : s)
        v = static_cast<std::int16_t>(d(rng));
    s[0] = -32768;
    s[1] = 32767;
    const auto b = read_wav(pcm16_wav(s, 8000));
    for (float v : b.channels[0])
        CHECK(std::abs(v) <= 1.0f);
}

TEST_CASE("synthetic gestures")
{
    GestureSpec still{GestureShape::still, 50.0, 2.0, 0.0, 1.0};
    const auto still_stream = gen_synthetic_gesture(still);
    for (const auto& f : still_stream.markers())
        CHECK(f.markers[0].position == Vec3{0, 0, 0});

    GestureSpec circle{GestureShape::circle, 1000.0, 1.0, 1.0, 1.0};
    const auto c = gen_synthetic_gesture(circle).markers();
    for (std::size_t i = 1; i < c.size(); ++i) {
        const auto& a = c[i - 1].markers[0].position;
        const auto& b = c[i].markers[0].position;
        CHECK(norm(b - a) * 1000.0 == doctest::Approx(2.0 * std::numbers::pi).epsilon(1e-4));
    }

    // Finite-difference oracle on the generated samples.
    GestureSpec sine{GestureShape::sine, 100.0, 2.0, 2.0, 1.0};
    const auto s = gen_synthetic_gesture(sine).markers();
    double peak = 0.0;
    for (std::size_t i = 1; i + 1 < s.size(); ++i)
        peak = std::max(peak, std::abs(s[i + 1].markers[0].position[0] - s[i - 1].markers[0].position[0]) * 50.0);
    CHECK(peak == doctest::Approx(4.0 * std::numbers::pi).epsilon(0.02));

    CHECK(gen_synthetic_gesture(circle) == gen_synthetic_gesture(circle));
    CHECK(kind_of([] { gen_synthetic_gesture({GestureShape::sine, 10.0, 1.0, 5.0, 1.0}); }) == ErrorKind::parameter);
}

TEST_CASE("resampling")
{
    const auto circle = gen_synthetic_gesture({GestureShape::circle, 100.0, 1.0, 1.0, 1.0});
    const auto same = resample_stream(circle, 100.0);
    REQUIRE(same.size() == circle.size());
    for (std::size_t i = 0; i < same.size(); ++i)
        for (int a = 0; a < 3; ++a)
            CHECK(std::abs(same.markers()[i].markers[0].position[a] - circle.markers()[i].markers[0].position[a]) < 1e-9);

    FrameStream two;
    two.frames = EmgFrames{{0.0, {0.0}}, {1.0, {1.0}}};
    const auto three = resample_stream(two, 2.0);
    REQUIRE(three.size() == 3);
    CHECK(three.emg()[1].channels[0] == doctest::Approx(0.5));

    FrameStream imu;
    const auto q1 = from_axis_angle({0, 0, 1}, 0.0);
    const auto q2 = from_axis_angle({1, 1, 0}, 2.0);
    imu.frames = ImuFrames{{0.0, {}, {}, {}, q1}, {0.1, {}, {}, {}, q2}};
    for (const auto& f : resample_stream(imu, 73.0).imu())
        CHECK(std::abs(f.quat.norm() - 1.0) < 1e-6);

    CHECK(kind_of([] { resample_stream(FrameStream{}, 10.0); }) == ErrorKind::empty_input);
}

TEST_CASE("resampling preserves the first and last frame")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> rate(5.0, 500.0);
    for (int trial = 0; trial < 50; ++trial) {
        EmgFrames frames;
        double t = u(rng);
        for (int i = 0; i < 20; ++i) {
            frames.push_back({t, {u(rng), u(rng)}});
            t += 0.01 + 0.02 * std::abs(u(rng));
        }
        FrameStream s;
        s.frames = frames;
        const auto r = resample_stream(s, rate(rng));
        for (int c = 0; c < 2; ++c) {
            CHECK(std::abs(r.emg().front().channels[c] - frames.front().channels[c]) < 1e-9);
            CHECK(std::abs(r.emg().back().channels[c] - frames.back().channels[c]) < 1e-9);
        }
        CHECK(r.emg().back().t == frames.back().t);
    }
}
