#include "gesturemap/error.hpp"
#include "gesturemap/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace gesturemap::features {

using ingest::MarkerFrame;

MarkerWindow marker_window(const ingest::FrameStream& stream) { return {stream.markers(), stream.rate}; }
EmgWindow emg_window(const ingest::FrameStream& stream) { return {stream.emg(), stream.rate}; }
ImuWindow imu_window(const ingest::FrameStream& stream) { return {stream.imu(), stream.rate}; }

namespace {

void require(bool ok, const std::string& what)
{
    if (!ok)
        fail(ErrorKind::insufficient_data, what);
}

const Vec3& marker_position(const MarkerFrame& frame, std::size_t marker_index)
{
    if (marker_index >= frame.markers.size())
        fail(ErrorKind::parameter, "marker index " + std::to_string(marker_index) + " out of range (" +
                                       std::to_string(frame.markers.size()) + " markers)");
    return frame.markers[marker_index].position;
}

std::vector<Vec3> differentiate(const std::vector<Vec3>& x, double rate)
{
    const std::size_t n = x.size();
    std::vector<Vec3> d(n);
    const double half = 0.5 * rate;
    d[0] = half * (-3.0 * x[0] + 4.0 * x[1] - x[2]);
    for (std::size_t i = 1; i + 1 < n; ++i)
        d[i] = half * (x[i + 1] - x[i - 1]);
    d[n - 1] = half * (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]);
    return d;
}

void check_rate(double rate)
{
    if (!(rate > 0.0) || !std::isfinite(rate))
        fail(ErrorKind::parameter, "window rate must be positive");
}

} // namespace

std::vector<Vec3> derivative(const MarkerWindow& window, int order, std::size_t marker_index)
{
    if (order < 1 || order > 3)
        fail(ErrorKind::parameter, "derivative order must be 1, 2 or 3");
    require(window.size() >= static_cast<std::size_t>(order) + 2,
            "derivative of order " + std::to_string(order) + " needs " + std::to_string(order + 2) +
                " samples, window has " + std::to_string(window.size()));
    check_rate(window.rate);

    std::vector<Vec3> x;
    x.reserve(window.size());
    for (const auto& f : window.frames)
        x.push_back(marker_position(f, marker_index));
    for (int k = 0; k < order; ++k)
        x = differentiate(x, window.rate);
    return x;
}

double fluidity_index(const MarkerWindow& window, std::size_t marker_index, double epsilon)
{
    require(window.size() >= 5, "fluidity index needs 5 samples");
    if (!(epsilon >= 0.0))
        fail(ErrorKind::parameter, "epsilon must be non-negative");
    const auto jerk = derivative(window, 3, marker_index);
    double integral = 0.0;
    for (std::size_t i = 1; i < jerk.size(); ++i)
        integral += 0.5 * (norm(jerk[i - 1]) + norm(jerk[i])) / window.rate;
    return 1.0 / (epsilon + integral);
}

double quantity_of_motion(const MarkerWindow& window)
{
    require(window.size() >= 2, "quantity of motion needs 2 frames");
    check_rate(window.rate);
    const auto& first = window.frames.front();
    double qom = 0.0;
    for (std::size_t m = 0; m < first.markers.size(); ++m) {
        double speed_sum = 0.0;
        for (std::size_t i = 1; i < window.size(); ++i) {
            const auto& a = marker_position(window.frames[i - 1], m);
            const auto& b = marker_position(window.frames[i], m);
            speed_sum += norm(b - a) * window.rate;
        }
        qom += first.markers[m].mass * speed_sum / static_cast<double>(window.size() - 1);
    }
    return qom;
}

double contraction_index(const MarkerFrame& frame)
{
    require(frame.markers.size() >= 2, "contraction index needs 2 markers");
    Vec3 centroid{};
    for (const auto& m : frame.markers)
        centroid = centroid + m.position;
    centroid = (1.0 / static_cast<double>(frame.markers.size())) * centroid;
    double ci = 0.0;
    for (const auto& m : frame.markers)
        ci += norm(m.position - centroid);
    return ci;
}

Extents bounding_box(const MarkerFrame& frame)
{
    require(!frame.markers.empty(), "bounding box needs a marker");
    Vec3 lo = frame.markers.front().position;
    Vec3 hi = lo;
    for (const auto& m : frame.markers)
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], m.position[a]);
            hi[a] = std::max(hi[a], m.position[a]);
        }
    return {hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
}

double convex_hull_volume(const MarkerFrame& frame)
{
    std::vector<Vec3> points;
    points.reserve(frame.markers.size());
    for (const auto& m : frame.markers)
        points.push_back(m.position);
    return convex_hull_volume(points);
}

double imu_contraction_estimate(std::span<const ingest::ImuFrame> imus, const Vec3& reference)
{
    require(imus.size() >= 2, "imu contraction needs 2 sensors");
    std::vector<std::array<double, 2>> projected;
    projected.reserve(imus.size());
    for (const auto& imu : imus) {
        const auto v = rotate(imu.quat, reference);
        projected.push_back({v[0], v[1]});
    }
    double total = 0.0;
    for (std::size_t i = 0; i < projected.size(); ++i)
        for (std::size_t j = i + 1; j < projected.size(); ++j)
            total += std::hypot(projected[i][0] - projected[j][0], projected[i][1] - projected[j][1]);
    return total;
}

// ---------------------------------------------------------------------------
// Periodic quantity of motion

std::vector<double> BandSpec::center_frequencies() const
{
    std::vector<double> f;
    f.reserve(subdivisions.size());
    for (double s : subdivisions)
        f.push_back(tempo_bpm / 60.0 * 0.25 / s);
    return f;
}

std::vector<std::string> BandSpec::band_names() const
{
    std::vector<std::string> names;
    for (double s : subdivisions) {
        const double inv = 1.0 / s;
        if (std::abs(inv - std::round(inv)) < 1e-9)
            names.push_back("pqom_1/" + std::to_string(std::lround(inv)));
        else
            names.push_back("pqom_" + std::to_string(s));
    }
    return names;
}

namespace {

/// RBJ band-pass biquad, 0 dB peak gain.
struct BandPass
{
    double b0, b2, a1, a2;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

    BandPass(double center_hz, double bandwidth_hz, double rate)
    {
        const double w0 = 2.0 * std::numbers::pi * center_hz / rate;
        const double q = center_hz / bandwidth_hz;
        const double alpha = std::sin(w0) / (2.0 * q);
        const double a0 = 1.0 + alpha;
        b0 = alpha / a0;
        b2 = -alpha / a0;
        a1 = -2.0 * std::cos(w0) / a0;
        a2 = (1.0 - alpha) / a0;
    }

    double process(double x)
    {
        const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        return y;
    }
};

} // namespace

FeatureVector pqom(const MarkerWindow& window, const BandSpec& bands, std::size_t marker_index)
{
    check_rate(window.rate);
    if (bands.subdivisions.empty() || !(bands.tempo_bpm > 0.0) || !(bands.bandwidth_hz > 0.0))
        fail(ErrorKind::parameter, "band spec needs a positive tempo, bandwidth and at least one subdivision");
    const auto centers = bands.center_frequencies();
    const double nyquist = window.rate / 2.0;
    for (double f : centers)
        if (!(f > 0.0) || f >= nyquist)
            fail(ErrorKind::parameter, "band at " + std::to_string(f) + " Hz is not below Nyquist (" +
                                           std::to_string(nyquist) + " Hz)");
    const double lowest = *std::min_element(centers.begin(), centers.end());
    const auto needed = static_cast<std::size_t>(std::ceil(2.0 * window.rate / lowest));
    require(window.size() >= std::max<std::size_t>(needed, 3),
            "pqom needs two periods of the lowest band (" + std::to_string(needed) + " samples)");

    const auto velocity = derivative(window, 1, marker_index);
    const auto names = bands.band_names();
    FeatureVector out;
    for (std::size_t b = 0; b < centers.size(); ++b) {
        double energy = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
            BandPass filter(centers[b], bands.bandwidth_hz, window.rate);
            for (const auto& v : velocity) {
                const double y = filter.process(v[axis]);
                energy += y * y;
            }
        }
        out.push(names[b], energy / static_cast<double>(velocity.size()));
    }
    return out;
}

} // namespace gesturemap::features
