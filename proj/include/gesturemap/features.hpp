#pragma once

#include "gesturemap/feature_vector.hpp"
#include "gesturemap/geometry.hpp"
#include "gesturemap/ingest.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gesturemap::features {

/// Contiguous frames at a uniform rate.
template <class Frame>
struct Window
{
    std::span<const Frame> frames;
    double rate = 0.0;

    std::size_t size() const { return frames.size(); }
};

using MarkerWindow = Window<ingest::MarkerFrame>;
using EmgWindow = Window<ingest::EmgFrame>;
using ImuWindow = Window<ingest::ImuFrame>;

MarkerWindow marker_window(const ingest::FrameStream& stream);
EmgWindow emg_window(const ingest::FrameStream& stream);
ImuWindow imu_window(const ingest::FrameStream& stream);

// ---------------------------------------------------------------------------
// Motion descriptors

/// Per-sample derivative of one marker's trajectory. Each stage uses central
/// differences inside and second-order one-sided differences at the edges,
/// so every stage is exact for quadratics. Requires order + 2 samples.
std::vector<Vec3> derivative(const MarkerWindow& window, int order, std::size_t marker_index);

/// 1 / (epsilon + integral of |jerk| dt), trapezoidal rule.
double fluidity_index(const MarkerWindow& window, std::size_t marker_index, double epsilon = 1e-6);

/// Sum over markers of mass * mean speed, speeds from consecutive frames.
double quantity_of_motion(const MarkerWindow& window);

double contraction_index(const ingest::MarkerFrame& frame);

struct Extents
{
    double width = 0.0;
    double height = 0.0;
    double depth = 0.0;
};

Extents bounding_box(const ingest::MarkerFrame& frame);

double convex_hull_volume(std::span<const Vec3> points);
double convex_hull_volume(const ingest::MarkerFrame& frame);

/// Rotates `reference` by each IMU's orientation, drops z, and sums the
/// pairwise distances of the projected vectors. Small means the limbs point
/// the same way.
double imu_contraction_estimate(std::span<const ingest::ImuFrame> imus, const Vec3& reference = {1.0, 0.0, 0.0});

/// Rhythmic band layout for periodic quantity of motion. A subdivision is a
/// note value as a fraction of a whole note (1/4 is a quarter note), so its
/// centre frequency is tempo/60 * (1/4) / subdivision.
struct BandSpec
{
    double tempo_bpm = 120.0;
    std::vector<double> subdivisions{1.0 / 2.0, 1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0};
    double bandwidth_hz = 0.5;

    std::vector<double> center_frequencies() const;
    std::vector<std::string> band_names() const;
};

/// Band-pass filter bank over the marker's velocity components; one energy
/// (mean square of the filtered velocity, summed over axes) per subdivision.
FeatureVector pqom(const MarkerWindow& window, const BandSpec& bands, std::size_t marker_index);

// ---------------------------------------------------------------------------
// EMG descriptors

struct BayesParams
{
    std::size_t grid_size = 100;
    double diffusion = 0.02;
    double jump_prob = 1e-3;
};

/// Recursive amplitude estimator over a discretised posterior on [0, 1].
/// Each step diffuses the posterior, mixes in a uniform jump component,
/// weights by the zero-mean Gaussian likelihood of the sample and returns
/// the MAP amplitude.
class BayesAmplitudeFilter
{
public:
    explicit BayesAmplitudeFilter(const BayesParams& params = {});

    double step(double sample);
    double estimate() const { return estimate_; }
    std::span<const double> posterior() const { return posterior_; }
    double grid_value(std::size_t k) const;

private:
    BayesParams params_;
    std::vector<double> posterior_;
    std::vector<double> scratch_;
    std::vector<double> inv_sigma_;
    std::vector<double> inv_two_var_;
    double estimate_ = 0.0;
};

std::vector<double> channel_signal(std::span<const ingest::EmgFrame> frames, std::size_t channel);

std::vector<double> bayes_amplitude(std::span<const ingest::EmgFrame> frames, std::size_t channel,
                                    const BayesParams& params = {});
std::vector<double> bayes_amplitude(std::span<const double> signal, const BayesParams& params = {});

double mav(std::span<const double> signal);
double rms(std::span<const double> signal);
std::vector<double> tkeo(std::span<const double> signal);
std::size_t zcr(std::span<const double> signal);

double mav(const EmgWindow& window, std::size_t channel);
double rms(const EmgWindow& window, std::size_t channel);
std::vector<double> tkeo(const EmgWindow& window, std::size_t channel);
std::size_t zcr(const EmgWindow& window, std::size_t channel);

/// 19 values: quaternion (4), quaternion rate (4), 8 EMG amplitudes, their
/// sum, and horizontal/vertical tension sum(a cos θ), sum(a sin θ).
/// `previous` may be null, in which case the quaternion rate is zero.
FeatureVector assemble_gesture_vector(const ingest::ImuFrame& imu, const ingest::ImuFrame* previous, double rate,
                                      std::span<const double> emg_amplitudes, std::span<const double> electrode_angles);

// ---------------------------------------------------------------------------
// Named extraction used by sessions and the CLI

struct FeatureConfig
{
    std::vector<std::string> features{"qom"};
    std::size_t window = 32;
    std::size_t hop = 16;
    std::size_t marker_index = 0;
    double fi_epsilon = 1e-6;
    BandSpec bands;
    BayesParams bayes;
};

struct FeatureInfo
{
    std::string name;
    ingest::StreamKind kind;
    std::string description;
};

const std::vector<FeatureInfo>& feature_registry();
std::string valid_feature_list();
/// Throws a parameter error naming the first unknown feature.
void validate_features(const FeatureConfig& config);

/// Computes every configured feature over the whole window, in config order.
FeatureVector extract(const FeatureConfig& config, const ingest::FrameStream& window);

struct FeatureTable
{
    std::vector<std::string> names; // excludes the leading time column
    std::vector<double> times;      // time of each window's last frame
    std::vector<std::vector<double>> rows;
};

/// Sliding windows of config.window frames advanced by config.hop.
FeatureTable extract_table(const FeatureConfig& config, const ingest::FrameStream& stream);
std::string table_to_csv(const FeatureTable& table);

} // namespace gesturemap::features
