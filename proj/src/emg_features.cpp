#include "gesturemap/error.hpp"
#include "gesturemap/features.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gesturemap::features {

// ---------------------------------------------------------------------------
// Bayesian amplitude filter

BayesAmplitudeFilter::BayesAmplitudeFilter(const BayesParams& params) : params_(params)
{
    if (params.grid_size < 16)
        fail(ErrorKind::parameter, "bayes grid_size must be at least 16");
    if (!(params.jump_prob >= 0.0 && params.jump_prob < 1.0))
        fail(ErrorKind::parameter, "bayes jump_prob must be in [0, 1)");
    if (!(params.diffusion >= 0.0 && params.diffusion <= 0.5))
        fail(ErrorKind::parameter, "bayes diffusion must be in [0, 0.5]");

    const std::size_t n = params.grid_size;
    posterior_.assign(n, 1.0 / static_cast<double>(n));
    scratch_.resize(n);
    inv_sigma_.resize(n);
    inv_two_var_.resize(n);
    // The zero cell evaluates its likelihood at half a grid step.
    const double floor_sigma = 0.5 * grid_value(1);
    for (std::size_t k = 0; k < n; ++k) {
        const double sigma = std::max(grid_value(k), floor_sigma);
        inv_sigma_[k] = 1.0 / sigma;
        inv_two_var_[k] = 1.0 / (2.0 * sigma * sigma);
    }
}

double BayesAmplitudeFilter::grid_value(std::size_t k) const
{
    return static_cast<double>(k) / static_cast<double>(params_.grid_size - 1);
}

double BayesAmplitudeFilter::step(double sample)
{
    if (!std::isfinite(sample))
        fail(ErrorKind::data, "non-finite emg sample");
    const std::size_t n = posterior_.size();
    const double d = params_.diffusion;

    // Diffusion with reflecting ends, then the uniform jump component.
    for (std::size_t k = 0; k < n; ++k) {
        const double left = posterior_[k == 0 ? 0 : k - 1];
        const double right = posterior_[k + 1 == n ? k : k + 1];
        scratch_[k] = (1.0 - 2.0 * d) * posterior_[k] + d * (left + right);
    }
    const double jump = params_.jump_prob / static_cast<double>(n);
    const double x2 = sample * sample;
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double prior = (1.0 - params_.jump_prob) * scratch_[k] + jump;
        const double p = prior * inv_sigma_[k] * std::exp(-x2 * inv_two_var_[k]);
        posterior_[k] = p;
        total += p;
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        // Likelihood underflow everywhere (sample far outside the grid): restart from the prior.
        for (std::size_t k = 0; k < n; ++k)
            posterior_[k] = (1.0 - params_.jump_prob) * scratch_[k] + jump;
        total = 0.0;
        for (double p : posterior_)
            total += p;
    }
    std::size_t best = 0;
    for (std::size_t k = 0; k < n; ++k) {
        posterior_[k] /= total;
        if (posterior_[k] > posterior_[best])
            best = k;
    }
    estimate_ = grid_value(best);
    return estimate_;
}

std::vector<double> channel_signal(std::span<const ingest::EmgFrame> frames, std::size_t channel)
{
    std::vector<double> x;
    x.reserve(frames.size());
    for (const auto& f : frames) {
        if (channel >= f.channels.size())
            fail(ErrorKind::parameter, "emg channel " + std::to_string(channel) + " out of range");
        x.push_back(f.channels[channel]);
    }
    return x;
}

std::vector<double> bayes_amplitude(std::span<const double> signal, const BayesParams& params)
{
    BayesAmplitudeFilter filter(params);
    std::vector<double> out;
    out.reserve(signal.size());
    for (double x : signal)
        out.push_back(filter.step(x));
    return out;
}

std::vector<double> bayes_amplitude(std::span<const ingest::EmgFrame> frames, std::size_t channel,
                                    const BayesParams& params)
{
    return bayes_amplitude(channel_signal(frames, channel), params);
}

// ---------------------------------------------------------------------------
// Window statistics

double mav(std::span<const double> x)
{
    if (x.empty())
        fail(ErrorKind::insufficient_data, "mav needs one sample");
    double sum = 0.0;
    for (double v : x)
        sum += std::abs(v);
    return sum / static_cast<double>(x.size());
}

double rms(std::span<const double> x)
{
    if (x.empty())
        fail(ErrorKind::insufficient_data, "rms needs one sample");
    double sum = 0.0;
    for (double v : x)
        sum += v * v;
    return std::sqrt(sum / static_cast<double>(x.size()));
}

std::vector<double> tkeo(std::span<const double> x)
{
    if (x.size() < 3)
        fail(ErrorKind::insufficient_data, "tkeo needs 3 samples");
    std::vector<double> psi(x.size());
    for (std::size_t n = 1; n + 1 < x.size(); ++n)
        psi[n] = x[n] * x[n] - x[n - 1] * x[n + 1];
    psi.front() = psi[1];
    psi.back() = psi[x.size() - 2];
    return psi;
}

std::size_t zcr(std::span<const double> x)
{
    if (x.size() < 2)
        fail(ErrorKind::insufficient_data, "zcr needs 2 samples");
    std::size_t count = 0;
    for (std::size_t n = 1; n < x.size(); ++n)
        if ((x[n - 1] >= 0.0) != (x[n] >= 0.0))
            ++count;
    return count;
}

double mav(const EmgWindow& w, std::size_t channel) { return mav(channel_signal(w.frames, channel)); }
double rms(const EmgWindow& w, std::size_t channel) { return rms(channel_signal(w.frames, channel)); }
std::vector<double> tkeo(const EmgWindow& w, std::size_t channel) { return tkeo(channel_signal(w.frames, channel)); }
std::size_t zcr(const EmgWindow& w, std::size_t channel) { return zcr(channel_signal(w.frames, channel)); }

// ---------------------------------------------------------------------------

FeatureVector assemble_gesture_vector(const ingest::ImuFrame& imu, const ingest::ImuFrame* previous, double rate,
                                      std::span<const double> amps, std::span<const double> angles)
{
    if (amps.size() != 8 || angles.size() != 8)
        fail(ErrorKind::schema, "gesture vector needs 8 emg amplitudes and 8 electrode angles, got " +
                                    std::to_string(amps.size()) + " and " + std::to_string(angles.size()));
    if (previous && !(rate > 0.0))
        fail(ErrorKind::parameter, "quaternion rate needs a positive frame rate");

    FeatureVector v;
    const auto& q = imu.quat;
    v.push("quat_w", q.w);
    v.push("quat_x", q.x);
    v.push("quat_y", q.y);
    v.push("quat_z", q.z);
    const Quat p = previous ? previous->quat : q;
    const double r = previous ? rate : 0.0;
    v.push("dquat_w", (q.w - p.w) * r);
    v.push("dquat_x", (q.x - p.x) * r);
    v.push("dquat_y", (q.y - p.y) * r);
    v.push("dquat_z", (q.z - p.z) * r);
    double sum = 0.0;
    double horizontal = 0.0;
    double vertical = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        v.push("emg_" + std::to_string(i), amps[i]);
        sum += amps[i];
        horizontal += amps[i] * std::cos(angles[i]);
        vertical += amps[i] * std::sin(angles[i]);
    }
    v.push("emg_sum", sum);
    v.push("tension_h", horizontal);
    v.push("tension_v", vertical);
    return v;
}

} // namespace gesturemap::features
