#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library code paths they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using P3 = std::array<double, 3>;

/// Convex hull volume by enumerating supporting planes of every point triple.
/// Valid for points in general position (no four coplanar).
inline double hull_volume_bruteforce(const std::vector<P3>& p)
{
    const auto sub = [](const P3& a, const P3& b) { return P3{a[0] - b[0], a[1] - b[1], a[2] - b[2]}; };
    const auto crs = [](const P3& a, const P3& b) {
        return P3{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
    };
    const auto dt = [](const P3& a, const P3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; };

    P3 c{0, 0, 0};
    for (const auto& q : p)
        for (int k = 0; k < 3; ++k)
            c[k] += q[k] / static_cast<double>(p.size());

    double volume = 0.0;
    const std::size_t n = p.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            for (std::size_t k = j + 1; k < n; ++k) {
                const P3 normal = crs(sub(p[j], p[i]), sub(p[k], p[i]));
                int pos = 0;
                int neg = 0;
                for (std::size_t m = 0; m < n; ++m) {
                    if (m == i || m == j || m == k)
                        continue;
                    const double s = dt(normal, sub(p[m], p[i]));
                    (s > 0 ? pos : neg)++;
                }
                if (pos == 0 || neg == 0)
                    volume += std::abs(dt(sub(p[i], c), crs(sub(p[j], c), sub(p[k], c)))) / 6.0;
            }
    return volume;
}

/// Magnitudes of the naive DFT for bins 0..n/2.
inline std::vector<double> dft_magnitude(const std::vector<double>& x)
{
    const std::size_t n = x.size();
    std::vector<double> c(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
        c[i] = std::cos(a);
        s[i] = std::sin(a);
    }
    std::vector<double> mag(n / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) {
        double re = 0.0;
        double im = 0.0;
        std::size_t idx = 0;
        for (std::size_t t = 0; t < n; ++t) {
            re += x[t] * c[idx];
            im -= x[t] * s[idx];
            idx += k;
            if (idx >= n)
                idx -= n;
        }
        mag[k] = std::hypot(re, im);
    }
    return mag;
}

/// Frequency (Hz) of the largest non-DC DFT bin.
inline double dft_peak_hz(const std::vector<double>& x, double rate)
{
    const auto mag = dft_magnitude(x);
    std::size_t best = 1;
    for (std::size_t k = 1; k < mag.size(); ++k)
        if (mag[k] > mag[best])
            best = k;
    return static_cast<double>(best) * rate / static_cast<double>(x.size());
}

/// Energy in [lo_hz, hi_hz] over total energy, from the naive DFT.
inline double dft_band_fraction(const std::vector<double>& x, double rate, double lo_hz, double hi_hz)
{
    const auto mag = dft_magnitude(x);
    double in = 0.0;
    double total = 0.0;
    for (std::size_t k = 1; k < mag.size(); ++k) {
        const double f = static_cast<double>(k) * rate / static_cast<double>(x.size());
        const double e = mag[k] * mag[k];
        total += e;
        if (f >= lo_hz && f <= hi_hz)
            in += e;
    }
    return total > 0 ? in / total : 0.0;
}

using Series = std::vector<std::vector<double>>;

inline double euclid(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

/// Minimum warping cost by enumerating every monotone path from (0,0) to
/// (n-1,m-1) with steps (1,0), (0,1), (1,1).
inline double dtw_enumerate(const Series& a, const Series& b)
{
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double acc) {
        acc += euclid(a[i], b[j]);
        if (i + 1 == a.size() && j + 1 == b.size()) {
            best = std::min(best, acc);
            return;
        }
        if (i + 1 < a.size())
            walk(i + 1, j, acc);
        if (j + 1 < b.size())
            walk(i, j + 1, acc);
        if (i + 1 < a.size() && j + 1 < b.size())
            walk(i + 1, j + 1, acc);
    };
    walk(0, 0, 0.0);
    return best;
}

struct Neighbor
{
    std::size_t index;
    double distance;
};

/// Full sort of every candidate by (distance, index).
inline std::vector<Neighbor> scan_all(const std::vector<std::vector<double>>& points, const std::vector<double>& q)
{
    std::vector<Neighbor> all;
    for (std::size_t i = 0; i < points.size(); ++i)
        all.push_back({i, euclid(points[i], q)});
    std::sort(all.begin(), all.end(), [](const Neighbor& x, const Neighbor& y) {
        return x.distance != y.distance ? x.distance < y.distance : x.index < y.index;
    });
    return all;
}

/// Gaussian noise of the given standard deviation, fixed seed.
inline std::vector<double> gaussian_noise(std::size_t n, double sigma, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sigma);
    std::vector<double> x(n);
    for (auto& v : x)
        v = dist(rng);
    return x;
}

} // namespace oracle
