#include "gesturemap/error.hpp"
#include "gesturemap/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

// Incremental 3D convex hull, used only for its volume.

namespace gesturemap::features {

namespace {

struct Face
{
    std::array<std::size_t, 3> v;
    Vec3 normal; // unit, outward
    double offset;
};

Face make_face(std::span<const Vec3> p, std::size_t a, std::size_t b, std::size_t c, const Vec3& inside)
{
    Vec3 n = cross(p[b] - p[a], p[c] - p[a]);
    const double len = norm(n);
    n = (1.0 / len) * n;
    Face f{{a, b, c}, n, dot(n, p[a])};
    if (dot(f.normal, inside) - f.offset > 0.0) {
        std::swap(f.v[1], f.v[2]);
        f.normal = -1.0 * f.normal;
        f.offset = -f.offset;
    }
    return f;
}

double distance_to_line(const Vec3& p, const Vec3& a, const Vec3& b)
{
    const Vec3 d = b - a;
    return norm(cross(p - a, d)) / norm(d);
}

} // namespace

double convex_hull_volume(std::span<const Vec3> p)
{
    if (p.size() < 4)
        fail(ErrorKind::insufficient_data, "convex hull needs 4 points");

    double scale = 0.0;
    for (const auto& q : p)
        for (const auto& r : p)
            scale = std::max(scale, norm(q - r));
    const double eps = 1e-10 * std::max(scale, 1e-300);
    if (scale == 0.0)
        return 0.0;

    // Initial tetrahedron from extreme points; bail out on degenerate sets.
    std::size_t i0 = 0;
    std::size_t i1 = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (norm(p[i] - p[i0]) > norm(p[i1] - p[i0]))
            i1 = i;
    std::size_t i2 = i0;
    double best = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (const double d = distance_to_line(p[i], p[i0], p[i1]); d > best) {
            best = d;
            i2 = i;
        }
    if (best <= eps)
        return 0.0;
    const Vec3 plane_n = cross(p[i1] - p[i0], p[i2] - p[i0]);
    const double plane_len = norm(plane_n);
    std::size_t i3 = i0;
    best = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (const double d = std::abs(dot(plane_n, p[i] - p[i0])) / plane_len; d > best) {
            best = d;
            i3 = i;
        }
    if (best <= eps)
        return 0.0;

    const Vec3 inside = 0.25 * (p[i0] + p[i1] + p[i2] + p[i3]);
    std::vector<Face> faces{make_face(p, i0, i1, i2, inside), make_face(p, i0, i1, i3, inside),
                            make_face(p, i0, i2, i3, inside), make_face(p, i1, i2, i3, inside)};

    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i == i0 || i == i1 || i == i2 || i == i3)
            continue;
        std::vector<bool> visible(faces.size());
        bool any = false;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            visible[f] = dot(faces[f].normal, p[i]) - faces[f].offset > eps;
            any = any || visible[f];
        }
        if (!any)
            continue;

        std::set<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t f = 0; f < faces.size(); ++f)
            if (visible[f])
                for (int e = 0; e < 3; ++e)
                    edges.insert({faces[f].v[e], faces[f].v[(e + 1) % 3]});

        std::vector<Face> kept;
        for (std::size_t f = 0; f < faces.size(); ++f)
            if (!visible[f])
                kept.push_back(faces[f]);
        for (const auto& [a, b] : edges)
            if (!edges.count({b, a}))
                kept.push_back(make_face(p, a, b, i, inside));
        faces = std::move(kept);
    }

    double volume = 0.0;
    for (const auto& f : faces) {
        const Vec3 a = p[f.v[0]] - inside;
        const Vec3 b = p[f.v[1]] - inside;
        const Vec3 c = p[f.v[2]] - inside;
        volume += std::abs(dot(a, cross(b, c))) / 6.0;
    }
    return volume;
}

} // namespace gesturemap::features
