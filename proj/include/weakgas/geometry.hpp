#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace weakgas {

/// Largest supported space dimension. Unused coordinates are kept at zero so
/// that Euclidean norms never need the active dimension.
inline constexpr int kMaxDim = 2;

using Point = std::array<double, kMaxDim>;

using Rng = std::mt19937_64;

/// Deterministic sub-stream generator: the same (seed, stream) pair always
/// yields the same sequence, independent of thread scheduling.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    return Rng(seq);
}

/// Uniform draw on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Point operator+(Point a, const Point& b)
{
    for (int k = 0; k < kMaxDim; ++k) a[k] += b[k];
    return a;
}

inline Point operator-(Point a, const Point& b)
{
    for (int k = 0; k < kMaxDim; ++k) a[k] -= b[k];
    return a;
}

inline Point operator*(double s, Point a)
{
    for (auto& c : a) c *= s;
    return a;
}

inline double norm(const Point& x)
{
    return std::hypot(x[0], x[1]);
}

inline double sup_norm(const Point& x)
{
    return std::max(std::abs(x[0]), std::abs(x[1]));
}

/// Builds a point from the first `dim` entries of a container.
template <class Range>
Point make_point(const Range& r, int dim)
{
    Point p{};
    int k = 0;
    for (double v : r) {
        if (k >= dim) throw std::invalid_argument("point has more coordinates than the dimension");
        p[k++] = v;
    }
    if (k != dim) throw std::invalid_argument("point has fewer coordinates than the dimension");
    return p;
}

/// Closed axis-aligned box in the first `dim` coordinates.
struct Box {
    int dim = 1;
    Point lo{};
    Point hi{};

    double extent(int k) const { return hi[k] - lo[k]; }

    double volume() const
    {
        double v = 1.0;
        for (int k = 0; k < dim; ++k) v *= extent(k);
        return v;
    }

    bool contains(const Point& x) const
    {
        for (int k = 0; k < dim; ++k)
            if (x[k] < lo[k] || x[k] > hi[k]) return false;
        return true;
    }

    bool contains(const Box& b) const
    {
        for (int k = 0; k < dim; ++k)
            if (b.lo[k] < lo[k] || b.hi[k] > hi[k]) return false;
        return true;
    }

    Box dilated(double r) const
    {
        Box b = *this;
        for (int k = 0; k < dim; ++k) {
            b.lo[k] -= r;
            b.hi[k] += r;
        }
        return b;
    }

    Box shifted(const Point& t) const
    {
        Box b = *this;
        for (int k = 0; k < dim; ++k) {
            b.lo[k] += t[k];
            b.hi[k] += t[k];
        }
        return b;
    }

    Box united(const Box& o) const
    {
        Box b = *this;
        for (int k = 0; k < dim; ++k) {
            b.lo[k] = std::min(lo[k], o.lo[k]);
            b.hi[k] = std::max(hi[k], o.hi[k]);
        }
        return b;
    }

    Point center() const { return 0.5 * (lo + hi); }

    Point sample(Rng& rng) const
    {
        Point p{};
        for (int k = 0; k < dim; ++k) p[k] = lo[k] + extent(k) * uniform01(rng);
        return p;
    }

    /// Cube [c - r, c + r]^dim.
    static Box cube(int dim, const Point& c, double r)
    {
        Box b{dim, {}, {}};
        for (int k = 0; k < dim; ++k) {
            b.lo[k] = c[k] - r;
            b.hi[k] = c[k] + r;
        }
        return b;
    }
};

inline void check_dimension(int dim)
{
    if (dim < 1 || dim > kMaxDim)
        throw std::invalid_argument("dimension must be 1 or 2, got " + std::to_string(dim));
}

}  // namespace weakgas
