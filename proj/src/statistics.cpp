#include "weakgas/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace weakgas {

namespace {

double mean_of(std::span<const double> x)
{
    return x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance_of(std::span<const double> x, double m)
{
    if (x.size() < 2) return 0.0;
    double acc = 0.0;
    for (double v : x) acc += (v - m) * (v - m);
    return acc / static_cast<double>(x.size() - 1);
}

// mean and standard error of a set of equal-weight block means
MCEstimate from_blocks(const std::vector<double>& blocks, std::size_t samples, double sample_variance)
{
    MCEstimate e;
    e.batches = static_cast<int>(blocks.size());
    e.samples = samples;
    e.mean = mean_of(blocks);
    if (blocks.size() < 2) {
        e.se = std::numeric_limits<double>::infinity();
        e.n_eff = 0.0;
        return e;
    }
    e.se = std::sqrt(variance_of(blocks, e.mean) / static_cast<double>(blocks.size()));
    double n = static_cast<double>(samples);
    e.n_eff = e.se > 0.0 ? std::min(n, sample_variance / (e.se * e.se)) : n;
    return e;
}

}  // namespace

std::vector<double> batch_means(std::span<const double> x, int batches)
{
    if (batches < 1) throw std::invalid_argument("batch count must be positive");
    std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(batches), x.size());
    std::vector<double> out;
    if (b == 0) return out;
    std::size_t size = x.size() / b;
    std::size_t skip = x.size() - size * b;
    out.reserve(b);
    for (std::size_t k = 0; k < b; ++k) out.push_back(mean_of(x.subspan(skip + k * size, size)));
    return out;
}

MCEstimate estimate_mean(const std::vector<std::span<const double>>& streams, int batches)
{
    std::vector<double> blocks;
    std::size_t n = 0;
    double sum = 0.0;
    for (auto s : streams) {
        auto b = batch_means(s, batches);
        blocks.insert(blocks.end(), b.begin(), b.end());
        n += s.size();
        sum += std::accumulate(s.begin(), s.end(), 0.0);
    }
    double m = n ? sum / static_cast<double>(n) : 0.0;
    double ss = 0.0;
    for (auto s : streams)
        for (double v : s) ss += (v - m) * (v - m);
    return from_blocks(blocks, n, n > 1 ? ss / static_cast<double>(n - 1) : 0.0);
}

MCEstimate estimate_mean(std::span<const double> stream, int batches)
{
    return estimate_mean(std::vector<std::span<const double>>{stream}, batches);
}

MCEstimate estimate_iid(std::span<const double> draws)
{
    MCEstimate e;
    e.samples = draws.size();
    e.n_eff = static_cast<double>(draws.size());
    e.mean = mean_of(draws);
    e.se = draws.size() > 1 ? std::sqrt(variance_of(draws, e.mean) / static_cast<double>(draws.size()))
                            : std::numeric_limits<double>::infinity();
    return e;
}

MCEstimate estimate_covariance(const std::vector<std::span<const double>>& xs,
                               const std::vector<std::span<const double>>& ys, int batches)
{
    if (xs.size() != ys.size()) throw std::invalid_argument("covariance needs paired streams");
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < xs.size(); ++r) {
        if (xs[r].size() != ys[r].size()) throw std::invalid_argument("covariance needs paired streams");
        for (std::size_t i = 0; i < xs[r].size(); ++i) {
            sx += xs[r][i];
            sy += ys[r][i];
            sxy += xs[r][i] * ys[r][i];
        }
        n += xs[r].size();
    }
    if (n == 0) return {};
    double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
    double cov = sxy / static_cast<double>(n) - mx * my;

    std::vector<double> blocks;
    double ss = 0.0;
    for (std::size_t r = 0; r < xs.size(); ++r) {
        std::vector<double> u(xs[r].size());
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = xs[r][i] * ys[r][i] - my * xs[r][i] - mx * ys[r][i];
        auto b = batch_means(u, batches);
        blocks.insert(blocks.end(), b.begin(), b.end());
        double mu = cov - mx * my;
        for (double v : u) ss += (v - mu) * (v - mu);
    }
    MCEstimate e = from_blocks(blocks, n, n > 1 ? ss / static_cast<double>(n - 1) : 0.0);
    e.mean = cov;
    return e;
}

ComplexEstimate estimate_complex(const std::vector<std::span<const double>>& re,
                                 const std::vector<std::span<const double>>& im, int batches)
{
    ComplexEstimate c;
    c.re = estimate_mean(re, batches);
    c.im = estimate_mean(im, batches);
    c.mean = {c.re.mean, c.im.mean};
    c.se = std::hypot(c.re.se, c.im.se);
    return c;
}

SplitCheck split_stream_check(const std::vector<std::span<const double>>& streams, double k, int batches)
{
    std::vector<std::span<const double>> first, second;
    for (auto s : streams) {
        std::size_t half = s.size() / 2;
        first.push_back(s.first(half));
        second.push_back(s.subspan(half, half));
    }
    int half_batches = std::max(2, batches / 2);
    auto a = estimate_mean(first, half_batches);
    auto b = estimate_mean(second, half_batches);
    SplitCheck out;
    out.first = a.mean;
    out.second = b.mean;
    out.se = std::hypot(a.se, b.se);
    out.agree = std::abs(a.mean - b.mean) <= k * out.se;
    return out;
}

}  // namespace weakgas
