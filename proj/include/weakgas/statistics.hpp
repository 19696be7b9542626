#pragma once

#include <complex>
#include <span>
#include <vector>

namespace weakgas {

struct MCEstimate {
    double mean = 0.0;
    double se = 0.0;
    double n_eff = 0.0;
    int batches = 0;
    std::size_t samples = 0;
};

struct ComplexEstimate {
    std::complex<double> mean{};
    double se = 0.0;  //!< sqrt(se_re^2 + se_im^2)
    MCEstimate re;
    MCEstimate im;
};

inline constexpr int kDefaultBatches = 32;

/// Means of `batches` consecutive equal-size blocks; leading samples that do
/// not fill a block are dropped.
std::vector<double> batch_means(std::span<const double> x, int batches = kDefaultBatches);

/// Batch-means estimate of E[x] pooled over independent replica streams of
/// equal length (each contributes `batches` blocks).
MCEstimate estimate_mean(const std::vector<std::span<const double>>& streams, int batches = kDefaultBatches);
MCEstimate estimate_mean(std::span<const double> stream, int batches = kDefaultBatches);

/// Classical estimate for independent draws: sample standard deviation / sqrt(n).
MCEstimate estimate_iid(std::span<const double> draws);

/// Cov(x, y) = E[xy] - E[x]E[y]; the standard error comes from the
/// linearized statistic xy - m_y x - m_x y averaged per batch.
MCEstimate estimate_covariance(const std::vector<std::span<const double>>& xs,
                               const std::vector<std::span<const double>>& ys, int batches = kDefaultBatches);

ComplexEstimate estimate_complex(const std::vector<std::span<const double>>& re,
                                 const std::vector<std::span<const double>>& im, int batches = kDefaultBatches);

/// First versus second half of every stream; true when the halves agree
/// within `k` combined standard errors.
struct SplitCheck {
    double first = 0.0;
    double second = 0.0;
    double se = 0.0;
    bool agree = true;
};
SplitCheck split_stream_check(const std::vector<std::span<const double>>& streams, double k = 3.0,
                              int batches = kDefaultBatches);

}  // namespace weakgas
