#pragma once

#include <cstddef>
#include <vector>

#include "pflow/numerics.hpp"

namespace pflow {

// Images live in [-1, 1], so the peak-to-peak range is 2.
inline constexpr double kDataRange = 2.0;
inline constexpr double kPsnrCap = 100.0;

double mse(const Vector& a, const Vector& b);

/// 10 log10(range^2 / MSE). +inf for identical inputs.
double psnr(const Vector& a, const Vector& b);

struct SsimParts {
    double ssim = 0.0;
    double contrast_structure = 0.0;  // mean of (2 s_ab + C2) / (s_a^2 + s_b^2 + C2)
    std::size_t windows = 0;
};

/// Mean local SSIM over every fully contained window x window patch, with
/// uniform weights, unbiased (n - 1) moments and C1 = (0.01 R)^2,
/// C2 = (0.03 R)^2. Throws ConfigurationError for an even window or an
/// image smaller than the window.
SsimParts ssim_parts(const Vector& a, const Vector& b, std::size_t height, std::size_t width, std::size_t window = 7);
double ssim(const Vector& a, const Vector& b, std::size_t height, std::size_t width, std::size_t window = 7);

struct ImageScore {
    double mse = 0.0;
    double psnr = 0.0;       // capped at kPsnrCap
    bool identical = false;  // uncapped PSNR was infinite
    double ssim = 0.0;       // NaN when the image is smaller than the window
};

ImageScore score_image(const Vector& estimate, const Vector& truth, std::size_t height, std::size_t width,
                       std::size_t window = 7);

struct Aggregate {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t count = 0;
};

/// Ignores NaN entries.
Aggregate aggregate(const std::vector<double>& values);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;

    double bin_width() const { return counts.empty() ? 0.0 : (hi - lo) / static_cast<double>(counts.size()); }
};

/// Equal-width bins over [min, max] of the finite values; the last bin is
/// closed on the right.
Histogram histogram(const std::vector<double>& values, std::size_t bins);

struct MetricReport {
    std::vector<ImageScore> images;
    Aggregate mse;
    Aggregate psnr;
    Aggregate ssim;
    Histogram psnr_histogram;
};

MetricReport summarize(const std::vector<ImageScore>& images, std::size_t bins = 20);

}  // namespace pflow
