#include "pflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pflow {

double mse(const Vector& a, const Vector& b) {
    require(a.size() == b.size(), "mse: dimension mismatch");
    require(!a.empty(), "mse: empty images");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr(const Vector& a, const Vector& b) {
    const double e = mse(a, b);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(kDataRange * kDataRange / e);
}

SsimParts ssim_parts(const Vector& a, const Vector& b, std::size_t height, std::size_t width, std::size_t window) {
    require(a.size() == b.size(), "ssim: dimension mismatch");
    require(a.size() == height * width, "ssim: image shape does not match the data");
    if (window < 3 || window % 2 == 0) throw ConfigurationError("ssim: window must be odd and >= 3");
    if (height < window || width < window)
        throw ConfigurationError("ssim: image " + std::to_string(height) + "x" + std::to_string(width) +
                                 " is smaller than the " + std::to_string(window) + "x" + std::to_string(window) +
                                 " window");
    const double c1 = (0.01 * kDataRange) * (0.01 * kDataRange);
    const double c2 = (0.03 * kDataRange) * (0.03 * kDataRange);
    const double n = static_cast<double>(window * window);

    SsimParts out;
    double sum_ssim = 0.0, sum_cs = 0.0;
    for (std::size_t r0 = 0; r0 + window <= height; ++r0) {
        for (std::size_t c0 = 0; c0 + window <= width; ++c0) {
            double ma = 0.0, mb = 0.0;
            for (std::size_t r = r0; r < r0 + window; ++r)
                for (std::size_t c = c0; c < c0 + window; ++c) {
                    ma += a[r * width + c];
                    mb += b[r * width + c];
                }
            ma /= n;
            mb /= n;
            double vaa = 0.0, vbb = 0.0, vab = 0.0;
            for (std::size_t r = r0; r < r0 + window; ++r)
                for (std::size_t c = c0; c < c0 + window; ++c) {
                    const double da = a[r * width + c] - ma;
                    const double db = b[r * width + c] - mb;
                    vaa += da * da;
                    vbb += db * db;
                    vab += da * db;
                }
            vaa /= n - 1.0;
            vbb /= n - 1.0;
            vab /= n - 1.0;
            const double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
            const double cs = (2.0 * vab + c2) / (vaa + vbb + c2);
            sum_ssim += lum * cs;
            sum_cs += cs;
            ++out.windows;
        }
    }
    out.ssim = sum_ssim / static_cast<double>(out.windows);
    out.contrast_structure = sum_cs / static_cast<double>(out.windows);
    return out;
}

double ssim(const Vector& a, const Vector& b, std::size_t height, std::size_t width, std::size_t window) {
    return ssim_parts(a, b, height, width, window).ssim;
}

ImageScore score_image(const Vector& estimate, const Vector& truth, std::size_t height, std::size_t width,
                       std::size_t window) {
    ImageScore s;
    s.mse = mse(estimate, truth);
    const double p = psnr(estimate, truth);
    s.identical = std::isinf(p);
    s.psnr = std::min(p, kPsnrCap);
    s.ssim = (height >= window && width >= window) ? ssim(estimate, truth, height, width, window)
                                                   : std::numeric_limits<double>::quiet_NaN();
    return s;
}

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate agg;
    double sum = 0.0;
    for (double v : values)
        if (!std::isnan(v)) {
            sum += v;
            ++agg.count;
        }
    if (agg.count == 0) {
        agg.mean = agg.std = std::numeric_limits<double>::quiet_NaN();
        return agg;
    }
    agg.mean = sum / static_cast<double>(agg.count);
    if (agg.count > 1) {
        double ss = 0.0;
        for (double v : values)
            if (!std::isnan(v)) ss += (v - agg.mean) * (v - agg.mean);
        agg.std = std::sqrt(ss / static_cast<double>(agg.count - 1));
    }
    return agg;
}

Histogram histogram(const std::vector<double>& values, std::size_t bins) {
    require(bins >= 1, "histogram: bins must be >= 1");
    Histogram h;
    h.counts.assign(bins, 0);
    bool any = false;
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        if (!any) {
            h.lo = h.hi = v;
            any = true;
        }
        h.lo = std::min(h.lo, v);
        h.hi = std::max(h.hi, v);
    }
    if (!any) return h;
    if (h.hi == h.lo) h.hi = h.lo + 1.0;
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    for (double v : values) {
        if (!std::isfinite(v)) continue;
        auto b = static_cast<std::size_t>((v - h.lo) / width);
        ++h.counts[std::min(b, bins - 1)];
    }
    return h;
}

MetricReport summarize(const std::vector<ImageScore>& images, std::size_t bins) {
    MetricReport r;
    r.images = images;
    std::vector<double> m, p, s;
    for (const auto& im : images) {
        m.push_back(im.mse);
        p.push_back(im.psnr);
        s.push_back(im.ssim);
    }
    r.mse = aggregate(m);
    r.psnr = aggregate(p);
    r.ssim = aggregate(s);
    r.psnr_histogram = histogram(p, bins);
    return r;
}

}  // namespace pflow
