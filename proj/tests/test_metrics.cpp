#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pflow/metrics.hpp"

using namespace pflow;

namespace {

Vector random_image(Rng& rng, std::size_t n) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

}  // namespace

TEST_CASE("psnr of known errors") {
    const Vector a(16, 0.0), b(16, 0.2);
    CHECK(mse(a, b) == doctest::Approx(0.04));
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(4.0 / 0.04)));
    CHECK(psnr(a, b) == doctest::Approx(20.0));
    CHECK(std::isinf(psnr(a, a)));
    CHECK_THROWS_AS(mse(Vector{1}, Vector{1, 2}), ContractViolation);
}

TEST_CASE("psnr is symmetric and decreases with noise") {
    Rng rng(1);
    const Vector a = random_image(rng, 256), b = random_image(rng, 256);
    CHECK(psnr(a, b) == psnr(b, a));
    double prev = INFINITY;
    for (double s : {0.01, 0.02, 0.05, 0.1, 0.2, 0.4}) {
        double avg = 0.0;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            Rng r(seed);
            Vector noisy = a;
            for (double& v : noisy) v += s * r.normal();
            avg += psnr(a, noisy) / 50.0;
        }
        CHECK(avg < prev);
        prev = avg;
    }
}

TEST_CASE("ssim matches the raw-sum oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector a = random_image(rng, 16 * 16);
        Vector b = a;
        for (double& v : b) v += 0.3 * rng.normal();
        CHECK(ssim(a, b, 16, 16) == doctest::Approx(oracle::windowed_ssim(a, b, 16, 16, 7)).epsilon(1e-12));
        CHECK(ssim(a, b, 16, 16, 3) == doctest::Approx(oracle::windowed_ssim(a, b, 16, 16, 3)).epsilon(1e-12));
    }
    const Vector a = random_image(rng, 9 * 12), b = random_image(rng, 9 * 12);
    const SsimParts parts = ssim_parts(a, b, 9, 12, 5);
    CHECK(parts.windows == 5 * 8);
    CHECK(parts.ssim == doctest::Approx(oracle::windowed_ssim(a, b, 9, 12, 5)).epsilon(1e-12));
}

TEST_CASE("ssim of identical images is exactly one") {
    Rng rng(3);
    const Vector a = random_image(rng, 256);
    CHECK(ssim(a, a, 16, 16) == 1.0);
    const Vector flat(256, 0.3);
    CHECK(ssim(flat, flat, 16, 16) == 1.0);
}

TEST_CASE("ssim stays in [-1, 1] and inverted images anti-correlate") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector a = random_image(rng, 256), b = random_image(rng, 256);
        const double s = ssim(a, b, 16, 16);
        CHECK(s >= -1.0);
        CHECK(s <= 1.0);
        CHECK(ssim_parts(a, scale(a, -1.0), 16, 16).contrast_structure < 0.0);
    }
}

TEST_CASE("contrast-structure term is invariant to a common shift") {
    Rng rng(5);
    const Vector a = random_image(rng, 256);
    Vector b = a;
    for (double& v : b) v += 0.2 * rng.normal();
    const Vector shift(256, 0.4);
    const SsimParts base = ssim_parts(a, b, 16, 16), moved = ssim_parts(add(a, shift), add(b, shift), 16, 16);
    CHECK(std::abs(base.contrast_structure - moved.contrast_structure) < 1e-9);
}

TEST_CASE("ssim rejects bad windows") {
    const Vector a(16, 0.0);
    CHECK_THROWS_AS(ssim(a, a, 4, 4, 7), ConfigurationError);
    CHECK_THROWS_AS(ssim(a, a, 4, 4, 2), ConfigurationError);
    CHECK_THROWS_AS(ssim(a, a, 4, 4, 1), ConfigurationError);
    CHECK_THROWS_AS(ssim(Vector(8), Vector(8), 2, 4, 3), ConfigurationError);
}

TEST_CASE("score_image caps psnr and flags identical inputs") {
    Rng rng(6);
    const Vector a = random_image(rng, 256);
    const ImageScore same = score_image(a, a, 16, 16);
    CHECK(same.identical);
    CHECK(same.psnr == kPsnrCap);
    CHECK(same.ssim == 1.0);
    const ImageScore tiny = score_image(Vector{0.1, 0.2}, Vector{0.1, 0.3}, 1, 2);
    CHECK_FALSE(tiny.identical);
    CHECK(std::isnan(tiny.ssim));
    CHECK(tiny.psnr == doctest::Approx(psnr(Vector{0.1, 0.2}, Vector{0.1, 0.3})));
}

TEST_CASE("aggregate ignores NaN and uses the sample deviation") {
    const Aggregate a = aggregate({1.0, 2.0, NAN, 3.0, 4.0});
    CHECK(a.count == 4);
    CHECK(a.mean == 2.5);
    CHECK(a.std == doctest::Approx(std::sqrt(5.0 / 3.0)));
    const Aggregate one = aggregate({7.0});
    CHECK(one.mean == 7.0);
    CHECK(one.std == 0.0);
    CHECK(std::isnan(aggregate({NAN}).mean));
}

TEST_CASE("histogram counts every finite value once") {
    const Histogram h = histogram({0.0, 0.5, 1.0, 1.5, 2.0, INFINITY, NAN}, 4);
    CHECK(h.lo == 0.0);
    CHECK(h.hi == 2.0);
    CHECK(h.bin_width() == 0.5);
    CHECK(h.counts == std::vector<std::size_t>{1, 1, 1, 2});
    const Histogram flat = histogram({3.0, 3.0}, 3);
    CHECK(flat.counts[0] == 2);
    CHECK(histogram({}, 5).counts == std::vector<std::size_t>(5, 0));
    CHECK_THROWS_AS(histogram({1.0}, 0), ContractViolation);
}

TEST_CASE("summarize") {
    Rng rng(7);
    std::vector<ImageScore> scores;
    for (int i = 0; i < 10; ++i) {
        const Vector a = random_image(rng, 256);
        Vector b = a;
        for (double& v : b) v += 0.1 * rng.normal();
        scores.push_back(score_image(b, a, 16, 16));
    }
    const MetricReport r = summarize(scores, 5);
    CHECK(r.images.size() == 10);
    CHECK(r.psnr.count == 10);
    CHECK(r.psnr_histogram.counts.size() == 5);
    std::size_t total = 0;
    for (auto c : r.psnr_histogram.counts) total += c;
    CHECK(total == 10);
}
