#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "cdpsr/metrics.hpp"
#include "support.hpp"

using namespace cdpsr;

namespace {

double oracle_psnr(const RealGrid& a, const RealGrid& b, double peak) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    return 10.0 * std::log10(peak * peak / (se / a.size()));
}

// Mean SSIM over every fully contained 11×11 window, σ = 1.5, computed with a
// direct 2-D weight table.
double oracle_ssim(const RealGrid& x, const RealGrid& y, double peak) {
    const int win = 11, half = 5;
    std::vector<double> g(win * win);
    double gs = 0.0;
    for (int a = 0; a < win; ++a)
        for (int b = 0; b < win; ++b) {
            g[a * win + b] = std::exp(-((a - half) * (a - half) + (b - half) * (b - half)) / (2 * 1.5 * 1.5));
            gs += g[a * win + b];
        }
    const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
    double total = 0.0;
    int n = 0;
    for (std::size_t r = 0; r + win <= x.height(); ++r)
        for (std::size_t c = 0; c + win <= x.width(); ++c) {
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int a = 0; a < win; ++a)
                for (int b = 0; b < win; ++b) {
                    const double wgt = g[a * win + b] / gs;
                    const double u = x(r + a, c + b), v = y(r + a, c + b);
                    mx += wgt * u, my += wgt * v;
                    sxx += wgt * u * u, syy += wgt * v * v, sxy += wgt * u * v;
                }
            const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
            total += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++n;
        }
    return total / n;
}

RealGrid binary_pattern() {
    std::mt19937_64 gen(5);
    RealGrid img(32, 32, 1.0);
    for (auto& v : img.values()) v = static_cast<double>(gen() & 1);
    return img;
}

}  // namespace

TEST(Psnr, SentinelAndUnitCase) {
    const auto a = test::random_image(8, 8, 1);
    EXPECT_EQ(psnr(a, a, 1.0), 100.0);
    const RealGrid zero(5, 5, 1.0, 0.0), one(5, 5, 1.0, 1.0);
    EXPECT_EQ(psnr(zero, one, 1.0), 0.0);
    EXPECT_THROW(psnr(zero, one, 0.0), ConfigError);
    EXPECT_THROW(psnr(zero, RealGrid(4, 5, 1.0), 1.0), ShapeError);
}

TEST(Psnr, MatchesMseOracleOnRandomPairs) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = test::random_image(31, 17, 2 * s), b = test::random_image(31, 17, 2 * s + 1);
        EXPECT_NEAR(psnr(a, b, 1.0), oracle_psnr(a, b, 1.0), 1e-9);
    }
}

TEST(Ssim, IdenticalIsExactlyOne) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto a = test::random_image(20, 24, s);
        EXPECT_EQ(ssim(a, a, 1.0), 1.0);
    }
}

TEST(Ssim, MatchesDirectWindowOracle) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = test::random_image(23, 19, 40 + s);
        auto b = a;
        std::mt19937_64 gen(s);
        std::normal_distribution<double> n(0.0, 0.05 * (1 + s));
        for (auto& v : b.values()) v += n(gen);
        EXPECT_NEAR(ssim(a, b, 1.0), oracle_ssim(a, b, 1.0), 1e-9);
    }
}

TEST(Ssim, BinaryInversionIsDissimilar) {
    const auto a = binary_pattern();
    RealGrid inv = a;
    for (auto& v : inv.values()) v = 1.0 - v;
    const double ref = oracle_ssim(a, inv, 1.0);
    EXPECT_NEAR(ref, -0.95070012500464862, 1e-12);  // frozen oracle value
    EXPECT_NEAR(ssim(a, inv, 1.0), ref, 1e-9);
    EXPECT_LT(ssim(a, inv, 1.0), 0.1);
}

TEST(Ssim, ConstantImagesClosedForm) {
    const RealGrid a(16, 16, 1.0, 0.0), b(16, 16, 1.0, 1.0);
    const double c1 = 1e-4, c2 = 9e-4;
    const double expect = (2 * 0 * 1 + c1) * c2 / ((0 + 1 + c1) * c2);
    EXPECT_NEAR(ssim(a, b, 1.0), expect, 1e-15);
}

TEST(Metrics, ScalingInvariance) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto a = test::random_image(24, 24, 100 + s), b = test::random_image(24, 24, 200 + s);
        const double k = 0.3 + s, off = -2.0 + s;
        RealGrid as = a, bs = b, aa = a, ba = b;
        for (auto& v : as.values()) v *= k;
        for (auto& v : bs.values()) v *= k;
        for (auto& v : aa.values()) v = k * v + off;
        for (auto& v : ba.values()) v = k * v + off;
        EXPECT_NEAR(psnr(as, bs, k), psnr(a, b, 1.0), 1e-12);
        EXPECT_NEAR(psnr(aa, ba, k), psnr(a, b, 1.0), 1e-12);
        EXPECT_NEAR(ssim(as, bs, k), ssim(a, b, 1.0), 1e-9);
    }
}

TEST(Metrics, SsimRange) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto a = test::random_image(16, 16, s, -3, 3), b = test::random_image(16, 16, s + 50, -3, 3);
        const double v = ssim(a, b, 6.0);
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_THROW(ssim(test::random_image(8, 8, 1), test::random_image(8, 8, 2), 1.0), ShapeError);
}

TEST(EvaluateField, GlobalPhaseIsIgnored) {
    const auto u = test::random_field(24, 24, 0.7, 3);
    ComplexField turned = u;
    for (auto& v : turned.values()) v *= std::polar(1.0, 2.2);
    const auto rep = evaluate_field(turned, u);
    EXPECT_EQ(rep.psnr_amplitude, 100.0);
    EXPECT_GT(rep.psnr_phase, 90.0);
    EXPECT_NEAR(rep.ssim_phase, 1.0, 1e-9);
    const auto kv = rep.to_key_value();
    EXPECT_EQ(kv.get_double("psnr_amplitude"), 100.0);
}

TEST(CountingError, Percent) {
    EXPECT_EQ(counting_error_percent(70, 70), 0.0);
    EXPECT_NEAR(counting_error_percent(63, 70), 10.0, 1e-12);
    EXPECT_THROW(counting_error_percent(1, 0), ConfigError);
}
