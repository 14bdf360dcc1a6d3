#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "viscoclamp/metrics.hpp"

using namespace viscoclamp;

namespace {

TimeSeries constant(double value, std::size_t count = 3000) {
    return TimeSeries(0.0, 1e-4, std::vector<double>(count, value));
}

// exponential approach to the clamp level from above, starting at t0
TimeSeries exponential_approach(double f_ref, double level, double tau, double t0 = 0.08,
                                double t_end = 0.6, double dt = 1e-4) {
    std::size_t count = static_cast<std::size_t>(std::llround(t_end / dt)) + 1;
    TimeSeries y(0.0, dt, std::vector<double>(count, f_ref));
    for (std::size_t k = 0; k < count; ++k) {
        double t = y.time(k);
        if (t >= t0)
            y.values[k] = f_ref * (level + (1.0 - level) * std::exp(-(t - t0) / tau));
    }
    return y;
}

}  // namespace

TEST_CASE("overshoot: direct substitution oracle at level 5%") {
    // F_min/F_ref = 0.04 on a 5% clamp:
    // OS = ((1 - 0.04) - 0.95)/0.95 * 100 = 1.0526...%
    double os = overshoot(constant(0.04), 1.0, 5.0);
    CHECK(std::abs(os - 1.0526315789) < 1e-4);

    // slack tissue: zero force on a 5% clamp is a 5.263% overshoot
    double slack = overshoot(constant(0.0), 1.0, 5.0);
    CHECK(std::abs(slack - 5.2631578947) < 1e-4);

    // no undershoot below the target: clipped at exactly 0
    CHECK(overshoot(constant(0.06), 1.0, 5.0) == 0.0);
    CHECK(overshoot(constant(0.05), 1.0, 5.0) == 0.0);
}

TEST_CASE("overshoot: scale invariance and argument checks") {
    TimeSeries y = constant(0.08);
    double base = overshoot(y, 2.0, 5.0);
    TimeSeries y3 = y;
    for (double& v : y3.values) v *= 3.0;
    CHECK(overshoot(y3, 6.0, 5.0) == doctest::Approx(base).epsilon(1e-12));

    CHECK_THROWS_AS(overshoot(y, 1.0, 100.0), InvalidArgument);
    CHECK_THROWS_AS(overshoot(y, 0.0, 5.0), InvalidArgument);
}

TEST_CASE("settling_time: closed-form band crossing of an exponential") {
    const double tau = 0.02, level = 0.05, band = 0.0025;
    TimeSeries y = exponential_approach(1.0, level, tau);
    // (1-level)*exp(-t/tau) = band  =>  t = tau * ln((1-level)/band)
    double expected_ms = tau * std::log((1.0 - level) / band) * 1000.0;
    auto settled = settling_time(y, 1.0, level, 0.08, band, /*filter_window=*/1);
    REQUIRE(settled.has_value());
    CHECK(std::abs(*settled - expected_ms) < 1.0);
}

TEST_CASE("settling_time: band monotonicity and the not-settled case") {
    TimeSeries y = exponential_approach(1.0, 0.05, 0.02);
    auto tight = settling_time(y, 1.0, 0.05, 0.08, 0.0025, 1);
    auto loose = settling_time(y, 1.0, 0.05, 0.08, 0.01, 1);
    REQUIRE(tight.has_value());
    REQUIRE(loose.has_value());
    CHECK(*loose <= *tight);

    // never leaves F_ref: the final sample is outside the band
    CHECK_FALSE(settling_time(constant(1.0), 1.0, 0.05).has_value());
    CHECK_THROWS_AS(settling_time(constant(1.0), 0.0, 0.05), InvalidArgument);
}

TEST_CASE("settling_time: already inside the band settles at t0") {
    TimeSeries y = constant(0.05);
    auto settled = settling_time(y, 1.0, 0.05, 0.08, 0.0025, 1);
    REQUIRE(settled.has_value());
    CHECK(*settled == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ff_fit: identical to the NRMSE of the two efforts") {
    TimeSeries u(0.0, 1e-4, {1.0, 2.0, -1.0});
    TimeSeries uff(0.0, 1e-4, {0.8, 2.1, -1.3});
    CHECK(ff_fit(u, uff) == doctest::Approx(nrmse(u, uff)).epsilon(1e-15));
}

TEST_CASE("coefficient_of_variation: oracle values") {
    CHECK(coefficient_of_variation({1.0, 3.0}) ==
          doctest::Approx(0.70710678118).epsilon(1e-9));
    CHECK(coefficient_of_variation({10.0, 10.0, 10.0}) == 0.0);
}

TEST_CASE("summarize: degenerate and two-sample cases") {
    StatSummary same = summarize({1.0, 1.0, 1.0});
    CHECK(same.mean == 1.0);
    CHECK(same.ci95_low == doctest::Approx(1.0));
    CHECK(same.ci95_high == doctest::Approx(1.0));
    CHECK(same.cv == 0.0);

    StatSummary two = summarize({0.0, 2.0});
    CHECK(two.mean == doctest::Approx(1.0));
    CHECK(two.cv == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    // 1 dof Student-t: half-width = 12.706 * sd / sqrt(2) = 12.706
    CHECK(two.ci95_low == doctest::Approx(1.0 - 12.706).epsilon(1e-9));
    CHECK(two.ci95_high == doctest::Approx(1.0 + 12.706).epsilon(1e-9));

    CHECK_THROWS_AS(summarize({1.0}), InvalidArgument);
}

TEST_CASE("summarize: 95% CI coverage on Gaussian draws") {
    GaussianSampler g(2024);
    const double true_mean = 5.0;
    std::size_t covered = 0;
    const std::size_t trials = 2000;
    for (std::size_t t = 0; t < trials; ++t) {
        std::vector<double> samples(5);
        for (double& v : samples) v = true_mean + g.next();
        StatSummary s = summarize(samples);
        if (s.ci95_low <= true_mean && true_mean <= s.ci95_high) ++covered;
    }
    double coverage = static_cast<double>(covered) / static_cast<double>(trials);
    CHECK(coverage > 0.93);
    CHECK(coverage < 0.97);
}
