#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "viscoclamp/sysid.hpp"

using namespace viscoclamp;

TEST_CASE("design_estimation_input: bounds are exact and deterministic") {
    TimeSeries nl = design_estimation_input(InputKind::nonlinear, 10.0, 1e-4, 5);
    auto [mn, mx] = std::minmax_element(nl.values.begin(), nl.values.end());
    CHECK(*mx == 0.0);          // never stretches past the reference length
    CHECK(*mn == -0.2);         // 2% of a 10 V reference length
    CHECK(nl.values.front() == 0.0);

    TimeSeries nl2 = design_estimation_input(InputKind::nonlinear, 10.0, 1e-4, 99);
    CHECK(nl.values == nl2.values);  // the noiseless kind ignores the seed

    TimeSeries lin = design_estimation_input(InputKind::linear, 10.0, 1e-4, 5);
    auto [lmn, lmx] = std::minmax_element(lin.values.begin(), lin.values.end());
    CHECK(*lmx <= 0.0);
    CHECK(*lmn >= -0.2);
    TimeSeries lin_same = design_estimation_input(InputKind::linear, 10.0, 1e-4, 5);
    TimeSeries lin_other = design_estimation_input(InputKind::linear, 10.0, 1e-4, 6);
    CHECK(lin.values == lin_same.values);
    CHECK(lin.values != lin_other.values);

    CHECK_THROWS_AS(design_estimation_input(InputKind::linear, 0.0, 1e-4, 1), InvalidArgument);
}

TEST_CASE("design_validation_input: same bounds, different pattern, no noise") {
    TimeSeries val = design_validation_input(10.0, 1e-4, 1);
    auto [mn, mx] = std::minmax_element(val.values.begin(), val.values.end());
    CHECK(*mx == 0.0);
    CHECK(*mn == -0.2);
    TimeSeries est = design_estimation_input(InputKind::nonlinear, 10.0, 1e-4, 1);
    CHECK(val.values != est.values);
}

TEST_CASE("estimate_linear: recovers a known first-order ARX system") {
    RationalTransferFunction truth;
    truth.num = {0.4, 0.2};
    truth.den = {1.0, -0.7};
    TimeSeries u = truncated_gaussian_noise(7, 1.0, 3.0, 4000);
    IoRecord io;
    io.input = u;
    io.output = simulate_discrete_tf(truth, u);

    RationalTransferFunction est = estimate_linear(io, 1);
    CHECK(std::abs(est.num[0] - 0.4) < 1e-9);
    CHECK(std::abs(est.num[1] - 0.2) < 1e-9);
    CHECK(std::abs(est.den[1] + 0.7) < 1e-9);
    CHECK(est.dc_gain() == doctest::Approx(2.0).epsilon(1e-9));

    CHECK_THROWS_AS(estimate_linear(io, 0), InvalidArgument);
    CHECK_THROWS_AS(estimate_linear(io, 4), InvalidArgument);
}

TEST_CASE("estimate_linear: colinear data is flagged, not silently fit") {
    // y = 2u makes the u[k-1] and y[k-1] regressor columns proportional
    TimeSeries u = truncated_gaussian_noise(3, 1.0, 3.0, 500);
    IoRecord io;
    io.input = u;
    io.output = u;
    for (double& v : io.output.values) v *= 2.0;
    CHECK_THROWS_AS(estimate_linear(io, 1), EstimationFailure);
}

namespace {

// delayed first-order response around the quiescent operating point (u = 0,
// y = 2 V), mirroring the shape of real identification data
IoRecord first_order_io(std::uint64_t seed) {
    RationalTransferFunction truth;
    truth.num = {0.4, 0.2};
    truth.den = {1.0, -0.7};
    const std::size_t delay = 10;
    TimeSeries u = truncated_gaussian_noise(seed, 0.05, 0.15, 5000);
    for (std::size_t k = 0; k < 50; ++k) u.values[k] = 0.0;  // quiescent start
    TimeSeries y0 = simulate_discrete_tf(truth, u);
    IoRecord io;
    io.input = u;
    io.output.dt = u.dt;
    io.output.values.assign(u.size(), 2.0);
    for (std::size_t k = delay; k < u.size(); ++k)
        io.output.values[k] = 2.0 + y0.values[k - delay];
    return io;
}

}  // namespace

TEST_CASE("estimate_linear_pipeline: recovers gain and response through scaling") {
    RationalTransferFunction truth;
    truth.num = {0.4, 0.2};
    truth.den = {1.0, -0.7};
    RationalTransferFunction est = estimate_linear_pipeline(first_order_io(11), 1, 10);
    // the range-midpoint normalization leaves a small offset artifact, so the
    // order-1 fit is close but not exact
    CHECK(est.dc_gain() == doctest::Approx(2.0).epsilon(0.02));
    double w = 100.0;
    CHECK(std::abs(est.response(w) - truth.response(w)) < 0.02 * std::abs(truth.response(w)));
}

TEST_CASE("select_linear_order: near-exact low-order fit on first-order data") {
    auto [order, fit] = select_linear_order(first_order_io(21), first_order_io(22), 10);
    // order 2 wins deterministically: the extra coefficient absorbs the
    // normalization offset and fits the data essentially exactly
    CHECK(order <= 2);
    CHECK(fit.validation_nrmse < 1e-6);
}

TEST_CASE("measurement_response: infinite bandwidth is the identity") {
    TimeSeries s(0.0, 1e-4, {2.0, 1.9, 1.7, 1.8, 2.1});
    TimeSeries out = measurement_response(s, std::numeric_limits<double>::infinity(), 0.4);
    CHECK(out.values == s.values);
}

TEST_CASE("measurement_response: unit DC gain, no transient on a constant") {
    TimeSeries flat(0.0, 1e-4, std::vector<double>(500, 2.0));
    TimeSeries out = measurement_response(flat, 140.0, 0.4);
    for (double v : out.values) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));

    // step settles back to the step value (DC gain one)
    TimeSeries step(0.0, 1e-4, std::vector<double>(2000, 2.0));
    for (std::size_t k = 100; k < step.size(); ++k) step.values[k] = 1.5;
    out = measurement_response(step, 140.0, 0.4);
    CHECK(out.values.back() == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("preprocess_nonlinear: aligns the delay and filters the output only") {
    IoRecord io;
    io.input = TimeSeries(0.0, 1e-4, std::vector<double>(300, 0.0));
    io.output = io.input;
    for (std::size_t k = 0; k < 300; ++k) {
        io.input.values[k] = static_cast<double>(k);
        io.output.values[k] = k >= 10 ? static_cast<double>(k - 10) : 0.0;
    }
    IoRecord pre = preprocess_nonlinear(io, 1, 10);
    CHECK(pre.input.size() == 290);
    for (std::size_t k = 0; k < pre.input.size(); ++k)
        CHECK(pre.output.values[k] == pre.input.values[k]);
}

TEST_CASE("estimate_nonlinear: self-recovery on clean forward-simulated data") {
    MaxwellParams truth;
    truth.k1 = 11.0;
    truth.k2 = 0.9;
    truth.c = 0.012;
    truth.n = 4.6;
    TimeSeries x = design_estimation_input(InputKind::nonlinear, 10.0, 1e-4, 1);
    IoRecord io;
    io.input = x;
    io.output = simulate_forward(truth, x, 2.0);

    EstimationOptions opts;
    opts.output_filter_window = 1;  // data is clean, no filtering needed
    FitReport fit = estimate_nonlinear(io, opts);
    REQUIRE(fit.maxwell.has_value());
    CHECK(std::abs(fit.maxwell->k1 - truth.k1) / truth.k1 < 0.05);
    CHECK(std::abs(fit.maxwell->k2 - truth.k2) / truth.k2 < 0.05);
    CHECK(std::abs(fit.maxwell->c - truth.c) / truth.c < 0.05);
    CHECK(std::abs(fit.maxwell->n - truth.n) / truth.n < 0.05);
    CHECK(fit.estimation_nrmse < 1e-3);
    CHECK(fit.maxwell->feasible());
}

TEST_CASE("estimate_nonlinear: fix_c is honored and the result stays feasible") {
    MaxwellParams truth;  // defaults
    TimeSeries x = design_estimation_input(InputKind::nonlinear, 10.0, 1e-4, 1);
    IoRecord io;
    io.input = x;
    io.output = simulate_forward(truth, x, 2.0);

    EstimationOptions opts;
    opts.output_filter_window = 1;
    opts.fix_c = 0.02;
    FitReport fit = estimate_nonlinear(io, opts);
    REQUIRE(fit.maxwell.has_value());
    CHECK(fit.maxwell->c == 0.02);
    CHECK(fit.maxwell->feasible());

    opts.fix_c = 5.0;  // outside [1e-4, 1]
    CHECK_THROWS_AS(estimate_nonlinear(io, opts), InvalidArgument);
    opts.fix_c.reset();
    opts.regularization_alpha = -1.0;
    CHECK_THROWS_AS(estimate_nonlinear(io, opts), InvalidArgument);
}

TEST_CASE("validate: zero for a perfect model on its own data") {
    MaxwellParams truth;
    TimeSeries x = design_validation_input(10.0, 1e-4, 1);
    IoRecord io;
    io.input = x;
    io.output = simulate_forward(truth, x, 2.0);
    CHECK(validate(truth, io, 0) < 1e-12);
    // filtering both sides identically keeps the comparison unbiased
    IoRecord filtered = io;
    filtered.output = moving_average(io.output, 20);
    CHECK(validate(truth, filtered, 20) < 1e-12);
}

TEST_CASE("coefficient_of_variation: unit cases") {
    CHECK(coefficient_of_variation({1.0, 3.0}) ==
          doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));
    CHECK(coefficient_of_variation({10.0, 10.0, 10.0}) == 0.0);
    CHECK_THROWS_AS(coefficient_of_variation({1.0}), InvalidArgument);
    CHECK_THROWS_AS(coefficient_of_variation({-1.0, 1.0}), DegenerateInput);
}
