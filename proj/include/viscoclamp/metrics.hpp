#ifndef VISCOCLAMP_METRICS_HPP
#define VISCOCLAMP_METRICS_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "viscoclamp/errors.hpp"
#include "viscoclamp/signals.hpp"

namespace viscoclamp {

struct ClampMetrics {
    std::optional<double> settling_time_ms;  // empty means not settled
    double overshoot_pct = 0.0;
    double nrmse_vs_reference = 0.0;
    std::optional<double> nrmse_ff_vs_total;
    std::optional<double> shortening_velocity_v_per_s;
};

struct StatSummary {
    double mean = 0.0;
    double ci95_low = 0.0;
    double ci95_high = 0.0;
    double cv = 0.0;
};

/// Sample standard deviation (unbiased) divided by the absolute mean.
inline double coefficient_of_variation(const std::vector<double>& samples) {
    if (samples.size() < 2)
        throw InvalidArgument("coefficient_of_variation: need at least 2 samples");
    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    if (mean == 0.0)
        throw DegenerateInput("coefficient_of_variation: zero mean");
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
    return sd / std::abs(mean);
}

namespace detail {

// two-sided 95% Student-t quantile; exact table for small dof, asymptotic
// expansion beyond
inline double t_quantile_975(std::size_t dof) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                   2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                   2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                   2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (dof == 0) throw InvalidArgument("t_quantile_975: dof must be >= 1");
    if (dof <= 30) return table[dof - 1];
    return 1.959964 + 2.4 / static_cast<double>(dof);
}

}  // namespace detail

/// Mean, 95% confidence interval (Student-t, n-1 dof) and coefficient of
/// variation of repeated measurements.
inline StatSummary summarize(const std::vector<double>& samples) {
    if (samples.size() < 2) throw InvalidArgument("summarize: need at least 2 samples");
    StatSummary s;
    for (double v : samples) s.mean += v;
    s.mean /= static_cast<double>(samples.size());
    double ss = 0.0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    double sd = std::sqrt(ss / static_cast<double>(samples.size() - 1));
    double half = detail::t_quantile_975(samples.size() - 1) * sd /
                  std::sqrt(static_cast<double>(samples.size()));
    s.ci95_low = s.mean - half;
    s.ci95_high = s.mean + half;
    s.cv = s.mean != 0.0 ? sd / std::abs(s.mean) : std::numeric_limits<double>::quiet_NaN();
    return s;
}

/// Time for the filtered, normalized force to enter and stay within a constant
/// absolute band around the clamp level, measured from the start of the clamp.
/// Returns milliseconds, or empty if the trace never settles.
inline std::optional<double> settling_time(const TimeSeries& y, double f_ref, double level,
                                           double t0 = 0.08, double band = 0.0025,
                                           std::size_t filter_window = 20) {
    if (f_ref <= 0.0) throw InvalidArgument("settling_time: F_ref must be > 0");
    TimeSeries norm = y;
    for (double& v : norm.values) v /= f_ref;
    norm = moving_average(norm, std::min<std::size_t>(filter_window, norm.size()));

    // scan backwards for the last sample outside the band
    std::size_t start = norm.index_at(t0);
    std::ptrdiff_t last_out = -1;
    for (std::size_t i = norm.size(); i-- > start;) {
        if (std::abs(norm.values[i] - level) > band) {
            last_out = static_cast<std::ptrdiff_t>(i);
            break;
        }
    }
    if (last_out == static_cast<std::ptrdiff_t>(norm.size()) - 1) return std::nullopt;
    std::size_t settled = last_out < static_cast<std::ptrdiff_t>(start)
                              ? start
                              : static_cast<std::size_t>(last_out) + 1;
    double tau = norm.time(settled) - t0;
    return std::max(tau, 0.0) * 1000.0;
}

/// Percentage excess force drop below the clamp target:
///   OS = ((1 - F/F_ref) - (1 - level/100)) / (1 - level/100) * 100
/// with F the minimum filtered force over the clamp window, clipped below at 0.
inline double overshoot(const TimeSeries& y, double f_ref, double level_pct, double t0 = 0.08,
                        std::size_t filter_window = 20) {
    if (level_pct >= 100.0) throw InvalidArgument("overshoot: level must be < 100%");
    if (f_ref <= 0.0) throw InvalidArgument("overshoot: F_ref must be > 0");
    TimeSeries filt = moving_average(y, std::min<std::size_t>(filter_window, y.size()));
    std::size_t start = filt.index_at(t0);
    double fmin = filt.values[start];
    for (std::size_t i = start; i < filt.size(); ++i) fmin = std::min(fmin, filt.values[i]);
    double target_drop = 1.0 - level_pct / 100.0;
    double os = ((1.0 - fmin / f_ref) - target_drop) / target_drop * 100.0;
    return std::max(os, 0.0);
}

/// Quality of fit between the total control effort and the feedforward signal.
inline double ff_fit(const TimeSeries& u_total, const TimeSeries& u_ff) {
    return nrmse(u_total, u_ff);
}

}  // namespace viscoclamp

#endif
