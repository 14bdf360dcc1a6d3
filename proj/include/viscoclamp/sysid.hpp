#ifndef VISCOCLAMP_SYSID_HPP
#define VISCOCLAMP_SYSID_HPP

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "viscoclamp/errors.hpp"
#include "viscoclamp/maxwell.hpp"
#include "viscoclamp/metrics.hpp"
#include "viscoclamp/signals.hpp"
#include "viscoclamp/transfer_function.hpp"

namespace viscoclamp {

struct EstimationOptions {
    std::optional<double> fix_c;        // hold c at this value during estimation
    double regularization_alpha = 0.0;  // alpha * (n^2 + k1^2 + k2^2)
    std::size_t max_iterations = 500;
    double tolerance = 1e-8;
    // The observed output is moving-average filtered during preprocessing; the
    // simulated trace inside the cost passes the same filter so the filter's
    // group delay cannot bias the damping estimate. Must match the
    // preprocess_nonlinear window; 0 or 1 disables it.
    std::size_t output_filter_window = 20;
    // Known (calibrated) force-transducer response. When the natural frequency
    // is finite the simulated force passes through this second-order filter
    // before the cost is evaluated, so instrument dynamics cannot leak into
    // the tissue parameters. Infinity disables it.
    double transducer_freq_hz = std::numeric_limits<double>::infinity();
    double transducer_zeta = 0.4;

    void check_valid() const {
        if (regularization_alpha < 0.0)
            throw InvalidArgument("EstimationOptions: alpha must be >= 0");
        if (fix_c && (*fix_c < 1e-4 || *fix_c > 1.0))
            throw InvalidArgument("EstimationOptions: fixed c must be in [0.0001, 1]");
    }
};

struct FitReport {
    std::optional<MaxwellParams> maxwell;
    std::optional<RationalTransferFunction> tf;
    double estimation_nrmse = 0.0;
    double validation_nrmse = std::numeric_limits<double>::quiet_NaN();
    std::size_t iterations = 0;
    bool converged = false;
};

// Estimation-input step pattern: ramp time, hold time, and amplitudes as
// fractions of the lower bound. The validation pattern differs so the two
// datasets are never identical.
inline constexpr double kInputRampSeconds = 0.02;
inline constexpr double kInputHoldSeconds = 0.48;
inline constexpr std::array<double, 6> kEstimationAmplitudes{0.2, 0.4, 0.6, 0.8, 1.0, 0.5};
inline constexpr std::array<double, 6> kValidationAmplitudes{0.3, 0.7, 1.0, 0.45, 0.9, 0.15};

namespace detail {

inline TimeSeries ramped_staircase(const std::array<double, 6>& amplitudes, double lower_bound,
                                   double dt) {
    const std::size_t ramp = static_cast<std::size_t>(std::llround(kInputRampSeconds / dt));
    const std::size_t hold = static_cast<std::size_t>(std::llround(kInputHoldSeconds / dt));
    TimeSeries s;
    s.dt = dt;
    s.values.reserve(hold + amplitudes.size() * (ramp + hold));
    // initial hold at the reference length (0 V)
    s.values.insert(s.values.end(), hold / 4, 0.0);
    double level = 0.0;
    for (double a : amplitudes) {
        double target = a * lower_bound;
        for (std::size_t i = 1; i <= ramp; ++i)
            s.values.push_back(level + (target - level) * static_cast<double>(i) /
                                           static_cast<double>(ramp));
        s.values.insert(s.values.end(), hold, target);
        level = target;
    }
    return s;
}

}  // namespace detail

/// Ramped-step staircase spanning [-2% of the reference length, 0 V]. The
/// linear kind adds truncated Gaussian noise (std = 10% of the largest step
/// change / 3, bound = 3 std) so repeated length samples do not stall the
/// least-squares estimate; samples stay within the bounds after noise.
enum class InputKind { linear, nonlinear };

/// Pass a force trace through a unit-DC-gain second-order transducer response
/// (bilinear discretization), as a known-instrument model for estimation.
inline TimeSeries measurement_response(const TimeSeries& s, double natural_freq_hz, double zeta) {
    if (!std::isfinite(natural_freq_hz)) return s;
    const double wn = 2.0 * 3.14159265358979323846 * natural_freq_hz;
    RationalTransferFunction tf;
    tf.domain = RationalTransferFunction::Domain::continuous;
    tf.num = {0.0, 0.0, wn * wn};
    tf.den = {1.0, 2.0 * zeta * wn, wn * wn};
    // the filter assumes quiescent history; run it on the deviation from the
    // initial force so a nonzero starting level does not produce a transient
    TimeSeries dev = s;
    for (double& v : dev.values) v -= s.values.front();
    TimeSeries filt = simulate_discrete_tf(to_discrete(tf, s.dt), dev);
    for (double& v : filt.values) v += s.values.front();
    return filt;
}

inline TimeSeries design_estimation_input(InputKind kind, double ref_length_volts, double dt,
                                          std::uint64_t seed) {
    if (ref_length_volts <= 0.0)
        throw InvalidArgument("design_estimation_input: reference length must be > 0");
    const double lower = -0.02 * ref_length_volts;
    TimeSeries s = detail::ramped_staircase(kEstimationAmplitudes, lower, dt);
    if (kind == InputKind::linear) {
        double max_step = 0.0, level = 0.0;
        for (double a : kEstimationAmplitudes) {
            max_step = std::max(max_step, std::abs(a * lower - level));
            level = a * lower;
        }
        const double std_dev = 0.1 * max_step / 3.0;
        TimeSeries noise = truncated_gaussian_noise(seed, std_dev, 3.0 * std_dev, s.size(), dt);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s.values[i] = std::clamp(s.values[i] + noise.values[i], lower, 0.0);
        }
    }
    return s;
}

/// Same bounds as the estimation input, different step pattern, no noise.
inline TimeSeries design_validation_input(double ref_length_volts, double dt,
                                          std::uint64_t /*seed*/) {
    if (ref_length_volts <= 0.0)
        throw InvalidArgument("design_validation_input: reference length must be > 0");
    return detail::ramped_staircase(kValidationAmplitudes, -0.02 * ref_length_volts, dt);
}

/// Delay-aligned, offset-removed, unit-normalized data for the least-squares
/// estimator, plus the scale info needed to map the estimated transfer
/// function back to original units.
struct LinearPreprocessed {
    IoRecord io;             // normalized
    ScaleInfo input_scale;   // original input = normalized * gain + offset
    ScaleInfo output_scale;  // original offset-removed output = normalized * gain + offset
    double output_offset = 0.0;
};

inline LinearPreprocessed preprocess_linear(const IoRecord& io, std::size_t delay_samples = 10) {
    LinearPreprocessed out;
    IoRecord aligned = align_delay(io, delay_samples);
    auto [y_zeroed, offset] = remove_offset(aligned.output);
    out.output_offset = offset;
    auto [u_norm, u_scale] = normalize_unit(aligned.input);
    auto [y_norm, y_scale] = normalize_unit(y_zeroed);
    out.io.input = std::move(u_norm);
    out.io.output = std::move(y_norm);
    out.input_scale = u_scale;
    out.output_scale = y_scale;
    return out;
}

/// Delay-aligned data with a moving-average filter on the output only, for the
/// nonlinear estimator.
inline IoRecord preprocess_nonlinear(const IoRecord& io, std::size_t window = 20,
                                     std::size_t delay_samples = 10) {
    IoRecord aligned = align_delay(io, delay_samples);
    aligned.output = moving_average(aligned.output, window);
    return aligned;
}

/// Equation-error (ARX) least squares for a biproper discrete transfer
/// function of the given order. The regressor uses n past outputs and n+1
/// current/past inputs; solved by a column-pivoted QR factorization.
inline RationalTransferFunction estimate_linear(const IoRecord& io, std::size_t order) {
    if (order < 1 || order > 3) throw InvalidArgument("estimate_linear: order must be in [1, 3]");
    const std::size_t n = order;
    const std::size_t nsamp = io.output.size();
    if (nsamp < 8 * (2 * n + 1))
        throw InvalidArgument("estimate_linear: not enough data for the requested order");

    const std::size_t rows = nsamp - n;
    const std::size_t cols = 2 * n + 1;
    Eigen::MatrixXd a(rows, cols);
    Eigen::VectorXd b(rows);
    for (std::size_t k = n; k < nsamp; ++k) {
        std::size_t r = k - n;
        for (std::size_t i = 0; i <= n; ++i) a(r, static_cast<Eigen::Index>(i)) = io.input.values[k - i];
        for (std::size_t i = 1; i <= n; ++i)
            a(r, static_cast<Eigen::Index>(n + i)) = -io.output.values[k - i];
        b(static_cast<Eigen::Index>(r)) = io.output.values[k];
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(cols)) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
        double cond = svd.singularValues()(0) /
                      svd.singularValues()(svd.singularValues().size() - 1);
        throw EstimationFailure("estimate_linear: rank-deficient regressor (condition number " +
                                std::to_string(cond) + ")");
    }
    Eigen::VectorXd theta = qr.solve(b);

    RationalTransferFunction tf;
    tf.domain = RationalTransferFunction::Domain::discrete;
    tf.ts = io.input.dt;
    tf.num.assign(theta.data(), theta.data() + n + 1);
    tf.den.resize(n + 1);
    tf.den[0] = 1.0;
    for (std::size_t i = 1; i <= n; ++i) tf.den[i] = theta(static_cast<Eigen::Index>(n + i));
    return tf;
}

/// Map a transfer function estimated on normalized data back to original units.
inline RationalTransferFunction descale_tf(RationalTransferFunction tf, const ScaleInfo& input,
                                           const ScaleInfo& output) {
    const double factor = output.gain / input.gain;
    for (double& v : tf.num) v *= factor;
    return tf;
}

namespace detail {

// Project a candidate parameter vector onto the feasible set: bound clips plus
// Euclidean projection onto the half-space k1 >= k2.
inline MaxwellParams project_feasible(MaxwellParams p) {
    p.k1 = std::max(p.k1, 0.0);
    p.k2 = std::max(p.k2, 0.0);
    p.c = std::clamp(p.c, 1e-4, 1.0);
    p.n = std::max(p.n, 1.0);
    if (p.k1 < p.k2) {
        double m = 0.5 * (p.k1 + p.k2);
        p.k1 = m;
        p.k2 = m;
    }
    return p;
}

}  // namespace detail

/// Constrained estimation of the nonlinear model by a projected Nelder-Mead
/// search. The cost is the NRMSE between the filtered observed force and the
/// forward simulation, plus the optional regularization alpha*(n^2+k1^2+k2^2).
/// Candidate points are projected onto the constraint set before evaluation,
/// so every iterate (and the result) is feasible; simulation failures at a
/// trial point cost +infinity.
inline FitReport estimate_nonlinear(const IoRecord& io, const EstimationOptions& opts = {}) {
    opts.check_valid();
    io.input.check_valid();
    io.output.check_valid();
    if (io.output.values.front() <= 0.0)
        throw InvalidArgument("estimate_nonlinear: initial force must be > 0");

    const double f0 = io.output.values.front();
    const bool fix_c = opts.fix_c.has_value();
    const std::size_t dim = fix_c ? 3 : 4;

    auto unpack = [&](const std::vector<double>& v) {
        MaxwellParams p;
        p.k1 = v[0];
        p.k2 = v[1];
        p.n = v[2];
        p.c = fix_c ? *opts.fix_c : v[3];
        return detail::project_feasible(p);
    };
    auto pack = [&](const MaxwellParams& p) {
        std::vector<double> v{p.k1, p.k2, p.n};
        if (!fix_c) v.push_back(p.c);
        return v;
    };

    auto cost = [&](const std::vector<double>& v) -> double {
        MaxwellParams p = unpack(v);
        double value;
        try {
            TimeSeries sim = simulate_forward(p, io.input, f0);
            sim = measurement_response(sim, opts.transducer_freq_hz, opts.transducer_zeta);
            if (opts.output_filter_window > 1)
                sim = moving_average(sim, std::min(opts.output_filter_window, sim.size()));
            value = nrmse(io.output, sim);
        } catch (const NumericFailure&) {
            return std::numeric_limits<double>::infinity();
        }
        if (opts.regularization_alpha > 0.0)
            value += opts.regularization_alpha * (p.n * p.n + p.k1 * p.k1 + p.k2 * p.k2);
        return value;
    };

    // initial simplex around the initial guess, 5% relative perturbations
    MaxwellParams guess;  // k1=10, k2=1, c=0.01, n=5
    if (fix_c) guess.c = *opts.fix_c;
    std::vector<std::vector<double>> simplex(dim + 1, pack(guess));
    for (std::size_t i = 0; i < dim; ++i)
        simplex[i + 1][i] += simplex[i + 1][i] != 0.0 ? 0.05 * simplex[i + 1][i] : 0.05;
    for (auto& v : simplex) v = pack(unpack(v));  // keep every vertex feasible

    std::vector<double> fval(simplex.size());
    for (std::size_t i = 0; i < simplex.size(); ++i) fval[i] = cost(simplex[i]);

    auto order_simplex = [&]() {
        std::vector<std::size_t> idx(simplex.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fval[a] < fval[b]; });
        std::vector<std::vector<double>> s2;
        std::vector<double> f2;
        for (std::size_t i : idx) {
            s2.push_back(simplex[i]);
            f2.push_back(fval[i]);
        }
        simplex = std::move(s2);
        fval = std::move(f2);
    };

    bool converged = false;
    std::size_t iter = 0;
    for (; iter < opts.max_iterations; ++iter) {
        order_simplex();
        if (std::isfinite(fval.back()) && fval.back() - fval.front() < opts.tolerance) {
            converged = true;
            break;
        }
        // centroid of all but the worst vertex
        std::vector<double> centroid(dim, 0.0);
        for (std::size_t i = 0; i < dim; ++i) {
            for (std::size_t j = 0; j < dim; ++j) centroid[j] += simplex[i][j];
        }
        for (double& v : centroid) v /= static_cast<double>(dim);

        auto blend = [&](double coeff) {
            std::vector<double> v(dim);
            for (std::size_t j = 0; j < dim; ++j)
                v[j] = centroid[j] + coeff * (centroid[j] - simplex[dim][j]);
            return pack(unpack(v));
        };

        std::vector<double> reflected = blend(1.0);
        double fr = cost(reflected);
        if (fr < fval[0]) {
            std::vector<double> expanded = blend(2.0);
            double fe = cost(expanded);
            if (fe < fr) {
                simplex[dim] = std::move(expanded);
                fval[dim] = fe;
            } else {
                simplex[dim] = std::move(reflected);
                fval[dim] = fr;
            }
        } else if (fr < fval[dim - 1]) {
            simplex[dim] = std::move(reflected);
            fval[dim] = fr;
        } else {
            std::vector<double> contracted = blend(fr < fval[dim] ? 0.5 : -0.5);
            double fc = cost(contracted);
            if (fc < std::min(fr, fval[dim])) {
                simplex[dim] = std::move(contracted);
                fval[dim] = fc;
            } else {
                // shrink toward the best vertex
                for (std::size_t i = 1; i <= dim; ++i) {
                    for (std::size_t j = 0; j < dim; ++j)
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    simplex[i] = pack(unpack(simplex[i]));
                    fval[i] = cost(simplex[i]);
                }
            }
        }
    }
    order_simplex();

    FitReport report;
    report.maxwell = unpack(simplex[0]);
    report.iterations = iter;
    report.converged = converged;
    double best = fval[0];
    if (opts.regularization_alpha > 0.0 && std::isfinite(best)) {
        const MaxwellParams& p = *report.maxwell;
        best -= opts.regularization_alpha * (p.n * p.n + p.k1 * p.k1 + p.k2 * p.k2);
    }
    report.estimation_nrmse = best;
    return report;
}

/// Open-loop validation NRMSE of a nonlinear model on fresh preprocessed data.
/// The simulated trace passes the same moving-average filter as the observed
/// output did in preprocess_nonlinear (pass 0 to disable).
inline double validate(const MaxwellParams& params, const IoRecord& io_validation,
                       std::size_t output_filter_window = 20,
                       double transducer_freq_hz = std::numeric_limits<double>::infinity(),
                       double transducer_zeta = 0.35) {
    TimeSeries sim = simulate_forward(params, io_validation.input, io_validation.output.values.front());
    sim = measurement_response(sim, transducer_freq_hz, transducer_zeta);
    if (output_filter_window > 1)
        sim = moving_average(sim, std::min(output_filter_window, sim.size()));
    return nrmse(io_validation.output, sim);
}

/// Open-loop validation NRMSE of a linear model (original units) against
/// delay-aligned, offset-removed validation data.
inline double validate(const RationalTransferFunction& tf, const IoRecord& io_validation) {
    TimeSeries sim = simulate_discrete_tf(tf, io_validation.input);
    return nrmse(io_validation.output, sim);
}

/// Full linear pipeline: preprocess, least-squares estimate, de-scale back to
/// original units.
inline RationalTransferFunction estimate_linear_pipeline(const IoRecord& io, std::size_t order,
                                                         std::size_t delay_samples = 10) {
    LinearPreprocessed pre = preprocess_linear(io, delay_samples);
    RationalTransferFunction tf = estimate_linear(pre.io, order);
    return descale_tf(std::move(tf), pre.input_scale, pre.output_scale);
}

/// Estimate orders 1..3 and return the order with the lowest validation NRMSE
/// (ties within 1e-9 break to the lower order).
inline std::pair<std::size_t, FitReport> select_linear_order(const IoRecord& io_est,
                                                             const IoRecord& io_val,
                                                             std::size_t delay_samples = 10) {
    IoRecord val_aligned = align_delay(io_val, delay_samples);
    val_aligned.output = remove_offset(val_aligned.output).first;

    std::size_t best_order = 0;
    FitReport best;
    best.validation_nrmse = std::numeric_limits<double>::infinity();
    for (std::size_t order = 1; order <= 3; ++order) {
        try {
            RationalTransferFunction tf = estimate_linear_pipeline(io_est, order, delay_samples);
            double v = validate(tf, val_aligned);
            if (!std::isfinite(v)) continue;
            if (best_order == 0 || v < best.validation_nrmse - 1e-9) {
                best_order = order;
                best.tf = tf;
                best.validation_nrmse = v;
                best.converged = true;
            }
        } catch (const EstimationFailure&) {
            continue;
        }
    }
    if (best_order == 0) throw EstimationFailure("select_linear_order: all orders failed");
    return {best_order, best};
}

}  // namespace viscoclamp

#endif
