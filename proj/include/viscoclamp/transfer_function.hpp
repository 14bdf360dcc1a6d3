#ifndef VISCOCLAMP_TRANSFER_FUNCTION_HPP
#define VISCOCLAMP_TRANSFER_FUNCTION_HPP

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>
#include <vector>

#include "viscoclamp/errors.hpp"
#include "viscoclamp/signals.hpp"

namespace viscoclamp {

/// Biproper rational transfer function. Coefficients are stored in descending
/// powers; the denominator is monic (den[0] == 1) and deg(num) == deg(den).
struct RationalTransferFunction {
    enum class Domain { continuous, discrete };

    std::vector<double> num;  // alpha_n ... alpha_0
    std::vector<double> den;  // 1, beta_{n-1} ... beta_0
    Domain domain = Domain::discrete;
    double ts = 1e-4;  // sample period, discrete domain only

    std::size_t order() const { return den.size() - 1; }

    void check_valid() const {
        if (num.size() != den.size() || den.empty())
            throw InvalidArgument("RationalTransferFunction: must be biproper");
        if (std::abs(den[0] - 1.0) > 1e-12)
            throw InvalidArgument("RationalTransferFunction: denominator must be monic");
        for (double v : num)
            if (!std::isfinite(v)) throw InvalidArgument("RationalTransferFunction: non-finite coefficient");
        for (double v : den)
            if (!std::isfinite(v)) throw InvalidArgument("RationalTransferFunction: non-finite coefficient");
    }

    /// Frequency response H(i*omega) (continuous) or H(e^{i*omega*Ts}) (discrete).
    std::complex<double> response(double omega) const {
        std::complex<double> v = domain == Domain::continuous
                                     ? std::complex<double>(0.0, omega)
                                     : std::exp(std::complex<double>(0.0, omega * ts));
        std::complex<double> nsum = 0.0, dsum = 0.0;
        for (double c : num) nsum = nsum * v + c;
        for (double c : den) dsum = dsum * v + c;
        return nsum / dsum;
    }

    double dc_gain() const {
        double nsum = 0.0, dsum = 0.0;
        for (double c : num) nsum += c;
        for (double c : den) dsum += c;
        if (domain == Domain::continuous) {
            nsum = num.back();
            dsum = den.back();
        }
        return nsum / dsum;
    }
};

/// Roots of a real polynomial (descending coefficients) via the companion
/// matrix eigenvalues.
inline std::vector<std::complex<double>> poly_roots(const std::vector<double>& coeffs) {
    // strip leading zeros
    std::size_t first = 0;
    while (first < coeffs.size() && coeffs[first] == 0.0) ++first;
    std::size_t deg = coeffs.size() - first;
    if (deg <= 1) throw InvalidArgument("poly_roots: degree must be >= 1");
    --deg;

    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(deg),
                                                      static_cast<Eigen::Index>(deg));
    for (std::size_t i = 0; i < deg; ++i) {
        companion(0, static_cast<Eigen::Index>(i)) = -coeffs[first + 1 + i] / coeffs[first];
        if (i + 1 < deg) companion(static_cast<Eigen::Index>(i) + 1, static_cast<Eigen::Index>(i)) = 1.0;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
    std::vector<std::complex<double>> roots(deg);
    for (std::size_t i = 0; i < deg; ++i)
        roots[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
    return roots;
}

namespace detail {

inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
    return r;
}

// (p0*x + p1)^k as descending coefficients
inline std::vector<double> linear_power(double p0, double p1, std::size_t k) {
    std::vector<double> r{1.0};
    for (std::size_t i = 0; i < k; ++i) r = poly_mul(r, {p0, p1});
    return r;
}

// Substitute a Moebius map x -> (a*x + b)/(c*x + d) into a degree-n rational
// function given by descending num/den coefficients; both get multiplied by
// (c*x + d)^n so the result is again polynomial.
inline std::pair<std::vector<double>, std::vector<double>> moebius_substitute(
    const std::vector<double>& num, const std::vector<double>& den, double a, double b, double c,
    double d) {
    const std::size_t n = den.size() - 1;
    std::vector<double> rnum(n + 1, 0.0), rden(n + 1, 0.0);
    for (std::size_t i = 0; i <= n; ++i) {
        auto term = poly_mul(linear_power(a, b, n - i), linear_power(c, d, i));
        for (std::size_t j = 0; j < term.size(); ++j) {
            rnum[j] += num[i] * term[j];
            rden[j] += den[i] * term[j];
        }
    }
    return {rnum, rden};
}

inline RationalTransferFunction normalize_monic(std::vector<double> num, std::vector<double> den,
                                                RationalTransferFunction::Domain domain, double ts) {
    double scale = 0.0;
    for (double v : den) scale = std::max(scale, std::abs(v));
    if (std::abs(den[0]) < 1e-12 * scale)
        throw NumericFailure("transfer function conversion: singular bilinear map");
    for (double& v : num) v /= den[0];
    for (std::size_t i = den.size(); i-- > 0;) den[i] /= den[0];
    RationalTransferFunction out;
    out.num = std::move(num);
    out.den = std::move(den);
    out.domain = domain;
    out.ts = ts;
    return out;
}

}  // namespace detail

/// Run a discrete biproper transfer function over an input series with
/// quiescent initial conditions:
///   y[k] = sum_i num[i] u[k-i] - sum_{i>=1} den[i] y[k-i].
inline TimeSeries simulate_discrete_tf(const RationalTransferFunction& tf, const TimeSeries& u) {
    tf.check_valid();
    if (tf.domain != RationalTransferFunction::Domain::discrete)
        throw InvalidArgument("simulate_discrete_tf: transfer function must be discrete");
    if (std::abs(tf.ts - u.dt) > 1e-12 * u.dt)
        throw InvalidArgument("simulate_discrete_tf: Ts does not match the input sample period");
    const std::size_t n = tf.order();
    TimeSeries y = u;
    for (std::size_t k = 0; k < u.size(); ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i <= n && i <= k; ++i) acc += tf.num[i] * u.values[k - i];
        for (std::size_t i = 1; i <= n && i <= k; ++i) acc -= tf.den[i] * y.values[k - i];
        y.values[k] = acc;
    }
    return y;
}

/// Bilinear (trapezoidal) transform, continuous -> discrete: s = (2/Ts)(z-1)/(z+1).
inline RationalTransferFunction to_discrete(const RationalTransferFunction& tf, double ts) {
    tf.check_valid();
    if (tf.domain != RationalTransferFunction::Domain::continuous)
        throw InvalidArgument("to_discrete: expected a continuous-time transfer function");
    if (ts <= 0.0) throw InvalidArgument("to_discrete: Ts must be > 0");
    const double k = 2.0 / ts;
    auto [num, den] = detail::moebius_substitute(tf.num, tf.den, k, -k, 1.0, 1.0);
    return detail::normalize_monic(std::move(num), std::move(den),
                                   RationalTransferFunction::Domain::discrete, ts);
}

/// Bilinear transform, discrete -> continuous: z = (1 + s Ts/2)/(1 - s Ts/2).
inline RationalTransferFunction to_continuous(const RationalTransferFunction& tf, double ts) {
    tf.check_valid();
    if (tf.domain != RationalTransferFunction::Domain::discrete)
        throw InvalidArgument("to_continuous: expected a discrete-time transfer function");
    if (ts <= 0.0) throw InvalidArgument("to_continuous: Ts must be > 0");
    const double half = ts / 2.0;
    auto [num, den] = detail::moebius_substitute(tf.num, tf.den, half, 1.0, -half, 1.0);
    return detail::normalize_monic(std::move(num), std::move(den),
                                   RationalTransferFunction::Domain::continuous, ts);
}

/// Whether any zero sits exactly on (or numerically near) the imaginary axis;
/// such zeros are left unmodified by invert_tf and the inverse is marginally
/// stable.
inline bool has_imaginary_axis_zero(const RationalTransferFunction& tf, double tol = 1e-9) {
    if (tf.order() == 0) return false;
    for (const auto& z : poly_roots(tf.num))
        if (std::abs(z.real()) <= tol) return true;
    return false;
}

/// Invert a continuous biproper transfer function. Nonminimum-phase zeros are
/// mirrored about the imaginary axis (Re -> -Re) before swapping numerator and
/// denominator, which preserves the gain magnitude at every frequency.
inline RationalTransferFunction invert_tf(const RationalTransferFunction& tf) {
    tf.check_valid();
    if (tf.domain != RationalTransferFunction::Domain::continuous)
        throw InvalidArgument("invert_tf: expected a continuous-time transfer function");
    bool all_zero = true;
    for (double v : tf.num) all_zero = all_zero && v == 0.0;
    if (all_zero) throw InvalidArgument("invert_tf: numerator is identically zero");
    if (tf.num[0] == 0.0)
        throw InvalidArgument("invert_tf: numerator leading coefficient is zero (not biproper)");
    if (tf.order() == 0)
        return detail::normalize_monic(tf.den, tf.num, RationalTransferFunction::Domain::continuous,
                                       tf.ts);

    auto zeros = poly_roots(tf.num);
    // Mirroring a factor (s - z) to (s + z) keeps |H(i*omega)| but flips the
    // sign of the factor's value at s = 0. The all-pass factorization of a real
    // right-half-plane zero is (s - z) = -(s + z) * (z - s)/(z + s), so the
    // minimum-phase replacement carries a minus sign; complex-conjugate pairs
    // contribute the sign twice and cancel.
    double sign = 1.0;
    for (auto& z : zeros)
        if (z.real() > 0.0) {
            z = std::complex<double>(-z.real(), z.imag());
            if (std::abs(z.imag()) <= 1e-12 * std::abs(z.real())) sign = -sign;
        }

    // rebuild the mirrored numerator; roots come in conjugate pairs so the
    // imaginary parts cancel
    std::vector<std::complex<double>> poly{sign * tf.num[0]};
    for (const auto& z : zeros) {
        std::vector<std::complex<double>> next(poly.size() + 1, 0.0);
        for (std::size_t i = 0; i < poly.size(); ++i) {
            next[i] += poly[i];
            next[i + 1] -= poly[i] * z;
        }
        poly = std::move(next);
    }
    std::vector<double> mirrored(poly.size());
    for (std::size_t i = 0; i < poly.size(); ++i) mirrored[i] = poly[i].real();

    return detail::normalize_monic(tf.den, std::move(mirrored),
                                   RationalTransferFunction::Domain::continuous, tf.ts);
}

}  // namespace viscoclamp

#endif
