#ifndef VISCOCLAMP_MAXWELL_HPP
#define VISCOCLAMP_MAXWELL_HPP

#include <array>
#include <cmath>
#include <cstddef>

#include "viscoclamp/errors.hpp"
#include "viscoclamp/signals.hpp"

namespace viscoclamp {

/// Parameters of the nonlinear model: one Maxwell branch (spring k2, damper c)
/// in parallel with a zeroth-order power-law spring k1*(x+L0)^n.
struct MaxwellParams {
    double k1 = 10.0;  // power-law spring coefficient, V^(1-n)
    double k2 = 1.0;   // Maxwell-branch spring, V/V
    double c = 0.01;   // viscous damping coefficient, s
    double n = 5.0;    // power-law exponent

    bool feasible() const {
        return k1 >= 0.0 && k2 >= 0.0 && c >= 1e-4 && c <= 1.0 && n >= 1.0 && k1 >= k2;
    }
    void check_feasible() const {
        if (!feasible()) throw InvalidArgument("MaxwellParams: constraint set violated");
    }
};

/// Classical fourth-order Runge-Kutta update for a scalar state.
template <class F>
double rk4_step(F&& f, double y, double t, double h) {
    double k1 = f(t, y);
    double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    double k4 = f(t + h, y + h * k3);
    double out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!std::isfinite(out)) throw NumericFailure("rk4_step: non-finite state", t);
    return out;
}

/// Classical fourth-order Runge-Kutta update for a fixed-size state vector.
template <std::size_t N, class F>
std::array<double, N> rk4_step(F&& f, const std::array<double, N>& y, double t, double h) {
    auto axpy = [](const std::array<double, N>& a, double s, const std::array<double, N>& b) {
        std::array<double, N> r;
        for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + s * b[i];
        return r;
    };
    std::array<double, N> k1 = f(t, y);
    std::array<double, N> k2 = f(t + 0.5 * h, axpy(y, 0.5 * h, k1));
    std::array<double, N> k3 = f(t + 0.5 * h, axpy(y, 0.5 * h, k2));
    std::array<double, N> k4 = f(t + h, axpy(y, h, k3));
    std::array<double, N> out;
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = y[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (!std::isfinite(out[i])) throw NumericFailure("rk4_step: non-finite state", t);
    }
    return out;
}

/// Projected unstrained length: the offset at which the power-law spring alone
/// carries the initial force, L0 = (F0/k1)^(1/n).
inline double unstrained_length(const MaxwellParams& p, double f0) {
    if (f0 <= 0.0) throw InvalidArgument("unstrained_length: F0 must be > 0");
    if (p.k1 <= 0.0) throw InvalidArgument("unstrained_length: k1 must be > 0");
    return std::pow(f0 / p.k1, 1.0 / p.n);
}

namespace detail {

// (x+L0)^(n-1); the power term is only defined for x+L0 > 0 when n is non-integer.
inline double power_term(const MaxwellParams& p, double x, double l0, double t) {
    double base = x + l0;
    if (base <= 0.0)
        throw NumericFailure("Maxwell power term: x + L0 <= 0 (slack region)", t);
    return std::pow(base, p.n - 1.0);
}

}  // namespace detail

/// Integrate the forward ODE
///   dF/dt = (k2 + k1*n*(x+L0)^(n-1)) dx/dt - (k2/c) F + (k1*k2/c) (x+L0)^n
/// over the sampled length input x. The input is treated as piecewise linear
/// between samples, so dx/dt is constant on each segment and x is interpolated
/// at the RK4 half steps. L0 is chosen so that the power-law spring carries all
/// of F0 at the initial length (isometric steady state).
inline TimeSeries simulate_forward(const MaxwellParams& p, const TimeSeries& x, double f0) {
    x.check_valid();
    if (f0 <= 0.0) throw InvalidArgument("simulate_forward: F0 must be > 0");
    const double l0 = unstrained_length(p, f0) - x.values.front();
    const double h = x.dt;

    TimeSeries out;
    out.t_start = x.t_start;
    out.dt = x.dt;
    out.values.resize(x.size());
    out.values[0] = f0;

    double f = f0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double x0 = x.values[k];
        const double xdot = (x.values[k + 1] - x.values[k]) / h;
        const double tk = x.time(k);
        auto ode = [&](double t, double fv) {
            double xi = x0 + xdot * (t - tk);
            double pw = detail::power_term(p, xi, l0, t);
            return (p.k2 + p.k1 * p.n * pw) * xdot - (p.k2 / p.c) * fv +
                   (p.k1 * p.k2 / p.c) * pw * (xi + l0);
        };
        f = rk4_step(ode, f, tk, h);
        out.values[k + 1] = f;
    }
    return out;
}

/// Integrate the inverse ODE
///   dx/dt = (dF/dt + (k2/c) F - (k1*k2/c) (x+L0)^n) / (k2 + k1*n*(x+L0)^(n-1))
/// over the sampled force input F, with the same piecewise-linear input model
/// as simulate_forward. L0 is chosen so that x0 is an equilibrium for F(0).
inline TimeSeries simulate_inverse(const MaxwellParams& p, const TimeSeries& f, double x0) {
    f.check_valid();
    if (f.values.front() <= 0.0)
        throw InvalidArgument("simulate_inverse: initial force must be > 0");
    const double l0 = unstrained_length(p, f.values.front()) - x0;
    const double h = f.dt;

    TimeSeries out;
    out.t_start = f.t_start;
    out.dt = f.dt;
    out.values.resize(f.size());
    out.values[0] = x0;

    double x = x0;
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        const double f0 = f.values[k];
        const double fdot = (f.values[k + 1] - f.values[k]) / h;
        const double tk = f.time(k);
        auto ode = [&](double t, double xv) {
            double fi = f0 + fdot * (t - tk);
            double pw = detail::power_term(p, xv, l0, t);
            double denom = p.k2 + p.k1 * p.n * pw;
            if (denom <= 0.0)
                throw NumericFailure("simulate_inverse: vanishing denominator", t);
            return (fdot + (p.k2 / p.c) * fi - (p.k1 * p.k2 / p.c) * pw * (xv + l0)) / denom;
        };
        x = rk4_step(ode, x, tk, h);
        out.values[k + 1] = x;
    }
    return out;
}

}  // namespace viscoclamp

#endif
