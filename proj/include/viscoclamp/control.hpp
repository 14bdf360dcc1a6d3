#ifndef VISCOCLAMP_CONTROL_HPP
#define VISCOCLAMP_CONTROL_HPP

#include <cmath>
#include <optional>
#include <string>

#include "viscoclamp/errors.hpp"
#include "viscoclamp/maxwell.hpp"
#include "viscoclamp/metrics.hpp"
#include "viscoclamp/plant.hpp"
#include "viscoclamp/signals.hpp"
#include "viscoclamp/transfer_function.hpp"

namespace viscoclamp {

/// Timing and level of one force clamp: isometric hold, reference ramp-down,
/// isotonic hold, control off.
struct ReferenceSpec {
    double level = 0.05;  // fraction of the reference force
    double f_ref = 1.0;   // reference contractile force, V
    double t0 = 0.08;     // clamp start, s
    double t1 = 0.10;     // end of the reference ramp-down, s
    double tf = 0.60;     // force control off, s
    double dt = 1e-4;

    void check_valid() const {
        if (level <= 0.0 || level >= 1.0) throw InvalidArgument("ReferenceSpec: level in (0,1)");
        if (!(t0 < t1 && t1 < tf)) throw InvalidArgument("ReferenceSpec: need t0 < t1 < tf");
        if (f_ref <= 0.0 || dt <= 0.0) throw InvalidArgument("ReferenceSpec: f_ref, dt > 0");
    }
};

struct PIGains {
    double kp = 0.0;
    double ki = 0.04;  // 1/s

    void check_valid() const {
        if (kp < 0.0 || ki < 0.0) throw InvalidArgument("PIGains: gains must be >= 0");
    }
};

enum class ClampMode { fb, ff, fffb };

inline std::string to_string(ClampMode m) {
    switch (m) {
        case ClampMode::fb: return "fb";
        case ClampMode::ff: return "ff";
        default: return "fffb";
    }
}

enum class ModelKind { none, linear, nonlinear };

/// All loop signals of one clamp, on the reference grid over [0, tf].
struct LoopTraces {
    TimeSeries r, e, u_ff, u_fb, u, v, z, y, d, n_meas;
};

struct ClampResult {
    LoopTraces traces;
    ClampMetrics metrics;
    ClampMode mode = ClampMode::fffb;
    ModelKind model_used = ModelKind::none;
};

/// Reference contractile force: mean of the final 100 force samples before
/// clamp initiation.
inline double reference_force(const TimeSeries& force_history) {
    if (force_history.size() < 100)
        throw InvalidArgument("reference_force: need at least 100 samples");
    double acc = 0.0;
    for (std::size_t i = force_history.size() - 100; i < force_history.size(); ++i)
        acc += force_history.values[i];
    return acc / 100.0;
}

/// F_ref until t0, linear ramp to level*F_ref over [t0, t1], then constant
/// until tf.
inline TimeSeries build_reference(const ReferenceSpec& spec) {
    spec.check_valid();
    TimeSeries r;
    r.dt = spec.dt;
    std::size_t count = static_cast<std::size_t>(std::llround(spec.tf / spec.dt)) + 1;
    r.values.resize(count);
    const double target = spec.level * spec.f_ref;
    for (std::size_t k = 0; k < count; ++k) {
        double t = r.time(k);
        if (t < spec.t0) {
            r.values[k] = spec.f_ref;
        } else if (t < spec.t1) {
            double frac = (t - spec.t0) / (spec.t1 - spec.t0);
            r.values[k] = spec.f_ref + frac * (target - spec.f_ref);
        } else {
            r.values[k] = target;
        }
    }
    return r;
}

/// One PI update with rectangular integration.
inline std::pair<double, double> pi_step(const PIGains& gains, double e_k, double integral_state,
                                         double dt) {
    if (dt <= 0.0) throw InvalidArgument("pi_step: dt must be > 0");
    double integral = integral_state + e_k * dt;
    return {gains.kp * e_k + gains.ki * integral, integral};
}

/// Inversion-based feedforward from the nonlinear model: the reference force
/// drives the inverse ODE, emitting a length-command series.
inline TimeSeries feedforward_nonlinear(const MaxwellParams& p, const TimeSeries& r,
                                        double x0 = 0.0) {
    p.check_feasible();
    return simulate_inverse(p, r, x0);
}

/// Inversion-based feedforward from the linear model: mirror nonminimum-phase
/// zeros, invert, discretize at the reference rate, simulate, then median
/// filter away the initial feedthrough spike. The reference must be in the
/// model's offset convention (force deviation for an offset-removed model).
inline TimeSeries feedforward_linear(const RationalTransferFunction& tf_c_model,
                                     const TimeSeries& r, std::size_t median_window = 21) {
    RationalTransferFunction inv = invert_tf(tf_c_model);
    TimeSeries u = simulate_discrete_tf(to_discrete(inv, r.dt), r);
    if (median_window > u.size()) median_window = u.size() | 1;
    return median_filter(u, median_window);
}

/// Slope of a least-squares line fit to the length trace over [t3, t4].
inline double estimate_shortening_velocity(const TimeSeries& length_trace, double t3 = 0.14,
                                           double t4 = 0.19) {
    if (length_trace.t_start > t3 + 1e-12 || length_trace.t_end() < t4 - 1e-12)
        throw InvalidArgument("estimate_shortening_velocity: trace does not cover [t3, t4]");
    std::size_t lo = length_trace.index_at(t3);
    std::size_t hi = length_trace.index_at(t4);
    double st = 0.0, sy = 0.0, sty = 0.0, stt = 0.0;
    double count = static_cast<double>(hi - lo + 1);
    for (std::size_t i = lo; i <= hi; ++i) {
        double t = length_trace.time(i);
        double v = length_trace.values[i];
        st += t;
        sy += v;
        sty += t * v;
        stt += t * t;
    }
    return (count * sty - st * sy) / (count * stt - st * st);
}

struct ClampOptions {
    double saturation_v = 10.0;   // actuator limit on the plant input
    double release_s = 0.05;      // length ramp back to 0 V after tf
    ModelKind model_used = ModelKind::none;
};

/// Execute one force clamp against the virtual plant. Feedback is active for
/// t >= t0; the feedforward series (if any) contributes only for t >= t0. The
/// recorded u is the unsaturated sum u_ff + u_fb; the plant input v is the
/// saturated command plus disturbance. After tf the control is turned off and
/// the length is ramped back to 0 V (not recorded in the traces).
inline ClampResult run_clamp(PlantSim& plant, const ReferenceSpec& spec, const PIGains& gains,
                             const std::optional<TimeSeries>& ff, ClampMode mode,
                             const ClampOptions& opts = {}) {
    spec.check_valid();
    gains.check_valid();
    TimeSeries r = build_reference(spec);
    if (ff && mode != ClampMode::fb) {
        if (ff->size() != r.size() || std::abs(ff->dt - r.dt) > 1e-12)
            throw InvalidArgument("run_clamp: feedforward series does not match the reference grid");
    }
    if (mode != ClampMode::fb && !ff)
        throw InvalidArgument("run_clamp: feedforward series required for this mode");

    ClampResult result;
    result.mode = mode;
    result.model_used = opts.model_used;
    LoopTraces& tr = result.traces;
    for (TimeSeries* s : {&tr.r, &tr.e, &tr.u_ff, &tr.u_fb, &tr.u, &tr.v, &tr.z, &tr.y, &tr.d,
                          &tr.n_meas}) {
        s->t_start = 0.0;
        s->dt = spec.dt;
        s->values.assign(r.size(), 0.0);
    }
    tr.r = r;

    double integral = 0.0;
    double y_meas = spec.f_ref;
    for (std::size_t k = 0; k < r.size(); ++k) {
        const double t = r.time(k);
        const bool active = t >= spec.t0;

        double e = r.values[k] - y_meas;
        double u_ff_k = (mode != ClampMode::fb && active) ? ff->values[k] : 0.0;
        double u_fb_k = 0.0;
        if (mode != ClampMode::ff && active) {
            auto [u_try, integral_try] = pi_step(gains, e, integral, spec.dt);
            if (std::abs(u_ff_k + u_try) <= opts.saturation_v) {
                integral = integral_try;  // anti-windup: integrate only when unsaturated
                u_fb_k = u_try;
            } else {
                u_fb_k = gains.kp * e + gains.ki * integral;
            }
        }
        double u_k = u_ff_k + u_fb_k;
        double v_k = std::clamp(u_k, -opts.saturation_v, opts.saturation_v);

        auto out = plant.step(v_k, spec.dt);
        tr.e.values[k] = e;
        tr.u_ff.values[k] = u_ff_k;
        tr.u_fb.values[k] = u_fb_k;
        tr.u.values[k] = u_k;
        tr.v.values[k] = v_k;
        tr.z.values[k] = out.z_clean;
        tr.y.values[k] = out.y_measured;
        tr.n_meas.values[k] = out.y_measured - out.z_clean;
        y_meas = out.y_measured;
    }

    // control off: ramp the length command back to the reference length
    const double u_last = tr.v.values.back();
    const std::size_t release_ticks = static_cast<std::size_t>(std::llround(opts.release_s / spec.dt));
    for (std::size_t m = 1; m <= release_ticks; ++m) {
        double frac = static_cast<double>(m) / static_cast<double>(release_ticks);
        plant.step(u_last * (1.0 - frac), spec.dt);
    }

    // metrics over the clamp window [t0, tf]
    auto window = [&](const TimeSeries& s) {
        std::size_t lo = s.index_at(spec.t0);
        TimeSeries w;
        w.t_start = s.time(lo);
        w.dt = s.dt;
        w.values.assign(s.values.begin() + static_cast<std::ptrdiff_t>(lo), s.values.end());
        return w;
    };
    result.metrics.settling_time_ms = settling_time(tr.y, spec.f_ref, spec.level, spec.t0);
    result.metrics.overshoot_pct = overshoot(tr.y, spec.f_ref, spec.level * 100.0, spec.t0);
    result.metrics.nrmse_vs_reference = nrmse(window(tr.r), window(tr.y));
    if (mode != ClampMode::fb)
        result.metrics.nrmse_ff_vs_total = ff_fit(window(tr.u), window(tr.u_ff));
    result.metrics.shortening_velocity_v_per_s = estimate_shortening_velocity(tr.v);
    return result;
}

}  // namespace viscoclamp

#endif
