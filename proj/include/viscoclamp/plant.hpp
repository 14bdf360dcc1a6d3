#ifndef VISCOCLAMP_PLANT_HPP
#define VISCOCLAMP_PLANT_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "viscoclamp/errors.hpp"
#include "viscoclamp/maxwell.hpp"
#include "viscoclamp/signals.hpp"

namespace viscoclamp {

/// One Maxwell branch of the ground-truth tissue: spring k2 in series with
/// damper c. A branch with k2 == 0 is inert.
struct MaxwellBranch {
    double k2 = 0.0;
    double c = 1.0;
};

/// Ground-truth tissue plus instrumentation standing in for the real rig.
struct VirtualPlant {
    // tissue truth: power-law spring + up to two Maxwell branches
    double k1 = 10.0;
    double n = 5.0;
    std::vector<MaxwellBranch> branches{{1.0, 0.01}};
    double isometric_force = 2.0;  // tissue force at reference length, V

    // instrumentation
    std::size_t io_delay_samples = 10;
    double transducer_natural_freq_hz = 140.0;  // inf disables the filter
    double transducer_damping_ratio = 0.4;
    double actuator_bandwidth_hz = 2000.0;  // inf disables the lag
    double noise_std = 0.004;               // measurement noise, V
    double contractile_gain = 1.0;
    double drift_v_per_s = 0.0;  // slow transducer force drift, off by default
    double force_conv_mn_per_v = 5.0;
    double length_conv_mm_per_v = 0.3;
    std::uint64_t seed = 0;

    void check_valid() const {
        if (noise_std < 0.0) throw InvalidArgument("VirtualPlant: noise_std must be >= 0");
        if (contractile_gain <= 0.0 || contractile_gain > 1.0)
            throw InvalidArgument("VirtualPlant: contractile_gain must be in (0, 1]");
        if (branches.empty() || branches.size() > 2)
            throw InvalidArgument("VirtualPlant: one or two Maxwell branches supported");
        if (k1 <= 0.0 || isometric_force <= 0.0)
            throw InvalidArgument("VirtualPlant: k1 and isometric force must be > 0");
    }
};

struct PlantPreset {
    std::string name;  // matched | mismatched | asm-like | fdb-like
    // optional overrides applied after the preset is drawn
    double noise_std = -1.0;          // < 0 means keep preset value
    double io_delay_samples = -1.0;   // < 0 means keep preset value
    double transducer_freq_hz = -1.0;
    double actuator_bandwidth_hz = -1.0;
    double contractile_gain = -1.0;
};

/// Build a fully determined plant from a named preset and a seed. The matched
/// preset draws its truth near the nonlinear estimator's initial guesses; the
/// mismatched preset adds a second, slower Maxwell branch so its structure is
/// strictly richer than the estimation model.
inline VirtualPlant make_plant(const PlantPreset& preset, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    auto jitter = [&](double scale) {
        double u = (static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0)) * 2.0 - 1.0;
        return 1.0 + scale * u;
    };

    VirtualPlant p;
    p.seed = seed;
    if (preset.name == "matched") {
        p.k1 = 10.0 * jitter(0.08);
        p.n = 5.0 * jitter(0.04);
        p.branches = {{1.0 * jitter(0.08), 0.01 * jitter(0.08)}};
    } else if (preset.name == "mismatched") {
        p.k1 = 10.0 * jitter(0.08);
        p.n = 5.0 * jitter(0.04);
        double k2 = 1.0 * jitter(0.08);
        double c = 0.01 * jitter(0.08);
        p.branches = {{k2, c}, {0.3 * k2, 5.0 * c}};
    } else if (preset.name == "asm-like") {
        p.k1 = 15.0 * jitter(0.08);
        p.n = 5.0 * jitter(0.04);
        p.branches = {{1.5 * jitter(0.08), 0.012 * jitter(0.08)}};
        p.isometric_force = 2.5;
    } else if (preset.name == "fdb-like") {
        p.k1 = 6.0 * jitter(0.08);
        p.n = 4.5 * jitter(0.04);
        p.branches = {{0.8 * jitter(0.08), 0.008 * jitter(0.08)}};
        p.isometric_force = 1.5;
        p.noise_std = 0.008;
    } else {
        throw InvalidArgument("make_plant: unknown preset '" + preset.name + "'");
    }

    if (preset.noise_std >= 0.0) p.noise_std = preset.noise_std;
    if (preset.io_delay_samples >= 0.0)
        p.io_delay_samples = static_cast<std::size_t>(preset.io_delay_samples);
    if (preset.transducer_freq_hz >= 0.0) p.transducer_natural_freq_hz = preset.transducer_freq_hz;
    if (preset.actuator_bandwidth_hz >= 0.0) p.actuator_bandwidth_hz = preset.actuator_bandwidth_hz;
    if (preset.contractile_gain >= 0.0) p.contractile_gain = preset.contractile_gain;
    p.check_valid();
    return p;
}

/// Scale the plant's measured steady-state force, replicating the reduced
/// contractile force experiment.
inline VirtualPlant set_contractile_gain(VirtualPlant plant, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw InvalidArgument("set_contractile_gain: fraction must be in (0, 1]");
    plant.contractile_gain = fraction;
    return plant;
}

/// Owns the plant state for one simulation loop: actuator lag -> io delay ->
/// tissue ODE -> transducer filter -> gain, drift and measurement noise.
class PlantSim {
  public:
    struct Output {
        double y_measured;  // with noise
        double z_clean;     // before noise
    };

    explicit PlantSim(const VirtualPlant& plant)
        : cfg_(plant), noise_(plant.seed ^ 0x5bf03635ull) {
        cfg_.check_valid();
        l0_ = std::pow(cfg_.isometric_force / cfg_.k1, 1.0 / cfg_.n);
        reset();
    }

    const VirtualPlant& config() const { return cfg_; }

    /// Return to the isometric steady state at reference length (fresh noise
    /// stream is kept; pass reseed to restart it).
    void reset() {
        actuator_ = 0.0;
        x_prev_ = 0.0;
        delay_line_.assign(cfg_.io_delay_samples, 0.0);
        delay_head_ = 0;
        state_ = {0.0, 0.0, cfg_.isometric_force, 0.0};
        t_ = 0.0;
    }

    void reseed(std::uint64_t seed) { noise_ = GaussianSampler(seed); }

    double isometric_measured_force() const {
        return cfg_.contractile_gain * cfg_.isometric_force;
    }

    /// Advance the plant one tick with length command u (volts) held over dt.
    Output step(double u, double dt) {
        if (dt <= 0.0) throw InvalidArgument("plant_step: dt must be > 0");

        // first-order actuator lag, exact update for a held input
        double v = u;
        if (std::isfinite(cfg_.actuator_bandwidth_hz)) {
            double wa = 2.0 * 3.14159265358979323846 * cfg_.actuator_bandwidth_hz;
            actuator_ += (1.0 - std::exp(-wa * dt)) * (u - actuator_);
            v = actuator_;
        }

        // io delay on the length signal reaching the tissue
        double x_new = v;
        if (!delay_line_.empty()) {
            x_new = delay_line_[delay_head_];
            delay_line_[delay_head_] = v;
            delay_head_ = (delay_head_ + 1) % delay_line_.size();
        }

        // tissue + transducer integrated jointly; x is linear over the tick
        const double xdot = (x_new - x_prev_) / dt;
        const double x0 = x_new - xdot * dt;
        const double t0 = t_;
        const bool filter = std::isfinite(cfg_.transducer_natural_freq_hz);
        const double wn = 2.0 * 3.14159265358979323846 * cfg_.transducer_natural_freq_hz;
        const double zeta = cfg_.transducer_damping_ratio;

        // slack tissue carries no spring tension: the power-law branch clips at
        // zero instead of failing, so aggressive controllers see a soft floor
        // the way a real preparation would
        auto tissue_force = [&](double xi, const std::array<double, 4>& s, double) {
            double base = std::max(xi + l0_, 0.0);
            return cfg_.k1 * std::pow(base, cfg_.n) + s[0] + s[1];
        };
        auto ode = [&](double t, const std::array<double, 4>& s) {
            double xi = x0 + xdot * (t - t0);
            std::array<double, 4> d{0.0, 0.0, 0.0, 0.0};
            for (std::size_t b = 0; b < cfg_.branches.size(); ++b) {
                const auto& br = cfg_.branches[b];
                d[b] = br.k2 > 0.0 ? br.k2 * (xdot - s[b] / br.c) : 0.0;
            }
            if (filter) {
                double ft = tissue_force(xi, s, t);
                d[2] = s[3];
                d[3] = wn * wn * (ft - s[2]) - 2.0 * zeta * wn * s[3];
            }
            return d;
        };
        state_ = rk4_step(ode, state_, t0, dt);
        t_ += dt;
        x_prev_ = x_new;

        double force = filter ? state_[2] : tissue_force(x_new, state_, t_);
        if (!filter) state_[2] = force;

        Output out;
        out.z_clean = cfg_.contractile_gain * force + cfg_.drift_v_per_s * t_;
        out.y_measured = out.z_clean + (cfg_.noise_std > 0.0 ? cfg_.noise_std * noise_.next() : 0.0);
        return out;
    }

    /// Drive the plant over a full input series and collect the measured output.
    TimeSeries run(const TimeSeries& u) {
        TimeSeries y = u;
        for (std::size_t k = 0; k < u.size(); ++k) y.values[k] = step(u.values[k], u.dt).y_measured;
        return y;
    }

  private:
    VirtualPlant cfg_;
    GaussianSampler noise_;
    double l0_ = 1.0;
    double actuator_ = 0.0;
    double x_prev_ = 0.0;
    std::vector<double> delay_line_;
    std::size_t delay_head_ = 0;
    std::array<double, 4> state_{};  // branch forces F2 x2, transducer pos/vel
    double t_ = 0.0;
};

}  // namespace viscoclamp

#endif
