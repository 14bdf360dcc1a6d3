#ifndef VISCOCLAMP_SIGNALS_HPP
#define VISCOCLAMP_SIGNALS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "viscoclamp/errors.hpp"

namespace viscoclamp {

/// Uniformly sampled signal. Values are in volts unless stated otherwise.
struct TimeSeries {
    double t_start = 0.0;
    double dt = 1e-4;  // 10 kHz sampling by default
    std::vector<double> values;

    TimeSeries() = default;
    TimeSeries(double t0, double step, std::vector<double> v)
        : t_start(t0), dt(step), values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double time(std::size_t i) const { return t_start + static_cast<double>(i) * dt; }
    double t_end() const { return time(values.empty() ? 0 : values.size() - 1); }

    /// Index of the first sample at or after time t (clamped to the valid range).
    std::size_t index_at(double t) const {
        if (values.empty()) return 0;
        double k = std::ceil((t - t_start) / dt - 1e-9);
        if (k < 0) k = 0;
        if (k > static_cast<double>(values.size() - 1)) k = static_cast<double>(values.size() - 1);
        return static_cast<std::size_t>(k);
    }

    void check_valid() const {
        if (dt <= 0.0) throw InvalidArgument("TimeSeries: dt must be > 0");
        if (values.empty()) throw InvalidArgument("TimeSeries: length must be >= 1");
        for (double v : values)
            if (!std::isfinite(v)) throw InvalidArgument("TimeSeries: non-finite sample");
    }
};

/// Input-output pair for system identification (length command in, force out).
struct IoRecord {
    TimeSeries input;
    TimeSeries output;
};

/// Affine scaling: original = scaled * gain + offset.
struct ScaleInfo {
    double offset = 0.0;
    double gain = 1.0;
};

/// Causal moving mean. The first window-1 samples average the available prefix.
inline TimeSeries moving_average(const TimeSeries& s, std::size_t window) {
    if (window == 0 || window > s.size())
        throw InvalidArgument("moving_average: window must be in [1, length]");
    TimeSeries out = s;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        acc += s.values[i];
        if (i >= window) acc -= s.values[i - window];
        std::size_t n = std::min(i + 1, window);
        out.values[i] = acc / static_cast<double>(n);
    }
    return out;
}

/// Centered sliding median; edge windows are shrunk to stay inside the signal.
inline TimeSeries median_filter(const TimeSeries& s, std::size_t window) {
    if (window % 2 == 0) throw InvalidArgument("median_filter: window must be odd");
    if (window > s.size()) throw InvalidArgument("median_filter: window exceeds length");
    TimeSeries out = s;
    const std::size_t half = window / 2;
    std::vector<double> buf;
    buf.reserve(window);
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t lo = i >= half ? i - half : 0;
        std::size_t hi = std::min(i + half, s.size() - 1);
        // keep the window symmetric when clamped so the center stays at i
        std::size_t r = std::min(i - lo, hi - i);
        lo = i - r;
        hi = i + r;
        buf.assign(s.values.begin() + static_cast<std::ptrdiff_t>(lo),
                   s.values.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
        auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
        std::nth_element(buf.begin(), mid, buf.end());
        out.values[i] = *mid;
    }
    return out;
}

/// Deterministic standard-normal sampler (Box-Muller over mt19937_64), so that
/// generated noise is bit-identical across platforms and standard libraries.
class GaussianSampler {
  public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_open();
        double u2 = uniform_open();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

  private:
    double uniform_open() {
        // (0, 1), never exactly 0 so the log is finite
        return (static_cast<double>(rng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Zero-mean Gaussian noise truncated to [-bound, bound] by resampling.
inline TimeSeries truncated_gaussian_noise(std::uint64_t seed, double std_dev, double bound,
                                           std::size_t count, double dt = 1e-4) {
    if (std_dev <= 0.0) throw InvalidArgument("truncated_gaussian_noise: std must be > 0");
    if (bound < std_dev) throw InvalidArgument("truncated_gaussian_noise: bound must be >= std");
    GaussianSampler g(seed);
    TimeSeries out;
    out.dt = dt;
    out.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        double v;
        do {
            v = std_dev * g.next();
        } while (std::abs(v) > bound);
        out.values[i] = v;
    }
    return out;
}

/// Remove a known input->output delay by advancing the output and truncating
/// both series to the common span.
inline IoRecord align_delay(const IoRecord& io, std::size_t delay_samples) {
    if (delay_samples >= io.output.size())
        throw InvalidArgument("align_delay: delay exceeds record length");
    IoRecord out;
    std::size_t n = std::min(io.input.size(), io.output.size()) - delay_samples;
    out.input = io.input;
    out.input.values.assign(io.input.values.begin(),
                            io.input.values.begin() + static_cast<std::ptrdiff_t>(n));
    out.output = io.output;
    out.output.values.assign(io.output.values.begin() + static_cast<std::ptrdiff_t>(delay_samples),
                             io.output.values.begin() + static_cast<std::ptrdiff_t>(delay_samples + n));
    return out;
}

/// Affine map of a non-constant series onto [-1, 1]; the ScaleInfo inverts it.
inline std::pair<TimeSeries, ScaleInfo> normalize_unit(const TimeSeries& s) {
    auto [mn, mx] = std::minmax_element(s.values.begin(), s.values.end());
    if (!(*mx > *mn)) throw DegenerateInput("normalize_unit: constant series");
    ScaleInfo info;
    info.offset = 0.5 * (*mx + *mn);
    info.gain = 0.5 * (*mx - *mn);
    TimeSeries out = s;
    for (double& v : out.values) v = (v - info.offset) / info.gain;
    return {out, info};
}

inline TimeSeries denormalize(const TimeSeries& s, const ScaleInfo& info) {
    TimeSeries out = s;
    for (double& v : out.values) v = v * info.gain + info.offset;
    return out;
}

/// Subtract the first sample so the series starts at 0; returns that offset.
inline std::pair<TimeSeries, double> remove_offset(const TimeSeries& s) {
    if (s.values.empty()) throw InvalidArgument("remove_offset: empty series");
    double offset = s.values.front();
    TimeSeries out = s;
    for (double& v : out.values) v -= offset;
    return {out, offset};
}

/// Root mean square error normalized by the RMS of the observed signal.
inline double nrmse(const TimeSeries& observed, const TimeSeries& simulated) {
    if (observed.size() != simulated.size())
        throw InvalidArgument("nrmse: length mismatch");
    double se = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        double r = observed.values[i] - simulated.values[i];
        se += r * r;
        sy += observed.values[i] * observed.values[i];
    }
    if (sy == 0.0) throw DegenerateInput("nrmse: observed signal is identically zero");
    return std::sqrt(se / sy);
}

/// Serialize as `time_s,value` CSV with 9 significant digits.
inline void write_csv(std::ostream& os, const TimeSeries& s) {
    os << "time_s,value\n";
    char buf[64];
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g\n", s.time(i), s.values[i]);
        os << buf;
    }
}

inline TimeSeries read_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("read_csv: empty stream");
    TimeSeries s;
    std::vector<double> times;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw InvalidArgument("read_csv: malformed row: " + line);
        times.push_back(std::stod(line.substr(0, comma)));
        s.values.push_back(std::stod(line.substr(comma + 1)));
    }
    if (s.values.empty()) throw InvalidArgument("read_csv: no samples");
    s.t_start = times.front();
    s.dt = times.size() > 1 ? (times.back() - times.front()) / static_cast<double>(times.size() - 1)
                            : 1e-4;
    return s;
}

}  // namespace viscoclamp

#endif
