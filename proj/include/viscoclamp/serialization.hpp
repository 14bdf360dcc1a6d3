#ifndef VISCOCLAMP_SERIALIZATION_HPP
#define VISCOCLAMP_SERIALIZATION_HPP

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "viscoclamp/control.hpp"
#include "viscoclamp/errors.hpp"
#include "viscoclamp/plant.hpp"
#include "viscoclamp/sysid.hpp"

namespace viscoclamp {

using json = nlohmann::json;

// ---- model files -----------------------------------------------------------

inline json maxwell_to_json(const MaxwellParams& p, double f0) {
    return json{{"k1", p.k1}, {"k2", p.k2},           {"c", p.c},
                {"n", p.n},   {"F0", f0},             {"L0", unstrained_length(p, f0)}};
}

inline std::pair<MaxwellParams, double> maxwell_from_json(const json& j) {
    MaxwellParams p;
    p.k1 = j.at("k1").get<double>();
    p.k2 = j.at("k2").get<double>();
    p.c = j.at("c").get<double>();
    p.n = j.at("n").get<double>();
    return {p, j.at("F0").get<double>()};
}

inline json tf_to_json(const RationalTransferFunction& tf) {
    return json{{"order", tf.order()},
                {"num", tf.num},
                {"den", tf.den},
                {"domain", tf.domain == RationalTransferFunction::Domain::discrete ? "discrete"
                                                                                   : "continuous"},
                {"Ts", tf.ts}};
}

inline RationalTransferFunction tf_from_json(const json& j) {
    RationalTransferFunction tf;
    tf.num = j.at("num").get<std::vector<double>>();
    tf.den = j.at("den").get<std::vector<double>>();
    tf.domain = j.at("domain").get<std::string>() == "discrete"
                    ? RationalTransferFunction::Domain::discrete
                    : RationalTransferFunction::Domain::continuous;
    tf.ts = j.at("Ts").get<double>();
    tf.check_valid();
    return tf;
}

// ---- fit reports ------------------------------------------------------------

inline json fit_to_json(const FitReport& fit, double f0, std::uint64_t seed,
                        const EstimationOptions& opts = {}) {
    json j{{"estimation_nrmse", fit.estimation_nrmse},
           {"validation_nrmse", fit.validation_nrmse},
           {"iterations", fit.iterations},
           {"converged", fit.converged},
           {"seed", seed},
           {"options",
            {{"alpha", opts.regularization_alpha},
             {"fix_c", opts.fix_c ? json(*opts.fix_c) : json(nullptr)},
             {"max_iterations", opts.max_iterations},
             {"tolerance", opts.tolerance}}}};
    if (fit.maxwell) {
        j["kind"] = "nonlinear";
        j["model"] = maxwell_to_json(*fit.maxwell, f0);
    } else if (fit.tf) {
        j["kind"] = "linear";
        j["model"] = tf_to_json(*fit.tf);
    }
    return j;
}

inline FitReport fit_from_json(const json& j) {
    FitReport fit;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "nonlinear") {
        fit.maxwell = maxwell_from_json(j.at("model")).first;
    } else {
        fit.tf = tf_from_json(j.at("model"));
    }
    fit.estimation_nrmse = j.at("estimation_nrmse").get<double>();
    fit.validation_nrmse = j.at("validation_nrmse").get<double>();
    fit.iterations = j.at("iterations").get<std::size_t>();
    fit.converged = j.at("converged").get<bool>();
    return fit;
}

// ---- plant files ------------------------------------------------------------

inline json plant_to_json(const VirtualPlant& p) {
    json branches = json::array();
    for (const auto& b : p.branches) branches.push_back({{"k2", b.k2}, {"c", b.c}});
    return json{{"k1", p.k1},
                {"n", p.n},
                {"branches", branches},
                {"isometric_force", p.isometric_force},
                {"io_delay_samples", p.io_delay_samples},
                {"transducer",
                 {{"natural_freq_hz", p.transducer_natural_freq_hz},
                  {"damping_ratio", p.transducer_damping_ratio}}},
                {"actuator_bandwidth_hz", p.actuator_bandwidth_hz},
                {"noise_std", p.noise_std},
                {"contractile_gain", p.contractile_gain},
                {"drift_v_per_s", p.drift_v_per_s},
                {"conversions",
                 {{"force_mn_per_v", p.force_conv_mn_per_v},
                  {"length_mm_per_v", p.length_conv_mm_per_v}}},
                {"seed", p.seed}};
}

inline VirtualPlant plant_from_json(const json& j) {
    VirtualPlant p;
    p.k1 = j.at("k1").get<double>();
    p.n = j.at("n").get<double>();
    p.branches.clear();
    for (const auto& b : j.at("branches"))
        p.branches.push_back({b.at("k2").get<double>(), b.at("c").get<double>()});
    p.isometric_force = j.at("isometric_force").get<double>();
    p.io_delay_samples = j.at("io_delay_samples").get<std::size_t>();
    p.transducer_natural_freq_hz = j.at("transducer").at("natural_freq_hz").get<double>();
    p.transducer_damping_ratio = j.at("transducer").at("damping_ratio").get<double>();
    p.actuator_bandwidth_hz = j.at("actuator_bandwidth_hz").get<double>();
    p.noise_std = j.at("noise_std").get<double>();
    p.contractile_gain = j.at("contractile_gain").get<double>();
    p.drift_v_per_s = j.at("drift_v_per_s").get<double>();
    p.force_conv_mn_per_v = j.at("conversions").at("force_mn_per_v").get<double>();
    p.length_conv_mm_per_v = j.at("conversions").at("length_mm_per_v").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.check_valid();
    return p;
}

// ---- file helpers -----------------------------------------------------------

inline void write_json_file(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return json::parse(is);
}

/// Clamp trace CSV: time_s,r_v,y_v,e_v,u_ff_v,u_fb_v,u_v at 9 significant digits.
inline void write_clamp_csv(std::ostream& os, const LoopTraces& tr) {
    os << "time_s,r_v,y_v,e_v,u_ff_v,u_fb_v,u_v\n";
    char buf[160];
    for (std::size_t k = 0; k < tr.r.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", tr.r.time(k),
                      tr.r.values[k], tr.y.values[k], tr.e.values[k], tr.u_ff.values[k],
                      tr.u_fb.values[k], tr.u.values[k]);
        os << buf;
    }
}

/// Identification data CSV: time_s,input_v,output_v at 9 significant digits.
inline void write_io_csv(std::ostream& os, const IoRecord& io) {
    if (io.input.size() != io.output.size())
        throw InvalidArgument("write_io_csv: input/output length mismatch");
    os << "time_s,input_v,output_v\n";
    char buf[96];
    for (std::size_t k = 0; k < io.input.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", io.input.time(k), io.input.values[k],
                      io.output.values[k]);
        os << buf;
    }
}

inline IoRecord read_io_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("read_io_csv: empty stream");
    IoRecord io;
    std::vector<double> times;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto c1 = line.find(',');
        auto c2 = line.find(',', c1 == std::string::npos ? 0 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw InvalidArgument("read_io_csv: malformed row: " + line);
        times.push_back(std::stod(line.substr(0, c1)));
        io.input.values.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        io.output.values.push_back(std::stod(line.substr(c2 + 1)));
    }
    if (io.input.values.empty()) throw InvalidArgument("read_io_csv: no samples");
    io.input.t_start = io.output.t_start = times.front();
    double dt = times.size() > 1
                    ? (times.back() - times.front()) / static_cast<double>(times.size() - 1)
                    : 1e-4;
    io.input.dt = io.output.dt = dt;
    return io;
}

}  // namespace viscoclamp

#endif
