// viscoclamp: command-line front end for the force-clamp workbench.
//
// Subcommands: make-plant, design-input, estimate, validate, clamp,
// protocol {c1|c2|compare}, report. Exit code 0 only when every stage of the
// requested command succeeds.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "viscoclamp/harness.hpp"

namespace vc = viscoclamp;

namespace {

std::ifstream open_in(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return is;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    return os;
}

vc::json metrics_to_json(const vc::ClampMetrics& m) {
    vc::json j{{"overshoot_pct", m.overshoot_pct}, {"nrmse_ref", m.nrmse_vs_reference}};
    j["settling_ms"] = m.settling_time_ms ? vc::json(*m.settling_time_ms) : vc::json("not_settled");
    if (m.nrmse_ff_vs_total) j["ff_fit"] = *m.nrmse_ff_vs_total;
    if (m.shortening_velocity_v_per_s) j["shortening_velocity_v_per_s"] = *m.shortening_velocity_v_per_s;
    return j;
}

// parse a metrics.csv written by export_report back into rows
std::vector<vc::MetricsRow> read_metrics_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("metrics csv: empty stream");
    std::vector<vc::MetricsRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7) throw std::runtime_error("metrics csv: malformed row: " + line);
        vc::MetricsRow row;
        row.level_pct = std::stod(fields[0]);
        row.mode = fields[1];
        if (fields[2] != "not_settled") row.metrics.settling_time_ms = std::stod(fields[2]);
        row.metrics.overshoot_pct = std::stod(fields[3]);
        row.metrics.nrmse_vs_reference = std::stod(fields[4]);
        if (!fields[5].empty()) row.metrics.nrmse_ff_vs_total = std::stod(fields[5]);
        row.seed = std::stoull(fields[6]);
        rows.push_back(std::move(row));
    }
    return rows;
}

int run(int argc, char** argv) {
    CLI::App app{"viscoclamp: 2DOF force-clamp simulation workbench"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::uint64_t seed = 42;
    std::string out = "";
    std::string config_path = "";
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--out", out, "output file or directory");
    app.add_option("--config", config_path, "protocol configuration file (JSON)");

    // make-plant
    auto* mk = app.add_subcommand("make-plant", "write a virtual plant file from a preset");
    std::string preset = "matched";
    double noise_override = -1.0, delay_override = -1.0, gain_override = -1.0;
    mk->add_option("--preset", preset, "matched | mismatched | asm-like | fdb-like")
        ->capture_default_str();
    mk->add_option("--noise-std", noise_override, "override measurement noise std (V)");
    mk->add_option("--delay-samples", delay_override, "override io delay (samples)");
    mk->add_option("--contractile-gain", gain_override, "override contractile gain (0,1]");

    // design-input
    auto* di = app.add_subcommand("design-input", "write an identification input signal");
    std::string di_kind = "estimation";
    std::string di_input_kind = "nonlinear";
    double ref_length = 10.0;
    std::string di_plant = "";
    di->add_option("--kind", di_kind, "estimation | validation")->capture_default_str();
    di->add_option("--input-kind", di_input_kind, "linear | nonlinear (estimation only)")
        ->capture_default_str();
    di->add_option("--ref-length", ref_length, "reference length (V)")->capture_default_str();
    di->add_option("--plant", di_plant, "plant file; when given, emit input-output CSV");

    // estimate
    auto* est = app.add_subcommand("estimate", "fit a model to identification data");
    std::string est_kind = "nonlinear";
    std::size_t est_order = 0;
    double est_alpha = 0.0;
    double est_fix_c = -1.0;
    std::string est_in = "", est_val = "";
    std::size_t est_delay = 10;
    est->add_option("--kind", est_kind, "linear | nonlinear")->capture_default_str();
    est->add_option("--order", est_order, "linear model order (0 = select by validation)");
    est->add_option("--alpha", est_alpha, "regularization weight");
    est->add_option("--fix-c", est_fix_c, "hold c at this value");
    est->add_option("--in", est_in, "estimation data CSV (time_s,input_v,output_v)")->required();
    est->add_option("--val", est_val, "validation data CSV");
    est->add_option("--delay-samples", est_delay, "io delay removed before fitting")
        ->capture_default_str();
    double est_tf_freq = 0.0, est_tf_zeta = 0.4;
    est->add_option("--transducer-freq", est_tf_freq,
                    "calibrated transducer natural frequency (Hz, 0 = ignore)");
    est->add_option("--transducer-zeta", est_tf_zeta, "calibrated transducer damping ratio")
        ->capture_default_str();

    // validate
    auto* val = app.add_subcommand("validate", "score a model on fresh data");
    std::string val_model = "", val_in = "";
    std::size_t val_delay = 10;
    val->add_option("--model", val_model, "fit file (JSON)")->required();
    val->add_option("--in", val_in, "validation data CSV")->required();
    val->add_option("--delay-samples", val_delay, "io delay removed before scoring")
        ->capture_default_str();
    double val_tf_freq = 0.0, val_tf_zeta = 0.4;
    val->add_option("--transducer-freq", val_tf_freq,
                    "calibrated transducer natural frequency (Hz, 0 = ignore)");
    val->add_option("--transducer-zeta", val_tf_zeta, "calibrated transducer damping ratio")
        ->capture_default_str();

    // clamp
    auto* cl = app.add_subcommand("clamp", "execute one force clamp");
    double cl_level = 0.05;
    std::string cl_mode = "fffb";
    std::string cl_model = "", cl_plant = "";
    double cl_kp = 0.0, cl_ki = 0.04;
    cl->add_option("--level", cl_level, "clamp level, fraction of F_ref")->capture_default_str();
    cl->add_option("--mode", cl_mode, "fb | ff | fffb")->capture_default_str();
    cl->add_option("--model", cl_model, "fit file (required unless mode=fb)");
    cl->add_option("--plant", cl_plant, "plant file")->required();
    cl->add_option("--kp", cl_kp, "proportional gain")->capture_default_str();
    cl->add_option("--ki", cl_ki, "integral gain (1/s)")->capture_default_str();

    // protocol
    auto* proto = app.add_subcommand("protocol", "run a full experiment protocol");
    std::string proto_which = "c1";
    std::string proto_model = "";
    proto->add_option("which", proto_which, "c1 | c2 | compare")->required();
    proto->add_option("--model", proto_model, "frozen fit file (c2 only)");

    // report
    auto* rep = app.add_subcommand("report", "regenerate the summary from a result directory");
    std::string rep_in = "";
    rep->add_option("--in", rep_in, "result directory containing metrics.csv")->required();

    CLI11_PARSE(app, argc, argv);

    if (*mk) {
        vc::PlantPreset p{.name = preset};
        p.noise_std = noise_override;
        p.io_delay_samples = delay_override;
        p.contractile_gain = gain_override;
        vc::VirtualPlant plant = vc::make_plant(p, seed);
        vc::write_json_file(out.empty() ? "plant.json" : out, vc::plant_to_json(plant));
        return 0;
    }

    if (*di) {
        const double dt = 1e-4;
        vc::TimeSeries input;
        if (di_kind == "validation") {
            input = vc::design_validation_input(ref_length, dt, seed);
        } else if (di_kind == "estimation") {
            vc::InputKind ik = di_input_kind == "linear" ? vc::InputKind::linear
                                                         : vc::InputKind::nonlinear;
            input = vc::design_estimation_input(ik, ref_length, dt, seed);
        } else {
            throw std::runtime_error("design-input: unknown kind '" + di_kind + "'");
        }
        auto os = open_out(out.empty() ? "input.csv" : out);
        if (di_plant.empty()) {
            vc::write_csv(os, input);
        } else {
            vc::PlantSim plant(vc::plant_from_json(vc::read_json_file(di_plant)));
            plant.reseed(seed + 100);
            vc::IoRecord io;
            io.input = input;
            io.output = plant.run(input);
            vc::write_io_csv(os, io);
        }
        return 0;
    }

    if (*est) {
        auto is = open_in(est_in);
        vc::IoRecord io = vc::read_io_csv(is);
        std::optional<vc::IoRecord> io_val;
        if (!est_val.empty()) {
            auto vs = open_in(est_val);
            io_val = vc::read_io_csv(vs);
        }
        vc::FitReport fit;
        double f0 = 0.0;
        vc::EstimationOptions opts;
        if (est_kind == "nonlinear") {
            opts.regularization_alpha = est_alpha;
            if (est_fix_c > 0.0) opts.fix_c = est_fix_c;
            if (est_tf_freq > 0.0) {
                opts.transducer_freq_hz = est_tf_freq;
                opts.transducer_zeta = est_tf_zeta;
            }
            vc::IoRecord pre = vc::preprocess_nonlinear(io, 20, est_delay);
            f0 = pre.output.values.front();
            fit = vc::estimate_nonlinear(pre, opts);
            if (io_val)
                fit.validation_nrmse =
                    vc::validate(*fit.maxwell, vc::preprocess_nonlinear(*io_val, 20, est_delay),
                                 20, opts.transducer_freq_hz, opts.transducer_zeta);
        } else if (est_kind == "linear") {
            if (est_order > 0) {
                fit.tf = vc::estimate_linear_pipeline(io, est_order, est_delay);
                fit.converged = true;
                if (io_val) {
                    vc::IoRecord va = vc::align_delay(*io_val, est_delay);
                    va.output = vc::remove_offset(va.output).first;
                    fit.validation_nrmse = vc::validate(*fit.tf, va);
                }
            } else {
                if (!io_val) throw std::runtime_error("estimate: order selection needs --val data");
                auto [order, best] = vc::select_linear_order(io, *io_val, est_delay);
                fit = best;
                std::cout << "selected order " << order << "\n";
            }
        } else {
            throw std::runtime_error("estimate: unknown kind '" + est_kind + "'");
        }
        vc::write_json_file(out.empty() ? "fit.json" : out, vc::fit_to_json(fit, f0, seed, opts));
        std::cout << "validation NRMSE " << fit.validation_nrmse << "\n";
        return 0;
    }

    if (*val) {
        vc::FitReport fit = vc::fit_from_json(vc::read_json_file(val_model));
        auto is = open_in(val_in);
        vc::IoRecord io = vc::read_io_csv(is);
        double score;
        if (fit.maxwell) {
            double freq = val_tf_freq > 0.0 ? val_tf_freq
                                            : std::numeric_limits<double>::infinity();
            score = vc::validate(*fit.maxwell, vc::preprocess_nonlinear(io, 20, val_delay), 20,
                                 freq, val_tf_zeta);
        } else {
            vc::IoRecord aligned = vc::align_delay(io, val_delay);
            aligned.output = vc::remove_offset(aligned.output).first;
            score = vc::validate(*fit.tf, aligned);
        }
        std::cout << "validation NRMSE " << score << "\n";
        if (!out.empty()) vc::write_json_file(out, vc::json{{"validation_nrmse", score}});
        return 0;
    }

    if (*cl) {
        vc::PlantSim plant(vc::plant_from_json(vc::read_json_file(cl_plant)));
        vc::ClampMode mode = cl_mode == "fb"   ? vc::ClampMode::fb
                             : cl_mode == "ff" ? vc::ClampMode::ff
                                               : vc::ClampMode::fffb;
        std::optional<vc::FitReport> fit;
        if (!cl_model.empty()) fit = vc::fit_from_json(vc::read_json_file(cl_model));
        if (mode != vc::ClampMode::fb && !fit)
            throw std::runtime_error("clamp: mode '" + cl_mode + "' needs --model");
        vc::ClampResult res = vc::run_full_clamp(plant, cl_level, vc::PIGains{cl_kp, cl_ki},
                                                 fit ? &*fit : nullptr, mode, seed);
        auto os = open_out(out.empty() ? "clamp.csv" : out);
        vc::write_clamp_csv(os, res.traces);
        std::cout << metrics_to_json(res.metrics).dump(2) << "\n";
        return 0;
    }

    if (*proto) {
        vc::ProtocolConfig cfg;
        if (!config_path.empty()) cfg = vc::config_from_json(vc::read_json_file(config_path));
        if (app.count("--seed") > 0) cfg.seed = seed;
        if (!out.empty()) cfg.out_dir = out;
        vc::RunReport report;
        if (proto_which == "c1") {
            report = vc::run_contraction1(cfg);
        } else if (proto_which == "c2") {
            if (proto_model.empty()) throw std::runtime_error("protocol c2 needs --model");
            report = vc::run_contraction2(cfg, vc::fit_from_json(vc::read_json_file(proto_model)));
        } else if (proto_which == "compare") {
            report = vc::run_comparison(cfg);
        } else {
            throw std::runtime_error("protocol: unknown protocol '" + proto_which + "'");
        }
        vc::export_report(report, cfg.out_dir);
        std::cout << report.rows.size() << " clamps, " << report.errors.size() << " errors -> "
                  << cfg.out_dir << "\n";
        for (const auto& e : report.errors) std::cerr << "error: " << e << "\n";
        return report.errors.empty() ? 0 : 1;
    }

    if (*rep) {
        auto is = open_in(rep_in + "/metrics.csv");
        vc::RunReport report;
        report.protocol = "report";
        report.rows = read_metrics_csv(is);
        std::ostringstream ss;
        for (const auto& s : vc::detail::summarize_levels(report.rows)) {
            ss << "level " << vc::detail::level_tag(s.level_pct) << "% mode " << s.mode << ":";
            if (s.settling_ms)
                ss << " settling " << s.settling_ms->mean << " ms [" << s.settling_ms->ci95_low
                   << ", " << s.settling_ms->ci95_high << "]";
            if (s.not_settled > 0) ss << " " << s.not_settled << " not settled";
            if (s.overshoot_pct) ss << " overshoot " << s.overshoot_pct->mean << "%";
            if (s.nrmse_ref) ss << " nrmse_ref " << s.nrmse_ref->mean;
            ss << "\n";
        }
        std::cout << ss.str();
        if (!out.empty()) open_out(out) << ss.str();
        return 0;
    }

    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "viscoclamp: " << e.what() << "\n";
        return 1;
    }
}
