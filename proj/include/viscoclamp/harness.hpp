#ifndef VISCOCLAMP_HARNESS_HPP
#define VISCOCLAMP_HARNESS_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "viscoclamp/control.hpp"
#include "viscoclamp/metrics.hpp"
#include "viscoclamp/plant.hpp"
#include "viscoclamp/serialization.hpp"
#include "viscoclamp/sysid.hpp"

namespace viscoclamp {

inline constexpr const char* kToolVersion = "viscoclamp 0.1.0";

struct ProtocolConfig {
    PlantPreset plant_preset{.name = "matched"};
    std::uint64_t plant_seed = 1;

    std::vector<double> levels{0.05, 0.07, 0.10, 0.20, 0.40, 0.80};
    std::size_t repeats = 3;
    bool randomize_order = true;
    std::uint64_t order_seed = 7;

    PIGains gains{0.0, 0.04};          // 2DOF loop
    PIGains fb_only_gains{0.0, 12.0};  // one-degree-of-freedom comparisons
    ModelKind model_kind = ModelKind::nonlinear;
    std::size_t linear_order = 0;  // 0 = select by validation NRMSE
    EstimationOptions estimation{};
    std::size_t delay_samples = 10;  // assumed io delay removed in preprocessing

    double ref_length_volts = 10.0;
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    bool replay_stage = false;  // resend a previous total control effort, open loop

    // re-equilibration hook between clamps (fatigue modeling extension point)
    std::function<void(PlantSim&)> between_clamps;
};

inline json config_to_json(const ProtocolConfig& c) {
    return json{{"version", 1},
                {"plant", {{"preset", c.plant_preset.name}, {"seed", c.plant_seed}}},
                {"levels", c.levels},
                {"repeats", c.repeats},
                {"randomize_order", c.randomize_order},
                {"order_seed", c.order_seed},
                {"gains", {{"kp", c.gains.kp}, {"ki", c.gains.ki}}},
                {"fb_only_gains", {{"kp", c.fb_only_gains.kp}, {"ki", c.fb_only_gains.ki}}},
                {"model_kind", c.model_kind == ModelKind::linear ? "linear" : "nonlinear"},
                {"linear_order", c.linear_order},
                {"alpha", c.estimation.regularization_alpha},
                {"fix_c", c.estimation.fix_c ? json(*c.estimation.fix_c) : json(nullptr)},
                {"delay_samples", c.delay_samples},
                {"ref_length_volts", c.ref_length_volts},
                {"seed", c.seed},
                {"replay_stage", c.replay_stage}};
}

inline ProtocolConfig config_from_json(const json& j) {
    ProtocolConfig c;
    if (j.contains("plant")) {
        c.plant_preset.name = j["plant"].value("preset", std::string("matched"));
        c.plant_seed = j["plant"].value("seed", std::uint64_t{1});
    }
    if (j.contains("levels")) c.levels = j["levels"].get<std::vector<double>>();
    c.repeats = j.value("repeats", std::size_t{3});
    c.randomize_order = j.value("randomize_order", true);
    c.order_seed = j.value("order_seed", std::uint64_t{7});
    if (j.contains("gains")) {
        c.gains.kp = j["gains"].value("kp", 0.0);
        c.gains.ki = j["gains"].value("ki", 0.04);
    }
    if (j.contains("fb_only_gains")) {
        c.fb_only_gains.kp = j["fb_only_gains"].value("kp", 0.0);
        c.fb_only_gains.ki = j["fb_only_gains"].value("ki", 12.0);
    }
    c.model_kind = j.value("model_kind", std::string("nonlinear")) == "linear" ? ModelKind::linear
                                                                               : ModelKind::nonlinear;
    c.linear_order = j.value("linear_order", std::size_t{0});
    c.estimation.regularization_alpha = j.value("alpha", 0.0);
    if (j.contains("fix_c") && !j["fix_c"].is_null()) c.estimation.fix_c = j["fix_c"].get<double>();
    c.delay_samples = j.value("delay_samples", std::size_t{10});
    c.ref_length_volts = j.value("ref_length_volts", 10.0);
    c.seed = j.value("seed", std::uint64_t{42});
    c.replay_stage = j.value("replay_stage", false);
    return c;
}

struct MetricsRow {
    double level_pct;
    std::string mode;
    ClampMetrics metrics;
    std::uint64_t seed;
};

struct LevelSummary {
    double level_pct;
    std::string mode;
    std::optional<StatSummary> settling_ms;
    std::optional<StatSummary> overshoot_pct;
    std::optional<StatSummary> nrmse_ref;
    std::size_t not_settled = 0;
};

struct RunReport {
    std::string protocol;
    json config_echo;
    std::string tool_version = kToolVersion;
    std::vector<MetricsRow> rows;
    std::vector<std::pair<std::string, LoopTraces>> traces;  // file stem -> traces
    std::vector<json> fits;
    std::map<std::string, double> parameter_cv;  // over repeated nonlinear estimations
    std::vector<std::string> errors;
};

// ---- building blocks ---------------------------------------------------------

/// Collect input-output data from the plant for one identification stage.
inline IoRecord collect_io(PlantSim& plant, const TimeSeries& input, std::uint64_t noise_seed) {
    plant.reset();
    plant.reseed(noise_seed);
    IoRecord io;
    io.input = input;
    io.output = plant.run(input);
    return io;
}

/// Pre-roll the plant at u = 0 and average the last 100 samples of measured
/// force, as done before initiating a clamp.
inline double measure_reference_force(PlantSim& plant, double dt, std::size_t ticks = 200) {
    TimeSeries history;
    history.dt = dt;
    history.values.resize(ticks);
    for (std::size_t i = 0; i < ticks; ++i) history.values[i] = plant.step(0.0, dt).y_measured;
    return reference_force(history);
}

/// Generate the feedforward series for a reference from whichever model the
/// fit carries. The linear model acts on force deviations from F_ref.
inline TimeSeries make_feedforward(const FitReport& fit, const TimeSeries& r) {
    if (fit.maxwell) return feedforward_nonlinear(*fit.maxwell, r, 0.0);
    if (!fit.tf) throw InvalidArgument("make_feedforward: fit carries no model");
    RationalTransferFunction tf_c = fit.tf->domain == RationalTransferFunction::Domain::continuous
                                        ? *fit.tf
                                        : to_continuous(*fit.tf, fit.tf->ts);
    TimeSeries r_dev = r;
    for (double& v : r_dev.values) v -= r.values.front();
    return feedforward_linear(tf_c, r_dev);
}

/// Reset, re-equilibrate, measure F_ref, generate feedforward and execute one
/// clamp. This is the per-clamp unit the protocols repeat.
inline ClampResult run_full_clamp(PlantSim& plant, double level, const PIGains& gains,
                                  const FitReport* fit, ClampMode mode, std::uint64_t clamp_seed,
                                  double dt = 1e-4) {
    plant.reset();
    plant.reseed(clamp_seed);
    ReferenceSpec spec;
    spec.level = level;
    spec.dt = dt;
    spec.f_ref = measure_reference_force(plant, dt);

    std::optional<TimeSeries> ff;
    ClampOptions opts;
    if (mode != ClampMode::fb) {
        if (!fit) throw InvalidArgument("run_full_clamp: feedforward mode needs a model fit");
        ff = make_feedforward(*fit, build_reference(spec));
        opts.model_used = fit->maxwell ? ModelKind::nonlinear : ModelKind::linear;
    }
    return run_clamp(plant, spec, gains, ff, mode, opts);
}

namespace detail {

inline std::string level_tag(double level_pct) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", level_pct);
    return buf;
}

inline void push_result(RunReport& report, const std::string& protocol, double level_pct,
                        const ClampResult& res, std::uint64_t seed) {
    report.rows.push_back({level_pct, to_string(res.mode), res.metrics, seed});
    report.traces.emplace_back(protocol + "_" + level_tag(level_pct) + "_" + to_string(res.mode) +
                                   "_" + std::to_string(seed),
                               res.traces);
}

inline std::optional<StatSummary> maybe_summarize(const std::vector<double>& v) {
    if (v.size() < 2) return std::nullopt;
    return summarize(v);
}

inline std::vector<LevelSummary> summarize_levels(const std::vector<MetricsRow>& rows) {
    std::map<std::pair<double, std::string>, std::vector<const MetricsRow*>> groups;
    for (const auto& row : rows) groups[{row.level_pct, row.mode}].push_back(&row);
    std::vector<LevelSummary> out;
    for (const auto& [key, members] : groups) {
        LevelSummary s;
        s.level_pct = key.first;
        s.mode = key.second;
        std::vector<double> settle, os, nr;
        for (const auto* m : members) {
            if (m->metrics.settling_time_ms)
                settle.push_back(*m->metrics.settling_time_ms);
            else
                ++s.not_settled;
            os.push_back(m->metrics.overshoot_pct);
            nr.push_back(m->metrics.nrmse_vs_reference);
        }
        s.settling_ms = maybe_summarize(settle);
        s.overshoot_pct = maybe_summarize(os);
        s.nrmse_ref = maybe_summarize(nr);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

/// System-identification stages shared by the protocols: collect estimation
/// and validation data, fit the requested model(s), report validation NRMSE.
struct IdentificationResult {
    FitReport linear;       // selected-order linear model
    std::size_t linear_order = 0;
    std::vector<FitReport> nonlinear_repeats;  // consecutive estimations
    FitReport active;       // the fit used for feedforward generation
};

inline IdentificationResult run_identification(PlantSim& plant, const ProtocolConfig& cfg,
                                               RunReport& report, std::size_t nonlinear_rounds = 3) {
    const double dt = 1e-4;
    IdentificationResult id;

    TimeSeries lin_input =
        design_estimation_input(InputKind::linear, cfg.ref_length_volts, dt, cfg.seed + 1);
    TimeSeries nl_input =
        design_estimation_input(InputKind::nonlinear, cfg.ref_length_volts, dt, cfg.seed + 2);
    TimeSeries val_input = design_validation_input(cfg.ref_length_volts, dt, cfg.seed + 3);

    IoRecord io_lin = collect_io(plant, lin_input, cfg.seed + 101);
    IoRecord io_val = collect_io(plant, val_input, cfg.seed + 102);

    try {
        if (cfg.linear_order > 0) {
            id.linear.tf = estimate_linear_pipeline(io_lin, cfg.linear_order, cfg.delay_samples);
            IoRecord val = align_delay(io_val, cfg.delay_samples);
            val.output = remove_offset(val.output).first;
            id.linear.validation_nrmse = validate(*id.linear.tf, val);
            id.linear.converged = true;
            id.linear_order = cfg.linear_order;
        } else {
            auto [order, fit] = select_linear_order(io_lin, io_val, cfg.delay_samples);
            id.linear = fit;
            id.linear_order = order;
        }
        report.fits.push_back(fit_to_json(id.linear, 0.0, cfg.seed + 101));
    } catch (const std::exception& e) {
        report.errors.push_back(std::string("linear estimation: ") + e.what());
    }

    // the estimator knows the rig's calibrated transducer response
    EstimationOptions nl_opts = cfg.estimation;
    nl_opts.transducer_freq_hz = plant.config().transducer_natural_freq_hz;
    nl_opts.transducer_zeta = plant.config().transducer_damping_ratio;

    IoRecord io_val_nl = preprocess_nonlinear(io_val, 20, cfg.delay_samples);
    std::vector<double> k1s, k2s, cs, ns;
    for (std::size_t round = 0; round < nonlinear_rounds; ++round) {
        try {
            IoRecord io = collect_io(plant, nl_input, cfg.seed + 103 + round);
            IoRecord pre = preprocess_nonlinear(io, 20, cfg.delay_samples);
            FitReport fit = estimate_nonlinear(pre, nl_opts);
            fit.validation_nrmse = validate(*fit.maxwell, io_val_nl, 20, nl_opts.transducer_freq_hz,
                                            nl_opts.transducer_zeta);
            report.fits.push_back(
                fit_to_json(fit, pre.output.values.front(), cfg.seed + 103 + round, nl_opts));
            k1s.push_back(fit.maxwell->k1);
            k2s.push_back(fit.maxwell->k2);
            cs.push_back(fit.maxwell->c);
            ns.push_back(fit.maxwell->n);
            id.nonlinear_repeats.push_back(std::move(fit));
        } catch (const std::exception& e) {
            report.errors.push_back("nonlinear estimation round " + std::to_string(round) + ": " +
                                    e.what());
        }
    }
    if (id.nonlinear_repeats.empty())
        throw EstimationFailure("run_identification: all nonlinear estimation rounds failed");
    if (id.nonlinear_repeats.size() >= 2) {
        auto cv_or_nan = [](const std::vector<double>& v) {
            try {
                return coefficient_of_variation(v);
            } catch (const DegenerateInput&) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        };
        report.parameter_cv = {{"k1", cv_or_nan(k1s)},
                               {"k2", cv_or_nan(k2s)},
                               {"c", cv_or_nan(cs)},
                               {"n", cv_or_nan(ns)}};
    }
    id.active = cfg.model_kind == ModelKind::linear ? id.linear : id.nonlinear_repeats.back();
    return id;
}

/// CONTRACTION 1: identification stages followed by randomized blocks of
/// repeated force clamps, with FF-only and FB-only 5% clamps interleaved.
/// The 1-minute recovery intervals become plant re-equilibrations.
inline RunReport run_contraction1(const ProtocolConfig& cfg, IdentificationResult* id_out = nullptr) {
    RunReport report;
    report.protocol = "c1";
    report.config_echo = config_to_json(cfg);
    PlantSim plant(make_plant(cfg.plant_preset, cfg.plant_seed));

    IdentificationResult id = run_identification(plant, cfg, report);
    if (id_out) *id_out = id;

    struct Block {
        double level;
        ClampMode mode;
        std::size_t repeats;
    };
    std::vector<Block> blocks;
    for (double level : cfg.levels) blocks.push_back({level, ClampMode::fffb, cfg.repeats});
    if (cfg.randomize_order) {
        std::mt19937_64 rng(cfg.order_seed);
        std::shuffle(blocks.begin(), blocks.end(), rng);
    }
    // single FF-only and FB-only clamps at the largest-amplitude level
    double probe = *std::min_element(cfg.levels.begin(), cfg.levels.end());
    blocks.insert(blocks.begin() + static_cast<std::ptrdiff_t>(blocks.size() / 2),
                  {Block{probe, ClampMode::ff, 1}, Block{probe, ClampMode::fb, 1}});

    std::uint64_t clamp_seed = cfg.seed + 200;
    std::optional<TimeSeries> last_u;
    for (const auto& block : blocks) {
        for (std::size_t rep = 0; rep < block.repeats; ++rep) {
            if (cfg.between_clamps) cfg.between_clamps(plant);
            try {
                const PIGains& g = block.mode == ClampMode::fb ? cfg.fb_only_gains : cfg.gains;
                ClampResult res =
                    run_full_clamp(plant, block.level, g, &id.active, block.mode, clamp_seed);
                detail::push_result(report, report.protocol, block.level * 100.0, res, clamp_seed);
                last_u = res.traces.v;
            } catch (const std::exception& e) {
                report.errors.push_back("clamp " + detail::level_tag(block.level * 100.0) + " " +
                                        to_string(block.mode) + ": " + e.what());
            }
            ++clamp_seed;
        }
    }
    if (cfg.replay_stage && last_u) {
        // force control off, previous total control effort resent (data unused)
        plant.reset();
        plant.reseed(clamp_seed++);
        plant.run(*last_u);
    }
    return report;
}

/// CONTRACTION 2: one clamp per level reusing a frozen model fit.
inline RunReport run_contraction2(const ProtocolConfig& cfg, const FitReport& fit) {
    if (!fit.maxwell && !fit.tf)
        throw InvalidArgument("run_contraction2: fit carries no model");
    RunReport report;
    report.protocol = "c2";
    report.config_echo = config_to_json(cfg);
    PlantSim plant(make_plant(cfg.plant_preset, cfg.plant_seed));

    std::vector<double> levels = cfg.levels;
    if (cfg.randomize_order) {
        std::mt19937_64 rng(cfg.order_seed);
        std::shuffle(levels.begin(), levels.end(), rng);
    }
    std::uint64_t clamp_seed = cfg.seed + 500;
    for (double level : levels) {
        if (cfg.between_clamps) cfg.between_clamps(plant);
        try {
            ClampResult res =
                run_full_clamp(plant, level, cfg.gains, &fit, ClampMode::fffb, clamp_seed);
            detail::push_result(report, report.protocol, level * 100.0, res, clamp_seed);
        } catch (const std::exception& e) {
            report.errors.push_back("clamp " + detail::level_tag(level * 100.0) + ": " + e.what());
        }
        ++clamp_seed;
    }
    return report;
}

/// FB-only versus FF+FB paired clamps on identical noise seeds.
inline RunReport run_comparison(const ProtocolConfig& cfg) {
    RunReport report;
    report.protocol = "compare";
    report.config_echo = config_to_json(cfg);
    PlantSim plant(make_plant(cfg.plant_preset, cfg.plant_seed));

    IdentificationResult id = run_identification(plant, cfg, report, 1);

    std::uint64_t clamp_seed = cfg.seed + 800;
    for (double level : cfg.levels) {
        for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
            try {
                ClampResult fb =
                    run_full_clamp(plant, level, cfg.fb_only_gains, nullptr, ClampMode::fb, clamp_seed);
                detail::push_result(report, report.protocol, level * 100.0, fb, clamp_seed);
                ClampResult both =
                    run_full_clamp(plant, level, cfg.gains, &id.active, ClampMode::fffb, clamp_seed);
                detail::push_result(report, report.protocol, level * 100.0, both, clamp_seed);
            } catch (const std::exception& e) {
                report.errors.push_back("pair " + detail::level_tag(level * 100.0) + ": " + e.what());
            }
            ++clamp_seed;
        }
    }
    return report;
}

// ---- persistence --------------------------------------------------------------

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << "level_pct,mode,settling_ms,overshoot_pct,nrmse_ref,ff_fit,seed\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%g,", row.level_pct);
        os << buf << row.mode << ",";
        if (row.metrics.settling_time_ms) {
            std::snprintf(buf, sizeof(buf), "%.9g", *row.metrics.settling_time_ms);
            os << buf;
        } else {
            os << "not_settled";
        }
        std::snprintf(buf, sizeof(buf), ",%.9g,%.9g,", row.metrics.overshoot_pct,
                      row.metrics.nrmse_vs_reference);
        os << buf;
        if (row.metrics.nrmse_ff_vs_total) {
            std::snprintf(buf, sizeof(buf), "%.9g", *row.metrics.nrmse_ff_vs_total);
            os << buf;
        }
        os << "," << row.seed << "\n";
    }
}

/// Write config echo, per-clamp trace CSVs, the metrics CSV and a summary to a
/// directory. File naming is deterministic: {protocol}_{level}_{mode}_{seed}.csv.
inline void export_report(const RunReport& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("export_report: cannot create " + dir + ": " + ec.message());

    auto open = [&](const std::string& name) {
        std::ofstream os(dir + "/" + name);
        if (!os) throw std::runtime_error("export_report: cannot write " + dir + "/" + name);
        return os;
    };

    {
        auto os = open("config.json");
        json echo = report.config_echo;
        echo["tool_version"] = report.tool_version;
        echo["protocol"] = report.protocol;
        os << echo.dump(2) << "\n";
    }
    {
        auto os = open("metrics.csv");
        write_metrics_csv(os, report.rows);
    }
    for (const auto& [stem, traces] : report.traces) {
        auto os = open(stem + ".csv");
        write_clamp_csv(os, traces);
    }
    if (!report.fits.empty()) {
        auto os = open("fits.json");
        json j{{"fits", report.fits}};
        if (!report.parameter_cv.empty()) j["parameter_cv"] = report.parameter_cv;
        os << j.dump(2) << "\n";
    }
    {
        auto os = open("summary.txt");
        os << report.tool_version << " protocol=" << report.protocol << "\n";
        for (const auto& s : detail::summarize_levels(report.rows)) {
            char buf[256];
            os << "level " << detail::level_tag(s.level_pct) << "% mode " << s.mode << ": ";
            if (s.settling_ms) {
                std::snprintf(buf, sizeof(buf), "settling %.4g ms [%.4g, %.4g] cv %.4g; ",
                              s.settling_ms->mean, s.settling_ms->ci95_low, s.settling_ms->ci95_high,
                              s.settling_ms->cv);
                os << buf;
            }
            if (s.not_settled > 0) os << s.not_settled << " not settled; ";
            if (s.overshoot_pct) {
                std::snprintf(buf, sizeof(buf), "overshoot %.4g%% [%.4g, %.4g]; ",
                              s.overshoot_pct->mean, s.overshoot_pct->ci95_low,
                              s.overshoot_pct->ci95_high);
                os << buf;
            }
            if (s.nrmse_ref) {
                std::snprintf(buf, sizeof(buf), "nrmse_ref %.4g", s.nrmse_ref->mean);
                os << buf;
            }
            os << "\n";
        }
        for (const auto& err : report.errors) os << "error: " << err << "\n";
    }
}

}  // namespace viscoclamp

#endif
