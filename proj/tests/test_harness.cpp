#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "viscoclamp/harness.hpp"

using namespace viscoclamp;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

ProtocolConfig small_config() {
    ProtocolConfig cfg;
    cfg.levels = {0.05, 0.10};
    cfg.repeats = 1;
    cfg.plant_seed = 3;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("ProtocolConfig: JSON round trip preserves every field") {
    ProtocolConfig cfg;
    cfg.plant_preset.name = "fdb-like";
    cfg.plant_seed = 9;
    cfg.levels = {0.07, 0.4};
    cfg.repeats = 5;
    cfg.randomize_order = false;
    cfg.order_seed = 11;
    cfg.gains = {0.01, 0.02};
    cfg.fb_only_gains = {0.0, 8.0};
    cfg.model_kind = ModelKind::linear;
    cfg.linear_order = 2;
    cfg.estimation.regularization_alpha = 1e-4;
    cfg.estimation.fix_c = 0.012;
    cfg.delay_samples = 7;
    cfg.ref_length_volts = 8.0;
    cfg.seed = 1234;
    cfg.replay_stage = true;

    ProtocolConfig back = config_from_json(config_to_json(cfg));
    CHECK(back.plant_preset.name == cfg.plant_preset.name);
    CHECK(back.plant_seed == cfg.plant_seed);
    CHECK(back.levels == cfg.levels);
    CHECK(back.repeats == cfg.repeats);
    CHECK(back.randomize_order == cfg.randomize_order);
    CHECK(back.order_seed == cfg.order_seed);
    CHECK(back.gains.kp == cfg.gains.kp);
    CHECK(back.gains.ki == cfg.gains.ki);
    CHECK(back.fb_only_gains.ki == cfg.fb_only_gains.ki);
    CHECK(back.model_kind == cfg.model_kind);
    CHECK(back.linear_order == cfg.linear_order);
    CHECK(back.estimation.regularization_alpha == cfg.estimation.regularization_alpha);
    REQUIRE(back.estimation.fix_c.has_value());
    CHECK(*back.estimation.fix_c == *cfg.estimation.fix_c);
    CHECK(back.delay_samples == cfg.delay_samples);
    CHECK(back.ref_length_volts == cfg.ref_length_volts);
    CHECK(back.seed == cfg.seed);
    CHECK(back.replay_stage == cfg.replay_stage);
}

TEST_CASE("collect_io: deterministic for equal noise seeds") {
    PlantSim plant(make_plant({.name = "matched"}, 3));
    TimeSeries input = design_validation_input(10.0, 1e-4, 1);
    IoRecord a = collect_io(plant, input, 500);
    IoRecord b = collect_io(plant, input, 500);
    IoRecord c = collect_io(plant, input, 501);
    CHECK(a.output.values == b.output.values);
    CHECK(a.output.values != c.output.values);
}

TEST_CASE("measure_reference_force: close to the isometric plateau") {
    VirtualPlant p = make_plant({.name = "matched"}, 3);
    PlantSim plant(p);
    plant.reseed(9);
    double f_ref = measure_reference_force(plant, 1e-4);
    CHECK(f_ref == doctest::Approx(p.isometric_force).epsilon(0.01));
}

TEST_CASE("run_contraction1: expected block structure and clean errors") {
    ProtocolConfig cfg = small_config();
    RunReport report = run_contraction1(cfg);
    CHECK(report.errors.empty());
    // 2 levels x 1 repeat in fffb plus one ff-only and one fb-only probe
    CHECK(report.rows.size() == 4);
    CHECK(report.traces.size() == 4);
    std::size_t n_fffb = 0, n_ff = 0, n_fb = 0;
    for (const auto& row : report.rows) {
        if (row.mode == "fffb") ++n_fffb;
        if (row.mode == "ff") ++n_ff;
        if (row.mode == "fb") ++n_fb;
    }
    CHECK(n_fffb == 2);
    CHECK(n_ff == 1);
    CHECK(n_fb == 1);
    CHECK_FALSE(report.fits.empty());
    CHECK(report.parameter_cv.count("k1") == 1);
    CHECK(report.parameter_cv.count("n") == 1);
}

TEST_CASE("run_contraction2 reuses a frozen fit; run_comparison pairs modes") {
    ProtocolConfig cfg = small_config();
    IdentificationResult id;
    RunReport first = run_contraction1(cfg, &id);
    REQUIRE(first.errors.empty());

    RunReport second = run_contraction2(cfg, id.active);
    CHECK(second.errors.empty());
    CHECK(second.rows.size() == cfg.levels.size());
    for (const auto& row : second.rows) CHECK(row.mode == "fffb");

    ProtocolConfig ccfg = small_config();
    ccfg.levels = {0.05};
    ccfg.repeats = 2;
    RunReport cmp = run_comparison(ccfg);
    CHECK(cmp.errors.empty());
    CHECK(cmp.rows.size() == 4);  // 2 pairs
    CHECK(cmp.rows[0].mode == "fb");
    CHECK(cmp.rows[1].mode == "fffb");
    CHECK(cmp.rows[0].seed == cmp.rows[1].seed);  // paired on the same noise seed

    FitReport empty;
    CHECK_THROWS_AS(run_contraction2(cfg, empty), InvalidArgument);
}

TEST_CASE("export_report: deterministic files with the documented naming") {
    ProtocolConfig cfg = small_config();
    fs::path dir1 = fs::temp_directory_path() / "viscoclamp_test_out1";
    fs::path dir2 = fs::temp_directory_path() / "viscoclamp_test_out2";
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    RunReport r1 = run_contraction1(cfg);
    export_report(r1, dir1.string());
    RunReport r2 = run_contraction1(cfg);
    export_report(r2, dir2.string());

    CHECK(fs::exists(dir1 / "config.json"));
    CHECK(fs::exists(dir1 / "metrics.csv"));
    CHECK(fs::exists(dir1 / "fits.json"));
    CHECK(fs::exists(dir1 / "summary.txt"));
    for (const auto& [stem, traces] : r1.traces) {
        (void)traces;
        CHECK(fs::exists(dir1 / (stem + ".csv")));
        CHECK(stem.rfind("c1_", 0) == 0);
    }
    CHECK(slurp(dir1 / "metrics.csv") == slurp(dir2 / "metrics.csv"));
    CHECK(slurp(dir1 / "config.json") == slurp(dir2 / "config.json"));

    fs::remove_all(dir1);
    fs::remove_all(dir2);
}

TEST_CASE("export_report: empty report still writes the config and headers") {
    RunReport report;
    report.protocol = "c1";
    report.config_echo = config_to_json(ProtocolConfig{});
    fs::path dir = fs::temp_directory_path() / "viscoclamp_test_empty";
    fs::remove_all(dir);
    export_report(report, dir.string());
    CHECK(slurp(dir / "metrics.csv") ==
          "level_pct,mode,settling_ms,overshoot_pct,nrmse_ref,ff_fit,seed\n");
    CHECK(fs::exists(dir / "config.json"));
    fs::remove_all(dir);
}

TEST_CASE("write_metrics_csv: not-settled clamps are spelled out") {
    MetricsRow row;
    row.level_pct = 5.0;
    row.mode = "fffb";
    row.metrics.settling_time_ms = std::nullopt;
    row.metrics.overshoot_pct = 1.25;
    row.metrics.nrmse_vs_reference = 0.1;
    row.seed = 9;
    std::stringstream ss;
    write_metrics_csv(ss, {row});
    CHECK(ss.str().find("not_settled") != std::string::npos);
    CHECK(ss.str().find("5,fffb,") != std::string::npos);
}

TEST_CASE("io CSV round trip") {
    IoRecord io;
    io.input = TimeSeries(0.0, 1e-4, {0.0, -0.1, -0.2});
    io.output = TimeSeries(0.0, 1e-4, {2.0, 1.9, 1.7});
    std::stringstream ss;
    write_io_csv(ss, io);
    IoRecord back = read_io_csv(ss);
    REQUIRE(back.input.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(back.input.values[k] == doctest::Approx(io.input.values[k]).epsilon(1e-9));
        CHECK(back.output.values[k] == doctest::Approx(io.output.values[k]).epsilon(1e-9));
    }
    CHECK(back.input.dt == doctest::Approx(1e-4).epsilon(1e-6));
}

TEST_CASE("serialization: model and plant JSON round trips") {
    MaxwellParams m{11.0, 0.9, 0.012, 4.6};
    json jm = maxwell_to_json(m, 2.0);
    auto [m2, f0] = maxwell_from_json(jm);
    CHECK(m2.k1 == m.k1);
    CHECK(m2.k2 == m.k2);
    CHECK(m2.c == m.c);
    CHECK(m2.n == m.n);
    CHECK(f0 == 2.0);
    CHECK(jm.at("L0").get<double>() ==
          doctest::Approx(unstrained_length(m, 2.0)).epsilon(1e-12));

    VirtualPlant p = make_plant({.name = "mismatched"}, 4);
    VirtualPlant p2 = plant_from_json(plant_to_json(p));
    CHECK(p2.k1 == p.k1);
    CHECK(p2.n == p.n);
    REQUIRE(p2.branches.size() == p.branches.size());
    CHECK(p2.branches[1].c == p.branches[1].c);
    CHECK(p2.noise_std == p.noise_std);
    CHECK(p2.seed == p.seed);

    RationalTransferFunction tf;
    tf.num = {0.4, 0.2};
    tf.den = {1.0, -0.7};
    tf.ts = 1e-4;
    RationalTransferFunction tf2 = tf_from_json(tf_to_json(tf));
    CHECK(tf2.num == tf.num);
    CHECK(tf2.den == tf.den);
    CHECK(tf2.domain == tf.domain);
}
