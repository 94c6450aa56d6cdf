#include "regflow/experiments.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

using namespace rf;

namespace {

SweepSpec desk_spec() {
    SweepSpec spec;
    spec.n_points = 1000;
    spec.max_iter = 100;
    return spec;
}

double meta_hash(const Table& table) {
    for (const auto& [key, value] : table.meta)
        if (key == "config_hash") return static_cast<double>(std::stoul(value, nullptr, 16));
    return -1.0;
}

std::vector<double> parse_data_row(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::strtod(cell.c_str(), nullptr));
    return out;
}

}  // namespace

TEST_CASE("synthetic problem construction") {
    const SyntheticProblem s = make_synthetic_problem(true);
    REQUIRE(s.grid.n_points == 400);
    CHECK(s.envelope.samples.front() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s.envelope.samples.back() == doctest::Approx(0.0).epsilon(1e-12));

    REQUIRE(s.constraints.size() == 3);
    CHECK(s.constraints.items[0].label == "mean");
    CHECK(s.constraints.items[1].label == "tilt");
    CHECK(s.constraints.items[2].label == "fluence");

    // Kernels are normalised so that the envelope-weighted square integrates to one.
    for (int m = 0; m < 2; ++m) {
        std::vector<double> w(s.grid.n_points);
        for (int k = 0; k < s.grid.n_points; ++k)
            w[k] = s.envelope.samples[k] * s.constraints.items[m].kernel[k] *
                   s.constraints.items[m].kernel[k];
        CHECK(trapezoid(w, s.grid.dt) == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (const Constraint& c : s.constraints.items)
        CHECK(c.target == evaluate(c, s.field));
    CHECK(s.constraints.items[2].target > 0.0);

    const SyntheticProblem lean = make_synthetic_problem(false, 200);
    CHECK(lean.grid.n_points == 200);
    CHECK(lean.constraints.size() == 2);
}

TEST_CASE("spec validation rejects malformed input") {
    SweepSpec ok;
    ok.eps = {0.0};
    ok.ds = {1e-6};
    CHECK_NOTHROW(ok.validate());

    SweepSpec bad = ok;
    bad.tau_fs = {};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.eps = {-1e-3};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.ds = {0.0};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.n_points = 2;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.common_steps = 0;
    bad.s_target = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.s_target = 1e-5;
    CHECK_NOTHROW(bad.validate());
}

TEST_CASE("config hash is stable and field-sensitive") {
    SweepSpec a;
    a.eps = {0.0, 1e-4};
    a.ds = {1e-6};
    SweepSpec b = a;
    CHECK(config_hash(a) == config_hash(b));
    b.seed = 43;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.eps.push_back(1e-3);
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.n_points = 4000;
    CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("experiment filename format") {
    CHECK(experiment_filename("payoff", 250.0, 0x0012abcdu) == "payoff_250fs_0012abcd.csv");
    CHECK(experiment_filename("baseline", 62.5, 0xffffffffu) == "baseline_62.5fs_ffffffff.csv");
}

TEST_CASE("csv serialisation round-trips doubles exactly") {
    Table t;
    t.meta.emplace_back("experiment", "demo");
    t.columns = {"a", "b", "c"};
    const std::vector<double> row = {1.0 / 3.0, -1e-300, 12345678901234567.0};
    t.rows.push_back(row);
    t.rows.push_back({0.1, std::numeric_limits<double>::quiet_NaN(), -0.0});

    const std::string csv = to_csv(t);
    std::stringstream ss(csv);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "# experiment: demo");
    std::getline(ss, line);
    CHECK(line == "a,b,c");
    std::getline(ss, line);
    const std::vector<double> got = parse_data_row(line);
    REQUIRE(got.size() == 3);
    for (size_t i = 0; i < 3; ++i) CHECK(got[i] == row[i]);
    std::getline(ss, line);
    CHECK(line.find("nan") != std::string::npos);

    Table ragged = t;
    ragged.rows.push_back({1.0});
    CHECK_THROWS_AS(to_csv(ragged), std::invalid_argument);
}

TEST_CASE("write_csv creates directories and matches to_csv") {
    Table t;
    t.columns = {"x"};
    t.rows.push_back({2.5});
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "rf_exp_csv_test" / "nested";
    const std::string path = (dir / "t.csv").string();
    write_csv(t, path);
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == to_csv(t));
    std::filesystem::remove_all(dir.parent_path());
}

TEST_CASE("synthetic convergence sweep recovers the quadratic rate") {
    SweepSpec spec;
    spec.eps = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
    spec.ds = {1e-3};
    spec.common_steps = 50;
    const ConvergenceResult r = convergence_sweep(spec, ProblemKind::synthetic);

    REQUIRE(r.fit.window_points >= 4);
    CHECK(r.fit.slope > 1.8);
    CHECK(r.fit.slope < 2.2);
    for (int flag : r.fit.aborted) CHECK(flag == 0);
    REQUIRE(r.table.rows.size() == 5);
    CHECK(r.table.columns.size() == 4);

    // Distances grow with eps through the quadratic window.
    for (size_t i = 1; i < r.fit.distances.size(); ++i)
        CHECK(r.fit.distances[i] > r.fit.distances[i - 1]);
}

TEST_CASE("vanishing regularisation is indistinguishable from the reference") {
    SweepSpec spec;
    spec.eps = {0.0, 1e-13};
    spec.ds = {1e-3};
    spec.common_steps = 50;
    const ConvergenceResult r = convergence_sweep(spec, ProblemKind::synthetic);
    REQUIRE(r.fit.distances.size() == 1);
    CHECK(r.fit.distances[0] <= 1e-12);
}

TEST_CASE("sweep rejects a reference run that loses ground") {
    SweepSpec spec;
    spec.eps = {0.0, 1e-4};
    spec.ds = {1.0};  // far beyond the stable step for the synthetic problem
    spec.common_steps = 10;
    CHECK_THROWS_AS(convergence_sweep(spec, ProblemKind::synthetic), NumericError);
}

TEST_CASE("sweep requires the zero reference") {
    SweepSpec spec;
    spec.eps = {1e-4, 1e-3};
    spec.ds = {1e-3};
    CHECK_THROWS_AS(convergence_sweep(spec, ProblemKind::synthetic), std::invalid_argument);
}

TEST_CASE("benchmark convergence sweep shows quadratic regime then saturation") {
    SweepSpec spec = desk_spec();
    spec.eps = {0.0, 1e-8, 1e-7, 1e-4, 1e-2, 1e-1};
    spec.ds = {2e-8};
    spec.common_steps = 10;
    const ConvergenceResult r = convergence_sweep(spec, ProblemKind::benchmark);

    REQUIRE(r.fit.distances.size() == 5);
    for (int flag : r.fit.aborted) CHECK(flag == 0);
    const double d8 = r.fit.distances[0];
    const double d7 = r.fit.distances[1];
    CHECK(d8 > 0.0);
    CHECK(d8 < 1e-8);
    // One decade up in eps scales the distance by about 100.
    CHECK(d7 / d8 > 70.0);
    CHECK(d7 / d8 < 130.0);
    // Past the knee the curve flattens out.
    const double d2 = r.fit.distances[3];
    const double d1 = r.fit.distances[4];
    CHECK(d1 / d2 < 1.5);
    CHECK(d1 > d2);
}

TEST_CASE("sweep tables are bitwise deterministic") {
    SweepSpec spec;
    spec.eps = {0.0, 1e-5, 1e-3};
    spec.ds = {1e-3};
    spec.common_steps = 30;
    const ConvergenceResult a = convergence_sweep(spec, ProblemKind::synthetic);
    const ConvergenceResult b = convergence_sweep(spec, ProblemKind::synthetic);
    CHECK(to_csv(a.table) == to_csv(b.table));
}

TEST_CASE("baseline run stays in the expected diagnostic bands") {
    const Table t = baseline_run(desk_spec());
    REQUIRE(!t.rows.empty());
    REQUIRE(t.columns.size() == 9);

    double max_cond = 0.0;
    double max_h1 = 0.0;
    int prev_k = -1;
    for (const std::vector<double>& row : t.rows) {
        CHECK(row[0] == 250.0);
        CHECK(static_cast<int>(row[1]) > prev_k);
        prev_k = static_cast<int>(row[1]);
        max_h1 = std::max(max_h1, row[4]);
        max_cond = std::max(max_cond, row[5]);
        CHECK(row[8] == meta_hash(t));
    }
    CHECK(t.rows.back()[2] >= 0.99);  // reached the fidelity target
    CHECK(max_cond >= 1e8);
    CHECK(max_cond <= 1e12);
    CHECK(max_h1 <= 1e-6);

    bool saw_termination = false;
    for (const auto& [key, value] : t.meta)
        if (key == "termination_250fs") {
            saw_termination = true;
            CHECK(value == "tolerance");
        }
    CHECK(saw_termination);
}

TEST_CASE("cond sweep: plateau at small eps, identity limit at large eps") {
    SweepSpec spec = desk_spec();
    spec.max_iter = 40;
    spec.eps = {0.0, 1e-4, 1e-1, 1e4};
    const Table t = cond_drift_sweep(spec);
    REQUIRE(t.rows.size() == 4);

    const double c0 = t.rows[0][1];
    const double c4 = t.rows[1][1];
    const double c1 = t.rows[2][1];
    const double cid = t.rows[3][1];
    CHECK(c0 >= 1e10);
    CHECK(std::abs(c4 / c0 - 1.0) <= 0.05);  // eps below sigma_min leaves cond alone
    CHECK(c1 < 1e8);
    CHECK(c1 > 1e6);
    CHECK(cid == doctest::Approx(1.0).epsilon(0.02));
    CHECK(t.rows[0][5] == 1.0);  // unregularised run still reaches the target
    CHECK(t.rows[3][5] == 0.0);  // the identity-limit run cannot move
}

TEST_CASE("payoff matrix: small steps pay, large steps break the fixed probe") {
    SweepSpec spec = desk_spec();
    spec.ds = {1e-6};
    spec.eps = {0.0, 1e-2};
    const Table t = payoff_matrix(spec);
    REQUIRE(t.rows.size() == 2);
    REQUIRE(t.columns.size() == 8);
    for (const std::vector<double>& row : t.rows) {
        CHECK(row[0] == 1e-6);
        CHECK(row[5] == 1.0);               // halving run reaches 0.99
        CHECK(row[2] >= 50.0);              // iterations to target
        CHECK(row[2] <= 100.0);
        CHECK(row[3] <= 5.0);               // a couple of backtracks at most
        CHECK(row[6] == 1.0);               // plain fixed probe still breaks down here
        CHECK(std::isfinite(row[4]));
    }

    SweepSpec coarse = desk_spec();
    coarse.max_iter = 15;
    coarse.ds = {1e-4};
    coarse.eps = {1e-3};
    const Table tc = payoff_matrix(coarse);
    REQUIRE(tc.rows.size() == 1);
    CHECK(tc.rows[0][6] == 1.0);  // breakdown is data, not an error
    CHECK(std::isnan(tc.rows[0][2]));
    CHECK(tc.rows[0][5] == 0.0);
}

TEST_CASE("identity suite passes end to end") {
    const IdentityReport r = identity_suite(42, 50);
    REQUIRE(r.checks.size() == 4);
    CHECK(r.checks[0].name == "shift-identity");
    CHECK(r.checks[1].name == "inverse-entry-bounds");
    CHECK(r.checks[2].name == "ascent-pairing");
    CHECK(r.checks[3].name == "zero-eps-conservation");
    for (const IdentityCheck& c : r.checks) {
        INFO(c.name, ": ", c.detail);
        CHECK(c.passed);
    }
    CHECK(r.all_passed);
    CHECK_THROWS_AS(identity_suite(42, 0), std::invalid_argument);
}

TEST_CASE("run_and_emit writes tables plus a summary") {
    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "rf_exp_emit_test";
    std::filesystem::remove_all(dir);

    SweepSpec spec;
    const EmitResult r = run_and_emit("verify", spec, dir.string(), 25);
    CHECK(r.passed);
    REQUIRE(r.files.size() == 2);
    CHECK(r.files[0].find("verify_250fs_") != std::string::npos);
    for (const std::string& f : r.files) CHECK(std::filesystem::exists(f));

    const nlohmann::json summary = nlohmann::json::parse(r.summary_json);
    CHECK(summary["experiment"] == "verify");
    CHECK(summary["passed"] == true);
    REQUIRE(summary["checks"].is_array());
    CHECK(summary["checks"].size() == 4);

    CHECK_THROWS_AS(run_and_emit("nonsense", spec, dir.string()), std::invalid_argument);
    std::filesystem::remove_all(dir);
}
