#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "regflow/constraints.hpp"
#include "regflow/flow.hpp"
#include "regflow/gram.hpp"
#include "regflow/model.hpp"

namespace rf {

// In-memory result table bound for CSV. Metadata lines go out '#'-prefixed
// ahead of the header row; values are written at full double precision, so
// identical runs produce byte-identical files.
struct Table {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

std::string to_csv(const Table& table);
void write_csv(const Table& table, const std::string& path);

struct SweepSpec {
    std::vector<double> tau_fs = {250.0};
    std::vector<double> eps;  // >= 0 each; empty selects the experiment default
    std::vector<double> ds;   // empty selects the experiment default
    int common_steps = 50;    // shared accepted-step horizon for comparable runs
    double s_target = 0.0;    // horizon in s instead of a step count, when > 0
    unsigned seed = 42;
    int n_points = 1000;   // desk-scale grid; 4000 reproduces the full figures
    int max_iter = 100;    // desk-scale iteration budget

    void validate() const;
};

// FNV-1a over the canonical text rendering. 32 bits on purpose: the hash is
// replicated into a numeric column of every emitted row, and a double holds
// 32-bit integers exactly.
std::uint32_t config_hash(const SweepSpec& spec);

// "<experiment>_<tau>fs_<hash>.csv"
std::string experiment_filename(const std::string& experiment, double tau_fs, std::uint32_t hash);

// Two-level problem whose projection system has an order-one spectrum: sin^2
// gate on [0, 20], two affine kernels (constant, linear) normalised to unit
// gated L2 norm, optional fluence constraint appended last. Targets are taken
// from the initial field. The tame sigma_min makes this the quantitative
// home of the eps^2 convergence measurement; the benchmark's tiny sigma_min
// narrows its clean eps^2 window to small eps before saturation.
struct SyntheticProblem {
    QuantumSystem system;
    TimeGrid grid;
    ControlField field;
    Envelope envelope;
    ConstraintSet constraints;
};

SyntheticProblem make_synthetic_problem(bool with_fluence, int n_points = 400);

enum class ProblemKind { synthetic, benchmark };

// Unregularised reference run: one row per iterate with the objective, the
// relative fluence drift, the absolute zero-area deviation, and cond of the
// raw projection matrix. One table per tau in the spec; rows of later taus
// are appended with their tau column distinguishing them.
Table baseline_run(const SweepSpec& spec);

struct SlopeFit {
    std::vector<double> eps;        // positive sweep values, in input order
    std::vector<double> distances;  // relative L2 distance to the eps = 0 run
    std::vector<int> aborted;       // 1: run saw an objective decrease, distance unusable
    double slope = 0.0;             // least-squares log-log slope inside the window
    double window_lo = 0.0;
    double window_hi = 0.0;
    int window_points = 0;
};

struct ConvergenceResult {
    Table table;
    SlopeFit fit;
};

// Fixed-step runs to a common horizon, one per eps (the list must contain 0,
// the reference). All runs share the identical accepted-step sequence by
// construction; a run where the objective ever decreases is flagged aborted,
// since its trajectory is no longer comparable at the common horizon.
ConvergenceResult convergence_sweep(const SweepSpec& spec, ProblemKind kind);

// Per eps: max-over-iterates cond of the regularised projection matrix and
// the terminal relative fluence drift, from target-stopped benchmark runs.
Table cond_drift_sweep(const SweepSpec& spec);

// ds x eps grid of benchmark runs to a common iteration horizon. Each cell
// reports accepted iterations to reach J = 0.99 (nan if never), the rejection
// count of the shrink-on-decrease policy, the terminal relative fluence
// drift, and a breakdown flag measured on a companion plain fixed-step run
// (objective fell 0.01 below its start, or samples went non-finite).
Table payoff_matrix(const SweepSpec& spec);

struct IdentityCheck {
    std::string name;
    bool passed = false;
    double worst = 0.0;  // worst deviation in the check's own metric
    std::string detail;
};

struct IdentityReport {
    std::vector<IdentityCheck> checks;
    bool all_passed = false;
};

// Aggregated exact-identity verification: eigenvalue shift under
// regularisation, inverse-entry bounds, the ascent pairing along benchmark
// iterates (with rho in [0,1]), and exact conservation prediction at eps = 0.
IdentityReport identity_suite(unsigned seed, int trials, int n_points = 1000);

// Dispatch by experiment name ("baseline", "converge", "cond-drift",
// "payoff", "verify"): runs the operation, writes its CSV tables plus a JSON
// summary under out_dir, and reports the files written. `passed` is only
// meaningful for "verify"; other experiments set it true.
struct EmitResult {
    std::vector<std::string> files;
    bool passed = true;
    std::string summary_json;
};

EmitResult run_and_emit(const std::string& experiment, const SweepSpec& spec,
                        const std::string& out_dir, int trials = 1000);

}  // namespace rf
