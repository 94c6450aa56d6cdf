#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "regflow/experiments.hpp"
#include "regflow/flow.hpp"

namespace rf::cli {

// Config or usage problem: the offending key or flag is named in what().
// Maps to exit code 2; numerics map to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumeric = 1;
inline constexpr int kExitUsage = 2;

// A run config parsed, unit-converted, and validated. All fields are in
// atomic units; echo_json holds the canonical echo with both unit systems.
struct RunSetup {
    std::string name = "run";
    std::string out_dir = ".";
    unsigned seed = 42;
    QuantumSystem system;
    ControlField initial_field;
    Envelope envelope;
    ConstraintSet constraints;
    FlowOptions options;
    double stop_at_fidelity = 0.0;  // > 0 arms an early fidelity stop
    std::string echo_json;
};

struct Overrides {
    std::string out_dir;  // empty means "use the config's choice"
    bool has_seed = false;
    unsigned seed = 0;
    bool full_scale = false;
    int trials = 1000;
    bool print_config = false;
};

// Accepts JSON or flat `dotted.key = value` text (sniffed on the first
// non-space byte). Throws ConfigError naming the offending key.
RunSetup parse_run_config(const std::string& path, const Overrides& overrides);
SweepSpec parse_sweep_config(const std::string& path, const Overrides& overrides);

// Executes a validated run and writes <name>_log.csv, <name>_field.csv and
// <name>_summary.json into setup.out_dir. Returns the exit code.
int execute_run(const RunSetup& setup, std::ostream& out);

// Full command dispatcher used by main(); args excludes argv[0].
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rf::cli
