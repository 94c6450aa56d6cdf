#include "regflow/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

namespace rf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num17(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint32_t fnv32(const std::string& text) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : text) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

std::string hash_hex(std::uint32_t h) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", h);
    return buf;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Flat `dotted.key = value` lines; values that parse as JSON are taken as
// such, anything else is a bare string. '#' starts a comment line.
json flat_to_json(const std::string& text) {
    json root = json::object();
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected `key = value`");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception&) {
            parsed = value;  // bare string
        }
        json* node = &root;
        std::stringstream kp(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(kp, part, '.')) parts.push_back(part);
        for (size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
        (*node)[parts.back()] = parsed;
    }
    return root;
}

json load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
        try {
            return json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse: ") + e.what());
        }
    }
    return flat_to_json(text);
}

// Typed accessors that name the offending key on failure.
double get_num(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError("config key '" + path + "' must be a number");
    return j.get<double>();
}

int get_int(const json& j, const std::string& path) {
    if (!j.is_number_integer())
        throw ConfigError("config key '" + path + "' must be an integer");
    return j.get<int>();
}

std::string get_str(const json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError("config key '" + path + "' must be a string");
    return j.get<std::string>();
}

std::vector<double> get_num_array(const json& j, const std::string& path) {
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) throw ConfigError("config key '" + path + "' must be an array");
    std::vector<double> out;
    for (const json& v : j) {
        if (!v.is_number())
            throw ConfigError("config key '" + path + "' must hold numbers only");
        out.push_back(v.get<double>());
    }
    return out;
}

void reject_unknown(const json& obj, const std::string& where,
                    std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) ok = true;
        if (!ok)
            throw ConfigError("unknown config key '" +
                              (where.empty() ? key : where + "." + key) + "'");
    }
}

std::vector<cplx> parse_state(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError("config key '" + path + "' must be an array");
    std::vector<cplx> out;
    for (const json& v : j) {
        if (v.is_number())
            out.emplace_back(v.get<double>(), 0.0);
        else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
            out.emplace_back(v[0].get<double>(), v[1].get<double>());
        else
            throw ConfigError("config key '" + path +
                              "' entries must be numbers or [re, im] pairs");
    }
    return out;
}

HermitianMatrix parse_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty())
        throw ConfigError("config key '" + path + "' must be a nonempty array of rows");
    const int n = static_cast<int>(j.size());
    HermitianMatrix m(n);
    for (int r = 0; r < n; ++r) {
        const std::vector<cplx> row = parse_state(j[r], path + "[" + std::to_string(r) + "]");
        if (static_cast<int>(row.size()) != n)
            throw ConfigError("config key '" + path + "' must be square");
        for (int c = 0; c < n; ++c) m.at(r, c) = row[c];
    }
    return m;
}

json state_to_json(const std::vector<cplx>& v) {
    json out = json::array();
    for (const cplx& z : v) out.push_back({z.real(), z.imag()});
    return out;
}

json matrix_to_json(const HermitianMatrix& m, int dim) {
    json out = json::array();
    for (int r = 0; r < dim; ++r) {
        json row = json::array();
        for (int c = 0; c < dim; ++c) row.push_back({m.at(r, c).real(), m.at(r, c).imag()});
        out.push_back(row);
    }
    return out;
}

StepPolicy parse_policy(const json& j) {
    reject_unknown(j, "policy",
                   {"kind", "ds", "factor", "min_ds", "alpha", "g_refresh", "probe_h",
                    "safety", "g_fixed"});
    const std::string kind = j.contains("kind") ? get_str(j["kind"], "policy.kind") : "halving";
    StepPolicy p;
    if (kind == "fixed")
        p = StepPolicy::fixed(j.contains("ds") ? get_num(j["ds"], "policy.ds") : 1e-6);
    else if (kind == "halving")
        p = StepPolicy::halving_on_decrease(
            j.contains("ds") ? get_num(j["ds"], "policy.ds") : 5e-7,
            j.contains("factor") ? get_num(j["factor"], "policy.factor") : 0.5,
            j.contains("min_ds") ? get_num(j["min_ds"], "policy.min_ds") : 1e-16);
    else if (kind == "cfl")
        p = StepPolicy::cfl_bound(j.contains("alpha") ? get_num(j["alpha"], "policy.alpha")
                                                      : 1.9);
    else
        throw ConfigError("config key 'policy.kind' must be fixed, halving, or cfl");
    if (j.contains("g_refresh")) p.g_refresh = get_int(j["g_refresh"], "policy.g_refresh");
    if (j.contains("probe_h")) p.probe_h = get_num(j["probe_h"], "policy.probe_h");
    if (j.contains("safety")) p.safety = get_num(j["safety"], "policy.safety");
    if (j.contains("g_fixed")) p.g_fixed = get_num(j["g_fixed"], "policy.g_fixed");
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config key 'policy': ") + e.what());
    }
    return p;
}

json policy_to_json(const StepPolicy& p) {
    json out;
    switch (p.kind) {
        case StepPolicy::Kind::Fixed:
            out["kind"] = "fixed";
            out["ds"] = p.ds;
            break;
        case StepPolicy::Kind::HalvingOnDecrease:
            out["kind"] = "halving";
            out["ds"] = p.ds;
            out["factor"] = p.factor;
            out["min_ds"] = p.min_ds;
            break;
        case StepPolicy::Kind::CflBound:
            out["kind"] = "cfl";
            out["alpha"] = p.alpha;
            out["g_refresh"] = p.g_refresh;
            out["probe_h"] = p.probe_h;
            out["safety"] = p.safety;
            if (p.g_fixed > 0.0) out["g_fixed"] = p.g_fixed;
            break;
    }
    return out;
}

struct ParsedSystem {
    QuantumSystem system;
    TimeGrid grid;
    ControlField field;
    Envelope envelope;
    ConstraintSet benchmark_set;  // populated for the benchmark variant
    bool is_benchmark = false;
    json echo;
};

ParsedSystem parse_system(const json& cfg, int n_points_override) {
    if (!cfg.contains("system") || !cfg["system"].is_object())
        throw ConfigError("config key 'system' must be an object");
    const json& sys = cfg["system"];
    reject_unknown(sys, "system", {"benchmark", "explicit"});
    if (sys.contains("benchmark") == sys.contains("explicit"))
        throw ConfigError("config key 'system' needs exactly one of 'benchmark', 'explicit'");

    ParsedSystem out;
    if (sys.contains("benchmark")) {
        out.is_benchmark = true;
        const json& b = sys["benchmark"];
        // The *_au keys are the echo of a previous parse; values are derived
        // from the laboratory-unit keys, so they are accepted and ignored.
        reject_unknown(b, "system.benchmark",
                       {"omega0_cm", "vdd_cm", "mu_d_debye", "tau_fs", "theta_sg", "omega0_au",
                        "vdd_au", "mu_d_au", "tau_au", "omega_r_au"});
        BenchmarkParams params;
        if (b.contains("omega0_cm")) params.omega0_cm = get_num(b["omega0_cm"], "system.benchmark.omega0_cm");
        if (b.contains("vdd_cm")) params.vdd_cm = get_num(b["vdd_cm"], "system.benchmark.vdd_cm");
        if (b.contains("mu_d_debye"))
            params.mu_d_debye = get_num(b["mu_d_debye"], "system.benchmark.mu_d_debye");
        if (b.contains("tau_fs")) params.tau_fs = get_num(b["tau_fs"], "system.benchmark.tau_fs");
        if (b.contains("theta_sg")) params.theta_sg = get_num(b["theta_sg"], "system.benchmark.theta_sg");
        params.n_points = n_points_override;

        const BenchmarkProblem p = build_benchmark(params);
        out.system = p.system;
        out.grid = p.grid;
        out.field = p.initial_field;
        out.envelope = build_envelope(p.grid, p.tau_au);
        out.benchmark_set = benchmark_constraints(p);

        json echo;
        echo["omega0_cm"] = params.omega0_cm;
        echo["omega0_au"] = params.omega0_au();
        echo["vdd_cm"] = params.vdd_cm;
        echo["vdd_au"] = params.vdd_au();
        echo["mu_d_debye"] = params.mu_d_debye;
        echo["mu_d_au"] = params.mu_d_au();
        echo["tau_fs"] = params.tau_fs;
        echo["tau_au"] = params.tau_au();
        echo["omega_r_au"] = params.omega_r_au();
        echo["theta_sg"] = params.theta_sg;
        out.echo["benchmark"] = echo;
        return out;
    }

    const json& e = sys["explicit"];
    reject_unknown(e, "system.explicit", {"H0", "mu", "psi0", "psif"});
    for (const char* key : {"H0", "mu", "psi0", "psif"})
        if (!e.contains(key))
            throw ConfigError(std::string("config key 'system.explicit.") + key +
                              "' is required");
    out.system.H0 = parse_matrix(e["H0"], "system.explicit.H0");
    out.system.dim = static_cast<int>(e["H0"].size());
    out.system.mu = parse_matrix(e["mu"], "system.explicit.mu");
    out.system.psi0 = parse_state(e["psi0"], "system.explicit.psi0");
    out.system.psif = parse_state(e["psif"], "system.explicit.psif");
    try {
        out.system.validate();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("config key 'system.explicit': ") + err.what());
    }

    if (!cfg.contains("grid") || !cfg["grid"].is_object() || !cfg["grid"].contains("span"))
        throw ConfigError("config key 'grid.span' is required for an explicit system");
    const std::vector<double> span = get_num_array(cfg["grid"]["span"], "grid.span");
    if (span.size() != 2 || !(span[1] > span[0]))
        throw ConfigError("config key 'grid.span' must be [t_start, t_end] with t_end > t_start");
    out.grid = TimeGrid(span[0], span[1], n_points_override);

    if (!cfg.contains("field"))
        throw ConfigError("config key 'field' is required for an explicit system");
    out.field.grid = out.grid;
    out.field.samples = get_num_array(cfg["field"], "field");
    if (static_cast<int>(out.field.samples.size()) != out.grid.n_points)
        throw ConfigError("config key 'field' length must equal grid.n_points");
    out.field.validate();

    out.envelope.tau = 0.5 * (span[1] - span[0]);
    out.envelope.samples.resize(out.grid.n_points);
    if (cfg.contains("envelope") && cfg["envelope"].is_array()) {
        out.envelope.samples = get_num_array(cfg["envelope"], "envelope");
        if (static_cast<int>(out.envelope.samples.size()) != out.grid.n_points)
            throw ConfigError("config key 'envelope' length must equal grid.n_points");
    } else {
        const std::string kind = cfg.contains("envelope")
                                     ? get_str(cfg["envelope"], "envelope")
                                     : "sin2";
        if (kind != "sin2")
            throw ConfigError("config key 'envelope' must be \"sin2\" or a sample array");
        for (int k = 0; k < out.grid.n_points; ++k) {
            const double u = (out.grid.time(k) - span[0]) / (span[1] - span[0]);
            const double gate = std::sin(std::numbers::pi * u);
            out.envelope.samples[k] = gate * gate;
        }
        out.envelope.samples.front() = 0.0;
        out.envelope.samples.back() = 0.0;
    }

    out.echo["explicit"] = {{"H0", matrix_to_json(out.system.H0, out.system.dim)},
                            {"mu", matrix_to_json(out.system.mu, out.system.dim)},
                            {"psi0", state_to_json(out.system.psi0)},
                            {"psif", state_to_json(out.system.psif)}};
    return out;
}

ConstraintSet parse_constraints(const json& cfg, const ParsedSystem& ps, json& echo) {
    if (!cfg.contains("constraints")) {
        if (!ps.is_benchmark)
            throw ConfigError("config key 'constraints' is required for an explicit system");
        echo = "benchmark";
        return ps.benchmark_set;
    }
    const json& c = cfg["constraints"];
    if (c.is_string()) {
        if (get_str(c, "constraints") != "benchmark")
            throw ConfigError("config key 'constraints' must be \"benchmark\" or a list");
        if (!ps.is_benchmark)
            throw ConfigError("config key 'constraints': \"benchmark\" needs the benchmark system");
        echo = "benchmark";
        return ps.benchmark_set;
    }
    if (!c.is_array() || c.empty())
        throw ConfigError("config key 'constraints' must be \"benchmark\" or a nonempty list");

    ConstraintSet set;
    echo = json::array();
    for (size_t i = 0; i < c.size(); ++i) {
        const std::string where = "constraints[" + std::to_string(i) + "]";
        const json& item = c[i];
        if (!item.is_object()) throw ConfigError("config key '" + where + "' must be an object");
        reject_unknown(item, where, {"kind", "kernel", "label", "target"});
        const std::string kind =
            item.contains("kind") ? get_str(item["kind"], where + ".kind") : "kernel";

        Constraint con;
        if (kind == "fluence") {
            con = make_fluence(0.0);
        } else if (kind == "kernel") {
            con.kind = Constraint::Kind::AffineKernel;
            if (!item.contains("kernel"))
                throw ConfigError("config key '" + where + ".kernel' is required");
            if (item["kernel"].is_string()) {
                if (get_str(item["kernel"], where + ".kernel") != "ones")
                    throw ConfigError("config key '" + where +
                                      ".kernel' must be \"ones\" or a sample array");
                con.kernel.assign(ps.grid.n_points, 1.0);
            } else {
                con.kernel = get_num_array(item["kernel"], where + ".kernel");
            }
        } else {
            throw ConfigError("config key '" + where + ".kind' must be kernel or fluence");
        }
        con.label = item.contains("label") ? get_str(item["label"], where + ".label")
                                           : kind + "_" + std::to_string(i);
        if (item.contains("target") && item["target"].is_number())
            con.target = get_num(item["target"], where + ".target");
        else if (!item.contains("target") || item["target"] == "from-initial-field")
            con.target = evaluate(con, ps.field);
        else
            throw ConfigError("config key '" + where +
                              ".target' must be a number or \"from-initial-field\"");
        set.items.push_back(con);

        json item_echo;
        item_echo["kind"] = kind;
        if (kind == "kernel") item_echo["kernel"] = con.kernel;
        item_echo["label"] = con.label;
        item_echo["target"] = con.target;
        echo.push_back(item_echo);
    }
    try {
        set.validate(ps.grid);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config key 'constraints': ") + e.what());
    }
    return set;
}

Table log_table(const FlowLog& log, const ConstraintSet& cons, const RunSetup& setup,
                std::uint32_t hash) {
    Table t;
    t.meta.emplace_back("schema_version", "1");
    t.meta.emplace_back("name", setup.name);
    t.meta.emplace_back("config_hash", hash_hex(hash));
    t.meta.emplace_back("rows", "one per attempted step, plus a closing ds = 0 row "
                                "for the final iterate");
    t.meta.emplace_back("termination", to_string(log.termination));
    t.columns = {"k",   "s",    "accepted", "ds",  "J",           "dJ_first", "g0",
                 "rho", "cond", "sigma_min_sq", "eps", "cfl_product", "rejections"};
    const int m = cons.size();
    for (int i = 1; i <= m; ++i) t.columns.push_back("h_" + std::to_string(i));
    for (int i = 1; i <= m; ++i) t.columns.push_back("drift_pred_" + std::to_string(i));
    for (const IterationRecord& rec : log.records) {
        std::vector<double> row = {static_cast<double>(rec.k),
                                   rec.s_accum,
                                   rec.accepted ? 1.0 : 0.0,
                                   rec.ds,
                                   rec.J,
                                   rec.dJ_firstorder,
                                   rec.g0,
                                   rec.rho,
                                   rec.cond,
                                   rec.sigma_min_sq,
                                   rec.eps,
                                   rec.cfl_product,
                                   static_cast<double>(rec.rejections_this_step)};
        row.insert(row.end(), rec.h.begin(), rec.h.end());
        row.insert(row.end(), rec.drift_pred.begin(), rec.drift_pred.end());
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace

RunSetup parse_run_config(const std::string& path, const Overrides& overrides) {
    const json cfg = load_config(path);
    if (!cfg.is_object()) throw ConfigError("config root must be an object");
    reject_unknown(cfg, "",
                   {"name", "out", "seed", "system", "grid", "field", "envelope",
                    "constraints", "eps", "policy", "tau_stop", "max_iter",
                    "stop_at_fidelity"});

    RunSetup setup;
    if (cfg.contains("name")) setup.name = get_str(cfg["name"], "name");
    if (cfg.contains("out")) setup.out_dir = get_str(cfg["out"], "out");
    if (!overrides.out_dir.empty()) setup.out_dir = overrides.out_dir;
    if (cfg.contains("seed")) setup.seed = static_cast<unsigned>(get_int(cfg["seed"], "seed"));
    if (overrides.has_seed) setup.seed = overrides.seed;

    int n_points = 1000;
    if (cfg.contains("grid")) {
        if (!cfg["grid"].is_object()) throw ConfigError("config key 'grid' must be an object");
        reject_unknown(cfg["grid"], "grid", {"n_points", "span"});
        if (cfg["grid"].contains("n_points"))
            n_points = get_int(cfg["grid"]["n_points"], "grid.n_points");
    }
    if (overrides.full_scale) n_points = 4000;
    if (n_points < 3) throw ConfigError("config key 'grid.n_points' must be at least 3");

    const ParsedSystem ps = parse_system(cfg, n_points);
    setup.system = ps.system;
    setup.initial_field = ps.field;
    setup.envelope = ps.envelope;

    json cons_echo;
    setup.constraints = parse_constraints(cfg, ps, cons_echo);

    setup.options.eps = cfg.contains("eps") ? get_num(cfg["eps"], "eps") : 0.0;
    if (!(setup.options.eps >= 0.0) || !std::isfinite(setup.options.eps))
        throw ConfigError("config key 'eps' must be finite and >= 0");
    setup.options.policy = cfg.contains("policy") ? parse_policy(cfg["policy"])
                                                  : StepPolicy::halving_on_decrease(5e-7, 0.5);
    if (cfg.contains("tau_stop")) setup.options.tau_stop = get_num(cfg["tau_stop"], "tau_stop");
    if (setup.options.tau_stop < 0.0)
        throw ConfigError("config key 'tau_stop' must be >= 0");
    if (cfg.contains("max_iter")) setup.options.max_iter = get_int(cfg["max_iter"], "max_iter");
    else setup.options.max_iter = 100;
    if (setup.options.max_iter < 0) throw ConfigError("config key 'max_iter' must be >= 0");
    if (cfg.contains("stop_at_fidelity"))
        setup.stop_at_fidelity = get_num(cfg["stop_at_fidelity"], "stop_at_fidelity");

    // Feasibility gate: the flow preserves the constraint surface, so it
    // refuses to start off it.
    const std::vector<double> viol = relative_violation(setup.constraints, setup.initial_field);
    for (int i = 0; i < setup.constraints.size(); ++i)
        if (std::abs(viol[i]) > setup.options.feasibility_tol)
            throw ConfigError("initial field violates constraint '" +
                              setup.constraints.items[i].label + "' (relative deviation " +
                              num17(viol[i]) + ")");

    json echo;
    echo["name"] = setup.name;
    echo["out"] = setup.out_dir;
    echo["seed"] = setup.seed;
    echo["system"] = ps.echo;
    echo["grid"] = {{"n_points", n_points},
                    {"span", {ps.grid.t_start, ps.grid.t_end}}};
    if (!ps.is_benchmark && cfg.contains("field"))
        echo["field"] = setup.initial_field.samples;
    if (!ps.is_benchmark) echo["envelope"] = setup.envelope.samples;
    echo["constraints"] = cons_echo;
    echo["eps"] = setup.options.eps;
    echo["policy"] = policy_to_json(setup.options.policy);
    echo["tau_stop"] = setup.options.tau_stop;
    echo["max_iter"] = setup.options.max_iter;
    if (setup.stop_at_fidelity > 0.0) echo["stop_at_fidelity"] = setup.stop_at_fidelity;
    setup.echo_json = echo.dump(2);
    return setup;
}

SweepSpec parse_sweep_config(const std::string& path, const Overrides& overrides) {
    SweepSpec spec;
    if (!path.empty()) {
        const json cfg = load_config(path);
        if (!cfg.is_object()) throw ConfigError("config root must be an object");
        reject_unknown(cfg, "",
                       {"tau_fs", "eps", "ds", "common_steps", "s_target", "seed",
                        "n_points", "max_iter", "out", "name"});
        if (cfg.contains("tau_fs")) spec.tau_fs = get_num_array(cfg["tau_fs"], "tau_fs");
        if (cfg.contains("eps")) spec.eps = get_num_array(cfg["eps"], "eps");
        if (cfg.contains("ds")) spec.ds = get_num_array(cfg["ds"], "ds");
        if (cfg.contains("common_steps"))
            spec.common_steps = get_int(cfg["common_steps"], "common_steps");
        if (cfg.contains("s_target")) spec.s_target = get_num(cfg["s_target"], "s_target");
        if (cfg.contains("seed"))
            spec.seed = static_cast<unsigned>(get_int(cfg["seed"], "seed"));
        if (cfg.contains("n_points")) spec.n_points = get_int(cfg["n_points"], "n_points");
        if (cfg.contains("max_iter")) spec.max_iter = get_int(cfg["max_iter"], "max_iter");
    }
    if (overrides.has_seed) spec.seed = overrides.seed;
    if (overrides.full_scale) spec.n_points = 4000;
    return spec;
}

int execute_run(const RunSetup& setup, std::ostream& out) {
    fs::create_directories(setup.out_dir);
    const std::uint32_t hash = fnv32(setup.echo_json);

    FlowOptions options = setup.options;
    if (setup.stop_at_fidelity > 0.0) {
        const double target = setup.stop_at_fidelity;
        options.stop_when = [target](const IterateView& view) { return view.J >= target; };
    }

    const FidelityObjective objective(setup.system);
    const FlowLog log = run(objective, setup.constraints, setup.envelope,
                            setup.initial_field, options);

    const Table logt = log_table(log, setup.constraints, setup, hash);
    const std::string log_path = (fs::path(setup.out_dir) / (setup.name + "_log.csv")).string();
    write_csv(logt, log_path);

    Table fieldt;
    fieldt.meta.emplace_back("schema_version", "1");
    fieldt.meta.emplace_back("name", setup.name);
    fieldt.meta.emplace_back("config_hash", hash_hex(hash));
    fieldt.columns = {"t", "E_initial", "E_final"};
    for (int k = 0; k < setup.initial_field.grid.n_points; ++k)
        fieldt.rows.push_back({setup.initial_field.grid.time(k),
                               setup.initial_field.samples[k],
                               log.terminal_field.samples[k]});
    const std::string field_path =
        (fs::path(setup.out_dir) / (setup.name + "_field.csv")).string();
    write_csv(fieldt, field_path);

    json summary;
    summary["name"] = setup.name;
    summary["config_hash"] = hash_hex(hash);
    summary["termination"] = to_string(log.termination);
    summary["final_J"] = log.records.empty() ? objective.value(setup.initial_field)
                                             : log.records.back().J;
    summary["accepted_steps"] = log.accepted_steps;
    summary["total_rejections"] = log.total_rejections;
    summary["files"] = {log_path, field_path};
    summary["config"] = json::parse(setup.echo_json);
    const std::string summary_path =
        (fs::path(setup.out_dir) / (setup.name + "_summary.json")).string();
    std::ofstream stream(summary_path, std::ios::binary);
    stream << summary.dump(2) << "\n";

    out << setup.name << ": " << to_string(log.termination) << ", J = "
        << num17(summary["final_J"].get<double>()) << ", accepted " << log.accepted_steps
        << ", rejected " << log.total_rejections << "\n";
    out << "wrote " << log_path << ", " << field_path << ", " << summary_path << "\n";

    const bool ok = log.termination == Termination::tolerance ||
                    log.termination == Termination::max_iterations;
    return ok ? kExitOk : kExitNumeric;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Tikhonov-regularised projected gradient flow for constrained pulse shaping"};
    app.name("regflow");
    app.require_subcommand(1);

    std::string run_config;
    std::string exp_name;
    std::string exp_config;
    Overrides overrides;
    unsigned seed_value = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", overrides.out_dir, "output directory (overrides the config)");
        cmd->add_option("--seed", seed_value, "RNG seed (overrides the config)")
            ->each([&](const std::string&) { overrides.has_seed = true; });
        cmd->add_flag("--full-scale", overrides.full_scale,
                      "run on the full 4000-point grid instead of the desk grid");
        cmd->add_flag("--print-config", overrides.print_config,
                      "echo the validated config (both unit systems) and exit");
        cmd->add_option("--trials", overrides.trials, "trial count for the verify suite");
    };

    CLI::App* run_cmd = app.add_subcommand("run", "one flow run from a config file");
    run_cmd->add_option("config", run_config, "run config (JSON or key = value)")->required();
    add_common(run_cmd);

    CLI::App* exp_cmd = app.add_subcommand(
        "experiment", "experiment suites: baseline, converge, cond-drift, payoff, verify");
    exp_cmd->add_option("name", exp_name, "experiment name")->required();
    exp_cmd->add_option("config", exp_config, "sweep config (optional; defaults per suite)");
    add_common(exp_cmd);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help() << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (run_cmd->parsed()) {
            overrides.seed = seed_value;
            const RunSetup setup = parse_run_config(run_config, overrides);
            if (overrides.print_config) {
                out << setup.echo_json << "\n";
                return kExitOk;
            }
            return execute_run(setup, out);
        }

        overrides.seed = seed_value;
        static const std::vector<std::string> known = {"baseline", "converge", "cond-drift",
                                                       "payoff", "verify"};
        if (std::find(known.begin(), known.end(), exp_name) == known.end())
            throw ConfigError("unknown experiment '" + exp_name +
                              "' (expected baseline, converge, cond-drift, payoff, or verify)");
        const SweepSpec spec = parse_sweep_config(exp_config, overrides);
        if (overrides.print_config) {
            json echo;
            echo["tau_fs"] = spec.tau_fs;
            echo["eps"] = spec.eps;
            echo["ds"] = spec.ds;
            echo["common_steps"] = spec.common_steps;
            echo["s_target"] = spec.s_target;
            echo["seed"] = spec.seed;
            echo["n_points"] = spec.n_points;
            echo["max_iter"] = spec.max_iter;
            out << echo.dump(2) << "\n";
            return kExitOk;
        }
        std::string out_dir = overrides.out_dir.empty() ? "." : overrides.out_dir;
        const EmitResult result = run_and_emit(exp_name, spec, out_dir, overrides.trials);
        for (const std::string& f : result.files) out << "wrote " << f << "\n";
        if (exp_name == "verify") {
            const json summary = json::parse(result.summary_json);
            for (const json& check : summary["checks"])
                out << (check["passed"].get<bool>() ? "PASS " : "FAIL ")
                    << check["name"].get<std::string>() << " (worst "
                    << num17(check["worst"].get<double>()) << ")\n";
            if (!result.passed) {
                err << "verify: identity checks failed\n";
                return kExitNumeric;
            }
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace rf::cli
