#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "lmpseq/config.hpp"
#include "lmpseq/dp_truncated.hpp"
#include "lmpseq/errors.hpp"
#include "lmpseq/lagrange_verify.hpp"
#include "lmpseq/model.hpp"
#include "lmpseq/rho_solver.hpp"
#include "lmpseq/simulate.hpp"
#include "lmpseq/thresholds.hpp"

namespace {

using nlohmann::json;
using namespace lmpseq;

constexpr const char* kVersion = "0.1.0";

struct CliArgs {
    std::string config_path;
    std::uint64_t seed = 1;
    std::string output_override;
    std::string format = "jsonl";
    std::string emit_grid;
    std::string emit_policy;
};

/// JSONL destination: one compact record per line, keys in sorted order, so
/// equal runs produce byte-identical output.
class RecordSink {
public:
    explicit RecordSink(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary);
            if (!file_) throw ConfigError("cannot open output file '" + path + "'");
        }
    }
    void write(const json& record) { stream() << record.dump() << '\n'; }
    void flush() {
        stream().flush();
        if (file_.is_open() && !file_) throw ConfigError("failed writing the output file");
    }

private:
    std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }
    std::ofstream file_;
};

void apply_thread_cap() {
    const char* raw = std::getenv("LMPSEQ_THREADS");
    if (raw == nullptr || *raw == '\0') return;
    char* end = nullptr;
    const long value = std::strtol(raw, &end, 10);
    if (end == raw || *end != '\0' || value < 1)
        throw ConfigError("LMPSEQ_THREADS must be a positive integer");
    const int cap = static_cast<int>(std::min<long>(value, omp_get_max_threads()));
    omp_set_num_threads(cap);
}

const DesignConfig& need_design(const Config& config, const char* command) {
    if (!config.design)
        throw ConfigError(std::string("config: the ") + command + " command requires a design block");
    return *config.design;
}

std::string direction_name(Direction direction) {
    return direction == Direction::GreaterThan ? "greater_than" : "less_than";
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body,
                const char* what) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError(std::string("cannot open ") + what + " file '" + path + "'");
    body(os);
    os.flush();
    if (!os) throw ConfigError(std::string("failed writing ") + what + " file '" + path + "'");
}

json design_record(const Config& config, const ObservationModel& model, const DesignBuild& build) {
    const TestDesign& d = build.design;
    return json{
        {"record", "design"},
        {"family", config.family.name},
        {"theta0", model.theta0()},
        {"b", d.b},
        {"c", d.c},
        {"direction", direction_name(d.direction)},
        {"degenerate", d.degenerate},
        {"margin", build.thresholds.margin},
        {"lower", d.lower},
        {"upper", d.upper},
        {"decision_cut", d.decision_cut},
        {"lower_offset", d.lower_offset},
        {"upper_offset", d.upper_offset},
        {"residual_lower", d.residual_lower},
        {"residual_upper", d.residual_upper},
        {"tangency_warning", d.tangency_warning},
        {"grid_coordinates", d.direction == Direction::LessThan ? "negated_score" : "score"},
        {"grid_nodes", d.grid_nodes},
        {"grid_z_min", d.grid_z_min},
        {"grid_z_max", d.grid_z_max},
        {"iterations", d.iterations},
        {"sup_change", d.sup_change},
        {"tail_defect", d.tail_defect},
    };
}

json simulate_record(const SimulationReport& r) {
    return json{
        {"record", "simulate"},
        {"b", r.b},
        {"c", r.c},
        {"theta_sim", r.theta_sim},
        {"theta_asn", r.theta_asn},
        {"n_rep", r.n_rep},
        {"seed", r.seed},
        {"cap", r.cap},
        {"alpha_hat", r.alpha_hat},
        {"se_alpha", r.se_alpha},
        {"asn_hat", r.asn_hat},
        {"se_asn", r.se_asn},
        {"beta_dot_hat", r.beta_dot_hat},
        {"se_beta_dot", r.se_beta_dot},
        {"L_hat", r.L_hat},
        {"se_L", r.se_L},
        {"capped_fraction", r.capped_fraction},
        {"biased", r.biased},
    };
}

std::string emit_path(const std::string& override_path, const std::string& config_path) {
    return override_path.empty() ? config_path : override_path;
}

bool run_design(const Config& config, const CliArgs& args, RecordSink& sink) {
    const DesignConfig& dc = need_design(config, "design");
    const ObservationModel model = make_model(config.family);
    const DesignBuild build =
        make_design_build(model, dc.b, dc.c, solver_options(dc), parse_direction(dc.direction));
    sink.write(design_record(config, model, build));
    const std::string grid_path = emit_path(args.emit_grid, config.output.grid_csv);
    if (!grid_path.empty())
        write_file(grid_path, [&](std::ostream& os) { write_grid_csv(build.rho, os); }, "grid csv");
    return true;
}

bool run_simulate(const Config& config, const CliArgs& args, RecordSink& sink) {
    const DesignConfig& dc = need_design(config, "simulate");
    if (!config.simulate) throw ConfigError("config: the simulate command requires a simulate block");
    const SimulateConfig& sc = *config.simulate;
    const ObservationModel model = make_model(config.family);
    const Direction direction = parse_direction(dc.direction);

    EstimateOptions options;
    options.n_rep = sc.n_rep;
    options.seed = args.seed;
    options.cap = sc.cap;
    options.theta_sim = sc.theta_sim;
    options.theta_asn = sc.theta_asn;

    PathPolicy policy;
    if (sc.fixed_horizon == 0) {
        const DesignBuild build =
            make_design_build(model, dc.b, dc.c, solver_options(dc), direction);
        sink.write(design_record(config, model, build));
        policy = path_policy(build.design);
        const std::string grid_path = emit_path(args.emit_grid, config.output.grid_csv);
        if (!grid_path.empty())
            write_file(grid_path, [&](std::ostream& os) { write_grid_csv(build.rho, os); }, "grid csv");
    } else {
        policy.lower = -std::numeric_limits<double>::infinity();
        policy.upper = std::numeric_limits<double>::infinity();
        policy.direction = direction;
        policy.decision_cut = direction == Direction::LessThan ? -dc.b : dc.b;
        policy.fixed_horizon = sc.fixed_horizon;
        sink.write(json{{"record", "policy"},
                        {"kind", "fixed_horizon"},
                        {"horizon", sc.fixed_horizon},
                        {"decision_cut", policy.decision_cut},
                        {"direction", direction_name(direction)}});
    }

    sink.write(simulate_record(estimate(policy, dc.b, dc.c, model, options)));

    if (!sc.theta_grid.empty()) {
        const std::vector<PowerPoint> points = power_curve(policy, model, sc.theta_grid, options);
        for (const PowerPoint& p : points)
            sink.write(json{{"record", "power"}, {"theta", p.theta}, {"power", p.power}, {"se", p.se}});
        if (!config.output.power_csv.empty())
            write_file(
                config.output.power_csv,
                [&](std::ostream& os) {
                    os << "theta,power,se\n";
                    char buf[96];
                    for (const PowerPoint& p : points) {
                        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.theta, p.power, p.se);
                        os << buf;
                    }
                },
                "power csv");
    }
    if (sc.fd_h > 0.0) {
        const SlopeEstimate slope = fd_power_slope(policy, model, sc.fd_h, options);
        sink.write(
            json{{"record", "fd_slope"}, {"h", slope.h}, {"slope", slope.slope}, {"se", slope.se}});
    }
    return true;
}

void require_greater_than(const DesignConfig& dc, const char* command) {
    if (parse_direction(dc.direction) != Direction::GreaterThan)
        throw ConfigError(std::string("config: the ") + command +
                          " command supports greater_than designs only");
}

bool run_dp(const Config& config, const CliArgs& args, RecordSink& sink) {
    const DesignConfig& dc = need_design(config, "dp");
    if (!config.dp) throw ConfigError("config: the dp command requires a dp block");
    require_greater_than(dc, "dp");
    const ObservationModel model = make_model(config.family);
    const TruncatedPolicy policy =
        backward_induction(model, dc.b, dc.c, static_cast<std::size_t>(config.dp->horizon));
    const PolicyEvaluation eval = evaluate_L_truncated(model, policy);
    sink.write(json{
        {"record", "dp"},
        {"horizon", policy.horizon},
        {"atom_count", policy.atom_count},
        {"b", policy.b},
        {"c", policy.c},
        {"value", policy.value},
        {"L", eval.L},
        {"asn", eval.asn},
        {"alpha", eval.alpha},
        {"beta_dot", eval.beta_dot},
        {"identity_gap", std::fabs(policy.value - eval.L)},
    });
    const std::string policy_path = emit_path(args.emit_policy, config.output.policy_csv);
    if (!policy_path.empty())
        write_file(
            policy_path, [&](std::ostream& os) { write_policy_csv(model, policy, os); }, "policy csv");
    return true;
}

bool run_bruteforce(const Config& config, const CliArgs& args, RecordSink& sink) {
    (void)args;
    const DesignConfig& dc = need_design(config, "bruteforce");
    if (!config.dp) throw ConfigError("config: the bruteforce command requires a dp block");
    require_greater_than(dc, "bruteforce");
    const ObservationModel model = make_model(config.family);
    const auto horizon = static_cast<std::size_t>(config.dp->horizon);
    const TruncatedPolicy policy = backward_induction(model, dc.b, dc.c, horizon);
    const BruteForceResult brute = brute_force_min(model, dc.b, dc.c, horizon);
    const double gap = std::fabs(policy.value - brute.value);
    const bool agree = gap <= 1e-12;
    sink.write(json{
        {"record", "bruteforce"},
        {"horizon", horizon},
        {"b", dc.b},
        {"c", dc.c},
        {"value", brute.value},
        {"rules_scanned", brute.rules_scanned},
        {"dp_value", policy.value},
        {"abs_gap", gap},
        {"agree", agree},
    });
    return agree;
}

bool run_verify_closed_form(const Config& config, RecordSink& sink) {
    const VerifyConfig& vc = *config.verify;
    if (config.family.name != "triangular")
        throw ConfigError("config: verify closed_form requires the triangular family");
    const ObservationModel model = make_model(config.family);
    std::vector<std::uint64_t> horizons = vc.horizons;
    if (horizons.empty())
        for (std::uint64_t n = 1; n <= 10; ++n) horizons.push_back(n);
    std::vector<double> b_values = vc.b_values.empty() ? std::vector<double>{-1.0, 0.0, 1.0} : vc.b_values;
    std::vector<double> c_values =
        vc.c_values.empty() ? std::vector<double>{0.01, 0.1, 1.0} : vc.c_values;
    const double tol = std::isnan(vc.tol) ? 1e-6 : vc.tol;

    bool all_ok = true;
    double max_abs_error = 0.0;
    for (const std::uint64_t n : horizons)
        for (const double b : b_values)
            for (const double c : c_values) {
                const double pipeline = fixed_sample_L(model, n, b, c);
                const double closed = closed_form_L_triangular(n, b, c);
                const double abs_error = std::fabs(pipeline - closed);
                max_abs_error = std::max(max_abs_error, abs_error);
                const bool ok = abs_error <= tol;
                all_ok = all_ok && ok;
                sink.write(json{
                    {"record", "closed_form_check"},
                    {"n", n},
                    {"b", b},
                    {"c", c},
                    {"pipeline", pipeline},
                    {"closed_form", closed},
                    {"abs_error", abs_error},
                    {"ok", ok},
                });
            }
    sink.write(json{{"record", "closed_form_summary"},
                    {"max_abs_error", max_abs_error},
                    {"tol", tol},
                    {"all_ok", all_ok}});
    return all_ok;
}

bool run_verify_finiteness(const Config& config, RecordSink& sink) {
    const VerifyConfig& vc = *config.verify;
    const DesignConfig& dc = need_design(config, "verify finiteness");
    const ObservationModel model = make_model(config.family);
    const FinitenessProbe probe = finiteness_probe(model, dc.b, dc.c, vc.n_max);
    sink.write(json{
        {"record", "finiteness"},
        {"b", dc.b},
        {"c", dc.c},
        {"n_max", vc.n_max},
        {"verdict", probe.verdict == FinitenessVerdict::DivergenceDetected ? "divergence_detected"
                                                                           : "finite_so_far"},
        {"detected_at", probe.detected_at},
        {"argmin", probe.argmin},
        {"min_L", probe.min_L},
        {"floor", probe.floor},
    });
    return true;
}

bool run_verify_ordering(const Config& config, const CliArgs& args, RecordSink& sink) {
    const VerifyConfig& vc = *config.verify;
    const DesignConfig& dc = need_design(config, "verify ordering");
    require_greater_than(dc, "verify ordering");
    const ObservationModel model = make_model(config.family);
    const DesignBuild build = make_design_build(model, dc.b, dc.c, solver_options(dc));
    sink.write(design_record(config, model, build));

    ComparisonOptions options;
    options.n_rep = vc.n_rep;
    options.seed = args.seed;
    options.asn_tol = vc.asn_tol;
    options.alpha_tol = vc.alpha_tol;

    const std::vector<double> shifts = vc.shifts.empty() ? std::vector<double>{0.25, 0.5} : vc.shifts;
    std::vector<std::uint64_t> fixed_horizons = vc.fixed_horizons;
    if (fixed_horizons.empty() && model.is_discrete()) fixed_horizons = {2, 5, 10};

    std::vector<Competitor> competitors;
    char label[64];
    for (const double s : shifts) {
        std::snprintf(label, sizeof label, "widen_%g", s);
        competitors.push_back(shifted_competitor(build.design, -s, s, label));
        std::snprintf(label, sizeof label, "narrow_%g", s);
        competitors.push_back(shifted_competitor(build.design, s, -s, label));
        std::snprintf(label, sizeof label, "translate_up_%g", s);
        competitors.push_back(shifted_competitor(build.design, s, s, label));
        std::snprintf(label, sizeof label, "translate_down_%g", s);
        competitors.push_back(shifted_competitor(build.design, -s, -s, label));
    }
    if (!fixed_horizons.empty()) {
        double alpha = vc.alpha;
        if (std::isnan(alpha)) {
            EstimateOptions est;
            est.n_rep = vc.n_rep;
            est.seed = args.seed;
            alpha = estimate(build.design, model, est).alpha_hat;
        }
        for (const std::uint64_t n : fixed_horizons) {
            std::snprintf(label, sizeof label, "fixed_n%llu", static_cast<unsigned long long>(n));
            competitors.push_back(fixed_sample_competitor(model, n, alpha, label));
        }
    }

    const ComparisonReport report = compare_designs(model, build.design, competitors, options);
    const auto row_record = [](const ComparisonRow& row) {
        return json{
            {"record", "ordering"},
            {"design_id", row.label},
            {"asn", row.asn},
            {"alpha", row.alpha},
            {"beta_dot", row.beta_dot},
            {"L", row.L},
            {"se_L", row.se_L},
            {"gap_mean", row.gap_mean},
            {"gap_se", row.gap_se},
            {"matched", row.matched},
            {"L_ok", row.L_ok},
            {"slope_ok", row.slope_ok},
            {"verdict", row.verdict},
        };
    };
    sink.write(row_record(report.base));
    for (const ComparisonRow& row : report.rows) sink.write(row_record(row));
    sink.write(json{{"record", "ordering_summary"},
                    {"b", report.b},
                    {"c", report.c},
                    {"n_rep", vc.n_rep},
                    {"all_ok", report.all_ok}});
    if (!config.output.ordering_csv.empty())
        write_file(
            config.output.ordering_csv, [&](std::ostream& os) { write_ordering_csv(report, os); },
            "ordering csv");
    return report.all_ok;
}

bool run_verify_shape(const Config& config, RecordSink& sink) {
    const VerifyConfig& vc = *config.verify;
    const DesignConfig& dc = need_design(config, "verify shape");
    const ObservationModel model = make_model(config.family);
    const DesignBuild build = make_design_build(model, dc.b, dc.c, solver_options(dc),
                                                parse_direction(dc.direction));
    const double tol = std::isnan(vc.tol) ? 1e-7 : vc.tol;
    const std::vector<std::string> violations = shape_violations(build.rho, tol);
    sink.write(json{
        {"record", "shape"},
        {"c", dc.c},
        {"tol", tol},
        {"iterations", build.rho.iterations},
        {"sup_change", build.rho.sup_change},
        {"tail_defect", build.rho.tail_defect()},
        {"violations", violations},
        {"ok", violations.empty()},
    });
    return violations.empty();
}

bool run_verify(const Config& config, const CliArgs& args, RecordSink& sink) {
    if (!config.verify) throw ConfigError("config: the verify command requires a verify block");
    const std::string& mode = config.verify->mode;
    if (mode == "closed_form") return run_verify_closed_form(config, sink);
    if (mode == "finiteness") return run_verify_finiteness(config, sink);
    if (mode == "ordering") return run_verify_ordering(config, args, sink);
    return run_verify_shape(config, sink);
}

bool run_sweep(const Config& config, RecordSink& sink) {
    if (!config.sweep) throw ConfigError("config: the sweep command requires a sweep block");
    const SweepConfig& sc = *config.sweep;
    const DesignConfig& dc = need_design(config, "sweep");
    const ObservationModel model = make_model(config.family);
    if (sc.kind == "objective") {
        const std::vector<double> values = fixed_sample_L_sequence(model, sc.n_max, dc.b, dc.c);
        std::uint64_t argmin = 1;
        for (std::uint64_t n = 1; n <= values.size(); ++n) {
            const double L = values[static_cast<std::size_t>(n - 1)];
            if (L < values[static_cast<std::size_t>(argmin - 1)]) argmin = n;
            sink.write(json{{"record", "objective_sweep"}, {"n", n}, {"L", L}});
        }
        sink.write(json{{"record", "objective_sweep_summary"},
                        {"n_max", sc.n_max},
                        {"argmin", argmin},
                        {"min_L", values[static_cast<std::size_t>(argmin - 1)]}});
        return true;
    }
    const Direction direction = parse_direction(dc.direction);
    for (const double c : sc.c_values) {
        const DesignBuild build = make_design_build(model, dc.b, c, solver_options(dc), direction);
        const TestDesign& d = build.design;
        sink.write(json{
            {"record", "cost_sweep"},
            {"c", c},
            {"degenerate", d.degenerate},
            {"margin", build.thresholds.margin},
            {"lower_offset", d.lower_offset},
            {"upper_offset", d.upper_offset},
            {"lower", d.lower},
            {"upper", d.upper},
            {"iterations", d.iterations},
        });
    }
    return true;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"design, evaluate, and verify locally most powerful sequential tests"};
    app.require_subcommand(1);
    CliArgs args;
    app.add_option("--config", args.config_path, "path to the JSON run configuration")->required();
    app.add_option("--seed", args.seed, "base seed for all replication substreams");
    app.add_option("--output", args.output_override, "JSONL destination (overrides output.path)");
    app.add_option("--format", args.format, "record format (jsonl)");
    app.add_option("--emit-grid", args.emit_grid, "value-grid CSV destination (overrides output.grid_csv)");
    app.add_option("--emit-policy", args.emit_policy,
                   "stop-table CSV destination (overrides output.policy_csv)");

    CLI::App* cmd_design = app.add_subcommand("design", "solve the stopping boundaries for (b, c)");
    CLI::App* cmd_simulate = app.add_subcommand("simulate", "Monte Carlo error and cost estimates");
    CLI::App* cmd_dp = app.add_subcommand("dp", "exact truncated backward induction");
    CLI::App* cmd_bruteforce =
        app.add_subcommand("bruteforce", "exhaustive check of the truncated dynamic program");
    CLI::App* cmd_verify = app.add_subcommand("verify", "optimality and consistency verifications");
    CLI::App* cmd_sweep = app.add_subcommand("sweep", "horizon or cost parameter sweeps");
    for (CLI::App* sub :
         {cmd_design, cmd_simulate, cmd_dp, cmd_bruteforce, cmd_verify, cmd_sweep})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_thread_cap();
        if (args.format != "jsonl") throw ConfigError("only the jsonl record format is supported");
        const Config config = load_config(args.config_path);

        std::string command = "design";
        if (cmd_simulate->parsed()) command = "simulate";
        if (cmd_dp->parsed()) command = "dp";
        if (cmd_bruteforce->parsed()) command = "bruteforce";
        if (cmd_verify->parsed()) command = "verify";
        if (cmd_sweep->parsed()) command = "sweep";

        RecordSink sink(args.output_override.empty() ? config.output.path : args.output_override);
        sink.write(json{
            {"record", "meta"},
            {"tool", "lmpseq"},
            {"version", kVersion},
            {"command", command},
            {"config_hash", config.config_hash},
            {"seed", args.seed},
        });

        bool ok = true;
        if (cmd_design->parsed()) ok = run_design(config, args, sink);
        if (cmd_simulate->parsed()) ok = run_simulate(config, args, sink);
        if (cmd_dp->parsed()) ok = run_dp(config, args, sink);
        if (cmd_bruteforce->parsed()) ok = run_bruteforce(config, args, sink);
        if (cmd_verify->parsed()) ok = run_verify(config, args, sink);
        if (cmd_sweep->parsed()) ok = run_sweep(config, sink);
        sink.flush();
        if (!ok) std::cerr << "verification failed; see the emitted records\n";
        return ok ? 0 : 3;
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const UnsupportedModelError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const CapacityError& e) {
        std::cerr << e.what() << '\n';
        return 4;
    } catch (const NumericError& e) {
        std::cerr << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << '\n';
        return 3;
    }
}
