#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lmpseq/model.hpp"
#include "lmpseq/rho_solver.hpp"
#include "lmpseq/thresholds.hpp"

namespace lmpseq {

struct FamilyConfig {
    std::string name; // bernoulli | normal | poisson | triangular | custom
    double theta0 = 0.0;
    std::uint64_t quad_nodes = 64;               // normal families only
    std::vector<double> atom_x, atom_p, atom_r;  // custom family only
};

struct DesignConfig {
    double b = 0.0;
    double c = 0.0;
    std::string direction = "greater_than";
    double z_min = std::numeric_limits<double>::quiet_NaN();
    double z_max = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t grid_nodes = 2001;
    double tol = 1e-9;
    std::uint64_t max_iter = 100000;
    double root_tol = 1e-10;
    double tail_tol = 1e-7;
};

struct SimulateConfig {
    std::uint64_t n_rep = 10000;
    std::uint64_t cap = 1000000;
    double theta_sim = std::numeric_limits<double>::quiet_NaN(); // NaN: theta0
    double theta_asn = std::numeric_limits<double>::quiet_NaN(); // NaN: theta0
    std::uint64_t fixed_horizon = 0; // 0: run the sequential design
    std::vector<double> theta_grid;  // optional power-curve evaluation points
    double fd_h = 0.0;               // optional central-difference slope step
};

struct DpConfig {
    std::uint64_t horizon = 0;
};

struct VerifyConfig {
    std::string mode; // closed_form | finiteness | ordering | shape
    double tol = std::numeric_limits<double>::quiet_NaN(); // mode default applies
    std::vector<std::uint64_t> horizons;                   // closed_form
    std::vector<double> b_values;                          // closed_form
    std::vector<double> c_values;                          // closed_form
    std::uint64_t n_max = 500;                             // finiteness
    std::uint64_t n_rep = 200000;                          // ordering
    std::vector<double> shifts;                            // ordering boundary shifts
    std::vector<std::uint64_t> fixed_horizons;             // ordering fixed-sample rivals
    double asn_tol = 0.1;
    double alpha_tol = 0.01;
    double alpha = std::numeric_limits<double>::quiet_NaN(); // NaN: match base alpha_hat
};

struct SweepConfig {
    std::string kind;            // objective | cost
    std::uint64_t n_max = 100;   // objective: horizons 1..n_max
    std::vector<double> c_values; // cost: designs to solve
};

struct OutputConfig {
    std::string path; // JSONL records; empty writes to stdout
    std::string grid_csv;
    std::string policy_csv;
    std::string ordering_csv;
    std::string power_csv;
};

struct Config {
    FamilyConfig family;
    std::optional<DesignConfig> design;
    std::optional<SimulateConfig> simulate;
    std::optional<DpConfig> dp;
    std::optional<VerifyConfig> verify;
    std::optional<SweepConfig> sweep;
    OutputConfig output;
    std::string config_hash; // fnv1a64 over the raw config bytes
};

/// Strict parse: unknown keys, missing required fields, and type mismatches
/// raise ConfigError naming the offending field.
Config parse_config(const std::string& text);
Config load_config(const std::string& path);

std::string fnv1a64_hex(const std::string& bytes);

ObservationModel make_model(const FamilyConfig& family);
SolverOptions solver_options(const DesignConfig& design);
Direction parse_direction(const std::string& direction);

} // namespace lmpseq
