#include "lmpseq/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include "json.hpp"

#include "lmpseq/errors.hpp"

namespace lmpseq {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw ConfigError("config: " + message); }

void check_object(const json& value, const std::string& where) {
    if (!value.is_object()) fail("block '" + where + "' must be an object");
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) {
                known = true;
                break;
            }
        if (!known) fail("unknown key '" + where + "." + item.key() + "'");
    }
}

double get_double(const json& obj, const std::string& where, const char* key,
                  std::optional<double> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail("missing required field '" + where + "." + key + "'");
    }
    const json& value = obj.at(key);
    if (!value.is_number()) fail("field '" + where + "." + key + "' must be a number");
    return value.get<double>();
}

std::uint64_t get_uint(const json& obj, const std::string& where, const char* key,
                       std::optional<std::uint64_t> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail("missing required field '" + where + "." + key + "'");
    }
    const json& value = obj.at(key);
    if (value.is_number_unsigned()) return value.get<std::uint64_t>();
    if (value.is_number_integer() && value.get<long long>() >= 0)
        return static_cast<std::uint64_t>(value.get<long long>());
    fail("field '" + where + "." + key + "' must be a non-negative integer");
}

std::string get_string(const json& obj, const std::string& where, const char* key,
                       std::optional<std::string> fallback = std::nullopt) {
    if (!obj.contains(key)) {
        if (fallback) return *fallback;
        fail("missing required field '" + where + "." + key + "'");
    }
    const json& value = obj.at(key);
    if (!value.is_string()) fail("field '" + where + "." + key + "' must be a string");
    return value.get<std::string>();
}

std::vector<double> get_double_array(const json& obj, const std::string& where, const char* key) {
    if (!obj.contains(key)) return {};
    const json& value = obj.at(key);
    if (!value.is_array()) fail("field '" + where + "." + key + "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(value.size());
    for (const json& item : value) {
        if (!item.is_number()) fail("field '" + where + "." + key + "' must be an array of numbers");
        out.push_back(item.get<double>());
    }
    return out;
}

std::vector<std::uint64_t> get_uint_array(const json& obj, const std::string& where, const char* key) {
    if (!obj.contains(key)) return {};
    const json& value = obj.at(key);
    if (!value.is_array())
        fail("field '" + where + "." + key + "' must be an array of non-negative integers");
    std::vector<std::uint64_t> out;
    out.reserve(value.size());
    for (const json& item : value) {
        if (item.is_number_unsigned())
            out.push_back(item.get<std::uint64_t>());
        else if (item.is_number_integer() && item.get<long long>() >= 0)
            out.push_back(static_cast<std::uint64_t>(item.get<long long>()));
        else
            fail("field '" + where + "." + key + "' must be an array of non-negative integers");
    }
    return out;
}

FamilyConfig parse_family(const json& obj) {
    check_object(obj, "family");
    check_keys(obj, "family", {"name", "theta0", "quad_nodes", "atoms"});
    FamilyConfig family;
    family.name = get_string(obj, "family", "name");
    const bool custom = family.name == "custom";
    if (custom) {
        if (obj.contains("theta0"))
            fail("field 'family.theta0' does not apply to the custom family (its null is the given atoms)");
        if (!obj.contains("atoms")) fail("missing required field 'family.atoms'");
        const json& atoms = obj.at("atoms");
        check_object(atoms, "family.atoms");
        check_keys(atoms, "family.atoms", {"x", "p", "r"});
        family.atom_x = get_double_array(atoms, "family.atoms", "x");
        family.atom_p = get_double_array(atoms, "family.atoms", "p");
        family.atom_r = get_double_array(atoms, "family.atoms", "r");
        if (family.atom_x.empty() || family.atom_x.size() != family.atom_p.size() ||
            family.atom_x.size() != family.atom_r.size())
            fail("fields 'family.atoms.x/p/r' must be non-empty arrays of equal length");
    } else {
        if (obj.contains("atoms")) fail("field 'family.atoms' applies only to the custom family");
        family.theta0 = get_double(obj, "family", "theta0");
    }
    family.quad_nodes = get_uint(obj, "family", "quad_nodes", 64);
    return family;
}

DesignConfig parse_design(const json& obj) {
    check_object(obj, "design");
    check_keys(obj, "design",
               {"b", "c", "direction", "z_min", "z_max", "grid_nodes", "tol", "max_iter", "root_tol",
                "tail_tol"});
    DesignConfig design;
    design.b = get_double(obj, "design", "b");
    design.c = get_double(obj, "design", "c");
    design.direction = get_string(obj, "design", "direction", std::string("greater_than"));
    parse_direction(design.direction); // rejects unknown names early
    design.z_min = get_double(obj, "design", "z_min", design.z_min);
    design.z_max = get_double(obj, "design", "z_max", design.z_max);
    design.grid_nodes = get_uint(obj, "design", "grid_nodes", design.grid_nodes);
    design.tol = get_double(obj, "design", "tol", design.tol);
    design.max_iter = get_uint(obj, "design", "max_iter", design.max_iter);
    design.root_tol = get_double(obj, "design", "root_tol", design.root_tol);
    design.tail_tol = get_double(obj, "design", "tail_tol", design.tail_tol);
    return design;
}

SimulateConfig parse_simulate(const json& obj) {
    check_object(obj, "simulate");
    check_keys(obj, "simulate",
               {"n_rep", "cap", "theta_sim", "theta_asn", "fixed_horizon", "theta_grid", "fd_h"});
    SimulateConfig sim;
    sim.n_rep = get_uint(obj, "simulate", "n_rep", sim.n_rep);
    sim.cap = get_uint(obj, "simulate", "cap", sim.cap);
    sim.theta_sim = get_double(obj, "simulate", "theta_sim", sim.theta_sim);
    sim.theta_asn = get_double(obj, "simulate", "theta_asn", sim.theta_asn);
    sim.fixed_horizon = get_uint(obj, "simulate", "fixed_horizon", sim.fixed_horizon);
    sim.theta_grid = get_double_array(obj, "simulate", "theta_grid");
    sim.fd_h = get_double(obj, "simulate", "fd_h", sim.fd_h);
    return sim;
}

DpConfig parse_dp(const json& obj) {
    check_object(obj, "dp");
    check_keys(obj, "dp", {"horizon"});
    DpConfig dp;
    dp.horizon = get_uint(obj, "dp", "horizon");
    return dp;
}

VerifyConfig parse_verify(const json& obj) {
    check_object(obj, "verify");
    check_keys(obj, "verify",
               {"mode", "tol", "horizons", "b_values", "c_values", "n_max", "n_rep", "shifts",
                "fixed_horizons", "asn_tol", "alpha_tol", "alpha"});
    VerifyConfig verify;
    verify.mode = get_string(obj, "verify", "mode");
    if (verify.mode != "closed_form" && verify.mode != "finiteness" && verify.mode != "ordering" &&
        verify.mode != "shape")
        fail("field 'verify.mode' must be one of closed_form, finiteness, ordering, shape");
    verify.tol = get_double(obj, "verify", "tol", verify.tol);
    verify.horizons = get_uint_array(obj, "verify", "horizons");
    verify.b_values = get_double_array(obj, "verify", "b_values");
    verify.c_values = get_double_array(obj, "verify", "c_values");
    verify.n_max = get_uint(obj, "verify", "n_max", verify.n_max);
    verify.n_rep = get_uint(obj, "verify", "n_rep", verify.n_rep);
    verify.shifts = get_double_array(obj, "verify", "shifts");
    verify.fixed_horizons = get_uint_array(obj, "verify", "fixed_horizons");
    verify.asn_tol = get_double(obj, "verify", "asn_tol", verify.asn_tol);
    verify.alpha_tol = get_double(obj, "verify", "alpha_tol", verify.alpha_tol);
    verify.alpha = get_double(obj, "verify", "alpha", verify.alpha);
    return verify;
}

SweepConfig parse_sweep(const json& obj) {
    check_object(obj, "sweep");
    check_keys(obj, "sweep", {"kind", "n_max", "c_values"});
    SweepConfig sweep;
    sweep.kind = get_string(obj, "sweep", "kind");
    if (sweep.kind != "objective" && sweep.kind != "cost")
        fail("field 'sweep.kind' must be one of objective, cost");
    sweep.n_max = get_uint(obj, "sweep", "n_max", sweep.n_max);
    sweep.c_values = get_double_array(obj, "sweep", "c_values");
    if (sweep.kind == "cost" && sweep.c_values.empty())
        fail("field 'sweep.c_values' must be a non-empty array for the cost sweep");
    return sweep;
}

OutputConfig parse_output(const json& obj) {
    check_object(obj, "output");
    check_keys(obj, "output", {"path", "format", "grid_csv", "policy_csv", "ordering_csv", "power_csv"});
    OutputConfig output;
    const std::string format = get_string(obj, "output", "format", std::string("jsonl"));
    if (format != "jsonl") fail("field 'output.format' supports only jsonl");
    output.path = get_string(obj, "output", "path", std::string());
    output.grid_csv = get_string(obj, "output", "grid_csv", std::string());
    output.policy_csv = get_string(obj, "output", "policy_csv", std::string());
    output.ordering_csv = get_string(obj, "output", "ordering_csv", std::string());
    output.power_csv = get_string(obj, "output", "power_csv", std::string());
    return output;
}

} // namespace

Config parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    if (!root.is_object()) fail("top level must be an object");
    check_keys(root, "config", {"family", "design", "simulate", "dp", "verify", "sweep", "output"});
    if (!root.contains("family")) fail("missing required block 'family'");

    Config config;
    config.family = parse_family(root.at("family"));
    if (root.contains("design")) config.design = parse_design(root.at("design"));
    if (root.contains("simulate")) config.simulate = parse_simulate(root.at("simulate"));
    if (root.contains("dp")) config.dp = parse_dp(root.at("dp"));
    if (root.contains("verify")) config.verify = parse_verify(root.at("verify"));
    if (root.contains("sweep")) config.sweep = parse_sweep(root.at("sweep"));
    if (root.contains("output")) config.output = parse_output(root.at("output"));
    config.config_hash = fnv1a64_hex(text);
    return config;
}

Config load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot read file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string fnv1a64_hex(const std::string& bytes) {
    std::uint64_t hash = 14695981039346656037ull;
    for (const char ch : bytes) {
        hash ^= static_cast<unsigned char>(ch);
        hash *= 1099511628211ull;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

ObservationModel make_model(const FamilyConfig& family) {
    if (family.quad_nodes < 2 || family.quad_nodes > 512)
        throw ConfigError("config: family.quad_nodes must be between 2 and 512");
    const auto nodes = static_cast<std::size_t>(family.quad_nodes);
    if (family.name == "bernoulli") return ObservationModel::bernoulli_mean(family.theta0);
    if (family.name == "normal") return ObservationModel::normal_mean(family.theta0, nodes);
    if (family.name == "poisson") return ObservationModel::poisson_mean(family.theta0);
    if (family.name == "triangular") return ObservationModel::triangular_normal(family.theta0, nodes);
    if (family.name == "custom") {
        std::vector<Atom> atoms;
        atoms.reserve(family.atom_x.size());
        for (std::size_t i = 0; i < family.atom_x.size(); ++i)
            atoms.push_back({family.atom_x[i], family.atom_p[i], family.atom_r[i]});
        return ObservationModel::custom_discrete(std::move(atoms));
    }
    throw ConfigError("config: family.name must be one of bernoulli, normal, poisson, triangular, custom");
}

SolverOptions solver_options(const DesignConfig& design) {
    SolverOptions options;
    options.z_min = design.z_min;
    options.z_max = design.z_max;
    options.grid_nodes = static_cast<std::size_t>(design.grid_nodes);
    options.tol = design.tol;
    options.max_iter = static_cast<std::size_t>(design.max_iter);
    options.root_tol = design.root_tol;
    options.tail_tol = design.tail_tol;
    return options;
}

Direction parse_direction(const std::string& direction) {
    if (direction == "greater_than") return Direction::GreaterThan;
    if (direction == "less_than") return Direction::LessThan;
    throw ConfigError("config: design.direction must be greater_than or less_than");
}

} // namespace lmpseq
