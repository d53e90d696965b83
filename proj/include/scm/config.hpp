#pragma once

#include <cstdint>
#include <fstream>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "scm/builder.hpp"
#include "scm/dataset.hpp"
#include "scm/error.hpp"

namespace scm {

using json = nlohmann::json;

/// Where the data for a run comes from.
struct DataSpec {
    std::string generator;  // "rdb7", "rastrigin", "mechanism_demo", or empty for CSV
    std::size_t n = 1000;   // rdb7 size
    std::size_t n_dims = 2;
    std::size_t n_train = 40000;
    std::size_t n_test = 4489;
    std::optional<std::uint64_t> seed;  // defaults to the run seed

    std::string csv;
    std::string test_csv;
    std::vector<int> target_cols{-1};
    bool has_header = true;
};

/// One run of the command-line tool: data, split protocol and builder settings.
struct RunConfig {
    Algorithm algorithm = Algorithm::SCM;
    std::uint64_t seed = 0;
    DataSpec data;
    SplitFractions split{0.9, 0.0, 0.1};
    bool normalize = true;
    BuilderConfig builder;
    std::size_t trials = 1;
    /// Per-algorithm builder settings for `compare`, in table order.
    std::vector<std::pair<Algorithm, BuilderConfig>> algorithms;
    bool parallel = true;
    std::string out = "out";
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
    }
}

inline std::size_t parse_node_limit(const json& j, const std::string& key) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf" || s == "infinity" || s == "unbounded") return unbounded_nodes;
        throw ConfigError("bad value for '" + key + "': '" + s + "'");
    }
    return get_as<std::size_t>(j, key);
}

template <class T, class F>
std::vector<T> scalar_or_array(const json& j, const std::string& key, F parse_one) {
    std::vector<T> out;
    if (j.is_array()) {
        for (const auto& e : j) out.push_back(parse_one(e, key));
    } else {
        out.push_back(parse_one(j, key));
    }
    if (out.empty()) throw ConfigError("'" + key + "' must not be empty");
    return out;
}

}  // namespace detail

/// Applies the keys present in `j` on top of `cfg`.
inline void apply_builder_json(BuilderConfig& cfg, const json& j, const std::string& where = "builder") {
    using namespace detail;
    reject_unknown(j, {"max_layers", "max_nodes_per_layer", "candidates_per_layer", "activations", "brelu_bound",
                       "lambda_set", "r_set", "error_tol", "early_stop_tol", "early_stop_step", "lasso_alpha",
                       "weight_mode", "rvfl_lambda", "mechanism_plugin"},
                   where);
    double bound = 1.0;
    if (j.contains("brelu_bound")) bound = get_as<double>(j["brelu_bound"], "brelu_bound");
    if (j.contains("max_layers")) cfg.max_layers = get_as<std::size_t>(j["max_layers"], "max_layers");
    if (j.contains("max_nodes_per_layer"))
        cfg.max_nodes_per_layer = scalar_or_array<std::size_t>(j["max_nodes_per_layer"], "max_nodes_per_layer", parse_node_limit);
    if (j.contains("candidates_per_layer"))
        cfg.candidates_per_layer = scalar_or_array<std::size_t>(
            j["candidates_per_layer"], "candidates_per_layer", [](const json& e, const std::string& k) { return get_as<std::size_t>(e, k); });
    if (j.contains("activations"))
        cfg.activations = scalar_or_array<Activation>(j["activations"], "activations", [bound](const json& e, const std::string& k) {
            try {
                return parse_activation(get_as<std::string>(e, k), bound);
            } catch (const ParseError& err) {
                throw ConfigError(err.what());
            }
        });
    if (j.contains("lambda_set")) cfg.lambda_set = get_as<std::vector<double>>(j["lambda_set"], "lambda_set");
    if (j.contains("r_set")) cfg.r_set = get_as<std::vector<double>>(j["r_set"], "r_set");
    if (j.contains("error_tol")) cfg.error_tol = get_as<double>(j["error_tol"], "error_tol");
    if (j.contains("early_stop_tol")) cfg.early_stop_tol = get_as<double>(j["early_stop_tol"], "early_stop_tol");
    if (j.contains("early_stop_step")) cfg.early_stop_step = get_as<std::size_t>(j["early_stop_step"], "early_stop_step");
    if (j.contains("lasso_alpha")) cfg.lasso_alpha = get_as<double>(j["lasso_alpha"], "lasso_alpha");
    if (j.contains("rvfl_lambda")) cfg.rvfl_lambda = get_as<double>(j["rvfl_lambda"], "rvfl_lambda");
    if (j.contains("mechanism_plugin")) cfg.mechanism_plugin = get_as<std::string>(j["mechanism_plugin"], "mechanism_plugin");
    if (j.contains("weight_mode")) {
        const auto m = get_as<std::string>(j["weight_mode"], "weight_mode");
        if (m == "binary") cfg.weight_mode = WeightMode::Binary;
        else if (m == "real") cfg.weight_mode = WeightMode::Real;
        else throw ConfigError("weight_mode must be 'binary' or 'real'");
    }
}

/// Canonical JSON form of a builder configuration (stored in model files).
inline json builder_to_json(const BuilderConfig& cfg) {
    json j;
    j["max_layers"] = cfg.max_layers;
    j["max_nodes_per_layer"] = cfg.max_nodes_per_layer;
    j["candidates_per_layer"] = cfg.candidates_per_layer;
    std::vector<std::string> acts;
    for (const auto& a : cfg.activations) acts.push_back(to_string(a));
    j["activations"] = acts;
    j["brelu_bound"] = cfg.activations.empty() ? 1.0 : cfg.activations.front().bound;
    j["lambda_set"] = cfg.lambda_set;
    j["r_set"] = cfg.r_set;
    j["error_tol"] = cfg.error_tol;
    j["early_stop_tol"] = cfg.early_stop_tol;
    j["early_stop_step"] = cfg.early_stop_step;
    j["lasso_alpha"] = cfg.lasso_alpha;
    j["weight_mode"] = to_string(cfg.weight_mode);
    j["rvfl_lambda"] = cfg.rvfl_lambda;
    j["mechanism_plugin"] = cfg.mechanism_plugin;
    return j;
}

inline RunConfig parse_run_config(const json& j) {
    using namespace detail;
    reject_unknown(j, {"algorithm", "seed", "data", "split", "normalize", "builder", "trials", "algorithms", "parallel", "out"},
                   "config");
    RunConfig rc;
    if (j.contains("algorithm")) {
        try {
            rc.algorithm = parse_algorithm(get_as<std::string>(j["algorithm"], "algorithm"));
        } catch (const ParseError& e) {
            throw ConfigError(e.what());
        }
    }
    if (j.contains("seed")) rc.seed = get_as<std::uint64_t>(j["seed"], "seed");
    if (j.contains("normalize")) rc.normalize = get_as<bool>(j["normalize"], "normalize");
    if (j.contains("trials")) rc.trials = get_as<std::size_t>(j["trials"], "trials");
    if (j.contains("parallel")) rc.parallel = get_as<bool>(j["parallel"], "parallel");
    if (j.contains("out")) rc.out = get_as<std::string>(j["out"], "out");
    if (rc.trials < 1) throw ConfigError("trials must be >= 1");

    if (j.contains("data")) {
        const json& d = j["data"];
        reject_unknown(d, {"generator", "n", "n_dims", "n_train", "n_test", "seed", "csv", "test_csv", "target_cols", "has_header"},
                       "data");
        if (d.contains("generator")) rc.data.generator = get_as<std::string>(d["generator"], "generator");
        if (d.contains("n")) rc.data.n = get_as<std::size_t>(d["n"], "n");
        if (d.contains("n_dims")) rc.data.n_dims = get_as<std::size_t>(d["n_dims"], "n_dims");
        if (d.contains("n_train")) rc.data.n_train = get_as<std::size_t>(d["n_train"], "n_train");
        if (d.contains("n_test")) rc.data.n_test = get_as<std::size_t>(d["n_test"], "n_test");
        if (d.contains("seed")) rc.data.seed = get_as<std::uint64_t>(d["seed"], "seed");
        if (d.contains("csv")) rc.data.csv = get_as<std::string>(d["csv"], "csv");
        if (d.contains("test_csv")) rc.data.test_csv = get_as<std::string>(d["test_csv"], "test_csv");
        if (d.contains("target_cols")) rc.data.target_cols = get_as<std::vector<int>>(d["target_cols"], "target_cols");
        if (d.contains("has_header")) rc.data.has_header = get_as<bool>(d["has_header"], "has_header");
        if (!rc.data.generator.empty() && rc.data.generator != "rdb7" && rc.data.generator != "rastrigin" &&
            rc.data.generator != "mechanism_demo")
            throw ConfigError("unknown generator '" + rc.data.generator + "'");
        if (rc.data.generator.empty() && rc.data.csv.empty()) throw ConfigError("data needs either 'generator' or 'csv'");
        if (!rc.data.generator.empty() && !rc.data.csv.empty()) throw ConfigError("data: 'generator' and 'csv' are exclusive");
    } else {
        throw ConfigError("missing 'data' section");
    }

    if (j.contains("split")) {
        const json& s = j["split"];
        reject_unknown(s, {"train", "val", "test"}, "split");
        if (s.contains("train")) rc.split.train = get_as<double>(s["train"], "train");
        if (s.contains("val")) rc.split.val = get_as<double>(s["val"], "val");
        if (s.contains("test")) rc.split.test = get_as<double>(s["test"], "test");
        if (std::abs(rc.split.train + rc.split.val + rc.split.test - 1.0) > 1e-9)
            throw ConfigError("split fractions must sum to 1");
    }

    if (j.contains("builder")) apply_builder_json(rc.builder, j["builder"]);
    if (j.contains("algorithms")) {
        const json& algs = j["algorithms"];
        if (!algs.is_object()) throw ConfigError("'algorithms' must be an object");
        for (Algorithm a : all_algorithms) {
            const std::string name = to_string(a);
            if (!algs.contains(name)) continue;
            BuilderConfig cfg = rc.builder;
            apply_builder_json(cfg, algs[name], "algorithms." + name);
            rc.algorithms.emplace_back(a, std::move(cfg));
        }
        for (const auto& [key, _] : algs.items()) {
            try {
                parse_algorithm(key);
            } catch (const ParseError&) {
                throw ConfigError("unknown algorithm '" + key + "' in algorithms");
            }
        }
    }

    rc.builder.seed = rc.seed;
    rc.builder.parallel = rc.parallel;
    rc.builder.validate();
    for (auto& [a, cfg] : rc.algorithms) {
        cfg.seed = rc.seed;
        cfg.parallel = rc.parallel;
        cfg.validate();
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

}  // namespace scm
