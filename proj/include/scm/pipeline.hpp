#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scm/builder.hpp"
#include "scm/config.hpp"
#include "scm/dataset.hpp"
#include "scm/model.hpp"
#include "scm/numerics.hpp"

namespace scm {

// ---------------------------------------------------------------------------
// Demonstration mechanism: y = sin(2 pi x1) + x2^2 plus a local bump that only
// the stochastic part can learn.

inline constexpr const char* demo_plugin_name = "demo-physics";

inline double demo_mechanism_function(double x1, double x2) { return std::sin(2.0 * std::numbers::pi * x1) + x2 * x2; }

inline double demo_residual_function(double x1, double x2) {
    return 0.3 * std::exp(-20.0 * ((x1 - 0.5) * (x1 - 0.5) + (x2 - 0.5) * (x2 - 0.5)));
}

class DemoMechanism final : public MechanismPlugin {
public:
    Matrix predict(const Matrix& raw_inputs) const override {
        if (raw_inputs.cols() != 2) throw ValidationError("demo-physics expects 2 inputs");
        Matrix y(raw_inputs.rows(), 1);
        for (Eigen::Index i = 0; i < raw_inputs.rows(); ++i) y(i, 0) = demo_mechanism_function(raw_inputs(i, 0), raw_inputs(i, 1));
        return y;
    }
};

inline void register_demo_plugins(MechanismRegistry& registry = MechanismRegistry::global()) {
    registry.add(demo_plugin_name, std::make_shared<DemoMechanism>());
}

/// x ~ U[0, 1)^2, y = mechanism + residual.
inline Dataset gen_mechanism_demo(std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ValidationError("gen_mechanism_demo: n must be >= 1");
    CounterRng rng = CounterRng(seed).substream({0xde30});
    Matrix x(static_cast<Eigen::Index>(n), 2), y(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = rng.next_unit();
        x(i, 1) = rng.next_unit();
        y(i, 0) = demo_mechanism_function(x(i, 0), x(i, 1)) + demo_residual_function(x(i, 0), x(i, 1));
    }
    return make_dataset(std::move(x), std::move(y));
}

// ---------------------------------------------------------------------------
// Data preparation

/// Raw data as produced by the generator or read from disk. `test` is empty
/// unless the source comes with its own test set.
struct RawData {
    Dataset all;
    Dataset test;
};

inline RawData load_raw_data(const DataSpec& spec, std::uint64_t run_seed) {
    const std::uint64_t seed = spec.seed.value_or(run_seed);
    RawData raw;
    if (spec.generator == "rdb7") {
        raw.all = gen_rdb7(spec.n, seed);
    } else if (spec.generator == "rastrigin") {
        auto [train, test] = gen_rastrigin(spec.n_dims, spec.n_train, spec.n_test, seed);
        raw.all = std::move(train);
        raw.test = std::move(test);
    } else if (spec.generator == "mechanism_demo") {
        raw.all = gen_mechanism_demo(spec.n, seed);
    } else {
        if (!std::filesystem::exists(spec.csv)) throw ConfigError("dataset '" + spec.csv + "' does not exist");
        if (!spec.test_csv.empty() && !std::filesystem::exists(spec.test_csv))
            throw ConfigError("dataset '" + spec.test_csv + "' does not exist");
        raw.all = load_csv(spec.csv, TargetColumns{spec.target_cols}, spec.has_header);
        if (!spec.test_csv.empty()) raw.test = load_csv(spec.test_csv, TargetColumns{spec.target_cols}, spec.has_header);
    }
    return raw;
}

/// Normalised splits ready for training.
struct PreparedData {
    Dataset train, val, test;
    NormParams norm;
    /// Split used for early stopping: the validation set when there is one,
    /// otherwise the test set.
    std::string early_stop_split = "validation";

    const Dataset& early_stop_set() const { return early_stop_split == "test" ? test : val; }
};

/// Min-max normalisation is fitted on every available row, then the rows are
/// split with `split_seed`. A source with its own test set only has its
/// training part divided into train and validation.
inline PreparedData prepare_data(const RawData& raw, const RunConfig& rc, std::uint64_t split_seed) {
    PreparedData out;
    const Dataset everything = raw.test.empty() ? raw.all : concat(raw.all, raw.test);
    out.norm = rc.normalize ? NormParams::fit(everything) : NormParams::identity(everything.input_dim(), everything.output_dim());

    DatasetSplit s;
    if (raw.test.empty()) {
        s = split(raw.all, rc.split, split_seed);
    } else {
        s = split(raw.all, SplitFractions{1.0 - rc.split.val, rc.split.val, 0.0}, split_seed);
        s.test = raw.test;
    }
    if (s.train.empty()) throw ConfigError("split leaves no training rows");
    out.train = out.norm.apply(s.train);
    out.val = out.norm.apply(s.val);
    out.test = out.norm.apply(s.test);
    if (out.val.empty()) out.early_stop_split = out.test.empty() ? "none" : "test";
    return out;
}

// ---------------------------------------------------------------------------
// Training runs

struct RunOutcome {
    BuildResult build;
    double train_rmse = 0;
    double val_rmse = 0;
    double test_rmse = 0;
    double seconds = 0;
};

inline double dataset_rmse(const ScmModel& model, const Dataset& ds) {
    if (ds.empty()) return std::numeric_limits<double>::quiet_NaN();
    return rmse(forward(model, ds.inputs), ds.targets);
}

/// Builds one model on prepared data and scores it on every split (RMSE in
/// normalised target units).
inline RunOutcome run_build(Algorithm algorithm, const BuilderConfig& cfg, const PreparedData& data) {
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome out;
    out.build = build_baseline(algorithm, data.train, data.early_stop_set(), cfg, data.norm, data.early_stop_split);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json meta = builder_to_json(cfg);
    meta["algorithm"] = to_string(algorithm);
    out.build.model.meta.seed = cfg.seed;
    out.build.model.meta.config = meta.dump();

    out.train_rmse = dataset_rmse(out.build.model, data.train);
    out.val_rmse = dataset_rmse(out.build.model, data.val);
    out.test_rmse = dataset_rmse(out.build.model, data.test);
    return out;
}

inline void write_trace_csv(const std::string& path, const TrainingTrace& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << "node_index,layer,node,train_rmse,val_rmse,lambda,r_used,rolled_back\n";
    std::size_t idx = 0;
    for (const auto& n : trace.nodes) {
        out << ++idx << ',' << n.layer << ',' << n.node << ',' << detail::format_real(n.train_rmse) << ','
            << detail::format_real(n.val_rmse) << ',' << detail::format_real(n.lambda) << ','
            << detail::format_real(n.r_used) << ',' << (n.rolled_back ? 1 : 0) << '\n';
    }
    if (!out) throw Error("failed writing '" + path + "'");
}

inline json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json run_metrics_json(Algorithm algorithm, std::uint64_t seed, const RunOutcome& r) {
    json j;
    j["schema_version"] = 1;
    j["algorithm"] = to_string(algorithm);
    j["seed"] = seed;
    j["train_rmse"] = nan_to_null(r.train_rmse);
    j["val_rmse"] = nan_to_null(r.val_rmse);
    j["test_rmse"] = nan_to_null(r.test_rmse);
    std::vector<Eigen::Index> widths = r.build.model.layer_widths();
    j["nodes_per_layer"] = widths;
    j["total_nodes"] = r.build.model.hidden_count();
    j["wall_time_s"] = r.seconds;
    j["stop_reason"] = r.build.trace.stop_reason;
    j["early_stop_split"] = r.build.trace.early_stop_split;
    if (const auto* lin = std::get_if<LinearMechanism>(&r.build.model.mechanism)) {
        std::vector<int> selected;
        for (bool s : lin->selected) selected.push_back(s ? 1 : 0);
        j["mechanism"] = "linear";
        j["mechanism_selected"] = selected;
    } else if (const auto* ext = std::get_if<ExternalMechanism>(&r.build.model.mechanism)) {
        j["mechanism"] = ext->name;
    } else {
        j["mechanism"] = "none";
    }
    j["mechanism_train_rmse"] = r.build.trace.mechanism_train_rmse;
    return j;
}

// ---------------------------------------------------------------------------
// Comparison

struct TrialResult {
    double train_rmse = 0;
    double test_rmse = 0;
    Eigen::Index nodes = 0;
    std::size_t layers = 0;
    double seconds = 0;
};

struct ComparisonRow {
    Algorithm algorithm;
    std::vector<TrialResult> trials;
};

struct MeanStd {
    double mean = 0;
    double std = 0;  // sample standard deviation
};

template <class F>
MeanStd mean_std(const std::vector<TrialResult>& trials, F field) {
    MeanStd s;
    if (trials.empty()) return s;
    for (const auto& t : trials) s.mean += field(t);
    s.mean /= static_cast<double>(trials.size());
    if (trials.size() > 1) {
        double acc = 0;
        for (const auto& t : trials) acc += (field(t) - s.mean) * (field(t) - s.mean);
        s.std = std::sqrt(acc / static_cast<double>(trials.size() - 1));
    }
    return s;
}

/// Algorithms and builder settings `compare` runs: the `algorithms` block when
/// present, otherwise all six with the shared builder settings.
inline std::vector<std::pair<Algorithm, BuilderConfig>> comparison_plan(const RunConfig& rc) {
    if (!rc.algorithms.empty()) return rc.algorithms;
    std::vector<std::pair<Algorithm, BuilderConfig>> plan;
    for (Algorithm a : all_algorithms) plan.emplace_back(a, rc.builder);
    return plan;
}

/// Trial t uses seed + t for both the split and the builder. With `parallel`
/// the trials run concurrently; results are stored by trial index so the
/// outcome does not depend on scheduling.
inline std::vector<ComparisonRow> run_comparison(const RunConfig& rc, const RawData& raw) {
    const auto plan = comparison_plan(rc);
    std::vector<ComparisonRow> rows;
    for (const auto& [a, _] : plan) rows.push_back({a, std::vector<TrialResult>(rc.trials)});

    const auto trials = static_cast<std::int64_t>(rc.trials);
    std::string first_error;
    bool failed = false;
#pragma omp parallel for schedule(dynamic) if (rc.parallel)
    for (std::int64_t t = 0; t < trials; ++t) {
        try {
            const std::uint64_t seed = rc.seed + static_cast<std::uint64_t>(t);
            const PreparedData data = prepare_data(raw, rc, seed);
            for (std::size_t i = 0; i < plan.size(); ++i) {
                BuilderConfig cfg = plan[i].second;
                cfg.seed = seed;
                cfg.parallel = false;
                const RunOutcome r = run_build(plan[i].first, cfg, data);
                rows[i].trials[static_cast<std::size_t>(t)] = {r.train_rmse, r.test_rmse, r.build.model.hidden_count(),
                                                               r.build.model.layers.size(), r.seconds};
            }
        } catch (const std::exception& e) {
#pragma omp critical(scm_compare_error)
            {
                if (!failed) first_error = e.what();
                failed = true;
            }
        }
    }
    if (failed) throw Error("compare: " + first_error);
    return rows;
}

/// One row per algorithm; timing is left out so the file is reproducible.
inline std::string comparison_table_csv(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    out << "algorithm,trials,train_rmse_mean,train_rmse_std,test_rmse_mean,test_rmse_std,nodes_mean,layers_mean\n";
    for (const auto& row : rows) {
        const auto tr = mean_std(row.trials, [](const TrialResult& t) { return t.train_rmse; });
        const auto te = mean_std(row.trials, [](const TrialResult& t) { return t.test_rmse; });
        const auto nd = mean_std(row.trials, [](const TrialResult& t) { return static_cast<double>(t.nodes); });
        const auto ly = mean_std(row.trials, [](const TrialResult& t) { return static_cast<double>(t.layers); });
        out << to_string(row.algorithm) << ',' << row.trials.size() << ',' << detail::format_real(tr.mean) << ','
            << detail::format_real(tr.std) << ',' << detail::format_real(te.mean) << ',' << detail::format_real(te.std)
            << ',' << detail::format_real(nd.mean) << ',' << detail::format_real(ly.mean) << '\n';
    }
    return out.str();
}

inline std::string comparison_table_text(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-10s %6s  %-24s  %-24s  %8s  %8s\n", "algorithm", "trials", "train RMSE",
                  "test RMSE", "nodes", "time(s)");
    out << buf;
    for (const auto& row : rows) {
        const auto tr = mean_std(row.trials, [](const TrialResult& t) { return t.train_rmse; });
        const auto te = mean_std(row.trials, [](const TrialResult& t) { return t.test_rmse; });
        const auto nd = mean_std(row.trials, [](const TrialResult& t) { return static_cast<double>(t.nodes); });
        const auto tm = mean_std(row.trials, [](const TrialResult& t) { return t.seconds; });
        char a[64], b[64];
        std::snprintf(a, sizeof a, "%.5f +- %.5f", tr.mean, tr.std);
        std::snprintf(b, sizeof b, "%.5f +- %.5f", te.mean, te.std);
        std::snprintf(buf, sizeof buf, "%-10s %6zu  %-24s  %-24s  %8.1f  %8.2f\n", to_string(row.algorithm).c_str(),
                      row.trials.size(), a, b, nd.mean, tm.mean);
        out << buf;
    }
    return out.str();
}

}  // namespace scm
