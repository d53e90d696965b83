// scm-forge: data generation, training, evaluation, comparison and reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "scm/scm.hpp"

namespace fs = std::filesystem;
using scm::json;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_runtime = 1;
constexpr int exit_usage = 2;

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool config_required) {
    auto* c = cmd->add_option("--config", o.config, "JSON run configuration");
    if (config_required) c->required();
    cmd->add_option("--seed", o.seed, "master seed (overrides the config)");
    cmd->add_option("--out", o.out, "output directory (overrides the config)");
}

scm::RunConfig load_config(const CommonOptions& o) {
    scm::RunConfig rc = scm::load_run_config(o.config);
    if (o.seed) {
        rc.seed = *o.seed;
        rc.builder.seed = rc.seed;
        for (auto& [a, cfg] : rc.algorithms) cfg.seed = rc.seed;
    }
    if (!o.out.empty()) rc.out = o.out;
    return rc;
}

fs::path make_out_dir(const std::string& dir) {
    fs::path p(dir.empty() ? "out" : dir);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw scm::Error("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw scm::Error("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v, const char* f = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const CommonOptions& o) {
    const scm::RunConfig rc = load_config(o);
    const scm::RawData raw = scm::load_raw_data(rc.data, rc.seed);
    scm::DatasetSplit s;
    if (raw.test.empty()) {
        s = scm::split(raw.all, rc.split, rc.seed);
    } else {
        s = scm::split(raw.all, scm::SplitFractions{1.0 - rc.split.val, rc.split.val, 0.0}, rc.seed);
        s.test = raw.test;
    }
    const fs::path dir = make_out_dir(rc.out);
    const std::string comment = "seed " + std::to_string(rc.seed);
    scm::write_csv((dir / "train.csv").string(), s.train, comment);
    if (!s.val.empty()) scm::write_csv((dir / "val.csv").string(), s.val, comment);
    if (!s.test.empty()) scm::write_csv((dir / "test.csv").string(), s.test, comment);
    std::cout << "train " << s.train.size() << " rows, val " << s.val.size() << ", test " << s.test.size() << " -> "
              << dir.string() << "\n";
    return exit_ok;
}

int cmd_train(const CommonOptions& o) {
    const scm::RunConfig rc = load_config(o);
    const scm::RawData raw = scm::load_raw_data(rc.data, rc.seed);
    const scm::PreparedData data = scm::prepare_data(raw, rc, rc.seed);
    const scm::RunOutcome r = scm::run_build(rc.algorithm, rc.builder, data);

    const fs::path dir = make_out_dir(rc.out);
    scm::serialize(r.build.model, (dir / "model.scm").string());
    scm::write_trace_csv((dir / "trace.csv").string(), r.build.trace);
    write_json(dir / "metrics.json", scm::run_metrics_json(rc.algorithm, rc.seed, r));

    std::cout << scm::to_string(rc.algorithm) << ": " << r.build.model.hidden_count() << " nodes in "
              << r.build.model.layers.size() << " layers, train RMSE " << fmt(r.train_rmse) << ", test RMSE "
              << fmt(r.test_rmse) << " (" << r.build.trace.stop_reason << ")\n";
    return exit_ok;
}

int cmd_eval(const CommonOptions& o, const std::string& model_path, const std::string& data_path,
             const std::vector<int>& target_cols, bool has_header) {
    if (o.config.empty() && data_path.empty()) throw CLI::ValidationError("eval needs --config or --data");
    if (!data_path.empty() && !fs::exists(data_path)) throw scm::ConfigError("dataset '" + data_path + "' does not exist");
    if (!fs::exists(model_path)) throw scm::ConfigError("model '" + model_path + "' does not exist");

    std::optional<scm::RunConfig> rc;
    if (!o.config.empty()) rc = load_config(o);
    const scm::ScmModel model = scm::deserialize(model_path);

    scm::Dataset raw;
    if (!data_path.empty()) {
        raw = scm::load_csv(data_path, scm::TargetColumns{target_cols}, has_header);
    } else {
        const scm::PreparedData data = scm::prepare_data(scm::load_raw_data(rc->data, rc->seed), *rc, rc->seed);
        raw = data.norm.invert(data.test.empty() ? data.train : data.test);
    }
    if (raw.input_dim() != model.input_dim || raw.output_dim() != model.output_dim)
        throw scm::ValidationError("data has " + std::to_string(raw.input_dim()) + " inputs and " +
                                   std::to_string(raw.output_dim()) + " targets, model expects " +
                                   std::to_string(model.input_dim) + " and " + std::to_string(model.output_dim));

    const scm::Matrix pred_raw = scm::predict_raw(model, raw.inputs);
    const double rmse_raw = scm::rmse(pred_raw, raw.targets);
    const double rmse_norm = scm::rmse(model.norm.normalize_targets(pred_raw), model.norm.normalize_targets(raw.targets));

    const fs::path dir = make_out_dir(o.out.empty() ? (rc ? rc->out : std::string("out")) : o.out);
    scm::Dataset pred = raw;
    pred.targets = pred_raw;
    scm::write_csv((dir / "predictions.csv").string(), pred);
    json j;
    j["schema_version"] = 1;
    j["rows"] = raw.size();
    j["rmse"] = rmse_norm;
    j["rmse_raw"] = rmse_raw;
    write_json(dir / "metrics.json", j);
    std::cout << raw.size() << " rows, RMSE " << fmt(rmse_norm) << " (raw units " << fmt(rmse_raw) << ")\n";
    return exit_ok;
}

int cmd_compare(const CommonOptions& o, std::optional<std::size_t> trials, bool serial) {
    scm::RunConfig rc = load_config(o);
    if (trials) {
        if (*trials < 1) throw scm::ConfigError("trials must be >= 1");
        rc.trials = *trials;
    }
    if (serial) rc.parallel = false;
    const scm::RawData raw = scm::load_raw_data(rc.data, rc.seed);
    const auto rows = scm::run_comparison(rc, raw);

    const fs::path dir = make_out_dir(rc.out);
    write_text(dir / "table.csv", scm::comparison_table_csv(rows));
    const std::string text = scm::comparison_table_text(rows);
    write_text(dir / "table.txt", text);

    json j;
    j["schema_version"] = 1;
    j["seed"] = rc.seed;
    j["trials"] = rc.trials;
    for (const auto& row : rows) {
        json per;
        for (std::size_t t = 0; t < row.trials.size(); ++t) {
            const auto& tr = row.trials[t];
            per.push_back({{"seed", rc.seed + t},
                           {"train_rmse", tr.train_rmse},
                           {"test_rmse", scm::nan_to_null(tr.test_rmse)},
                           {"nodes", tr.nodes},
                           {"layers", tr.layers},
                           {"wall_time_s", tr.seconds}});
        }
        j["results"][scm::to_string(row.algorithm)] = per;
    }
    write_json(dir / "metrics.json", j);
    std::cout << text;
    return exit_ok;
}

std::vector<Eigen::Index> parse_widths(const std::string& text) {
    std::vector<Eigen::Index> w;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, '-')) {
        std::size_t pos = 0;
        long v = 0;
        try {
            v = std::stol(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != item.size() || v < 1) throw scm::ConfigError("bad layer widths '" + text + "', expected e.g. 117-24-31");
        w.push_back(v);
    }
    if (w.empty()) throw scm::ConfigError("bad layer widths '" + text + "'");
    return w;
}

int cmd_report(const CommonOptions& o, const std::string& mode, const std::string& model_path, int inputs,
               const std::string& widths, std::size_t grid) {
    json j;
    j["schema_version"] = 1;
    j["mode"] = mode;
    if (mode == "size") {
        scm::StorageReport r;
        if (!model_path.empty()) {
            if (!fs::exists(model_path)) throw scm::ConfigError("model '" + model_path + "' does not exist");
            r = scm::storage_report(scm::deserialize(model_path));
        } else {
            if (inputs < 1 || widths.empty()) throw CLI::ValidationError("report size needs --model or --inputs and --widths");
            r = scm::storage_report(inputs, parse_widths(widths));
        }
        j["weights"] = r.weights;
        j["upsilon_bits"] = r.upsilon_bits;
        j["sign_bits"] = r.sign_bits;
        j["real64_bits"] = r.real64_bits;
        j["reduction_pct"] = r.reduction_pct;
        std::cout << "weights        " << r.weights << "\n"
                  << "upsilon bits   " << r.upsilon_bits << "\n"
                  << "sign bits      " << r.sign_bits << "\n"
                  << "real64 bits    " << r.real64_bits << "\n"
                  << "reduction      " << fmt(r.reduction_pct, "%.2f") << "%\n";
    } else if (mode == "mc") {
        if (model_path.empty()) throw CLI::ValidationError("report mc needs --model");
        if (!fs::exists(model_path)) throw scm::ConfigError("model '" + model_path + "' does not exist");
        const scm::ScmModel model = scm::deserialize(model_path);
        if (model.input_dim > 3)
            throw scm::UnsupportedError("MC report supports at most 3 inputs, model has " + std::to_string(model.input_dim));
        json outs = json::array();
        for (Eigen::Index q = 0; q < model.output_dim; ++q) {
            const scm::McEstimate e = scm::estimate_model_mc(model, grid, q);
            outs.push_back({{"output", q},
                            {"extrema", e.extrema_count},
                            {"variation_integral", e.variation_integral},
                            {"mc", e.mc},
                            {"grid_points_per_dim", e.grid_points_per_dim},
                            {"differentiable", e.differentiable}});
            std::cout << "output " << q << ": extrema " << e.extrema_count << ", variation " << fmt(e.variation_integral)
                      << ", MC " << fmt(e.mc) << (e.differentiable ? "" : " (non-differentiable activation)") << "\n";
        }
        j["outputs"] = outs;
    } else {
        throw CLI::ValidationError("--mode must be 'size' or 'mc'");
    }
    if (!o.out.empty()) write_json(make_out_dir(o.out) / "report.json", j);
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    scm::register_demo_plugins();

    CLI::App app{"Stochastic configuration machines: build, evaluate and compare models"};
    app.require_subcommand(1);

    CommonOptions gen_o, train_o, eval_o, cmp_o, rep_o;

    auto* gen = app.add_subcommand("gen-data", "write the train/val/test splits of a configured dataset as CSV");
    add_common(gen, gen_o, true);

    auto* train = app.add_subcommand("train", "build a model; writes model.scm, trace.csv, metrics.json");
    add_common(train, train_o, true);

    auto* eval = app.add_subcommand("eval", "score a saved model on a CSV file or on the configured test split");
    add_common(eval, eval_o, false);
    std::string eval_model, eval_data;
    std::vector<int> eval_targets{-1};
    bool eval_no_header = false;
    eval->add_option("--model", eval_model, "model file")->required();
    eval->add_option("--data", eval_data, "CSV file with raw inputs and targets");
    eval->add_option("--target-cols", eval_targets, "target column indices (negative counts from the end)");
    eval->add_flag("--no-header", eval_no_header, "the CSV has no header row");

    auto* cmp = app.add_subcommand("compare", "repeated trials of several algorithms; writes table.csv");
    add_common(cmp, cmp_o, true);
    std::optional<std::size_t> cmp_trials;
    bool cmp_serial = false;
    cmp->add_option("--trials", cmp_trials, "number of trials (overrides the config)");
    cmp->add_flag("--serial", cmp_serial, "run trials one after another");

    auto* rep = app.add_subcommand("report", "storage accounting or model complexity of a model");
    add_common(rep, rep_o, false);
    std::string rep_mode = "size", rep_model, rep_widths;
    int rep_inputs = 0;
    std::size_t rep_grid = 0;
    rep->add_option("--mode", rep_mode, "size | mc");
    rep->add_option("--model", rep_model, "model file");
    rep->add_option("--inputs", rep_inputs, "input count for a size report without a model");
    rep->add_option("--widths", rep_widths, "hidden layer widths, e.g. 117-24-31");
    rep->add_option("--grid", rep_grid, "grid points per dimension for mc (0: default)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*gen) return cmd_gen_data(gen_o);
        if (*train) return cmd_train(train_o);
        if (*eval) return cmd_eval(eval_o, eval_model, eval_data, eval_targets, !eval_no_header);
        if (*cmp) return cmd_compare(cmp_o, cmp_trials, cmp_serial);
        if (*rep) return cmd_report(rep_o, rep_mode, rep_model, rep_inputs, rep_widths, rep_grid);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const scm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_usage;
    } catch (const scm::UnsupportedError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const scm::FormatError& e) {
        std::cerr << "model file error (" << scm::to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_runtime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_usage;
}
