#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "scm/builder.hpp"
#include "scm/random.hpp"

namespace scm::fixtures {

/// Validation RMSE for nodes 0..14 of a layer that peaks in quality at node 10.
inline const std::vector<double> golden_val_rmse{1.2,  1.0,  0.8,   0.6,   0.5,   0.42,  0.36, 0.32,
                                                 0.29, 0.27, 0.26, 0.265, 0.268, 0.269, 0.275};

/// <e,h>^2 / <h,h> - (1 - r) <e,e> with plain loops.
inline double xi_by_definition(const std::vector<double>& e, const std::vector<double>& h, double r) {
    long double eh = 0, hh = 0, ee = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        eh += static_cast<long double>(e[i]) * h[i];
        hh += static_cast<long double>(h[i]) * h[i];
        ee += static_cast<long double>(e[i]) * e[i];
    }
    return static_cast<double>(eh * eh / hh - (1.0L - r) * ee);
}

struct ContractionReport {
    std::size_t checked = 0;
    std::vector<std::string> failures;
};

/// Replays a training trace and checks, for every accepted node, that the
/// training SSE dropped below r_used times the SSE before it (supervised
/// builds only) and never increased. A new layer starts from the retained
/// state of the previous one.
inline ContractionReport check_contraction(const TrainingTrace& trace, Eigen::Index n_rows, Eigen::Index n_out,
                                           bool supervised, double slack = 1e-9) {
    ContractionReport report;
    const double scale = static_cast<double>(n_rows * n_out);
    auto sse = [&](double rmse_value) { return rmse_value * rmse_value * scale; };

    double current = sse(trace.mechanism_train_rmse);
    double retained = current;
    for (std::size_t i = 0; i < trace.nodes.size(); ++i) {
        const NodeRecord& n = trace.nodes[i];
        if (i > 0 && n.layer != trace.nodes[i - 1].layer) current = retained;
        const double after = sse(n.train_rmse);
        ++report.checked;
        std::ostringstream where;
        where << "layer " << n.layer << " node " << n.node << ": before " << current << " after " << after;
        if (supervised && !(after < n.r_used * current + slack))
            report.failures.push_back(where.str() + " r " + std::to_string(n.r_used));
        if (after > current + slack) report.failures.push_back(where.str() + " increased");
        current = after;
        if (!n.rolled_back) retained = after;
    }
    return report;
}

struct RandomInstance {
    Dataset train, val;
    BuilderConfig cfg;
    Algorithm algorithm = Algorithm::SCM;
};

/// Small random regression problem with a random supervised configuration.
inline RandomInstance random_instance(std::uint64_t seed) {
    CounterRng rng = CounterRng(seed).substream({0x7e57});
    const auto n = static_cast<Eigen::Index>(20 + rng.below(181));
    const auto d = static_cast<Eigen::Index>(1 + rng.below(5));
    const auto m = static_cast<Eigen::Index>(1 + rng.below(2));
    const auto k = static_cast<Eigen::Index>(5 + rng.below(40));

    Vector freq(d);
    for (Eigen::Index j = 0; j < d; ++j) freq(j) = rng.uniform(1, 8);
    auto make = [&](Eigen::Index rows) {
        Matrix x(rows, d), y(rows, m);
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.next_unit();
            for (Eigen::Index q = 0; q < m; ++q) {
                double v = 0;
                for (Eigen::Index j = 0; j < d; ++j) v += std::sin(freq(j) * x(i, j) + static_cast<double>(q));
                y(i, q) = v + 0.05 * rng.uniform(-1, 1);
            }
        }
        return make_dataset(x, y);
    };

    RandomInstance inst;
    inst.train = make(n);
    inst.val = make(k);
    const Algorithm algs[] = {Algorithm::SCM, Algorithm::SCN, Algorithm::DeepSCN};
    inst.algorithm = algs[rng.below(3)];
    const ActivationKind kinds[] = {ActivationKind::Sigmoid, ActivationKind::BReLU, ActivationKind::Tanh,
                                    ActivationKind::Sign, ActivationKind::HardLimit};
    BuilderConfig& cfg = inst.cfg;
    cfg.max_layers = 1 + rng.below(3);
    cfg.max_nodes_per_layer = {5 + rng.below(26)};
    cfg.candidates_per_layer = {5 + rng.below(46)};
    cfg.activations = {Activation{kinds[rng.below(5)], 1.0}};
    cfg.early_stop_step = 2 + rng.below(5);
    cfg.early_stop_tol = rng.next_unit() < 0.5 ? 0.0 : 0.01;
    cfg.seed = rng.next_u64();
    cfg.parallel = false;
    return inst;
}

}  // namespace scm::fixtures
