#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scm/activations.hpp"
#include "scm/dataset.hpp"
#include "scm/error.hpp"
#include "scm/model.hpp"
#include "scm/numerics.hpp"
#include "scm/random.hpp"

namespace scm {

// ---------------------------------------------------------------------------
// Algorithms and their feature matrix

enum class Algorithm { SCN, DeepSCN, SCM, IRVFL, DIRVFL_I, DIRVFL_II };

inline constexpr Algorithm all_algorithms[] = {Algorithm::SCN,   Algorithm::DeepSCN,  Algorithm::SCM,
                                               Algorithm::IRVFL, Algorithm::DIRVFL_I, Algorithm::DIRVFL_II};

struct AlgorithmFeatures {
    bool deep;
    bool early_stopping;
    bool linear_model;
    bool supervisory;
};

constexpr AlgorithmFeatures features_of(Algorithm a) {
    switch (a) {
        case Algorithm::SCN: return {false, false, false, true};
        case Algorithm::DeepSCN: return {true, false, false, true};
        case Algorithm::SCM: return {true, true, true, true};
        case Algorithm::IRVFL: return {false, false, false, false};
        case Algorithm::DIRVFL_I: return {true, false, false, false};
        case Algorithm::DIRVFL_II: return {true, true, true, false};
    }
    return {false, false, false, false};
}

inline std::string to_string(Algorithm a) {
    switch (a) {
        case Algorithm::SCN: return "SCN";
        case Algorithm::DeepSCN: return "DeepSCN";
        case Algorithm::SCM: return "SCM";
        case Algorithm::IRVFL: return "IRVFL";
        case Algorithm::DIRVFL_I: return "DIRVFL-I";
        case Algorithm::DIRVFL_II: return "DIRVFL-II";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& name) {
    for (Algorithm a : all_algorithms) {
        std::string canonical = to_string(a);
        std::string alt = canonical;
        std::replace(alt.begin(), alt.end(), '-', '_');
        if (name == canonical || name == alt) return a;
    }
    throw ParseError("unknown algorithm '" + name + "'");
}

// ---------------------------------------------------------------------------
// Configuration

inline constexpr std::size_t unbounded_nodes = 2147483647;  // 2^31 - 1

struct BuilderConfig {
    std::size_t max_layers = 2;
    /// Per-layer vectors; a single entry applies to every layer.
    std::vector<std::size_t> max_nodes_per_layer{unbounded_nodes};
    std::vector<std::size_t> candidates_per_layer{100};
    std::vector<Activation> activations{Activation{ActivationKind::Tanh, 1.0}};

    std::vector<double> lambda_set{0.5, 1, 5, 10, 30, 50, 100};
    std::vector<double> r_set{0.9, 0.99, 0.999, 0.9999, 0.99999, 0.999999};
    double error_tol = 1e-6;         // stop once training RMSE <= this
    double early_stop_tol = 0.001;   // tau
    std::size_t early_stop_step = 10;
    double lasso_alpha = 1e-3;
    WeightMode weight_mode = WeightMode::Binary;
    /// Scale applied to the unsupervised (RVFL) draws, which skip the lambda scan.
    double rvfl_lambda = 1.0;
    /// Name of a registered MechanismPlugin; replaces the LASSO linear model when set.
    std::string mechanism_plugin;
    std::uint64_t seed = 0;
    bool parallel = true;

    template <class T>
    static const T& per_layer(const std::vector<T>& v, std::size_t layer, const char* what) {
        if (v.empty()) throw ConfigError(std::string(what) + " is empty");
        return v.size() == 1 ? v.front() : v.at(layer);
    }
    std::size_t nodes_limit(std::size_t layer) const { return per_layer(max_nodes_per_layer, layer, "max_nodes_per_layer"); }
    std::size_t candidates(std::size_t layer) const { return per_layer(candidates_per_layer, layer, "candidates_per_layer"); }
    const Activation& activation(std::size_t layer) const { return per_layer(activations, layer, "activations"); }

    void validate() const {
        if (max_layers < 1) throw ConfigError("max_layers must be >= 1");
        auto check_len = [&](std::size_t n, const char* what) {
            if (n != 1 && n != max_layers)
                throw ConfigError(std::string(what) + " must have 1 or max_layers (" + std::to_string(max_layers) +
                                  ") entries, got " + std::to_string(n));
        };
        check_len(max_nodes_per_layer.size(), "max_nodes_per_layer");
        check_len(candidates_per_layer.size(), "candidates_per_layer");
        check_len(activations.size(), "activations");
        for (std::size_t v : max_nodes_per_layer)
            if (v < 1) throw ConfigError("max_nodes_per_layer entries must be >= 1");
        for (std::size_t v : candidates_per_layer)
            if (v < 1) throw ConfigError("candidates_per_layer entries must be >= 1");
        for (const auto& a : activations)
            if (a.kind == ActivationKind::BReLU && !(a.bound > 0.0)) throw ConfigError("brelu bound must be positive");
        if (lambda_set.empty()) throw ConfigError("lambda_set is empty");
        for (double l : lambda_set)
            if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("lambda_set entries must be positive");
        if (r_set.empty()) throw ConfigError("r_set is empty");
        for (std::size_t i = 0; i < r_set.size(); ++i) {
            if (!(r_set[i] > 0.0 && r_set[i] < 1.0)) throw ConfigError("r_set entries must lie in (0, 1)");
            if (i > 0 && !(r_set[i] > r_set[i - 1])) throw ConfigError("r_set must be strictly increasing");
        }
        if (!(error_tol >= 0.0)) throw ConfigError("error_tol must be >= 0");
        if (!(early_stop_tol >= 0.0) || !std::isfinite(early_stop_tol)) throw ConfigError("early_stop_tol must be >= 0");
        if (early_stop_step < 1) throw ConfigError("early_stop_step must be >= 1");
        if (!(lasso_alpha >= 0.0) || !std::isfinite(lasso_alpha)) throw ConfigError("lasso_alpha must be >= 0");
        if (!(rvfl_lambda > 0.0) || !std::isfinite(rvfl_lambda)) throw ConfigError("rvfl_lambda must be positive");
    }
};

// ---------------------------------------------------------------------------
// Trace

struct NodeRecord {
    std::size_t layer = 0;  // 1-based
    std::size_t node = 0;   // 1-based within the layer
    double train_rmse = 0;
    double val_rmse = 0;
    double lambda = 0;
    double r_used = 0;
    bool rolled_back = false;
};

struct TraceEvent {
    enum class Kind { LayerAdvance, Rollback, Stop };
    Kind kind;
    std::size_t layer = 0;
    std::size_t count = 0;  // nodes removed for Rollback
    std::string reason;
};

struct TrainingTrace {
    std::vector<NodeRecord> nodes;
    std::vector<TraceEvent> events;
    std::string stop_reason;
    /// Which split supplied the early-stopping error ("validation", "test", or "none").
    std::string early_stop_split = "none";
    double mechanism_train_rmse = 0;
    double mechanism_val_rmse = 0;

    /// Validation RMSE sequence E_0..E_L of the given (1-based) layer, E_0 being
    /// the error when the layer was opened. Rolled-back nodes are excluded.
    std::vector<double> layer_val_rmse(std::size_t layer) const {
        std::vector<double> e;
        double start = mechanism_val_rmse;
        for (const auto& n : nodes) {
            if (n.rolled_back) continue;
            if (n.layer < layer) start = n.val_rmse;
            else if (n.layer == layer) e.push_back(n.val_rmse);
        }
        e.insert(e.begin(), start);
        return e;
    }

    std::size_t retained_nodes() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const NodeRecord& n) { return !n.rolled_back; }));
    }
};

// ---------------------------------------------------------------------------
// Mechanism fit

/// u = mean of each target column, p = LASSO fit on the centred data, with the
/// intercept adjusted by the input means so that X p + u reproduces an exact
/// affine target.
inline LinearMechanism fit_linear_mechanism(const Matrix& X, const Matrix& Y, double alpha, LassoOptions opt = {}) {
    if (X.rows() < 1) throw ValidationError("fit_linear_mechanism: no rows");
    if (X.rows() != Y.rows()) throw ValidationError("fit_linear_mechanism: row mismatch");
    const Eigen::RowVectorXd x_mean = X.colwise().mean();
    const Eigen::RowVectorXd y_mean = Y.colwise().mean();
    const Matrix Xc = X.rowwise() - x_mean;

    LinearMechanism mech;
    mech.p = Matrix::Zero(X.cols(), Y.cols());
    mech.u = Vector(Y.cols());
    for (Eigen::Index q = 0; q < Y.cols(); ++q) {
        const Vector yc = Y.col(q).array() - y_mean(q);
        mech.p.col(q) = lasso_fit(Xc, yc, alpha, opt).coefficients;
        mech.u(q) = y_mean(q) - x_mean.dot(mech.p.col(q));
    }
    for (Eigen::Index k = 0; k < mech.p.rows(); ++k) mech.selected.push_back((mech.p.row(k).array() != 0.0).any());
    return mech;
}

// ---------------------------------------------------------------------------
// Supervisory criterion

inline constexpr double degenerate_norm_sq = 1e-300;

/// xi = <e,h>^2 / <h,h> - (1 - r) <e,e>; empty when <h,h> is numerically zero.
inline std::optional<double> compute_xi(const Vector& e, const Vector& h, double r) {
    if (e.size() != h.size()) throw ValidationError("compute_xi: length mismatch");
    const double hh = h.squaredNorm();
    if (!(hh > degenerate_norm_sq)) return std::nullopt;
    const double eh = e.dot(h);
    return eh * eh / hh - (1.0 - r) * e.squaredNorm();
}

struct CandidateEvaluation {
    Vector signs;  // +-1 entries; reals in [-1, 1] in real weight mode
    double bias_raw = 0;
    double lambda = 0;
    Vector xi_per_output;
    double xi_sum = 0;
    double r_used = 0;
    std::size_t candidate_index = 0;
    Vector output;  // h on the training rows

    Vector effective_weights() const { return lambda * signs; }
    double effective_bias() const { return lambda * bias_raw; }
};

namespace detail {

inline void draw_candidate(CounterRng rng, Eigen::Index a, WeightMode mode, Vector& w, double& b) {
    w.resize(a);
    for (Eigen::Index i = 0; i < a; ++i) w(i) = mode == WeightMode::Binary ? (rng.next_bit() ? 1.0 : -1.0) : rng.uniform(-1.0, 1.0);
    b = rng.uniform(-1.0, 1.0);
}

}  // namespace detail

/// Supervisory search for the next hidden node.
///
/// Scans lambda in cfg.lambda_set (outer) and r in cfg.r_set (inner). For each
/// pair, cfg.candidates(layer) fresh candidates are drawn from per-index
/// substreams of `rng`; among those with min_q xi_q > 0 the one with the largest
/// xi sum wins (lowest index on ties) and the scan ends. Returns nothing when
/// no pair yields an admissible candidate.
inline std::optional<CandidateEvaluation> candidate_search(const Matrix& residual, const Matrix& layer_input,
                                                           std::size_t layer, const BuilderConfig& cfg,
                                                           const CounterRng& rng) {
    if (residual.rows() != layer_input.rows()) throw ValidationError("candidate_search: row mismatch");
    const Eigen::Index a = layer_input.cols();
    const Eigen::Index m = residual.cols();
    const auto T = static_cast<std::int64_t>(cfg.candidates(layer));
    const Activation act = cfg.activation(layer);
    const Vector ee = residual.colwise().squaredNorm().transpose();

    // Candidates are scored in fixed-size blocks (one matrix product each), so
    // the scores do not depend on the number of threads.
    constexpr std::int64_t block = 64;
    const std::int64_t blocks = (T + block - 1) / block;
    std::vector<double> score(static_cast<std::size_t>(T));
    for (std::size_t li = 0; li < cfg.lambda_set.size(); ++li) {
        const double lambda = cfg.lambda_set[li];
        for (std::size_t ri = 0; ri < cfg.r_set.size(); ++ri) {
            const double r = cfg.r_set[ri];
            const double nan = std::numeric_limits<double>::quiet_NaN();
#pragma omp parallel for schedule(static) if (cfg.parallel)
            for (std::int64_t bi = 0; bi < blocks; ++bi) {
                const std::int64_t k0 = bi * block;
                const std::int64_t nb = std::min(block, T - k0);
                Matrix W(a, nb);
                Eigen::RowVectorXd bias(nb);
                Vector w;
                double b = 0;
                for (std::int64_t j = 0; j < nb; ++j) {
                    detail::draw_candidate(rng.substream({li, ri, static_cast<std::uint64_t>(k0 + j)}), a, cfg.weight_mode, w, b);
                    W.col(j) = lambda * w;
                    bias(j) = lambda * b;
                }
                Matrix Hb = layer_input * W;
                Hb.rowwise() += bias;
                activate_block(act, Hb);
                const Eigen::RowVectorXd hh = Hb.colwise().squaredNorm();
                const Matrix eh = residual.transpose() * Hb;  // m x nb
                for (std::int64_t j = 0; j < nb; ++j) {
                    double total = nan;
                    if (hh(j) > degenerate_norm_sq) {
                        double worst = std::numeric_limits<double>::infinity();
                        total = 0.0;
                        for (Eigen::Index q = 0; q < m; ++q) {
                            const double xi = eh(q, j) * eh(q, j) / hh(j) - (1.0 - r) * ee(q);
                            worst = std::min(worst, xi);
                            total += xi;
                        }
                        if (!(worst > 0.0)) total = nan;
                    }
                    score[static_cast<std::size_t>(k0 + j)] = total;
                }
            }

            std::int64_t best = -1;
            for (std::int64_t k = 0; k < T; ++k) {
                const double s = score[static_cast<std::size_t>(k)];
                if (!std::isnan(s) && (best < 0 || s > score[static_cast<std::size_t>(best)])) best = k;
            }
            if (best < 0) continue;

            CandidateEvaluation c;
            detail::draw_candidate(rng.substream({li, ri, static_cast<std::uint64_t>(best)}), a, cfg.weight_mode,
                                   c.signs, c.bias_raw);
            c.lambda = lambda;
            c.r_used = r;
            c.candidate_index = static_cast<std::size_t>(best);
            c.output = node_output(layer_input, c.effective_weights(), c.effective_bias(), act);
            const double hh = c.output.squaredNorm();
            const Vector eh = residual.transpose() * c.output;
            c.xi_per_output.resize(m);
            for (Eigen::Index q = 0; q < m; ++q) c.xi_per_output(q) = eh(q) * eh(q) / hh - (1.0 - r) * ee(q);
            c.xi_sum = c.xi_per_output.sum();
            return c;
        }
    }
    return std::nullopt;
}

/// Unsupervised draw (RVFL family): the first non-degenerate candidate is taken.
inline std::optional<CandidateEvaluation> random_candidate(const Matrix& layer_input, std::size_t layer,
                                                           const BuilderConfig& cfg, const CounterRng& rng,
                                                           std::size_t max_draws = 100) {
    const Activation act = cfg.activation(layer);
    for (std::size_t k = 0; k < max_draws; ++k) {
        CandidateEvaluation c;
        detail::draw_candidate(rng.substream({0xa11, 0, k}), layer_input.cols(), cfg.weight_mode, c.signs, c.bias_raw);
        c.lambda = cfg.rvfl_lambda;
        c.candidate_index = k;
        c.output = node_output(layer_input, c.effective_weights(), c.effective_bias(), act);
        if (c.output.squaredNorm() > degenerate_norm_sq) return c;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Readout

/// beta (m x T) = pinv(H) (Y - P(X)).
inline Matrix solve_readout(const Matrix& hidden, const Matrix& Y, const Matrix& mech_out) {
    if (hidden.cols() < 1) throw ValidationError("solve_readout: no hidden columns");
    return least_squares_pinv(hidden, Y - mech_out).transpose();
}

namespace detail {

/// Readout state during construction. Columns go through the incremental QR;
/// a column that is numerically in the span of the earlier ones gets a zero
/// coefficient, so the fit on the training rows is always the least-squares
/// projection carried by the QR. With independent columns this is the
/// pseudoinverse solution.
class ReadoutSolver {
public:
    explicit ReadoutSolver(const Matrix& target) : qr_(target) {}

    Eigen::Index size() const { return static_cast<Eigen::Index>(independent_.size()); }

    void append(const Vector& h) { independent_.push_back(qr_.append(h)); }

    void truncate(Eigen::Index keep) {
        if (keep < 0 || keep > size()) throw ValidationError("ReadoutSolver: bad truncate size");
        independent_.resize(static_cast<std::size_t>(keep));
        qr_.truncate(std::count(independent_.begin(), independent_.end(), true));
    }

    /// T x m
    Matrix beta() const {
        const Matrix gamma = qr_.solve();
        Matrix beta = Matrix::Zero(size(), qr_.target().cols());
        Eigen::Index next = 0;
        for (Eigen::Index k = 0; k < size(); ++k)
            if (independent_[static_cast<std::size_t>(k)]) beta.row(k) = gamma.row(next++);
        return beta;
    }

    const Matrix& residual() const { return qr_.residual(); }

    Eigen::Index dependent_count() const { return size() - qr_.size(); }

private:
    IncrementalLeastSquares qr_;
    std::vector<bool> independent_;
};

inline double relative_gain(double before, double after) {
    if (after > 0.0) return (before - after) / after;
    if (before > after) return std::numeric_limits<double>::infinity();
    return 0.0;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Early stopping

struct EarlyStopAction {
    bool rollback = false;
    std::size_t remove = 0;  // trailing nodes to drop before opening a new layer
};

/// `errors` holds E_0..E_L for the current layer (E_0: error when the layer
/// was opened). Triggers when L > L_step and (E_{L-L_step} - E_L) / E_L <= tau;
/// then removes the last node and keeps removing while
/// (E_{L-1} - E_L) / E_L <= tau for the node now on top.
inline EarlyStopAction early_stop_check(std::span<const double> errors, std::size_t step, double tau) {
    if (errors.empty()) return {};
    const std::size_t L = errors.size() - 1;
    if (L <= step) return {};
    if (detail::relative_gain(errors[L - step], errors[L]) > tau) return {};

    std::size_t top = L;
    do {
        --top;
    } while (top >= 1 && detail::relative_gain(errors[top - 1], errors[top]) <= tau);
    return {true, L - top};
}

inline EarlyStopAction early_stop_check(std::span<const double> errors, const BuilderConfig& cfg) {
    return early_stop_check(errors, cfg.early_stop_step, cfg.early_stop_tol);
}

inline EarlyStopAction early_stop_check(const TrainingTrace& trace, const BuilderConfig& cfg) {
    if (trace.nodes.empty()) return {};
    std::size_t layer = 0;
    for (const auto& n : trace.nodes)
        if (!n.rolled_back) layer = n.layer;
    if (layer == 0) return {};
    const auto e = trace.layer_val_rmse(layer);
    return early_stop_check(std::span<const double>(e), cfg);
}

// ---------------------------------------------------------------------------
// Construction

struct BuildResult {
    ScmModel model;
    TrainingTrace trace;
};

namespace detail {

struct LayerUnderConstruction {
    Activation activation;
    std::vector<Vector> raw_weights;
    std::vector<double> lambdas;
    std::vector<double> biases;
    std::vector<Vector> train_out;
    std::vector<Vector> val_out;

    std::size_t size() const { return raw_weights.size(); }

    void pop() {
        raw_weights.pop_back();
        lambdas.pop_back();
        biases.pop_back();
        train_out.pop_back();
        val_out.pop_back();
    }

    static Matrix stack(const std::vector<Vector>& cols, Eigen::Index rows) {
        Matrix m(rows, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = cols[j];
        return m;
    }

    Layer finish(WeightMode mode) const {
        Layer layer;
        layer.activation = activation;
        layer.biases = Eigen::Map<const Vector>(biases.data(), static_cast<Eigen::Index>(biases.size()));
        if (mode == WeightMode::Binary) {
            layer.weights = BinaryWeightMatrix::from_columns(raw_weights, lambdas);
        } else {
            RealWeightMatrix w;
            const Eigen::Index in = raw_weights.empty() ? 0 : raw_weights.front().size();
            w.weights.resize(in, static_cast<Eigen::Index>(raw_weights.size()));
            for (std::size_t j = 0; j < raw_weights.size(); ++j)
                w.weights.col(static_cast<Eigen::Index>(j)) = lambdas[j] * raw_weights[j];
            w.lambdas = Eigen::Map<const Vector>(lambdas.data(), static_cast<Eigen::Index>(lambdas.size()));
            layer.weights = std::move(w);
        }
        return layer;
    }
};

inline double frob_rmse(const Matrix& residual) {
    return residual.size() == 0 ? 0.0 : std::sqrt(residual.squaredNorm() / static_cast<double>(residual.size()));
}

}  // namespace detail

/// Resolves the mechanism model for a build. Data are in normalised model space.
inline Mechanism fit_mechanism(const Dataset& train, const BuilderConfig& cfg, const AlgorithmFeatures& features) {
    if (!cfg.mechanism_plugin.empty()) {
        auto plugin = MechanismRegistry::global().find(cfg.mechanism_plugin);
        if (!plugin) throw ConfigError("mechanism plugin '" + cfg.mechanism_plugin + "' is not registered");
        return ExternalMechanism{cfg.mechanism_plugin, std::move(plugin)};
    }
    if (features.linear_model) return fit_linear_mechanism(train.inputs, train.targets, cfg.lasso_alpha);
    return ZeroMechanism{};
}

/// Incremental construction shared by SCM and the baselines; `features`
/// switches depth, early stopping, the linear model and the supervisory test.
///
/// `train` and `val` are expected in normalised model space; `norm` is stored
/// in the model so that raw data can be mapped in later. An empty `val`
/// disables early stopping.
inline BuildResult build_network(const Dataset& train, const Dataset& val, const BuilderConfig& cfg,
                                 const AlgorithmFeatures& features, const NormParams& norm,
                                 const std::string& val_label = "validation") {
    cfg.validate();
    if (train.empty()) throw ValidationError("build: empty training set");
    if (!val.empty() && (val.input_dim() != train.input_dim() || val.output_dim() != train.output_dim()))
        throw ValidationError("build: train/validation dimension mismatch");

    const Eigen::Index N = train.size();
    const Eigen::Index K = val.size();
    const Eigen::Index m = train.output_dim();
    const bool has_val = K > 0;
    const bool early_stopping = features.early_stopping && has_val;

    BuildResult result;
    ScmModel& model = result.model;
    TrainingTrace& trace = result.trace;
    model.input_dim = train.input_dim();
    model.output_dim = m;
    model.norm = norm;
    model.meta.seed = cfg.seed;
    model.mechanism = fit_mechanism(train, cfg, features);
    trace.early_stop_split = early_stopping ? val_label : "none";

    const Matrix mech_train = mechanism_output(model.mechanism, train.inputs, norm, m);
    const Matrix mech_val = has_val ? mechanism_output(model.mechanism, val.inputs, norm, m) : Matrix(0, m);

    detail::ReadoutSolver readout(train.targets - mech_train);
    std::vector<Vector> val_columns;  // every retained hidden node on the validation rows

    auto val_rmse_now = [&](const Matrix& beta) {
        if (!has_val) return 0.0;
        Matrix pred = mech_val;
        for (std::size_t j = 0; j < val_columns.size(); ++j)
            for (Eigen::Index q = 0; q < m; ++q)
                pred.col(q).noalias() += beta(static_cast<Eigen::Index>(j), q) * val_columns[j];
        return rmse(pred, val.targets);
    };

    double train_rmse = detail::frob_rmse(readout.residual());
    double val_rmse = has_val ? rmse(mech_val, val.targets) : 0.0;
    trace.mechanism_train_rmse = train_rmse;
    trace.mechanism_val_rmse = val_rmse;

    const CounterRng master(cfg.seed);
    const std::size_t layers = features.deep ? cfg.max_layers : 1;
    Matrix input_train = train.inputs;
    Matrix input_val = has_val ? val.inputs : Matrix(0, train.input_dim());

    for (std::size_t n = 0; n < layers; ++n) {
        if (train_rmse <= cfg.error_tol) break;

        detail::LayerUnderConstruction layer;
        layer.activation = cfg.activation(n);
        std::vector<double> errors{val_rmse};
        std::string advance_reason = "node limit reached";
        bool rolled_back = false;
        const std::size_t limit = cfg.nodes_limit(n);

        while (layer.size() < limit && train_rmse > cfg.error_tol) {
            const CounterRng node_rng = master.substream({n, layer.size()});
            std::optional<CandidateEvaluation> cand =
                features.supervisory ? candidate_search(readout.residual(), input_train, n, cfg, node_rng)
                                     : random_candidate(input_train, n, cfg, node_rng);
            if (!cand) {
                advance_reason = "no admissible candidate";
                break;
            }

            layer.raw_weights.push_back(cand->signs);
            layer.lambdas.push_back(cand->lambda);
            layer.biases.push_back(cand->effective_bias());
            layer.train_out.push_back(cand->output);
            if (has_val) {
                layer.val_out.push_back(node_output(input_val, cand->effective_weights(), cand->effective_bias(), layer.activation));
                val_columns.push_back(layer.val_out.back());
            } else {
                layer.val_out.emplace_back();
            }
            readout.append(cand->output);

            const Matrix beta = readout.beta();
            train_rmse = detail::frob_rmse(readout.residual());
            val_rmse = val_rmse_now(beta);
            errors.push_back(val_rmse);
            trace.nodes.push_back({n + 1, layer.size(), train_rmse, val_rmse, cand->lambda, cand->r_used, false});

            if (early_stopping) {
                const EarlyStopAction action = early_stop_check(std::span<const double>(errors), cfg);
                if (action.rollback) {
                    for (std::size_t i = 0; i < action.remove; ++i) {
                        layer.pop();
                        val_columns.pop_back();
                        errors.pop_back();
                    }
                    std::size_t marked = 0;
                    for (auto it = trace.nodes.rbegin(); it != trace.nodes.rend() && marked < action.remove; ++it) {
                        if (!it->rolled_back) {
                            it->rolled_back = true;
                            ++marked;
                        }
                    }
                    readout.truncate(readout.size() - static_cast<Eigen::Index>(action.remove));
                    train_rmse = detail::frob_rmse(readout.residual());
                    val_rmse = errors.back();
                    trace.events.push_back({TraceEvent::Kind::Rollback, n + 1, action.remove, "early stopping"});
                    advance_reason = "early stopping";
                    rolled_back = true;
                    break;
                }
            }
        }

        if (layer.size() == 0) {
            if (!rolled_back) {
                trace.stop_reason = "no admissible candidate for an empty layer";
                break;
            }
            trace.events.push_back({TraceEvent::Kind::LayerAdvance, n + 1, 0, "layer emptied by rollback"});
            continue;
        }

        Layer finished = layer.finish(cfg.weight_mode);
        input_train = detail::LayerUnderConstruction::stack(layer.train_out, N);
        if (has_val) input_val = detail::LayerUnderConstruction::stack(layer.val_out, K);
        model.layers.push_back(std::move(finished));
        trace.events.push_back({TraceEvent::Kind::LayerAdvance, n + 1, layer.size(), advance_reason});
    }

    if (trace.stop_reason.empty())
        trace.stop_reason = train_rmse <= cfg.error_tol ? "error tolerance reached" : "layer budget exhausted";
    trace.events.push_back({TraceEvent::Kind::Stop, model.layers.size(), 0, trace.stop_reason});

    model.readout = readout.beta().transpose();
    model.validate();
    return result;
}

/// SCM with early stopping.
inline BuildResult build_scm(const Dataset& train, const Dataset& val, const BuilderConfig& cfg,
                             const NormParams& norm, const std::string& val_label = "validation") {
    if (cfg.weight_mode != WeightMode::Binary) throw ConfigError("SCM uses binary hidden weights only");
    return build_network(train, val, cfg, features_of(Algorithm::SCM), norm, val_label);
}

inline BuildResult build_scm(const Dataset& train, const Dataset& val, const BuilderConfig& cfg) {
    return build_scm(train, val, cfg, NormParams::identity(train.input_dim(), train.output_dim()));
}

/// SCN, DeepSCN, IRVFL, DIRVFL-I, DIRVFL-II (and SCM) under one skeleton.
inline BuildResult build_baseline(Algorithm kind, const Dataset& train, const Dataset& val, const BuilderConfig& cfg,
                                  const NormParams& norm, const std::string& val_label = "validation") {
    if (kind == Algorithm::SCM) return build_scm(train, val, cfg, norm, val_label);
    if (kind == Algorithm::DIRVFL_II && cfg.weight_mode != WeightMode::Binary)
        throw ConfigError("DIRVFL-II uses binary hidden weights only");
    return build_network(train, val, cfg, features_of(kind), norm, val_label);
}

inline BuildResult build_baseline(Algorithm kind, const Dataset& train, const Dataset& val, const BuilderConfig& cfg) {
    return build_baseline(kind, train, val, cfg, NormParams::identity(train.input_dim(), train.output_dim()));
}

}  // namespace scm
