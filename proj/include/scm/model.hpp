#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "scm/activations.hpp"
#include "scm/dataset.hpp"
#include "scm/error.hpp"
#include "scm/numerics.hpp"

namespace scm {

// ---------------------------------------------------------------------------
// Hidden weights

/// Sign bits plus one scale per node: w_eff(i, j) = scales[j] * (bit(i, j) ? +1 : -1).
///
/// Bits are packed row-major over (input i, node j), least significant bit first.
class BinaryWeightMatrix {
public:
    BinaryWeightMatrix() = default;

    BinaryWeightMatrix(Eigen::Index in_dim, Eigen::Index out_dim)
        : in_dim_(in_dim), out_dim_(out_dim), bits_(byte_count(in_dim * out_dim), 0), scales_(Vector::Ones(out_dim)) {}

    /// Builds from per-node sign columns (entries must be +1 or -1) and scales.
    static BinaryWeightMatrix from_columns(const std::vector<Vector>& signs, const std::vector<double>& scales) {
        if (signs.size() != scales.size()) throw ValidationError("BinaryWeightMatrix: signs/scales count mismatch");
        const Eigen::Index in = signs.empty() ? 0 : signs.front().size();
        BinaryWeightMatrix w(in, static_cast<Eigen::Index>(signs.size()));
        for (Eigen::Index j = 0; j < w.out_dim_; ++j) {
            const Vector& s = signs[static_cast<std::size_t>(j)];
            if (s.size() != in) throw ValidationError("BinaryWeightMatrix: ragged sign columns");
            for (Eigen::Index i = 0; i < in; ++i) {
                if (s(i) != 1.0 && s(i) != -1.0) throw ValidationError("BinaryWeightMatrix: sign must be +1 or -1");
                w.set_sign(i, j, s(i) > 0);
            }
            w.set_scale(j, scales[static_cast<std::size_t>(j)]);
        }
        return w;
    }

    /// Raw constructor used by deserialisation.
    static BinaryWeightMatrix from_packed(Eigen::Index in_dim, Eigen::Index out_dim, std::vector<std::uint8_t> bits,
                                          Vector scales) {
        if (bits.size() != byte_count(in_dim * out_dim)) throw ValidationError("BinaryWeightMatrix: packed size mismatch");
        if (scales.size() != out_dim) throw ValidationError("BinaryWeightMatrix: scale count mismatch");
        for (Eigen::Index j = 0; j < out_dim; ++j)
            if (!(scales(j) > 0.0) || !std::isfinite(scales(j))) throw ValidationError("BinaryWeightMatrix: scales must be positive");
        BinaryWeightMatrix w;
        w.in_dim_ = in_dim;
        w.out_dim_ = out_dim;
        w.bits_ = std::move(bits);
        w.scales_ = std::move(scales);
        return w;
    }

    static std::size_t byte_count(Eigen::Index bits) { return static_cast<std::size_t>((bits + 7) / 8); }

    Eigen::Index in_dim() const noexcept { return in_dim_; }
    Eigen::Index out_dim() const noexcept { return out_dim_; }
    const std::vector<std::uint8_t>& packed() const noexcept { return bits_; }
    const Vector& scales() const noexcept { return scales_; }

    bool positive(Eigen::Index i, Eigen::Index j) const {
        const auto idx = static_cast<std::size_t>(i * out_dim_ + j);
        return (bits_[idx / 8] >> (idx % 8)) & 1u;
    }
    double sign(Eigen::Index i, Eigen::Index j) const { return positive(i, j) ? 1.0 : -1.0; }
    double effective(Eigen::Index i, Eigen::Index j) const { return positive(i, j) ? scales_(j) : -scales_(j); }

    void set_sign(Eigen::Index i, Eigen::Index j, bool plus) {
        const auto idx = static_cast<std::size_t>(i * out_dim_ + j);
        const auto mask = static_cast<std::uint8_t>(1u << (idx % 8));
        if (plus) bits_[idx / 8] |= mask;
        else bits_[idx / 8] &= static_cast<std::uint8_t>(~mask);
    }
    void set_scale(Eigen::Index j, double lambda) {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("BinaryWeightMatrix: scale must be positive");
        scales_(j) = lambda;
    }

    /// Dense in_dim x out_dim matrix of +-lambda values.
    Matrix dense() const {
        Matrix w(in_dim_, out_dim_);
        for (Eigen::Index i = 0; i < in_dim_; ++i)
            for (Eigen::Index j = 0; j < out_dim_; ++j) w(i, j) = effective(i, j);
        return w;
    }

    friend bool operator==(const BinaryWeightMatrix& a, const BinaryWeightMatrix& b) {
        return a.in_dim_ == b.in_dim_ && a.out_dim_ == b.out_dim_ && a.bits_ == b.bits_ && a.scales_ == b.scales_;
    }

private:
    Eigen::Index in_dim_ = 0;
    Eigen::Index out_dim_ = 0;
    std::vector<std::uint8_t> bits_;
    Vector scales_;
};

/// Real-valued hidden weights (baselines in real weight mode). `weights` holds
/// the effective values, `lambdas` the scale each node was drawn with.
struct RealWeightMatrix {
    Matrix weights;  // in_dim x out_dim
    Vector lambdas;

    Eigen::Index in_dim() const noexcept { return weights.rows(); }
    const Vector& scales() const noexcept { return lambdas; }
    Eigen::Index out_dim() const noexcept { return weights.cols(); }
    Matrix dense() const { return weights; }

    friend bool operator==(const RealWeightMatrix& a, const RealWeightMatrix& b) {
        return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() && a.weights == b.weights &&
               a.lambdas == b.lambdas;
    }
};

enum class WeightMode : std::uint8_t { Binary = 0, Real = 1 };

inline std::string to_string(WeightMode m) { return m == WeightMode::Binary ? "binary" : "real"; }

// ---------------------------------------------------------------------------
// Layers

/// Output of one hidden node for every row of `input`:
/// act(sum_i input(r, i) * weights(i) + bias). The builder and the forward
/// pass share this kernel so both see identical floating point results.
inline Vector node_output(const Matrix& input, const Vector& weights, double bias, const Activation& act) {
    Vector z = input * weights;
    z.array() += bias;
    activate_block(act, z);
    return z;
}

struct Layer {
    std::variant<BinaryWeightMatrix, RealWeightMatrix> weights;
    Vector biases;  // already scaled by the node's lambda
    Activation activation;

    Eigen::Index in_dim() const {
        return std::visit([](const auto& w) { return w.in_dim(); }, weights);
    }
    Eigen::Index out_dim() const {
        return std::visit([](const auto& w) { return w.out_dim(); }, weights);
    }
    Matrix effective_weights() const {
        return std::visit([](const auto& w) { return w.dense(); }, weights);
    }
    const Vector& scales() const {
        return std::visit([](const auto& w) -> const Vector& { return w.scales(); }, weights);
    }
    WeightMode mode() const {
        return std::holds_alternative<BinaryWeightMatrix>(weights) ? WeightMode::Binary : WeightMode::Real;
    }

    /// N x out_dim activations for an N x in_dim input.
    Matrix evaluate(const Matrix& input) const {
        if (input.cols() != in_dim())
            throw ValidationError("layer: input has " + std::to_string(input.cols()) + " columns, expected " +
                                  std::to_string(in_dim()));
        const Matrix w = effective_weights();
        Matrix out(input.rows(), out_dim());
        for (Eigen::Index j = 0; j < out_dim(); ++j) out.col(j) = node_output(input, w.col(j), biases(j), activation);
        return out;
    }

    friend bool operator==(const Layer& a, const Layer& b) {
        return a.weights == b.weights && a.biases.size() == b.biases.size() && a.biases == b.biases &&
               a.activation == b.activation;
    }
};

// ---------------------------------------------------------------------------
// Mechanism model

/// Domain model supplied by the user. Receives raw (denormalised) inputs and
/// returns raw targets, N x m.
class MechanismPlugin {
public:
    virtual ~MechanismPlugin() = default;
    virtual Matrix predict(const Matrix& raw_inputs) const = 0;
};

/// Name -> plugin lookup used when training with, or loading, an external mechanism.
class MechanismRegistry {
public:
    static MechanismRegistry& global() {
        static MechanismRegistry registry;
        return registry;
    }

    void add(const std::string& name, std::shared_ptr<const MechanismPlugin> plugin) {
        std::lock_guard lock(mutex_);
        plugins_[name] = std::move(plugin);
    }

    std::shared_ptr<const MechanismPlugin> find(const std::string& name) const {
        std::lock_guard lock(mutex_);
        auto it = plugins_.find(name);
        return it == plugins_.end() ? nullptr : it->second;
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const MechanismPlugin>> plugins_;
};

struct ZeroMechanism {
    friend bool operator==(const ZeroMechanism&, const ZeroMechanism&) = default;
};

/// y = X p + u on normalised data; `selected[k]` marks inputs with a non-zero row of p.
struct LinearMechanism {
    Matrix p;  // d x m
    Vector u;  // m
    std::vector<bool> selected;

    friend bool operator==(const LinearMechanism& a, const LinearMechanism& b) {
        return a.p.rows() == b.p.rows() && a.p.cols() == b.p.cols() && a.p == b.p && a.u == b.u &&
               a.selected == b.selected;
    }
};

/// Reference to a registered plugin. Only the name is persisted.
struct ExternalMechanism {
    std::string name;
    std::shared_ptr<const MechanismPlugin> plugin;

    friend bool operator==(const ExternalMechanism& a, const ExternalMechanism& b) { return a.name == b.name; }
};

using Mechanism = std::variant<ZeroMechanism, LinearMechanism, ExternalMechanism>;

// ---------------------------------------------------------------------------
// Model

struct ModelMeta {
    std::uint64_t seed = 0;
    std::string config;  // JSON snapshot of the builder configuration

    friend bool operator==(const ModelMeta&, const ModelMeta&) = default;
};

/// Y = P(X) + sum_k H_k(X) beta_k^T on normalised data.
struct ScmModel {
    Eigen::Index input_dim = 0;
    Eigen::Index output_dim = 0;
    Mechanism mechanism = ZeroMechanism{};
    std::vector<Layer> layers;
    Matrix readout;  // m x total hidden nodes
    NormParams norm;
    ModelMeta meta;

    Eigen::Index hidden_count() const {
        Eigen::Index t = 0;
        for (const auto& l : layers) t += l.out_dim();
        return t;
    }

    std::vector<Eigen::Index> layer_widths() const {
        std::vector<Eigen::Index> w;
        for (const auto& l : layers) w.push_back(l.out_dim());
        return w;
    }

    /// Throws ValidationError when the structural invariants are broken.
    void validate() const {
        if (input_dim < 1 || output_dim < 1) throw ValidationError("model: dimensions must be positive");
        Eigen::Index prev = input_dim;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            const Layer& l = layers[k];
            if (l.in_dim() != prev)
                throw ValidationError("model: layer " + std::to_string(k + 1) + " input width " +
                                      std::to_string(l.in_dim()) + " != " + std::to_string(prev));
            if (l.biases.size() != l.out_dim()) throw ValidationError("model: bias count mismatch");
            if (!l.biases.allFinite()) throw ValidationError("model: non-finite bias");
            prev = l.out_dim();
        }
        if (readout.rows() != output_dim || readout.cols() != hidden_count())
            throw ValidationError("model: readout is " + shape_string(readout) + ", expected " +
                                  std::to_string(output_dim) + "x" + std::to_string(hidden_count()));
        if (const auto* lin = std::get_if<LinearMechanism>(&mechanism)) {
            if (lin->p.rows() != input_dim || lin->p.cols() != output_dim || lin->u.size() != output_dim)
                throw ValidationError("model: linear mechanism shape mismatch");
        }
    }

    friend bool operator==(const ScmModel& a, const ScmModel& b) {
        return a.input_dim == b.input_dim && a.output_dim == b.output_dim && a.mechanism == b.mechanism &&
               a.layers == b.layers && a.readout.rows() == b.readout.rows() && a.readout.cols() == b.readout.cols() &&
               a.readout == b.readout && a.norm == b.norm && a.meta == b.meta;
    }
};

inline void check_input(const ScmModel& model, const Matrix& X) {
    if (X.cols() != model.input_dim)
        throw ValidationError("model expects " + std::to_string(model.input_dim) + " input columns, got " +
                              std::to_string(X.cols()));
}

/// P(X) on normalised inputs, N x m.
inline Matrix mechanism_output(const Mechanism& mechanism, const Matrix& X, const NormParams& norm, Eigen::Index m) {
    return std::visit(
        [&](const auto& mech) -> Matrix {
            using T = std::decay_t<decltype(mech)>;
            if constexpr (std::is_same_v<T, ZeroMechanism>) {
                return Matrix::Zero(X.rows(), m);
            } else if constexpr (std::is_same_v<T, LinearMechanism>) {
                Matrix out = X * mech.p;
                out.rowwise() += mech.u.transpose();
                return out;
            } else {
                if (!mech.plugin) throw ValidationError("mechanism plugin '" + mech.name + "' is not registered");
                Matrix raw = mech.plugin->predict(norm.denormalize_inputs(X));
                if (raw.rows() != X.rows() || raw.cols() != m)
                    throw ValidationError("mechanism plugin '" + mech.name + "' returned " + shape_string(raw));
                return norm.normalize_targets(raw);
            }
        },
        mechanism);
}

inline Matrix mechanism_output(const ScmModel& model, const Matrix& X) {
    check_input(model, X);
    return mechanism_output(model.mechanism, X, model.norm, model.output_dim);
}

/// H_1(X), ..., H_M(X), each N x L_k.
inline std::vector<Matrix> hidden_outputs(const ScmModel& model, const Matrix& X) {
    check_input(model, X);
    std::vector<Matrix> out;
    out.reserve(model.layers.size());
    const Matrix* input = &X;
    for (const auto& layer : model.layers) {
        out.push_back(layer.evaluate(*input));
        input = &out.back();
    }
    return out;
}

/// S(X) = sum_k H_k(X) beta_k^T, accumulated layer-major, node index ascending.
inline Matrix stochastic_output(const ScmModel& model, const std::vector<Matrix>& hidden, Eigen::Index rows) {
    Matrix out = Matrix::Zero(rows, model.output_dim);
    Eigen::Index col = 0;
    for (const auto& H : hidden) {
        for (Eigen::Index j = 0; j < H.cols(); ++j, ++col)
            for (Eigen::Index q = 0; q < model.output_dim; ++q) out.col(q).noalias() += model.readout(q, col) * H.col(j);
    }
    return out;
}

inline Matrix stochastic_output(const ScmModel& model, const Matrix& X) {
    return stochastic_output(model, hidden_outputs(model, X), X.rows());
}

/// P(X) + S(X) on normalised inputs.
inline Matrix forward(const ScmModel& model, const Matrix& X) {
    Matrix out = mechanism_output(model, X);
    out += stochastic_output(model, X);
    return out;
}

/// Forward pass from raw inputs to raw targets.
inline Matrix predict_raw(const ScmModel& model, const Matrix& raw_inputs) {
    return model.norm.denormalize_targets(forward(model, model.norm.normalize_inputs(raw_inputs)));
}

// ---------------------------------------------------------------------------
// Storage accounting

/// Bit accounting for the hidden weights: binary signs plus one 64-bit scale
/// per node, against 64-bit reals for every weight. Biases and the readout are
/// not counted.
struct StorageReport {
    std::uint64_t weights = 0;
    std::uint64_t upsilon_bits = 0;
    std::uint64_t sign_bits = 0;
    std::uint64_t real64_bits = 0;
    double reduction_pct = 0.0;
};

inline StorageReport storage_report(Eigen::Index inputs, const std::vector<Eigen::Index>& widths) {
    if (widths.empty()) throw ValidationError("storage_report: model has no hidden layers");
    StorageReport r;
    std::uint64_t prev = static_cast<std::uint64_t>(inputs);
    std::uint64_t nodes = 0;
    for (Eigen::Index w : widths) {
        r.weights += prev * static_cast<std::uint64_t>(w);
        nodes += static_cast<std::uint64_t>(w);
        prev = static_cast<std::uint64_t>(w);
    }
    r.sign_bits = r.weights;
    r.upsilon_bits = 64 * nodes;
    r.real64_bits = 64 * r.weights;
    r.reduction_pct =
        100.0 * (1.0 - static_cast<double>(r.sign_bits + r.upsilon_bits) / static_cast<double>(r.real64_bits));
    return r;
}

inline StorageReport storage_report(const ScmModel& model) {
    return storage_report(model.input_dim, model.layer_widths());
}

}  // namespace scm
