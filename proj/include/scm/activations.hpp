#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "scm/error.hpp"

namespace scm {

enum class ActivationKind : std::uint8_t { Sigmoid = 0, BReLU = 1, Tanh = 2, Sign = 3, HardLimit = 4 };

/// A bounded element-wise activation. `bound` is the BReLU ceiling A and is
/// ignored by the other kinds.
struct Activation {
    ActivationKind kind = ActivationKind::Tanh;
    double bound = 1.0;

    friend bool operator==(const Activation&, const Activation&) = default;

    double operator()(double x) const noexcept {
        switch (kind) {
            case ActivationKind::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
            case ActivationKind::BReLU: return std::min(std::max(0.0, x), bound);
            case ActivationKind::Tanh: return std::tanh(x);
            case ActivationKind::Sign: return x <= 0.0 ? -1.0 : 1.0;
            case ActivationKind::HardLimit: return x >= 0.0 ? 1.0 : 0.0;
        }
        return x;
    }

    /// Sign and HardLimit have no derivative at the jump.
    bool differentiable() const noexcept {
        return kind != ActivationKind::Sign && kind != ActivationKind::HardLimit;
    }
};

inline double activate(const Activation& act, double x) noexcept { return act(x); }

/// In-place element-wise activation of a whole block (vectorised where Eigen can).
template <class Derived>
void activate_block(const Activation& act, Derived&& block) {
    auto a = block.array();
    switch (act.kind) {
        case ActivationKind::Sigmoid: a = (1.0 + (-a).exp()).inverse(); break;
        case ActivationKind::BReLU: a = a.max(0.0).min(act.bound); break;
        // 1 - 2 / (e^{2x} + 1) runs on the vectorised exp; within a few ulp
        // of std::tanh in absolute terms.
        case ActivationKind::Tanh: a = 1.0 - 2.0 / ((2.0 * a).exp() + 1.0); break;
        case ActivationKind::Sign: a = (a <= 0.0).select(-1.0, a.Constant(a.rows(), a.cols(), 1.0)); break;
        case ActivationKind::HardLimit: a = (a >= 0.0).select(1.0, a.Constant(a.rows(), a.cols(), 0.0)); break;
    }
}

inline std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::Sigmoid: return "sigmoid";
        case ActivationKind::BReLU: return "brelu";
        case ActivationKind::Tanh: return "tanh";
        case ActivationKind::Sign: return "sign";
        case ActivationKind::HardLimit: return "hardlim";
    }
    return "unknown";
}

inline std::string to_string(const Activation& act) { return to_string(act.kind); }

/// Accepts "sigmoid" | "brelu" | "tanh" | "sign" | "hardlim", any case.
inline Activation parse_activation(std::string_view name, double brelu_bound = 1.0) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "sigmoid") return {ActivationKind::Sigmoid, 1.0};
    if (lower == "brelu") {
        if (!(brelu_bound > 0.0)) throw ValidationError("brelu bound must be positive");
        return {ActivationKind::BReLU, brelu_bound};
    }
    if (lower == "tanh") return {ActivationKind::Tanh, 1.0};
    if (lower == "sign") return {ActivationKind::Sign, 1.0};
    if (lower == "hardlim") return {ActivationKind::HardLimit, 1.0};
    throw ParseError("unknown activation '" + std::string(name) + "'");
}

inline ActivationKind activation_kind_from_tag(std::uint8_t tag) {
    if (tag > static_cast<std::uint8_t>(ActivationKind::HardLimit))
        throw ValidationError("unknown activation tag " + std::to_string(tag));
    return static_cast<ActivationKind>(tag);
}

}  // namespace scm
