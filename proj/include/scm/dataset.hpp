#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "scm/error.hpp"
#include "scm/numerics.hpp"
#include "scm/random.hpp"

namespace scm {

struct Dataset {
    Matrix inputs;   // N x d
    Matrix targets;  // N x m
    std::vector<std::string> feature_names;
    std::vector<std::string> target_names;

    Eigen::Index size() const noexcept { return inputs.rows(); }
    Eigen::Index input_dim() const noexcept { return inputs.cols(); }
    Eigen::Index output_dim() const noexcept { return targets.cols(); }
    bool empty() const noexcept { return inputs.rows() == 0; }
};

inline std::vector<std::string> default_names(const std::string& prefix, Eigen::Index n) {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
    return names;
}

inline Dataset make_dataset(Matrix inputs, Matrix targets) {
    if (inputs.rows() != targets.rows())
        throw ValidationError("dataset: inputs have " + std::to_string(inputs.rows()) + " rows, targets " +
                              std::to_string(targets.rows()));
    if (!inputs.allFinite() || !targets.allFinite()) throw ValidationError("dataset: non-finite values");
    Dataset ds;
    ds.feature_names = default_names("x", inputs.cols());
    ds.target_names = default_names("y", targets.cols());
    ds.inputs = std::move(inputs);
    ds.targets = std::move(targets);
    return ds;
}

inline Dataset subset(const Dataset& ds, const std::vector<Eigen::Index>& rows) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.target_names = ds.target_names;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), ds.input_dim());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()), ds.output_dim());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.inputs.row(static_cast<Eigen::Index>(i)) = ds.inputs.row(rows[i]);
        out.targets.row(static_cast<Eigen::Index>(i)) = ds.targets.row(rows[i]);
    }
    return out;
}

inline Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim())
        throw ValidationError("concat: dimension mismatch");
    Dataset out;
    out.feature_names = a.feature_names;
    out.target_names = a.target_names;
    out.inputs.resize(a.size() + b.size(), a.input_dim());
    out.inputs << a.inputs, b.inputs;
    out.targets.resize(a.size() + b.size(), a.output_dim());
    out.targets << a.targets, b.targets;
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline bool parse_real(const std::string& text, double& out) {
    const char* b = text.data();
    const char* e = b + text.size();
    if (b != e && *b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && ptr == e && std::isfinite(out);
}

inline std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Which columns of a CSV row are targets. Negative indices count from the end.
struct TargetColumns {
    std::vector<int> indices{-1};
};

/// Reads a numeric CSV. Lines starting with '#' and blank lines are skipped.
inline Dataset load_csv(const std::string& path, const TargetColumns& target_cols = {}, bool has_header = false) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");

    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    std::string line;
    std::size_t line_no = 0;
    bool header_pending = has_header;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto cells = detail::split_csv_line(t);
        if (header_pending) {
            for (auto& c : cells) header.push_back(detail::trim(c));
            width = header.size();
            header_pending = false;
            continue;
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw ParseError(path + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                             " columns, expected " + std::to_string(width));
        std::vector<double> values(width);
        for (std::size_t c = 0; c < width; ++c) {
            const std::string cell = detail::trim(cells[c]);
            if (!detail::parse_real(cell, values[c]))
                throw ParseError(path + ": row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                                 ": cannot parse '" + cell + "' as a number");
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");

    std::vector<bool> is_target(width, false);
    for (int idx : target_cols.indices) {
        const long resolved = idx < 0 ? static_cast<long>(width) + idx : idx;
        if (resolved < 0 || resolved >= static_cast<long>(width))
            throw ParseError(path + ": target column " + std::to_string(idx) + " out of range");
        is_target[static_cast<std::size_t>(resolved)] = true;
    }
    const auto m = static_cast<Eigen::Index>(std::count(is_target.begin(), is_target.end(), true));
    const auto d = static_cast<Eigen::Index>(width) - m;
    if (m == 0 || d == 0) throw ParseError(path + ": need at least one input and one target column");

    Dataset ds;
    ds.inputs.resize(static_cast<Eigen::Index>(rows.size()), d);
    ds.targets.resize(static_cast<Eigen::Index>(rows.size()), m);
    for (std::size_t c = 0; c < width; ++c) {
        std::string name = header.empty() ? std::string() : header[c];
        if (is_target[c]) ds.target_names.push_back(name.empty() ? "y" + std::to_string(ds.target_names.size()) : name);
        else ds.feature_names.push_back(name.empty() ? "x" + std::to_string(ds.feature_names.size()) : name);
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        Eigen::Index xi = 0, yi = 0;
        for (std::size_t c = 0; c < width; ++c) {
            if (is_target[c]) ds.targets(static_cast<Eigen::Index>(r), yi++) = rows[r][c];
            else ds.inputs(static_cast<Eigen::Index>(r), xi++) = rows[r][c];
        }
    }
    return ds;
}

/// Writes inputs then targets per row, with a header row and optional
/// '#'-prefixed comment line. Reals use shortest round-trip formatting.
inline void write_csv(const std::string& path, const Dataset& ds, const std::string& comment = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    if (!comment.empty()) out << "# " << comment << '\n';
    bool first = true;
    for (const auto& n : ds.feature_names) out << (first ? "" : ",") << n, first = false;
    for (const auto& n : ds.target_names) out << (first ? "" : ",") << n, first = false;
    out << '\n';
    for (Eigen::Index r = 0; r < ds.size(); ++r) {
        for (Eigen::Index c = 0; c < ds.input_dim(); ++c) out << (c ? "," : "") << detail::format_real(ds.inputs(r, c));
        for (Eigen::Index c = 0; c < ds.output_dim(); ++c)
            out << (ds.input_dim() + c ? "," : "") << detail::format_real(ds.targets(r, c));
        out << '\n';
    }
    if (!out) throw Error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Normalisation

/// Per-column min/max of inputs and targets.
struct NormParams {
    Vector input_min, input_max;
    Vector target_min, target_max;

    friend bool operator==(const NormParams& a, const NormParams& b) {
        return a.input_min == b.input_min && a.input_max == b.input_max && a.target_min == b.target_min &&
               a.target_max == b.target_max;
    }

    /// Identity mapping for data that is already in model space.
    static NormParams identity(Eigen::Index d, Eigen::Index m) {
        return {Vector::Zero(d), Vector::Ones(d), Vector::Zero(m), Vector::Ones(m)};
    }

    static NormParams fit(const Dataset& ds) {
        if (ds.empty()) throw ValidationError("NormParams::fit: empty dataset");
        return {ds.inputs.colwise().minCoeff().transpose(), ds.inputs.colwise().maxCoeff().transpose(),
                ds.targets.colwise().minCoeff().transpose(), ds.targets.colwise().maxCoeff().transpose()};
    }

    static Matrix forward(const Matrix& v, const Vector& lo, const Vector& hi) {
        if (v.cols() != lo.size()) throw ValidationError("normalize: column count mismatch");
        Matrix out(v.rows(), v.cols());
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            const double span = hi(c) - lo(c);
            if (span == 0.0) out.col(c).setZero();
            else out.col(c) = (v.col(c).array() - lo(c)) / span;
        }
        return out;
    }

    static Matrix inverse(const Matrix& v, const Vector& lo, const Vector& hi) {
        if (v.cols() != lo.size()) throw ValidationError("denormalize: column count mismatch");
        Matrix out(v.rows(), v.cols());
        for (Eigen::Index c = 0; c < v.cols(); ++c) out.col(c) = v.col(c).array() * (hi(c) - lo(c)) + lo(c);
        return out;
    }

    Matrix normalize_inputs(const Matrix& x) const { return forward(x, input_min, input_max); }
    Matrix normalize_targets(const Matrix& y) const { return forward(y, target_min, target_max); }
    Matrix denormalize_inputs(const Matrix& x) const { return inverse(x, input_min, input_max); }
    Matrix denormalize_targets(const Matrix& y) const { return inverse(y, target_min, target_max); }

    Dataset apply(const Dataset& ds) const {
        Dataset out = ds;
        out.inputs = normalize_inputs(ds.inputs);
        out.targets = normalize_targets(ds.targets);
        return out;
    }

    Dataset invert(const Dataset& ds) const {
        Dataset out = ds;
        out.inputs = denormalize_inputs(ds.inputs);
        out.targets = denormalize_targets(ds.targets);
        return out;
    }
};

/// Maps every column to [0, 1] via (v - min) / (max - min). Constant columns map to 0.
inline std::pair<Dataset, NormParams> normalize_minmax(const Dataset& ds) {
    NormParams params = NormParams::fit(ds);
    return {params.apply(ds), std::move(params)};
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitFractions {
    double train = 0.9;
    double val = 0.0;
    double test = 0.1;
};

struct DatasetSplit {
    Dataset train, val, test;
};

/// Seeded uniform shuffle of the rows, then consecutive blocks of
/// round(train * N) and round(val * N) rows; the rest is the test set.
inline DatasetSplit split(const Dataset& ds, SplitFractions f, std::uint64_t seed) {
    if (f.train < 0 || f.val < 0 || f.test < 0) throw ValidationError("split: fractions must be non-negative");
    if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw ValidationError("split: fractions must sum to 1");

    const Eigen::Index n = ds.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    CounterRng rng = CounterRng(seed).substream({0x5011d});
    for (Eigen::Index i = n - 1; i > 0; --i)
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i) + 1))]);

    const auto n_train = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(std::llround(f.train * static_cast<double>(n))));
    const auto n_val =
        std::min<Eigen::Index>(n - n_train, static_cast<Eigen::Index>(std::llround(f.val * static_cast<double>(n))));

    auto block = [&](Eigen::Index from, Eigen::Index to) {
        return subset(ds, std::vector<Eigen::Index>(order.begin() + from, order.begin() + to));
    };
    return {block(0, n_train), block(n_train, n_train + n_val), block(n_train + n_val, n)};
}

// ---------------------------------------------------------------------------
// Synthetic generators

/// 0.2 e^{-(10x-4)^2} + 0.5 e^{-(90x-40)^2} + 0.3 e^{-(80x-20)^2}
inline double rdb7_function(double x) {
    auto sq = [](double v) { return v * v; };
    return 0.2 * std::exp(-sq(10 * x - 4)) + 0.5 * std::exp(-sq(90 * x - 40)) + 0.3 * std::exp(-sq(80 * x - 20));
}

/// x ~ U[0, 1), y = rdb7_function(x).
inline Dataset gen_rdb7(std::size_t n = 1000, std::uint64_t seed = 0) {
    if (n < 1) throw ValidationError("gen_rdb7: n must be >= 1");
    CounterRng rng = CounterRng(seed).substream({0x7db7});
    Matrix x(static_cast<Eigen::Index>(n), 1), y(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = rng.next_unit();
        y(i, 0) = rdb7_function(x(i, 0));
    }
    return make_dataset(std::move(x), std::move(y));
}

inline constexpr double rastrigin_a = 10.0;
inline constexpr double rastrigin_bound = 5.12;

/// A n + sum_i (x_i^2 - A cos(2 pi x_i)), A = 10.
template <class Range>
double rastrigin_function(const Range& x) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double xi : x) {
        sum += xi * xi - rastrigin_a * std::cos(2.0 * std::numbers::pi * xi);
        ++n;
    }
    return rastrigin_a * static_cast<double>(n) + sum;
}

namespace detail {

inline Dataset rastrigin_sample(std::size_t n_dims, std::size_t n, CounterRng rng) {
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_dims));
    Matrix y(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.uniform(-rastrigin_bound, rastrigin_bound);
        Vector row = x.row(i).transpose();
        y(i, 0) = rastrigin_function(row);
    }
    return make_dataset(std::move(x), std::move(y));
}

}  // namespace detail

/// Independent uniform samples on [-5.12, 5.12]^n_dims for train and test.
inline std::pair<Dataset, Dataset> gen_rastrigin(std::size_t n_dims = 2, std::size_t n_train = 40000,
                                                 std::size_t n_test = 4489, std::uint64_t seed = 0) {
    if (n_dims < 1) throw ValidationError("gen_rastrigin: n_dims must be >= 1");
    CounterRng root(seed);
    return {detail::rastrigin_sample(n_dims, n_train, root.substream({0x7a57, 0})),
            detail::rastrigin_sample(n_dims, n_test, root.substream({0x7a57, 1}))};
}

}  // namespace scm
