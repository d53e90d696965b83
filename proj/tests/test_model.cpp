#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "scm/model.hpp"
#include "scm/random.hpp"
#include "scm/serialize.hpp"

using namespace scm;
namespace fs = std::filesystem;

namespace {

BinaryWeightMatrix random_binary(CounterRng& rng, Eigen::Index in, Eigen::Index out) {
    BinaryWeightMatrix w(in, out);
    const double lambdas[] = {0.5, 1, 5, 10, 30, 50, 100};
    for (Eigen::Index j = 0; j < out; ++j) {
        for (Eigen::Index i = 0; i < in; ++i) w.set_sign(i, j, rng.next_bit());
        w.set_scale(j, lambdas[rng.below(7)]);
    }
    return w;
}

Vector random_vector(CounterRng& rng, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-1, 1);
    return v;
}

// d = 3, m = 2, layers 5 (tanh) and 4 (sigmoid), linear mechanism.
ScmModel two_layer_model(std::uint64_t seed) {
    CounterRng rng(seed);
    ScmModel m;
    m.input_dim = 3;
    m.output_dim = 2;
    LinearMechanism lin;
    lin.p = Matrix::Zero(3, 2);
    lin.p(0, 0) = 0.25;
    lin.p(2, 1) = -0.5;
    lin.u = Vector::Constant(2, 0.1);
    lin.selected = {true, false, true};
    m.mechanism = lin;
    m.layers.push_back({random_binary(rng, 3, 5), random_vector(rng, 5), {ActivationKind::Tanh, 1.0}});
    m.layers.push_back({random_binary(rng, 5, 4), random_vector(rng, 4), {ActivationKind::Sigmoid, 1.0}});
    m.readout.resize(2, 9);
    for (Eigen::Index i = 0; i < 2; ++i) m.readout.row(i) = random_vector(rng, 9).transpose();
    m.norm = NormParams{Vector::Zero(3), Vector::Constant(3, 2.0), Vector::Constant(2, -1.0), Vector::Ones(2)};
    m.meta.seed = seed;
    m.meta.config = R"({"max_layers":2})";
    return m;
}

Matrix random_inputs(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
    CounterRng rng(seed);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = random_vector(rng, d).transpose();
    return x;
}

bool bit_identical(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

fs::path temp_path(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "scm_model_test";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Forward, InterceptOnlyModel) {
    ScmModel m;
    m.input_dim = 2;
    m.output_dim = 1;
    m.mechanism = LinearMechanism{Matrix::Zero(2, 1), Vector::Constant(1, 0.7), {false, false}};
    m.readout.resize(1, 0);
    const Matrix y = forward(m, random_inputs(1, 6, 2));
    EXPECT_TRUE((y.array() == 0.7).all());
    EXPECT_TRUE(hidden_outputs(m, random_inputs(1, 6, 2)).empty());
}

TEST(Forward, SingleSignNodeByHand) {
    ScmModel m;
    m.input_dim = 1;
    m.output_dim = 1;
    BinaryWeightMatrix w(1, 1);
    w.set_sign(0, 0, true);
    w.set_scale(0, 2.0);
    m.layers.push_back({w, Vector::Constant(1, -2.0), {ActivationKind::Sign, 1.0}});
    m.readout = Matrix::Constant(1, 1, 3.0);
    Matrix x(1, 1);
    x << 0.5;
    EXPECT_EQ(forward(m, x)(0, 0), -3.0);
}

TEST(Forward, PackedSignsMatchDenseWeights) {
    const ScmModel m = two_layer_model(3);
    const Matrix x = random_inputs(4, 50, 3);
    Matrix h = x;
    Matrix expected = mechanism_output(m, x);
    Eigen::Index col = 0;
    for (const auto& layer : m.layers) {
        const Matrix w = std::get<BinaryWeightMatrix>(layer.weights).dense();
        Matrix z = (h * w).rowwise() + layer.biases.transpose();
        for (Eigen::Index i = 0; i < z.rows(); ++i)
            for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = layer.activation(z(i, j));
        expected += z * m.readout.middleCols(col, z.cols()).transpose();
        col += z.cols();
        h = z;
    }
    EXPECT_LE((forward(m, x) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, HiddenOutputsShapeAndConsistency) {
    const ScmModel m = two_layer_model(5);
    const Matrix x = random_inputs(6, 5, 3);
    const auto hidden = hidden_outputs(m, x);
    ASSERT_EQ(hidden.size(), 2u);
    EXPECT_EQ(hidden[0].rows(), 5);
    EXPECT_EQ(hidden[0].cols(), 5);
    EXPECT_EQ(hidden[1].cols(), 4);
    Matrix all(5, 9);
    all << hidden[0], hidden[1];
    EXPECT_LE((mechanism_output(m, x) + all * m.readout.transpose() - forward(m, x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, DeterministicAndRejectsWrongWidth) {
    const ScmModel m = two_layer_model(7);
    const Matrix x = random_inputs(8, 20, 3);
    EXPECT_TRUE(bit_identical(forward(m, x), forward(m, x)));
    EXPECT_THROW(forward(m, random_inputs(8, 20, 2)), ValidationError);
}

TEST(Weights, EffectiveMagnitudeEqualsScale) {
    CounterRng rng(9);
    const BinaryWeightMatrix w = random_binary(rng, 6, 7);
    const Matrix d = w.dense();
    for (Eigen::Index i = 0; i < 6; ++i)
        for (Eigen::Index j = 0; j < 7; ++j) EXPECT_EQ(std::abs(d(i, j)), w.scales()(j));
}

TEST(Weights, PackingGoldenBytes) {
    const int signs[2][5] = {{+1, -1, +1, +1, -1}, {-1, -1, +1, -1, +1}};
    BinaryWeightMatrix w(2, 5);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 5; ++j) w.set_sign(i, j, signs[i][j] > 0);
    EXPECT_EQ(w.packed(), (std::vector<std::uint8_t>{0x8D, 0x02}));
}

TEST(Weights, RejectNonPositiveScale) {
    BinaryWeightMatrix w(1, 1);
    EXPECT_THROW(w.set_scale(0, 0.0), ValidationError);
    EXPECT_THROW(BinaryWeightMatrix::from_columns({Vector::Constant(2, 0.5)}, {1.0}), ValidationError);
}

TEST(Storage, TableRows) {
    const StorageReport a = storage_report(36, {117, 24, 31});
    EXPECT_EQ(a.weights, 7764u);
    EXPECT_EQ(a.sign_bits, 7764u);
    EXPECT_EQ(a.upsilon_bits, 11008u);
    EXPECT_EQ(a.real64_bits, 496896u);
    EXPECT_NEAR(a.reduction_pct, 96.22, 0.005);

    const StorageReport b = storage_report(11, {28, 8});
    EXPECT_EQ(b.weights, 532u);
    EXPECT_EQ(b.upsilon_bits, 2304u);
    EXPECT_EQ(b.real64_bits, 34048u);
    EXPECT_NEAR(b.reduction_pct, 91.67, 0.005);
}

TEST(Storage, TinyNetworkDoesNotCompress) {
    EXPECT_NEAR(storage_report(1, {1}).reduction_pct, 100.0 * (1.0 - 65.0 / 64.0), 1e-12);
    EXPECT_THROW(storage_report(1, {}), ValidationError);
}

TEST(Serialize, RoundTripIsBitExact) {
    const ScmModel m = two_layer_model(11);
    const auto path = temp_path("rt.scm");
    serialize(m, path.string());
    const ScmModel back = deserialize(path.string());
    EXPECT_EQ(back, m);
    const Matrix x = random_inputs(12, 40, 3);
    EXPECT_TRUE(bit_identical(forward(back, x), forward(m, x)));
    EXPECT_EQ(serialize_bytes(back), serialize_bytes(m));
}

TEST(Serialize, RealWeightLayerRoundTrips) {
    ScmModel m = two_layer_model(13);
    CounterRng rng(14);
    Matrix w(3, 5);
    for (Eigen::Index j = 0; j < 5; ++j) w.col(j) = random_vector(rng, 3);
    m.layers[0].weights = RealWeightMatrix{w, Vector::Ones(5)};
    m.mechanism = ZeroMechanism{};
    EXPECT_EQ(deserialize_bytes(serialize_bytes(m)), m);
}

TEST(Serialize, FileSizeMatchesLayout) {
    const ScmModel m = two_layer_model(15);
    const auto bytes = serialize_bytes(m);
    std::size_t expected = 4 + 2 + 3 * 4;
    expected += 2 * (4 + 4 + 1 + 8 + 1);
    expected += 1 + 8 * 3 * 2 + 8 * 2;
    for (const auto& layer : m.layers) {
        const auto bits = static_cast<std::size_t>(layer.in_dim() * layer.out_dim());
        expected += 16 * static_cast<std::size_t>(layer.out_dim()) + (bits + 7) / 8;
    }
    expected += 8 * 2 * 9 + 8 * (3 + 3 + 2 + 2) + 8 + 4 + m.meta.config.size() + 4;
    EXPECT_EQ(bytes.size(), expected);
    EXPECT_EQ(std::get<BinaryWeightMatrix>(m.layers[0].weights).packed().size(), 2u);
    EXPECT_EQ(std::get<BinaryWeightMatrix>(m.layers[1].weights).packed().size(), 3u);
}

TEST(Serialize, TypedErrors) {
    const auto good = serialize_bytes(two_layer_model(17));
    auto kind_of = [](const std::vector<std::uint8_t>& bytes) {
        try {
            deserialize_bytes(bytes);
        } catch (const FormatError& e) {
            return e.kind();
        }
        return FormatErrorKind::Io;
    };

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(kind_of(bad_magic), FormatErrorKind::BadMagic);

    auto version = good;
    version[4] = 9;
    EXPECT_EQ(kind_of(version), FormatErrorKind::VersionMismatch);

    auto truncated = good;
    truncated.resize(good.size() / 2);
    EXPECT_EQ(kind_of(truncated), FormatErrorKind::Truncated);

    auto flipped = good;
    flipped[good.size() / 2] ^= 0x10;
    EXPECT_EQ(kind_of(flipped), FormatErrorKind::Checksum);

    EXPECT_THROW(deserialize(temp_path("does-not-exist.scm").string()), FormatError);
}
