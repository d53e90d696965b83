#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "scm/dataset.hpp"

using namespace scm;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
    const fs::path dir = fs::temp_directory_path() / "scm_dataset_test";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream(p) << contents;
    return p;
}

Dataset column_dataset(std::initializer_list<double> xs, std::initializer_list<double> ys) {
    Matrix x(static_cast<Eigen::Index>(xs.size()), 1), y(static_cast<Eigen::Index>(ys.size()), 1);
    Eigen::Index i = 0;
    for (double v : xs) x(i++, 0) = v;
    i = 0;
    for (double v : ys) y(i++, 0) = v;
    return make_dataset(x, y);
}

}  // namespace

TEST(Csv, LastColumnIsTargetByDefault) {
    const auto p = temp_file("three.csv", "a,b,c\n1,2,3\n4,5,6\n");
    const Dataset ds = load_csv(p.string(), {}, true);
    EXPECT_EQ(ds.input_dim(), 2);
    EXPECT_EQ(ds.output_dim(), 1);
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(ds.target_names, (std::vector<std::string>{"c"}));
    EXPECT_EQ(ds.targets(1, 0), 6.0);
    EXPECT_EQ(ds.inputs(1, 0), 4.0);
}

TEST(Csv, ExplicitTargetColumnsAndCommentsSkipped) {
    const auto p = temp_file("cols.csv", "# provenance\n1,2,3\n\n4,5,6\n");
    const Dataset ds = load_csv(p.string(), {{0, -1}}, false);
    EXPECT_EQ(ds.size(), 2);
    EXPECT_EQ(ds.output_dim(), 2);
    EXPECT_EQ(ds.inputs(0, 0), 2.0);
    EXPECT_EQ(ds.targets(1, 0), 4.0);
    EXPECT_EQ(ds.targets(1, 1), 6.0);
}

TEST(Csv, NonNumericCellNamesRow) {
    const auto p = temp_file("bad.csv", "1,2\n3,4\n5,6\n7,8\nabc,9\n");
    try {
        load_csv(p.string());
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("row 5"), std::string::npos) << e.what();
    }
}

TEST(Csv, MissingAndEmptyFilesFail) {
    EXPECT_THROW(load_csv("/nonexistent/dir/file.csv"), ParseError);
    const auto p = temp_file("empty.csv", "");
    EXPECT_THROW(load_csv(p.string()), ParseError);
    const auto ragged = temp_file("ragged.csv", "1,2\n3\n");
    EXPECT_THROW(load_csv(ragged.string()), ParseError);
}

TEST(Csv, WriteThenLoadRoundTrips) {
    const Dataset ds = gen_rdb7(50, 3);
    const fs::path p = fs::temp_directory_path() / "scm_dataset_test" / "rt.csv";
    write_csv(p.string(), ds, "generator=rdb7");
    const Dataset back = load_csv(p.string(), {}, true);
    EXPECT_EQ(back.inputs, ds.inputs);
    EXPECT_EQ(back.targets, ds.targets);
}

TEST(Normalize, MinMaxColumn) {
    const auto [norm, params] = normalize_minmax(column_dataset({2, 4, 6}, {1, 1, 1}));
    EXPECT_EQ(norm.inputs(0, 0), 0.0);
    EXPECT_EQ(norm.inputs(1, 0), 0.5);
    EXPECT_EQ(norm.inputs(2, 0), 1.0);
    EXPECT_EQ(norm.targets, Matrix::Zero(3, 1));
}

TEST(Normalize, ConstantColumnMapsToZero) {
    const auto [norm, params] = normalize_minmax(column_dataset({5, 5}, {0, 1}));
    EXPECT_EQ(norm.inputs, Matrix::Zero(2, 1));
}

TEST(Normalize, RoundTripAndRange) {
    const auto [train, test] = gen_rastrigin(3, 300, 10, 4);
    const auto [norm, params] = normalize_minmax(train);
    EXPECT_GE(norm.inputs.minCoeff(), 0.0);
    EXPECT_LE(norm.inputs.maxCoeff(), 1.0);
    EXPECT_GE(norm.targets.minCoeff(), 0.0);
    EXPECT_LE(norm.targets.maxCoeff(), 1.0);
    const Dataset back = params.invert(norm);
    EXPECT_LE((back.inputs - train.inputs).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((back.targets - train.targets).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Split, SizesAndDisjointCover) {
    Matrix x(100, 1);
    for (Eigen::Index i = 0; i < 100; ++i) x(i, 0) = static_cast<double>(i);
    const Dataset ds = make_dataset(x, x);
    const DatasetSplit s = split(ds, {0.9, 0.0, 0.1}, 7);
    EXPECT_EQ(s.train.size(), 90);
    EXPECT_EQ(s.val.size(), 0);
    EXPECT_EQ(s.test.size(), 10);
    std::set<double> seen;
    for (const Dataset* part : {&s.train, &s.val, &s.test})
        for (Eigen::Index i = 0; i < part->size(); ++i) EXPECT_TRUE(seen.insert(part->inputs(i, 0)).second);
    EXPECT_EQ(seen.size(), 100u);
}

TEST(Split, DeterministicPerSeed) {
    const Dataset ds = gen_rdb7(200, 1);
    const DatasetSplit a = split(ds, {0.6, 0.2, 0.2}, 9);
    const DatasetSplit b = split(ds, {0.6, 0.2, 0.2}, 9);
    const DatasetSplit c = split(ds, {0.6, 0.2, 0.2}, 10);
    EXPECT_EQ(a.train.inputs, b.train.inputs);
    EXPECT_EQ(a.val.inputs, b.val.inputs);
    EXPECT_NE(a.train.inputs, c.train.inputs);
}

TEST(Split, AllTrainAndBadFractions) {
    const Dataset ds = gen_rdb7(20, 1);
    EXPECT_EQ(split(ds, {1, 0, 0}, 1).train.size(), 20);
    EXPECT_THROW(split(ds, {0.5, 0.2, 0.2}, 1), ValidationError);
}

TEST(Generators, Rdb7Values) {
    EXPECT_NEAR(rdb7_function(0.4), 0.2 + 0.5 * std::exp(-16.0) + 0.3 * std::exp(-144.0), 1e-17);
    EXPECT_NEAR(rdb7_function(0.4), 0.2000000563, 1e-10);
    EXPECT_NEAR(rdb7_function(0.0), 2.25e-8, 0.01e-8);
    const Dataset ds = gen_rdb7();
    EXPECT_EQ(ds.size(), 1000);
    EXPECT_EQ(ds.input_dim(), 1);
    EXPECT_GE(ds.inputs.minCoeff(), 0.0);
    EXPECT_LT(ds.inputs.maxCoeff(), 1.0);
}

TEST(Generators, RastriginValues) {
    EXPECT_EQ(rastrigin_function(std::vector<double>{0.0, 0.0}), 0.0);
    EXPECT_NEAR(rastrigin_function(std::vector<double>{1.0, 1.0}), 2.0, 1e-12);
    const auto [train, test] = gen_rastrigin();
    EXPECT_EQ(train.size(), 40000);
    EXPECT_EQ(test.size(), 4489);
    EXPECT_EQ(train.input_dim(), 2);
    EXPECT_GE(train.inputs.minCoeff(), -5.12);
    EXPECT_LE(train.inputs.maxCoeff(), 5.12);
}

TEST(Generators, DeterministicPerSeed) {
    EXPECT_EQ(gen_rdb7(100, 5).inputs, gen_rdb7(100, 5).inputs);
    EXPECT_NE(gen_rdb7(100, 5).inputs, gen_rdb7(100, 6).inputs);
    const auto a = gen_rastrigin(2, 50, 20, 8);
    const auto b = gen_rastrigin(2, 50, 20, 8);
    EXPECT_EQ(a.first.inputs, b.first.inputs);
    EXPECT_EQ(a.second.targets, b.second.targets);
    EXPECT_NE(a.first.inputs.topRows(20), a.second.inputs);
}
