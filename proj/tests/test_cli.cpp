#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string output;
};

Result run(const std::string& args, const std::string& env = {}) {
    const fs::path log = fs::temp_directory_path() / "scm_cli_test" / "last_output.txt";
    fs::create_directories(log.parent_path());
    const std::string cmd = env + " " + std::string(SCM_FORGE) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    return r;
}

fs::path work_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "scm_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
    std::ofstream(path) << text;
    return path;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* small_config = R"({
  "seed": 5,
  "data": {"generator": "rdb7", "n": 200},
  "split": {"train": 0.8, "val": 0.1, "test": 0.1},
  "builder": {"max_layers": 2, "max_nodes_per_layer": 12, "candidates_per_layer": 20}
})";

std::string csv_config(const fs::path& csv) {
    return R"({"seed": 1, "data": {"csv": ")" + csv.string() +
           R"("}, "split": {"train": 0.8, "val": 0.2, "test": 0.0}, "builder": {"max_layers": 1, "max_nodes_per_layer": 5, "candidates_per_layer": 10}})";
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("train").code, 2);
    EXPECT_EQ(run("train --config /nonexistent/cfg.json").code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, UnknownConfigKeyExitsTwo) {
    const fs::path dir = work_dir("unknown_key");
    const fs::path cfg = write_file(dir / "cfg.json", R"({"data": {"generator": "rdb7"}, "bulider": {}})");
    const Result r = run("train --config " + cfg.string() + " --out " + (dir / "out").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("bulider"), std::string::npos) << r.output;
}

TEST(Cli, MissingDatasetExitsTwoWithoutWritingFiles) {
    const fs::path dir = work_dir("missing_data");
    const fs::path cfg = write_file(dir / "cfg.json", csv_config(dir / "absent.csv"));
    const fs::path out = dir / "out";
    EXPECT_EQ(run("train --config " + cfg.string() + " --out " + out.string()).code, 2);
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, TrainWritesArtifactsDeterministically) {
    const fs::path dir = work_dir("train");
    const fs::path cfg = write_file(dir / "cfg.json", small_config);
    ASSERT_EQ(run("train --config " + cfg.string() + " --out " + (dir / "a").string()).code, 0);
    ASSERT_EQ(run("train --config " + cfg.string() + " --out " + (dir / "b").string()).code, 0);
    for (const char* f : {"model.scm", "trace.csv", "metrics.json"}) EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(read_file(dir / "a" / "model.scm"), read_file(dir / "b" / "model.scm"));
    EXPECT_EQ(read_file(dir / "a" / "trace.csv"), read_file(dir / "b" / "trace.csv"));

    const auto metrics = nlohmann::json::parse(read_file(dir / "a" / "metrics.json"));
    EXPECT_EQ(metrics["algorithm"], "SCM");
    EXPECT_EQ(metrics["seed"], 5);

    ASSERT_EQ(run("train --config " + cfg.string() + " --seed 6 --out " + (dir / "c").string()).code, 0);
    EXPECT_NE(read_file(dir / "a" / "model.scm"), read_file(dir / "c" / "model.scm"));
}

TEST(Cli, EvalScoresSavedModel) {
    const fs::path dir = work_dir("eval");
    const fs::path cfg = write_file(dir / "cfg.json", small_config);
    ASSERT_EQ(run("train --config " + cfg.string() + " --out " + (dir / "m").string()).code, 0);
    ASSERT_EQ(run("gen-data --config " + cfg.string() + " --out " + (dir / "data").string()).code, 0);
    EXPECT_TRUE(fs::exists(dir / "data" / "train.csv"));
    EXPECT_TRUE(fs::exists(dir / "data" / "test.csv"));

    const std::string model = (dir / "m" / "model.scm").string();
    ASSERT_EQ(run("eval --model " + model + " --data " + (dir / "data" / "test.csv").string() + " --out " +
                  (dir / "e").string())
                  .code,
              0);
    EXPECT_TRUE(fs::exists(dir / "e" / "predictions.csv"));
    const auto metrics = nlohmann::json::parse(read_file(dir / "e" / "metrics.json"));
    const auto trained = nlohmann::json::parse(read_file(dir / "m" / "metrics.json"));
    EXPECT_NEAR(metrics["rmse"].get<double>(), trained["test_rmse"].get<double>(), 1e-12);
}

TEST(Cli, ReportSizeFromTopology) {
    const Result r = run("report --mode size --inputs 36 --widths 117-24-31");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.output.find("96.22%"), std::string::npos) << r.output;
    EXPECT_NE(run("report --mode size --inputs 11 --widths 28-8").output.find("91.67%"), std::string::npos);
}

TEST(Cli, CorruptModelExitsOne) {
    const fs::path dir = work_dir("corrupt");
    const fs::path cfg = write_file(dir / "cfg.json", small_config);
    ASSERT_EQ(run("train --config " + cfg.string() + " --out " + dir.string()).code, 0);
    std::string bytes = read_file(dir / "model.scm");
    bytes[bytes.size() / 2] ^= 0x40;
    write_file(dir / "bad.scm", bytes);
    const Result r = run("report --mode size --model " + (dir / "bad.scm").string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.output.find("checksum"), std::string::npos) << r.output;
    EXPECT_EQ(run("eval --model " + (dir / "bad.scm").string() + " --config " + cfg.string()).code, 1);
}

TEST(Cli, ReportMc) {
    const fs::path dir = work_dir("mc");
    // Constant target: the model is mechanism-only.
    std::string flat = "x1,x2,y\n";
    for (int i = 0; i < 30; ++i) flat += std::to_string(i * 0.03) + "," + std::to_string((i * 7 % 30) * 0.03) + ",1.5\n";
    const fs::path flat_csv = write_file(dir / "flat.csv", flat);
    ASSERT_EQ(run("train --config " + write_file(dir / "flat.json", csv_config(flat_csv)).string() + " --out " +
                  (dir / "flat").string())
                  .code,
              0);
    const Result mc = run("report --mode mc --model " + (dir / "flat" / "model.scm").string() + " --grid 21 --out " +
                          (dir / "flat").string());
    EXPECT_EQ(mc.code, 0) << mc.output;
    const auto report = nlohmann::json::parse(read_file(dir / "flat" / "report.json"));
    EXPECT_EQ(report["outputs"][0]["mc"].get<double>(), 0.0);

    std::string wide = "a,b,c,d,y\n";
    for (int i = 0; i < 30; ++i)
        wide += std::to_string(i) + "," + std::to_string(i % 7) + "," + std::to_string(i % 5) + "," +
                std::to_string(i % 3) + "," + std::to_string(i * i % 11) + "\n";
    const fs::path wide_csv = write_file(dir / "wide.csv", wide);
    ASSERT_EQ(run("train --config " + write_file(dir / "wide.json", csv_config(wide_csv)).string() + " --out " +
                  (dir / "wide").string())
                  .code,
              0);
    EXPECT_EQ(run("report --mode mc --model " + (dir / "wide" / "model.scm").string()).code, 2);
}

TEST(Cli, CompareParallelMatchesSerial) {
    const fs::path dir = work_dir("compare");
    const fs::path cfg = write_file(dir / "cfg.json", small_config);
    ASSERT_EQ(run("compare --config " + cfg.string() + " --trials 3 --out " + (dir / "p").string(), "OMP_NUM_THREADS=3").code, 0);
    ASSERT_EQ(run("compare --config " + cfg.string() + " --trials 3 --serial --out " + (dir / "s").string()).code, 0);
    const std::string table = read_file(dir / "p" / "table.csv");
    EXPECT_EQ(table, read_file(dir / "s" / "table.csv"));
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 7);
    EXPECT_TRUE(fs::exists(dir / "p" / "table.txt"));
}
