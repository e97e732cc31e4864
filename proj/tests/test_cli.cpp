#include "tubemax/models.hpp"
#include "tubemax/tube.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace tubemax;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const char* b = std::getenv("TUBEMAX_CLI");
        if (!b) GTEST_SKIP() << "TUBEMAX_CLI not set";
        bin_ = b;
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               ("tubemax-cli-" + std::to_string(::getpid()) + "-" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override {
        if (!dir_.empty()) fs::remove_all(dir_);
    }

    // Exit status of the CLI; stdout and stderr go to files in the work dir.
    int run(const std::string& args, const std::string& env = "") const {
        const std::string cmd = env + " " + bin_ + " " + args + " > " + (dir_ / "stdout").string() + " 2> " +
                                (dir_ / "stderr").string();
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    fs::path write(const std::string& name, const std::string& text) const {
        const auto p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    fs::path out() const { return dir_ / "out"; }

    std::string bin_;
    fs::path dir_;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::map<std::string, std::vector<double>> read_csv(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> header;
    std::istringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) header.push_back(cell);
    std::map<std::string, std::vector<double>> cols;
    while (std::getline(in, line)) {
        std::istringstream rs(line);
        std::size_t i = 0;
        for (std::string cell; std::getline(rs, cell, ','); ++i) cols[header.at(i)].push_back(std::stod(cell));
    }
    return cols;
}

// Circle tube in terms of ell' and ell'' written out by hand.
double circle_display(double m, double c) {
    auto f = [&](double t) {
        const double l1 = -m * std::sin(2 * t), l2 = -2 * m * std::cos(2 * t);
        const double s2 = std::exp(-2 * m * std::sin(t) * std::sin(t));
        const double a = 1.0 + l1 * l1 / 2.0;
        return (1.0 + (-l2 + l1 * l1) / 2.0) / (2 * kPi * a) * std::exp(-a * c * c / s2 / 2.0) * std::sqrt(2.0);
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, kPi, 15, 1e-14);
}

}  // namespace

TEST_F(Cli, CircleTailMatchesHandFormula) {
    ASSERT_EQ(run("tail --model circle --m 1.5 --thresholds 1,2,3,4 --out " + out().string()), 0);
    const auto cols = read_csv(out() / "tail_circle.csv");
    ASSERT_EQ(cols.at("c").size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        const double ref = circle_display(1.5, cols.at("c")[i]);
        EXPECT_NEAR(cols.at("tube")[i], ref, 1e-9 * ref);
        EXPECT_NEAR(cols.at("laplace")[i], std::sqrt(2.5 / 1.5) * normal_upper(cols.at("c")[i]), 1e-9);
    }
    const auto meta = read_json(out() / "tail_circle.json");
    EXPECT_EQ(meta.at("model").at("n"), 3);
    EXPECT_LT(meta.at("convergence_delta").get<double>(), 1e-6);
}

TEST_F(Cli, Wishart2TailMatchesClosedForm) {
    ASSERT_EQ(run("tail --model wishart2 --l1 1 --l2 0.75 --nu 4 --thresholds 2,3,4,5 --out " + out().string()), 0);
    const auto cols = read_csv(out() / "tail_wishart2.csv");
    for (std::size_t i = 0; i < 4; ++i) {
        const double x = cols.at("eigenvalue")[i];
        EXPECT_NEAR(x, cols.at("c")[i] * cols.at("c")[i], 1e-12 * x);
        EXPECT_NEAR(cols.at("tube")[i], wishart_tube_closed_form(1.0, 0.75, 4, x), 1e-9);
    }
}

TEST_F(Cli, BadInputExitsTwo) {
    EXPECT_EQ(run("tail --model circle --grid 0 --out " + out().string()), 2);
    EXPECT_EQ(run("tail --model nonesuch --out " + out().string()), 2);
    EXPECT_EQ(run("tail --model circle --m -1 --out " + out().string()), 2);
    EXPECT_EQ(run("tail --model circle --n 4 --out " + out().string()), 2);
    EXPECT_EQ(run("reproduce fig9 --out " + out().string()), 2);
    EXPECT_EQ(run("tail --bogus-flag"), 2);
    const auto cfg = write("bad.json", R"J({"model": "circle", "colour": "red"})J");
    EXPECT_EQ(run("tail --config " + cfg.string() + " --out " + out().string()), 2);
    EXPECT_NE(slurp(dir_ / "stderr").find("colour"), std::string::npos);
    EXPECT_FALSE(fs::exists(out() / "tail_circle.csv"));
}

TEST_F(Cli, FlagsOverrideConfig) {
    const auto cfg = write("cfg.json", R"J({"model": "circle", "m": 1.5, "grid": 7, "p_min": 1e-3})J");
    ASSERT_EQ(run("tail --config " + cfg.string() + " --grid 3 --out " + out().string()), 0);
    const auto cols = read_csv(out() / "tail_circle.csv");
    EXPECT_EQ(cols.at("c").size(), 3u);
    const auto meta = read_json(out() / "tail_circle.json");
    EXPECT_EQ(meta.at("config").at("grid"), 3);
    EXPECT_DOUBLE_EQ(meta.at("config").at("p_min").get<double>(), 1e-3);
    EXPECT_DOUBLE_EQ(meta.at("model").at("parameters").at("m").get<double>(), 1.5);
}

TEST_F(Cli, CriticalCircleReportsDiagonalLimit) {
    ASSERT_EQ(run("critical --model circle --m 0.25 --out " + out().string()), 0);
    const auto j = read_json(out() / "critical_circle.json");
    EXPECT_NEAR(j.at("bcri").get<double>(), std::sqrt(16.0 / 41.0), 1e-6);
    EXPECT_TRUE(j.at("diagonal_limit_flag").get<bool>());
    EXPECT_TRUE(j.at("valid").get<bool>());
    EXPECT_EQ(j.at("delta_sequence").size(), 6u);
    const auto local = read_csv(out() / "critical_circle_local.csv");
    for (double b : local.at("bcri_local")) EXPECT_LE(b, j.at("bcri").get<double>() * (1 + 1e-9));
}

TEST_F(Cli, CriticalWishart2WithSmallerGrid) {
    ASSERT_EQ(run("critical --model wishart2 --l1 1 --l2 0.75 --nu 2 --search-grid 100,100,32 --out " +
                  out().string()),
              0);
    const auto j = read_json(out() / "critical_wishart2.json");
    const double ref = std::sqrt(0.75 / 1.75);
    EXPECT_NEAR(j.at("bcri").get<double>(), ref, 0.01 * ref);
    EXPECT_EQ(j.at("grid_pairs").get<long long>(), 100LL * 100 * 32);
}

TEST_F(Cli, FiniteSystemFromCsv) {
    const double r = 1.0 / std::sqrt(2.0);
    std::ostringstream csv;
    csv.precision(17);
    csv << "# sigma, then the correlation matrix\n2,1,3\n1," << r << ",0.5\n" << r << ",1," << r << "\n0.5," << r << ",1\n";
    const auto sys = write("sys.csv", csv.str());
    ASSERT_EQ(run("critical --system " + sys.string() + " --out " + out().string()), 0);
    const auto j = read_json(out() / "critical_finite.json");
    EXPECT_NEAR(j.at("bcri").get<double>(), 3.0 * std::sqrt(3.0 / 7.0), 1e-12);
    EXPECT_NEAR(j.at("bound").get<double>(), 3.0 * std::sqrt((1.0 + r) / 2.0), 1e-12);
    EXPECT_EQ(j.at("argmax_pair"), nlohmann::json({3, 1}));

    ASSERT_EQ(run("tail --system " + sys.string() + " --thresholds 3,4 --out " + out().string()), 0);
    const auto cols = read_csv(out() / "tail_finite.csv");
    EXPECT_EQ(cols.at("c").size(), 2u);
    EXPECT_GT(cols.at("bonferroni")[0], cols.at("bonferroni")[1]);
}

TEST_F(Cli, ReproduceBonferroniExample) {
    ASSERT_EQ(run("reproduce bonferroni-example --out " + out().string()), 0);
    const auto j = read_json(out() / "bonferroni-example" / "summary.json");
    EXPECT_NEAR(j.at("bcri").get<double>(), 1.9639610121, 1e-9);
    EXPECT_NEAR(j.at("bound").get<double>(), 2.7716385975, 1e-9);
    EXPECT_TRUE(j.at("pass").get<bool>());
    const auto tail = read_csv(out() / "bonferroni-example" / "sphere_tail.csv");
    EXPECT_EQ(tail.at("sphere_tail").back(), 0.0);
}

TEST_F(Cli, SimulateIsByteIdenticalUnderFixedSeed) {
    const std::string args = "simulate --model circle --m 1 --reps 3000 --grid 8";
    ASSERT_EQ(run(args + " --seed 11 --threads 1 --out " + (dir_ / "a").string()), 0);
    ASSERT_EQ(run(args + " --seed 11 --threads 3 --out " + (dir_ / "b").string()), 0);
    ASSERT_EQ(run(args + " --seed 12 --out " + (dir_ / "c").string()), 0);
    EXPECT_EQ(slurp(dir_ / "a" / "simulate_circle.csv"), slurp(dir_ / "b" / "simulate_circle.csv"));
    EXPECT_EQ(slurp(dir_ / "a" / "simulate_circle.json"), slurp(dir_ / "b" / "simulate_circle.json"));
    EXPECT_NE(slurp(dir_ / "a" / "simulate_circle.csv"), slurp(dir_ / "c" / "simulate_circle.csv"));
}

TEST_F(Cli, CustomModelMatchesBuiltIn) {
    const auto cfg = write("custom.json", R"J({
        "model": "custom",
        "custom": {
            "name": "my-circle",
            "dim": 1,
            "box": [[0, "pi", true]],
            "params": {"m": 0.25},
            "phi": ["cos(t1)^2", "sqrt(2) * sin(t1) * cos(t1)", "sin(t1)^2"],
            "sigma": "exp(-m * sin(t1)^2)",
            "maximizer": {"d0": 0, "points": [{"t": [0]}]}
        }
    })J");
    ASSERT_EQ(run("tail --config " + cfg.string() + " --thresholds 1,2,3 --out " + out().string()), 0);
    ASSERT_EQ(run("tail --model circle --m 0.25 --thresholds 1,2,3 --out " + (dir_ / "ref").string()), 0);
    const auto mine = read_csv(out() / "tail_my-circle.csv");
    const auto ref = read_csv(dir_ / "ref" / "tail_circle.csv");
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(mine.at("tube")[i], ref.at("tube")[i], 1e-6 * ref.at("tube")[i]);
        EXPECT_NEAR(mine.at("laplace")[i], ref.at("laplace")[i], 1e-6 * ref.at("laplace")[i]);
    }
    const auto broken = write("broken.json", R"J({"model": "custom", "custom": {"dim": 1, "box": [[0, 1]],
        "phi": ["cos(t1", "sin(t1)"], "sigma": "1"}})J");
    EXPECT_EQ(run("tail --config " + broken.string() + " --out " + out().string()), 2);
}

TEST_F(Cli, OutputDirectoryFromEnvironment) {
    ASSERT_EQ(run("tail --model circle --grid 2", "TUBEMAX_OUT_DIR=" + (dir_ / "env").string()), 0);
    EXPECT_TRUE(fs::exists(dir_ / "env" / "tail_circle.csv"));
    ASSERT_EQ(run("tail --model circle --grid 2 --out " + (dir_ / "flag").string(),
                  "TUBEMAX_OUT_DIR=" + (dir_ / "env2").string()),
              0);
    EXPECT_TRUE(fs::exists(dir_ / "flag" / "tail_circle.csv"));
    EXPECT_FALSE(fs::exists(dir_ / "env2"));
}
