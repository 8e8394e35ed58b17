#include <catch2/catch_amalgamated.hpp>

#include <roughskew/harness.hpp>
#include <roughskew/validate.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace roughskew;
using namespace roughskew::harness;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::filesystem::path fresh_dir(const std::string& leaf) {
    const auto dir = std::filesystem::temp_directory_path() / "roughskew-tests" / leaf;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("kv config parses comments and typed values", "[harness]") {
    std::istringstream src("# a comment\n"
                           "\n"
                           "model.name = lsv-linear\n"
                           "theta.count = 7   \n"
                           "strikes.z = 0.25\n");
    const KvConfig kv = KvConfig::parse(src);
    CHECK(kv.get_str("model.name", "bs") == "lsv-linear");
    CHECK(kv.get_u64("theta.count", 1) == 7);
    CHECK(kv.get_double("strikes.z", 0.0) == 0.25);
    CHECK(kv.get_double("strikes.zeta", -0.5) == -0.5);
}

TEST_CASE("kv config reports bad lines and bad values", "[harness]") {
    std::istringstream bad("key-without-equals\n");
    CHECK_THROWS_WITH(KvConfig::parse(bad), Catch::Matchers::ContainsSubstring("line 1"));

    std::istringstream src("mc.n_paths = not-a-number\n");
    const KvConfig kv = KvConfig::parse(src);
    CHECK_THROWS_WITH(kv.get_u64("mc.n_paths", 1),
                      Catch::Matchers::ContainsSubstring("mc.n_paths"));
}

TEST_CASE("unconsumed keys are rejected by name", "[harness]") {
    std::istringstream src("model.name = bs\nmodle.typo = 1\n");
    const KvConfig kv = KvConfig::parse(src);
    (void)kv.get_str("model.name", "bs");
    CHECK_THROWS_WITH(kv.reject_unknown_keys(),
                      Catch::Matchers::ContainsSubstring("modle.typo"));
}

TEST_CASE("seventeen digit formatting round trips doubles", "[harness]") {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, 12345.678901234567, -0.0001}) {
        const std::string s = fmt17(x);
        CHECK(std::stod(s) == x);
    }
}

TEST_CASE("experiment config applies defaults and validates", "[harness]") {
    const KvConfig empty;
    const ExperimentConfig cfg = ExperimentConfig::resolve(empty);
    CHECK(cfg.model_name == "rough-bounded");
    CHECK(cfg.theta_count == 8);
    CHECK(cfg.n_paths == 50000);

    const auto grid = cfg.theta_grid();
    REQUIRE(grid.size() == cfg.theta_count);
    CHECK(grid.front() == Catch::Approx(cfg.theta_min).epsilon(1e-14));
    CHECK(grid.back() == Catch::Approx(cfg.theta_max).epsilon(1e-12));
    for (std::size_t i = 1; i < grid.size(); ++i) {
        CHECK(grid[i] > grid[i - 1]);
        CHECK(grid[i] / grid[i - 1] ==
              Catch::Approx(grid[1] / grid[0]).epsilon(1e-10));
    }

    KvConfig bad;
    bad.set("theta.min", "-1.0");
    CHECK_THROWS_AS(ExperimentConfig::resolve(bad), std::invalid_argument);
    KvConfig same;
    same.set("strikes.z", "0.1");
    same.set("strikes.zeta", "0.1");
    CHECK_THROWS_AS(ExperimentConfig::resolve(same), std::invalid_argument);
    KvConfig few;
    few.set("mc.n_paths", "10");
    CHECK_THROWS_AS(ExperimentConfig::resolve(few), std::invalid_argument);
}

TEST_CASE("thread resolution prefers explicit then environment", "[harness]") {
    CHECK(parallel::resolve_threads(3) == 3);
    setenv("ROUGHSKEW_THREADS", "2", 1);
    CHECK(parallel::resolve_threads(0) == 2);
    setenv("ROUGHSKEW_THREADS", "garbage", 1);
    CHECK(parallel::resolve_threads(0) == 1);
    unsetenv("ROUGHSKEW_THREADS");
    CHECK(parallel::resolve_threads(0) == 1);
}

TEST_CASE("skew command writes its documented outputs", "[harness]") {
    const auto dir = fresh_dir("sweep");
    KvConfig kv;
    kv.set("model.name", "lsv-linear");
    kv.set("theta.min", "1e-3");
    kv.set("theta.max", "1e-1");
    kv.set("theta.count", "4");
    kv.set("mc.n_paths", "2000");
    kv.set("mc.steps_per_theta", "10");
    kv.set("output.dir", dir.string());

    const RunReport rep = cmd_skew_term_structure(kv);
    CHECK(rep.command == "skew-term-structure");
    REQUIRE_FALSE(rep.checks.empty());

    std::ifstream csv(dir / "skew.csv");
    REQUIRE(csv);
    std::string header;
    std::getline(csv, header);
    CHECK(header == "theta,z,zeta,skew,skew_se");

    const std::string report = slurp(dir / "report.txt");
    CHECK(report.find("command = skew-term-structure") != std::string::npos);
    CHECK(report.find("overall = ") != std::string::npos);
    CHECK(slurp(dir / "config-echo.txt").find("model.name = lsv-linear") != std::string::npos);

    const std::string first_csv = slurp(dir / "skew.csv");
    const std::string first_report = slurp(dir / "report.txt");
    cmd_skew_term_structure(kv);
    CHECK(slurp(dir / "skew.csv") == first_csv);
    CHECK(slurp(dir / "report.txt") == first_report);
}

TEST_CASE("price command reports the strike in rescaled units", "[harness]") {
    const auto dir = fresh_dir("price");
    KvConfig kv;
    kv.set("model.name", "bs");
    kv.set("strikes.z", "0.3");
    kv.set("mc.n_paths", "1000");
    kv.set("price.theta", "0.04");
    kv.set("output.dir", dir.string());

    const RunReport rep = cmd_price(kv);
    CHECK(rep.all_passed());

    std::ifstream csv(dir / "quotes.csv");
    REQUIRE(csv);
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(header == "theta,z,price,se,iv,iv_se");
    CHECK(row.substr(0, row.find(',')) == "0.040000000000000001");
    const auto second = row.find(',') + 1;
    CHECK(row.substr(second, row.find(',', second) - second) ==
          "0.29999999999999999");
}

TEST_CASE("fbm command writes one csv per path", "[harness]") {
    const auto dir = fresh_dir("fbm");
    KvConfig kv;
    kv.set("fbm.n_paths", "2");
    kv.set("fbm.n_steps", "16");
    kv.set("quadrature.n_nodes", "40");
    kv.set("output.dir", dir.string());

    const RunReport rep = cmd_simulate_fbm(kv);
    CHECK(rep.all_passed());
    for (const char* leaf : {"path-0.csv", "path-1.csv", "path-0-bank.txt"}) {
        CHECK(std::filesystem::exists(dir / leaf));
    }
    std::ifstream csv(dir / "path-0.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "t,S,Y,WH");
    std::size_t rows = 0;
    for (std::string line; std::getline(csv, line);) ++rows;
    CHECK(rows == 17);
}

TEST_CASE("dynamic consistency refuses models without state", "[harness]") {
    KvConfig kv;
    kv.set("model.name", "lsv-linear");
    kv.set("output.dir", fresh_dir("dyn-lsv").string());
    CHECK_THROWS_AS(cmd_dynamic_consistency(kv), std::invalid_argument);
}

TEST_CASE("quick validation passes unmutated and catches the sign mutation", "[harness]") {
    KvConfig kv;
    kv.set("output.dir", fresh_dir("validate").string());
    const RunReport clean = cmd_validate(kv, ValidateLevel::quick, false);
    CHECK(clean.all_passed());

    KvConfig kv2;
    kv2.set("output.dir", fresh_dir("validate-mutated").string());
    const RunReport mutated =
        cmd_validate(kv2, ValidateLevel::quick, true);
    CHECK_FALSE(mutated.all_passed());
    bool flipped = false;
    for (const auto& c : mutated.checks)
        if (c.name == "regular_expansion_consistency") flipped = !c.passed;
    CHECK(flipped);
}
