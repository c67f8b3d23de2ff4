#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "expavg_cli_test";
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

fs::path put(const std::string& name, const std::string& content) {
    const auto p = workdir() / name;
    std::ofstream(p) << content;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& args) {
    const std::string cmd = std::string(EXPAVG_CLI) + " " + args + " > " +
                            (workdir() / "stdout.txt").string() + " 2> " +
                            (workdir() / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* kConfig = R"({"model": "cpcox_cs", "n": 80, "bootstraps": 8,
    "grid": {"G": 4}, "c_list": [1, "inf"], "seed": 11})";

}  // namespace

TEST_CASE("missing or unknown arguments are configuration errors") {
    CHECK(run("") == 2);
    CHECK(run("simulate") == 2);
    CHECK(run("frobnicate --config x.json") == 2);
}

TEST_CASE("invalid configuration exits with 2 and names the field") {
    const auto cfg = put("bad.json", R"({"model": "cpcox_cs", "reps": 0})");
    CHECK(run("table1 --config " + cfg.string()) == 2);
    CHECK(slurp(workdir() / "stderr.txt").find("reps") != std::string::npos);
}

TEST_CASE("missing data exits with 3") {
    const auto cfg = put("good.json", kConfig);
    CHECK(run("test --config " + cfg.string() + " --data " + (workdir() / "nope.csv").string()) == 3);
    const auto bad = put("bad.csv", "v,delta,z\n1,2,0.5\n");
    CHECK(run("test --config " + cfg.string() + " --data " + bad.string()) == 3);
}

TEST_CASE("simulate then test, reproducibly") {
    const auto cfg = put("good.json", kConfig);
    const auto data = workdir() / "data.csv";
    REQUIRE(run("simulate --config " + cfg.string() + " --out " + data.string()) == 0);
    CHECK(slurp(data).rfind("v,delta,z\n", 0) == 0);

    const auto a = workdir() / "a.json", b = workdir() / "b.json";
    REQUIRE(run("test --config " + cfg.string() + " --data " + data.string() + " --out " + a.string()) == 0);
    REQUIRE(run("test --config " + cfg.string() + " --data " + data.string() + " --out " + b.string() +
                " --workers 2") == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a).find("\"statistics\"") != std::string::npos);
}

TEST_CASE("limits writes a CSV") {
    const auto cfg = put("limits.json", R"({"grid": {"G": 5}, "c_list": [1],
        "alpha_levels": [0.05], "draws": 2000, "seed": 2})");
    REQUIRE(run("limits --config " + cfg.string()) == 0);
    const auto out = slurp(workdir() / "stdout.txt");
    CHECK(out.rfind("statistic,c,alpha,critical_value,draws,seed\n", 0) == 0);
    CHECK(out.find("echi,1,0.05,") != std::string::npos);
    CHECK(out.find("supchi,,0.05,") != std::string::npos);
}
