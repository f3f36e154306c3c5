#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
};

const fs::path& work_dir() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / "qcqp_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Runs the CLI inside the work directory with the shared table cache.
Run run(const std::string& args) {
    const auto log = work_dir() / "last.log";
    const std::string cmd = "cd '" + work_dir().string() + "' && '" QCQP_CLI_PATH "' --cache-dir '" QCQP_TEST_CACHE_DIR
                            "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

nlohmann::json read_json(const std::string& name) { return nlohmann::json::parse(slurp(work_dir() / name)); }

}  // namespace

TEST_CASE("filter-table reports the cache") {
    const auto r = run("filter-table");
    CHECK(r.code == 0);
    CHECK(r.out.find("cache hit") != std::string::npos);
    CHECK(r.out.find("omega(0) = 1.0000000") != std::string::npos);
    CHECK(run("filter-table --step -1").code == 2);
    CHECK(run("--help").code == 0);
    CHECK(run("no-such-command").code == 2);
}

TEST_CASE("pqc grid and Wigner control") {
    const auto r = run("pqc --grid 0:1.5:0.1 --out g");
    REQUIRE(r.code == 0);
    const auto neg = read_json("g.negativity.json");
    CHECK(neg.at("min_value").get<double>() < -1e-3);
    CHECK(fs::exists(work_dir() / "g.csv"));
    const auto man = read_json("g.manifest.json");
    CHECK(man.at("command") == "pqc");
    CHECK(man.contains("filter"));

    REQUIRE(run("pqc --grid 0:1.5:0.1 --wigner --render --out wg").code == 0);
    CHECK(read_json("wg.negativity.json").at("min_value").get<double>() >= -1e-9);
    CHECK(slurp(work_dir() / "wg.ppm").rfind("P6", 0) == 0);

    CHECK(run("pqc --p 1.2").code == 2);
    CHECK(run("pqc --grid 0:1").code == 2);
}

TEST_CASE("simulate and estimate") {
    REQUIRE(run("simulate --n 20000 --seed 4 --out a.csv").code == 0);
    REQUIRE(run("simulate --n 20000 --seed 4 --out b.csv").code == 0);
    CHECK(slurp(work_dir() / "a.csv") == slurp(work_dir() / "b.csv"));
    CHECK(read_json("a.csv.manifest.json").at("outputs")[0].contains("checksum"));
    CHECK(run("simulate --n 0").code == 2);

    const auto e = run("estimate --data a.csv --points '0,0.7;0.5,0.5' --out est");
    REQUIRE(e.code == 0);
    const auto s = read_json("est.summary.json");
    CHECK(s.at("N") == 20000);
    CHECK(s.at("points") == 2);
    CHECK(s.at("delta").get<double>() > 0.0);
    CHECK(run("estimate --data a.csv --modes 1 --points '0.5'").code == 3);
    CHECK(run("estimate --data missing.csv --points '0,0'").code == 3);

    REQUIRE(run("simulate --state vacuum --modes 1 --n 5000 --out v.csv").code == 0);
    REQUIRE(run("estimate --data v.csv --grid 0:1:0.5 --out vest").code == 0);
    CHECK(fs::exists(work_dir() / "vest.csv"));
}

TEST_CASE("bochner search") {
    const auto r = run("bochner --budget 10000 --seed 1 --out b.json");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("violation found") != std::string::npos);
    CHECK(read_json("b.json").at("violation_found") == true);
    CHECK(fs::exists(work_dir() / "b.json.manifest.json"));

    const auto t = run("bochner --thermal --budget 5000 --out t.json");
    REQUIRE(t.code == 0);
    CHECK(t.out.find("none found") != std::string::npos);
    CHECK(run("bochner --budget 0").code == 2);
}

TEST_CASE("config file with flag precedence") {
    {
        std::ofstream cfg(work_dir() / "cfg.json");
        cfg << R"({"simulate": {"n": 300, "seed": 9, "out": "cfg.csv"}})";
    }
    REQUIRE(run("--config cfg.json simulate").code == 0);
    CHECK(read_json("cfg.csv.manifest.json").at("parameters").at("n") == 300);
    REQUIRE(run("--config cfg.json simulate --n 400").code == 0);
    CHECK(read_json("cfg.csv.manifest.json").at("parameters").at("n") == 400);
    CHECK(run("--config nope.json simulate").code != 0);
}
