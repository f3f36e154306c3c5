#include "doctest.h"

#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "qcqp/bochner.hpp"
#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"
#include "support.hpp"

using namespace qcqp;
using qcqp::test::shared_table;

namespace {

std::vector<BetaVector> random_betas(std::mt19937_64& rng, int m, int modes, double radius) {
    std::uniform_real_distribution<double> u(-radius, radius);
    std::vector<BetaVector> out(static_cast<std::size_t>(m), BetaVector(static_cast<std::size_t>(modes)));
    for (auto& b : out)
        for (auto& z : b) z = cplx(u(rng), u(rng));
    return out;
}

Eigen::MatrixXcd random_psd(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g;
    Eigen::MatrixXcd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = cplx(g(rng), g(rng));
    return a * a.adjoint();
}

CharacteristicFunction prtmsv() { return char_fn_prtmsv(PhaseRandomizedTMSV::make(0.8)); }

}  // namespace

TEST_CASE("single point matrix") {
    const auto m = bochner_matrix(prtmsv(), &shared_table(), 1.5, {{0.0, 0.0}});
    CHECK(m.entries.rows() == 1);
    CHECK(std::abs(m.entries(0, 0) - 1.0) < 1e-12);
}

TEST_CASE("coherent states give PSD matrices") {
    std::mt19937_64 rng(2);
    const auto cf = coherent_cf({cplx(0.8, -0.3)});
    for (int m = 2; m <= 8; ++m) {
        const auto b = random_betas(rng, m, 1, 1.5);
        CHECK(is_psd(bochner_matrix(cf, nullptr, std::nullopt, b).entries));
        CHECK(is_psd(bochner_matrix(cf, &shared_table(), 1.5, b).entries));
    }
}

TEST_CASE("matrix structure") {
    std::mt19937_64 rng(12);
    const auto cf = prtmsv();
    const auto b = random_betas(rng, 6, 2, 1.0);
    const auto m = bochner_matrix(cf, &shared_table(), 1.5, b);
    for (int k = 0; k < 6; ++k)
        for (int l = 0; l < 6; ++l) {
            CHECK(std::abs(m.entries(l, k) - std::conj(m.entries(k, l))) < 1e-12);
            const BetaVector d = {b[k][0] - b[l][0], b[k][1] - b[l][1]};
            const cplx direct =
                cf(d) * filter_value(shared_table(), d[0], 1.5) * filter_value(shared_table(), d[1], 1.5);
            CHECK(std::abs(m.entries(k, l) - direct) < 1e-10);
        }
    CHECK_THROWS_AS(bochner_matrix(cf, &shared_table(), 1.5, {{0.0}}), ParameterError);
    CHECK_THROWS_AS(bochner_matrix(cf, &shared_table(), 0.0, b), ParameterError);
    CHECK_THROWS_AS(bochner_matrix(cf, &shared_table(), 1.5, {}), ParameterError);
}

TEST_CASE("classical references stay PSD") {
    std::mt19937_64 rng(31);
    // Vacuum with well separated points.
    std::vector<BetaVector> grid;
    for (int i = -2; i <= 2; ++i) grid.push_back({cplx(1.2 * i, 0.0), cplx(0.0, 0.9 * i)});
    CHECK(normalized_min_eigenvalue(bochner_matrix(vacuum_cf(2), &shared_table(), 1.5, grid).entries) >= 0.0 - 1e-12);

    const auto th = thermal_cf(4.0, 2);
    for (int t = 0; t < 20; ++t) {
        const auto b = random_betas(rng, 2 + t % 10, 2, 1.5);
        CHECK(normalized_min_eigenvalue(bochner_matrix(th, &shared_table(), 1.5, b).entries) >= -1e-8);
    }
}

TEST_CASE("eigenvalue helpers") {
    Eigen::MatrixXcd m(2, 2);
    m << 1.0, 1.1, 1.1, 1.0;
    CHECK(min_eigenvalue(m) == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(normalized_min_eigenvalue(m) == doctest::Approx(-0.1 / 2.1).epsilon(1e-12));
    CHECK_FALSE(is_psd(m));
    CHECK(normalized_min_eigenvalue(Eigen::MatrixXcd::Zero(3, 3)) == 0.0);
    Eigen::MatrixXcd nh(2, 2);
    nh << 1.0, 0.5, 0.0, 1.0;
    CHECK_THROWS_AS(min_eigenvalue(nh), ParameterError);
}

TEST_CASE("search finds a violation for PR-TMSV at w = 1.5") {
    SearchOptions opt;
    opt.seed = 1;
    opt.budget = 10000;
    const auto r = search_violation(prtmsv(), shared_table(), 1.5, opt);
    REQUIRE(r.found);
    CHECK(r.normalized < -1e-8);
    CHECK(r.worst_examined <= r.normalized);
    CHECK(r.evaluations <= opt.budget);
    // Recomputing the reported sequence reproduces the eigenvalue.
    const auto m = bochner_matrix(prtmsv(), &shared_table(), 1.5, r.betas);
    CHECK(normalized_min_eigenvalue(m.entries) == doctest::Approx(r.normalized).epsilon(1e-9));

    SearchOptions grid = opt;
    grid.strategy = SearchStrategy::GridSeeded;
    CHECK(search_violation(prtmsv(), shared_table(), 1.5, grid).found);
}

TEST_CASE("search finds nothing for a thermal state") {
    SearchOptions opt;
    opt.budget = 10000;
    const auto r = search_violation(thermal_cf(4.0, 2), shared_table(), 1.5, opt);
    CHECK_FALSE(r.found);
    CHECK(r.worst_examined >= -1e-8);
}

TEST_CASE("search options and determinism") {
    SearchOptions opt;
    opt.budget = 0;
    CHECK_THROWS_AS(search_violation(prtmsv(), shared_table(), 1.5, opt), ParameterError);
    opt.budget = 3000;
    opt.seed = 5;
    const auto a = search_violation(prtmsv(), shared_table(), 1.5, opt);
    opt.workers = 3;
    const auto b = search_violation(prtmsv(), shared_table(), 1.5, opt);
    CHECK(a.normalized == b.normalized);
    CHECK(a.worst_examined == b.worst_examined);
    CHECK(a.evaluations == b.evaluations);
}

TEST_CASE("Schur product closure") {
    std::mt19937_64 rng(77);
    for (int t = 0; t < 200; ++t) {
        const int n = 2 + t % 7;
        const auto a = random_psd(rng, n), b = random_psd(rng, n);
        const auto s = schur_closure_check(a, b);
        REQUIRE(s.applicable);
        REQUIRE(s.psd);
    }
    const auto a = random_psd(rng, 4);
    const auto s = schur_closure_check(a, Eigen::MatrixXcd::Ones(4, 4));
    CHECK(s.psd);
    CHECK(s.min_eigenvalue == doctest::Approx(min_eigenvalue(a)).epsilon(1e-10));

    Eigen::MatrixXcd bad(2, 2);
    bad << 1.0, 1.1, 1.1, 1.0;
    const auto na = schur_closure_check(bad, Eigen::MatrixXcd::Identity(2, 2));
    CHECK_FALSE(na.applicable);
    CHECK(na.reason.find("first") != std::string::npos);
    CHECK_THROWS_AS(schur_closure_check(a, Eigen::MatrixXcd::Identity(3, 3)), ParameterError);
}

TEST_CASE("search report") {
    SearchOptions opt;
    opt.budget = 2000;
    const auto r = search_violation(thermal_cf(1.0, 2), shared_table(), 1.5, opt);
    const auto path = std::filesystem::temp_directory_path() / "qcqp_bochner_report.json";
    write_search_report(r, opt, 1.5, "thermal", path);
    std::ifstream in(path);
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("state") == "thermal");
    CHECK(j.at("w") == 1.5);
    CHECK(j.at("strategy") == "random-restart");
    CHECK(j.at("budget") == 2000);
    CHECK(j.at("evaluations") == r.evaluations);
    CHECK(j.at("violation_found") == r.found);
    CHECK(j.at("result") == (r.found ? "violation found" : "none found"));
    CHECK(j.at("betas").is_array());
    CHECK(j.contains("worst_examined"));
}
