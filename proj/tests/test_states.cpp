#include "doctest.h"

#include <cmath>
#include <random>

#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"
#include "qcqp/states.hpp"
#include "support.hpp"

using namespace qcqp;

namespace {

// Truncated double Laguerre series with the plain three-term recurrence.
double phi_series_oracle(double p, double xa, double xb, int n_max) {
    double la0 = 1.0, la1 = 1.0 - xa, lb0 = 1.0, lb1 = 1.0 - xb;
    double s = la0 * lb0 + p * la1 * lb1, pn = p;
    for (int n = 1; n < n_max; ++n) {
        const double la2 = ((2 * n + 1 - xa) * la1 - n * la0) / (n + 1);
        const double lb2 = ((2 * n + 1 - xb) * lb1 - n * lb0) / (n + 1);
        pn *= p;
        s += pn * la2 * lb2;
        la0 = la1;
        la1 = la2;
        lb0 = lb1;
        lb1 = lb2;
    }
    return (1.0 - p) * s;
}

double trapezoid(double lo, double hi, int n, const std::function<double(double)>& f) {
    const double h = (hi - lo) / n;
    double s = 0.5 * (f(lo) + f(hi));
    for (int i = 1; i < n; ++i) s += f(lo + i * h);
    return s * h;
}

std::vector<CharacteristicFunction> all_models() {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    return {vacuum_cf(1),
            vacuum_cf(2),
            thermal_cf(4.0, 1),
            thermal_cf(0.7, 2),
            coherent_cf({cplx(1.0, -0.5)}),
            coherent_cf({cplx(0.3, 0.2), cplx(-1.0, 0.4)}),
            product_cf({thermal_cf(1.0, 1), coherent_cf({cplx(0.5, 0.5)})}),
            char_fn_prtmsv(PhaseRandomizedTMSV::make(0.5)),
            char_fn_prtmsv(st),
            char_fn_prtmsv_series(st),
            reduced_char_fn(st)};
}

}  // namespace

TEST_CASE("state parameters and Fock weights") {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    CHECK(st.n_max() == 124);
    CHECK(std::pow(st.p(), st.n_max() + 1) <= 1e-12);
    CHECK(fock_weight(st, 0) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(fock_weight(st, 1) == doctest::Approx(0.16).epsilon(1e-15));
    double s = 0.0;
    for (int n = 0; n <= st.n_max(); ++n) s += fock_weight(st, n);
    CHECK(std::abs(s - 1.0) < 1e-11);
    CHECK_THROWS_AS(fock_weight(st, -1), ParameterError);
    CHECK_THROWS_AS(fock_weight(st, st.n_max() + 1), ParameterError);
    CHECK_THROWS_AS(PhaseRandomizedTMSV::make(1.2), ParameterError);
    CHECK_THROWS_AS(PhaseRandomizedTMSV::make(0.0), ParameterError);
    CHECK_THROWS_AS(PhaseRandomizedTMSV::make(0.8, 10), ParameterError);
}

TEST_CASE("two-mode characteristic function regression value") {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    const double oracle = phi_series_oracle(0.8, 1.0, 1.0, 200);
    CHECK(std::abs(oracle - test::kPhiOneOne) < 1e-13);
    CHECK(std::abs(char_fn_prtmsv(st)({1.0, 1.0}).real() - test::kPhiOneOne) < 1e-9);
    CHECK(std::abs(char_fn_prtmsv_series(st)({1.0, 1.0}).real() - test::kPhiOneOne) < 1e-9);
    CHECK(char_fn_prtmsv(st)({0.0, 0.0}).real() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("closed form matches the series on |beta| <= 3") {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    const auto closed = char_fn_prtmsv(st);
    const auto series = char_fn_prtmsv_series(st);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> r(0.0, 3.0), ph(0.0, 2 * kPi);
    for (int i = 0; i < 300; ++i) {
        const cplx a = std::polar(r(rng), ph(rng)), b = std::polar(r(rng), ph(rng));
        const double ref = phi_series_oracle(0.8, std::norm(a), std::norm(b), 200);
        REQUIRE(std::abs(series({a, b}).real() - ref) < 1e-9 * std::max(1.0, std::abs(ref)));
        REQUIRE(std::abs(closed({a, b}).real() - ref) < 1e-9 * std::max(1.0, std::abs(ref)));
    }
}

TEST_CASE("characteristic function invariants on random points") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> r(0.0, 3.0), ph(0.0, 2 * kPi);
    for (const auto& cf : all_models()) {
        CAPTURE(cf.label());
        std::vector<cplx> zero(static_cast<std::size_t>(cf.mode_count()), 0.0);
        CHECK(std::abs(cf(zero) - 1.0) < 1e-12);
        for (int i = 0; i < 1000; ++i) {
            std::vector<cplx> b(static_cast<std::size_t>(cf.mode_count())), nb(b.size());
            double norm2 = 0.0;
            for (std::size_t k = 0; k < b.size(); ++k) {
                b[k] = std::polar(r(rng), ph(rng));
                nb[k] = -b[k];
                norm2 += std::norm(b[k]);
            }
            const cplx v = cf(b), vm = cf(nb);
            REQUIRE(std::abs(vm - std::conj(v)) <= 1e-10 * std::max(1.0, std::abs(v)));
            REQUIRE(std::abs(v) <= std::exp(0.5 * norm2) * (1.0 + 1e-8));
        }
    }
}

TEST_CASE("phase invariance detection") {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    CHECK(verify_phase_invariance(char_fn_prtmsv(st)));
    CHECK(verify_phase_invariance(thermal_cf(2.0, 2)));
    CHECK_FALSE(verify_phase_invariance(coherent_cf({cplx(1.0, 0.0)})));
}

TEST_CASE("reduced state is thermal") {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    const auto red = reduced_char_fn(st);
    const auto two = char_fn_prtmsv(st);
    CHECK(red({0.0}).real() == doctest::Approx(1.0));
    CHECK(std::abs(red({std::polar(1.0, 0.3)}).real() - std::exp(-4.0)) < 1e-14);
    // Series oracle Σ (1-p) pⁿ L_n(|β|²) with the other mode at zero.
    CHECK(std::abs(phi_series_oracle(0.8, 1.0, 0.0, 200) - std::exp(-4.0)) < 1e-10);
    for (double b : {0.2, 0.9, 1.7}) CHECK(std::abs(two({b, 0.0}).real() - red({b}).real()) < 1e-12);
}

TEST_CASE("Laguerre recurrence overflow is reported") {
    CHECK_THROWS_AS(laguerre_sequence(400, 1e6), NumericalError);
    CHECK(laguerre(3, 2.0) == doctest::Approx((-8.0 + 36.0 - 36.0 + 6.0) / 6.0));
}

TEST_CASE("Fock wavefunctions in the unit-vacuum-variance convention") {
    for (int n : {0, 1, 5, 50}) {
        const double lim = 2.0 * std::sqrt(2.0 * n + 1.0) + 8.0;
        const double norm = trapezoid(-lim, lim, 8000, [n](double x) { return std::pow(fock_wavefunction(n, x), 2); });
        CHECK(std::abs(norm - 1.0) < 1e-8);
    }
    const double var = trapezoid(-12, 12, 8000, [](double x) { return x * x * std::pow(fock_wavefunction(0, x), 2); });
    CHECK(std::abs(var - 1.0) < 1e-8);
    for (double b : {0.5, 1.0, 2.0}) {
        const double cf = trapezoid(-12, 12, 8000, [b](double x) { return std::cos(b * x) * std::pow(fock_wavefunction(0, x), 2); });
        CHECK(std::abs(cf - std::exp(-0.5 * b * b)) < 1e-10);
    }
    CHECK(std::abs(fock_wavefunction(1, 0.0)) < 1e-300);
    const auto seq = fock_wavefunction_sequence(30, 1.3);
    CHECK(seq[17] == doctest::Approx(fock_wavefunction(17, 1.3)).epsilon(1e-13));
}

TEST_CASE("joint quadrature density") {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    CHECK(quadrature_pdf(st, 0.4, -2.1) == doctest::Approx(quadrature_pdf(st, -2.1, 0.4)).epsilon(1e-14));
    // Normalization and marginal on a uniform grid.
    const double lim = 24.0, h = 0.08;
    const int n = static_cast<int>(2 * lim / h);
    std::vector<double> xs(n + 1);
    for (int i = 0; i <= n; ++i) xs[i] = -lim + i * h;
    double total = 0.0, min_v = 1.0;
    std::vector<double> marg(n + 1, 0.0);
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
            const double v = quadrature_pdf(st, xs[i], xs[j]);
            min_v = std::min(min_v, v);
            total += v * h * h;
            marg[i] += v * h;
        }
    CHECK(min_v >= 0.0);
    CHECK(std::abs(total - 1.0) < 1e-6);
    for (int i : {n / 2, n / 2 + 20, n / 2 - 57}) CHECK(std::abs(marg[i] - thermal_quadrature_pdf(st, xs[i])) < 1e-8);
}

TEST_CASE("simulated records follow the state statistics") {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    const std::size_t N = 1000000;
    const auto data = sample_quadratures(st, N, 99);
    REQUIRE(data.size() == N);
    data.validate();
    double s1 = 0, s2 = 0, s4 = 0, sab = 0, sa2 = 0, sb2 = 0;
    for (std::size_t j = 0; j < N; ++j) {
        const double a = data.quadrature(j, 0), b = data.quadrature(j, 1);
        s1 += a;
        s2 += a * a;
        s4 += a * a * a * a;
        sab += a * a * b * b;
        sa2 += a * a;
        sb2 += b * b;
    }
    const double n = static_cast<double>(N);
    const double mean = s1 / n, m2 = s2 / n, m4 = s4 / n;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(m2 / n));
    const double var = m2 - mean * mean;
    CHECK(std::abs(var - (1.0 + 2.0 * st.mean_photon_number())) < 4.0 * std::sqrt((m4 - m2 * m2) / n));
    CHECK(sab / n - (sa2 / n) * (sb2 / n) > 0.0);
}

TEST_CASE("simulation is deterministic and worker independent") {
    const auto st = PhaseRandomizedTMSV::make(0.6);
    const FockQuadratureSampler sampler(st.n_max());
    const auto a = sample_quadratures(st, sampler, 150000, 7, PhaseMode::uniform(), 1);
    const auto b = sample_quadratures(st, sampler, 150000, 7, PhaseMode::uniform(), 3);
    const auto c = sample_quadratures(st, sampler, 150000, 8, PhaseMode::uniform(), 1);
    CHECK(a.x == b.x);
    CHECK(a.phi == b.phi);
    CHECK(a.x != c.x);
    const auto d = sample_quadratures(st, sampler, 10, 7, PhaseMode::fixed({0.0, 1.0}));
    CHECK(d.phase(3, 0) == 1.0);
    CHECK(d.phase(4, 1) == 0.0);
    CHECK_THROWS_AS(sample_quadratures(st, 10, 7, PhaseMode::fixed({7.0})), ParameterError);
    CHECK_THROWS_AS(sample_quadratures(st, 0, 7), ParameterError);
}
