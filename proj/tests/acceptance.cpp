// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qcqp/bochner.hpp"
#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"
#include "qcqp/quasiprob.hpp"
#include "qcqp/sampling.hpp"
#include "qcqp/states.hpp"
#include "support.hpp"

using namespace qcqp;
using qcqp::test::shared_pattern;
using qcqp::test::shared_table;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

char buf[512];

template <class... A>
std::string fmt(const char* f, A... a) {
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
}

double min_of(const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

QuadratureDataset head(const QuadratureDataset& d, std::size_t n) {
    QuadratureDataset h;
    h.mode_count = d.mode_count;
    const auto m = static_cast<long>(d.mode_count);
    h.x.assign(d.x.begin(), d.x.begin() + static_cast<long>(n) * m);
    h.phi.assign(d.phi.begin(), d.phi.begin() + static_cast<long>(n) * m);
    return h;
}

constexpr double kTol = 1e-10;
const std::vector<double> kAxis = uniform_axis(0.0, 3.0, 0.05);

CharacteristicFunction prtmsv() { return char_fn_prtmsv(PhaseRandomizedTMSV::make(0.8)); }

const QuadratureDataset& sampled() {
    static const QuadratureDataset d = sample_quadratures(PhaseRandomizedTMSV::make(0.8), 1000000, 42);
    return d;
}

Outcome c1() {
    const double direct = eval_filter_radial(0.0, 1e-12);
    const double table = shared_table().omega(0.0);
    const double err = std::max(std::abs(direct - 1.0), std::abs(table - 1.0));
    return {err <= 1e-8, fmt("|Omega(0) - 1| = %.2e", err)};
}

Outcome c2() {
    const auto& t = shared_table();
    double lo = 1.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < t.values().size(); ++i) {
        if (static_cast<double>(i) * t.step() > 8.0 + 1e-12) break;
        lo = std::min(lo, t.values()[i]);
        ++count;
    }
    return {lo > 0.0, fmt("min Omega over %zu nodes with r <= 8: %.3e", count, lo)};
}

Outcome c3() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> r(0.0, 3.0), ph(0.0, 2 * kPi);
    double worst = 0.0;
    bool ok = true;
    for (double p : {0.5, 0.8}) {
        const auto cf = char_fn_prtmsv(PhaseRandomizedTMSV::make(p));
        for (int i = 0; i < 1000; ++i) {
            const cplx a = std::polar(r(rng), ph(rng)), b = std::polar(r(rng), ph(rng));
            const double ratio = std::abs(cf({a, b})) / std::exp(0.5 * (std::norm(a) + std::norm(b)));
            worst = std::max(worst, ratio);
            ok = ok && ratio <= 1.0;
        }
    }
    return {ok, fmt("max |Phi| / bound = %.3e", worst)};
}

Outcome c4() {
    const auto g = wigner_grid(prtmsv(), {kAxis, kAxis}, kTol);
    const double m = min_of(g.values);
    return {m >= -1e-9, fmt("Wigner min %.3e over %zu points", m, g.size())};
}

Outcome c5() {
    const auto g = pqc_grid(prtmsv(), shared_table(), 1.5, {kAxis, kAxis}, kTol);
    const auto rep = negativity_scan(g);
    return {rep.min_value < -1e3 * kTol && g.achieved_error <= kTol,
            fmt("P_QC min %.6f at (%.2f, %.2f), achieved error %.1e", rep.min_value, rep.argmin[0], rep.argmin[1],
                g.achieved_error)};
}

Outcome c6() {
    const auto coarse = uniform_axis(0.0, 3.0, 0.1);
    const std::vector<double> c_axis = uniform_axis(-1.0, 2.0, 0.25);
    const std::vector<double> c_small = {-0.5, 0.0, 0.5, 1.0};
    double worst = 1.0;
    for (double w : {0.5, 1.0, 1.5, 2.0, 4.0}) {
        worst = std::min(worst, min_of(pqc_grid(thermal_cf(4.0, 1), shared_table(), w, {coarse}, kTol).values));
        worst = std::min(worst,
                         min_of(pqc_grid(thermal_cf(4.0, 2), shared_table(), w, {coarse, coarse}, kTol).values));
        worst = std::min(worst, min_of(pqc_grid_cartesian(coherent_cf({cplx(0.6, -0.4)}), shared_table(), w,
                                                          {c_axis, c_axis}, 1e-10)
                                           .values));
        worst = std::min(worst, min_of(pqc_grid_cartesian(coherent_cf({cplx(0.6, -0.4), cplx(-0.3, 0.5)}),
                                                          shared_table(), w, {c_small, c_small, c_small, c_small},
                                                          1e-10)
                                           .values));
    }
    return {worst >= -1e-9, fmt("min over thermal and coherent grids, all w: %.3e", worst)};
}

Outcome c7() {
    const auto cf = prtmsv();
    const auto thermal = pqc_grid(thermal_cf(4.0, 1), shared_table(), 1.5, {kAxis}, kTol).values;
    const auto marg = marginal_pqc(cf, shared_table(), 1.5, 0, kAxis, kTol);
    const auto wide = uniform_axis(0.0, 6.0, 0.05);
    const auto g = pqc_grid(cf, shared_table(), 1.5, {wide, kAxis}, kTol);
    const auto integ = integrate_out_mode(g, 0);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < kAxis.size(); ++i) {
        e1 = std::max(e1, std::abs(marg[i] - thermal[i]));
        e2 = std::max(e2, std::abs(integ[i] - thermal[i]));
    }
    const double lo = min_of(marg);
    return {e1 <= 1e-6 && e2 <= 5e-3 && lo >= -1e-9,
            fmt("reduced route %.2e, integrated route %.2e, min %.3e", e1, e2, lo)};
}

Outcome c8() {
    const auto& data = sampled();
    const auto a_axis = uniform_axis(0.0, 0.9, 0.1);
    const std::vector<double> b_axis = {0.0, 0.5, 1.0, 1.5, 2.0};
    const auto est = estimate_grid(data, shared_pattern(), {a_axis, b_axis});
    const auto quad = pqc_grid(prtmsv(), shared_table(), 1.5, {a_axis, b_axis}, kTol);
    std::size_t ok = 0;
    bool exact = true;
    for (std::size_t i = 0; i < quad.size(); ++i) {
        const auto& e = est.estimates[i];
        exact = exact && e.delta == e.sigma / std::sqrt(static_cast<double>(e.n));
        if (std::abs(e.value - quad.values[i]) <= 4.0 * e.delta) ++ok;
    }
    const double frac = static_cast<double>(ok) / static_cast<double>(quad.size());
    return {exact && frac >= 0.99,
            fmt("%zu/%zu points within 4 delta, delta = sigma/sqrt(N) %s", ok, quad.size(), exact ? "exact" : "violated")};
}

Outcome c9() {
    const auto g = pqc_grid(prtmsv(), shared_table(), 1.5, {kAxis, kAxis}, kTol);
    const auto rep = negativity_scan(g);
    const cplx al[2] = {rep.argmin[0], rep.argmin[1]};
    const auto e = estimate_pqc(sampled(), shared_pattern(), al);
    const double c = e.confidence ? *e.confidence : 0.0;
    return {e.value < 0.0 && c >= 3.0,
            fmt("baseline N = %zu, seed 42: estimate %.5f +- %.5f at (%.2f, %.2f), C = %.3f", e.n, e.value, e.delta,
                rep.argmin[0], rep.argmin[1], c)};
}

Outcome c10() {
    const auto st = PhaseRandomizedTMSV::make(0.8);
    const FockQuadratureSampler sampler(st.n_max());
    const cplx al[2] = {0.0, 0.7};
    std::vector<double> small, large;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto d = sample_quadratures(st, sampler, 100000, 500 + seed);
        small.push_back(estimate_pqc(head(d, 25000), shared_pattern(), al).delta);
        large.push_back(estimate_pqc(d, shared_pattern(), al).delta);
    }
    const double ratio = median(large) / median(small);
    return {std::abs(ratio - 0.5) <= 0.05,
            fmt("median delta %.5f at N = 25000, %.5f at N = 100000, ratio %.4f", median(small), median(large), ratio)};
}

Outcome c11() {
    SearchOptions opt;
    opt.budget = 10000;
    opt.seed = 1;
    const auto q = search_violation(prtmsv(), shared_table(), 1.5, opt);
    const auto t = search_violation(thermal_cf(4.0, 2), shared_table(), 1.5, opt);
    return {q.found && !t.found,
            fmt("PR-TMSV: %s (normalized %.3e, m = %zu); thermal: %s (worst %.3e)", q.found ? "violation" : "none",
                q.normalized, q.betas.size(), t.found ? "violation" : "none", t.worst_examined)};
}

Outcome c12() {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<int> size(1, 12), rank(1, 12);
    auto random_psd = [&](int n) {
        const int r = std::min(n, rank(rng));
        Eigen::MatrixXcd a(n, r);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < r; ++j) a(i, j) = cplx(g(rng), g(rng));
        return Eigen::MatrixXcd(a * a.adjoint());
    };
    int good = 0;
    for (int t = 0; t < 200; ++t) {
        const int n = size(rng);
        const auto c = schur_closure_check(random_psd(n), random_psd(n), 1e-8);
        if (c.applicable && c.psd) ++good;
    }
    return {good == 200, fmt("%d/200 Schur products PSD", good)};
}

Outcome c13() {
    const auto cf = transform_modes(prtmsv(), ModeTransform::beam_splitter_50_50());
    const auto ax = uniform_axis(-1.0, 1.0, 0.25);
    const auto g = pqc_grid_cartesian(cf, shared_table(), 1.5, {ax, ax, ax, ax}, 1e-8);
    const double m = min_of(g.values);
    return {m < -1e3 * 1e-8, fmt("transformed grid min %.5f over %zu points", m, g.size())};
}

Outcome c14() {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> r(0.0, 2.0);
    const double mu[2] = {0.0, 0.0}, sig[4] = {1.0, 0.0, 0.0, 1.0};
    const auto data = sample_gaussian_quadratures(mu, sig, 1000000, 14);
    double q_err = 0.0;
    int in = 0;
    for (int i = 0; i < 20; ++i) {
        const double radii[2] = {r(rng), r(rng)};
        const double k = kernel_value(shared_table(), radii[0], 1.5) * kernel_value(shared_table(), radii[1], 1.5);
        q_err = std::max(q_err, std::abs(pqc_point_radial(vacuum_cf(2), shared_table(), 1.5, radii, 1e-12) - k));
        const cplx al[2] = {radii[0], radii[1]};
        const auto e = estimate_pqc(data, shared_pattern(), al);
        if (std::abs(e.value - k) <= 4.0 * e.delta) ++in;
    }
    return {q_err <= 1e-8 && in == 20, fmt("quadrature error %.2e, sampled %d/20 within 4 delta", q_err, in)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"filter normalization", c1},
        {"filter positivity", c2},
        {"characteristic function bound", c3},
        {"Wigner nonnegativity", c4},
        {"P_QC negativity", c5},
        {"classical controls", c6},
        {"reduced-state classicality", c7},
        {"sampling consistency", c8},
        {"negativity significance", c9},
        {"1/sqrt(N) scaling", c10},
        {"positivity-matrix search", c11},
        {"Schur closure", c12},
        {"mode-transform invariance", c13},
        {"vacuum identity", c14},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %2zu %-32s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
