#include "qcqp/bochner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"

#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"

namespace qcqp {

namespace {

constexpr int kMaxSize = 64;
constexpr long kTrialBudget = 1000;
constexpr int kMaxSearchSize = 12;

void check_hermitian(const Eigen::MatrixXcd& m) {
    if (m.rows() != m.cols()) throw ParameterError("matrix must be square");
    if (m.rows() > kMaxSize) throw ParameterError("matrix size is capped at 64");
    if (m.size() == 0) throw ParameterError("matrix is empty");
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ParameterError("matrix is not Hermitian within tolerance");
}

Eigen::VectorXd eigenvalues(const Eigen::MatrixXcd& m) {
    check_hermitian(m);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("Hermitian eigensolver failed");
    return es.eigenvalues();
}

}  // namespace

BochnerMatrix bochner_matrix(const CharacteristicFunction& cf, const FilterTable* table, std::optional<double> w,
                             const std::vector<BetaVector>& betas, OutOfRange out_of_range) {
    if (betas.empty()) throw ParameterError("need at least one beta vector");
    if (static_cast<int>(betas.size()) > kMaxSize) throw ParameterError("at most 64 beta vectors");
    if (w && !table) throw ParameterError("a filter table is required when w is given");
    if (w && !(*w > 0.0)) throw ParameterError("width parameter w must be > 0");
    const auto n = static_cast<std::size_t>(cf.mode_count());
    for (const auto& b : betas)
        if (b.size() != n) throw ParameterError("beta vector length does not match the mode count");

    const auto m = static_cast<Eigen::Index>(betas.size());
    BochnerMatrix out;
    out.betas = betas;
    out.w = w;
    out.entries.resize(m, m);
    BetaVector diff(n);
    for (Eigen::Index k = 0; k < m; ++k) {
        for (Eigen::Index kp = 0; kp < m; ++kp) {
            for (std::size_t i = 0; i < n; ++i)
                diff[i] = betas[static_cast<std::size_t>(k)][i] - betas[static_cast<std::size_t>(kp)][i];
            cplx v = cf(diff);
            if (w)
                for (std::size_t i = 0; i < n; ++i) v *= filter_value(*table, diff[i], *w, out_of_range);
            out.entries(k, kp) = v;
        }
    }
    const double scale = std::max(1.0, out.entries.cwiseAbs().maxCoeff());
    if ((out.entries - out.entries.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw NumericalError("positivity matrix is not Hermitian within 1e-10");
    for (Eigen::Index k = 0; k < m; ++k)
        if (std::abs(out.entries(k, k) - 1.0) > 1e-10) throw NumericalError("positivity matrix diagonal is not 1");
    return out;
}

double min_eigenvalue(const Eigen::MatrixXcd& m) { return eigenvalues(m).minCoeff(); }

double normalized_min_eigenvalue(const Eigen::MatrixXcd& m) {
    const auto ev = eigenvalues(m);
    const double top = ev.cwiseAbs().maxCoeff();
    return top > 0.0 ? ev.minCoeff() / top : 0.0;
}

bool is_psd(const Eigen::MatrixXcd& m, double rel_tol) {
    const auto ev = eigenvalues(m);
    return ev.minCoeff() >= -rel_tol * ev.cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------

namespace {

// Smallest eigenvalue of M relative to a Gaussian reference Gram matrix R on
// the same points. R is positive definite for distinct points, so the sign
// matches that of λ_min(M), but the value does not shrink to zero when
// points merge, which keeps the descent away from collapsed sequences.
double whitened_min_eigenvalue(const Eigen::MatrixXcd& m, const std::vector<BetaVector>& betas, double width) {
    const auto n = static_cast<Eigen::Index>(betas.size());
    Eigen::MatrixXcd r(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index l = 0; l < n; ++l) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < betas[k].size(); ++i) d2 += std::norm(betas[k][i] - betas[l][i]);
            r(k, l) = std::exp(-d2 / (2.0 * width * width));
        }
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, r, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const double v = es.eigenvalues().minCoeff();
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

SearchResult search_violation(const CharacteristicFunction& cf, const FilterTable& table, double w,
                              const SearchOptions& opt) {
    if (opt.budget < 1) throw ParameterError("search budget must be >= 1");
    if (!(w > 0.0)) throw ParameterError("width parameter w must be > 0");
    const int modes = cf.mode_count();
    const long trials = std::max(1L, opt.budget / kTrialBudget);
    static constexpr double kScales[3] = {0.5, 1.0, 2.0};
    constexpr int kMinSize = 2, kSizeCount = kMaxSearchSize - kMinSize + 1;

    struct Trial {
        std::vector<BetaVector> best;
        double best_value = std::numeric_limits<double>::infinity();
        double worst = std::numeric_limits<double>::infinity();
        long evals = 0;
    };
    std::vector<Trial> results(static_cast<std::size_t>(trials));

    parallel_for(static_cast<std::size_t>(trials), opt.workers, [&](std::size_t t) {
        const long budget = t + 1 == static_cast<std::size_t>(trials) ? opt.budget - kTrialBudget * (trials - 1)
                                                                       : kTrialBudget;
        std::mt19937_64 rng(mix_seed(opt.seed, t));
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        std::uniform_int_distribution<int> lattice(-1, 1);
        const int m = kMaxSearchSize - static_cast<int>(t % kSizeCount);
        const double scale = kScales[(t / kSizeCount) % 3];
        Trial& tr = results[t];

        auto evaluate = [&](const std::vector<BetaVector>& b) {
            ++tr.evals;
            const auto mat = bochner_matrix(cf, &table, w, b, OutOfRange::Truncate);
            const double plain = normalized_min_eigenvalue(mat.entries);
            tr.worst = std::min(tr.worst, plain);
            if (plain < tr.best_value) {
                tr.best_value = plain;
                tr.best = b;
            }
            return whitened_min_eigenvalue(mat.entries, b, 0.5 * scale);
        };
        auto start = [&]() {
            std::vector<BetaVector> b(static_cast<std::size_t>(m), BetaVector(static_cast<std::size_t>(modes)));
            for (int k = 0; k < m; ++k) {
                for (int i = 0; i < modes; ++i) {
                    if (opt.strategy == SearchStrategy::GridSeeded) {
                        // lattice site with spacing scale/2, jittered by up to scale/20
                        auto site = [&] { return 0.5 * scale * static_cast<double>(lattice(rng)) + 0.05 * scale * unif(rng); };
                        const double re = site();
                        b[k][i] = cplx(re, site());
                    } else {
                        b[k][i] = cplx(scale * gauss(rng), scale * gauss(rng)) / std::sqrt(2.0);
                    }
                }
            }
            return b;
        };

        while (tr.evals < budget) {
            auto cur = start();
            double val = evaluate(cur);
            double step = 0.25 * scale;
            while (tr.evals < budget && step > 1e-3 * scale) {
                bool improved = false;
                for (int k = 0; k < m && tr.evals < budget; ++k) {
                    for (int i = 0; i < modes && tr.evals < budget; ++i) {
                        for (int part = 0; part < 2 && tr.evals < budget; ++part) {
                            for (double sgn : {1.0, -1.0}) {
                                if (tr.evals >= budget) break;
                                auto trial = cur;
                                trial[k][i] += part == 0 ? cplx(sgn * step, 0.0) : cplx(0.0, sgn * step);
                                const double v = evaluate(trial);
                                if (v < val) {
                                    val = v;
                                    cur = std::move(trial);
                                    improved = true;
                                    break;
                                }
                            }
                        }
                    }
                }
                if (!improved) step *= 0.5;
            }
        }
    });

    SearchResult r;
    r.worst_examined = std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tr : results) {
        r.evaluations += tr.evals;
        r.worst_examined = std::min(r.worst_examined, tr.worst);
        if (tr.best_value < best && !tr.best.empty()) {
            best = tr.best_value;
            r.betas = tr.best;
        }
    }
    r.normalized = best;
    r.min_eigenvalue = min_eigenvalue(bochner_matrix(cf, &table, w, r.betas, OutOfRange::Truncate).entries);
    r.found = r.normalized < -opt.rel_tol;
    return r;
}

SchurCheck schur_closure_check(const Eigen::MatrixXcd& m1, const Eigen::MatrixXcd& m2, double rel_tol) {
    if (m1.rows() != m2.rows() || m1.cols() != m2.cols()) throw ParameterError("Schur product needs equal dimensions");
    SchurCheck c;
    if (!is_psd(m1, rel_tol)) {
        c.reason = "first matrix is not PSD";
        return c;
    }
    if (!is_psd(m2, rel_tol)) {
        c.reason = "second matrix is not PSD";
        return c;
    }
    c.applicable = true;
    const Eigen::MatrixXcd prod = m1.cwiseProduct(m2);
    c.min_eigenvalue = min_eigenvalue(prod);
    c.psd = is_psd(prod, rel_tol);
    return c;
}

void write_search_report(const SearchResult& r, const SearchOptions& opt, double w, const std::string& state_label,
                         const std::filesystem::path& path) {
    nlohmann::json j;
    j["state"] = state_label;
    j["w"] = w;
    j["strategy"] = opt.strategy == SearchStrategy::RandomRestart ? "random-restart" : "grid-seeded";
    j["budget"] = opt.budget;
    j["seed"] = opt.seed;
    j["evaluations"] = r.evaluations;
    j["violation_found"] = r.found;
    j["result"] = r.found ? "violation found" : "none found";
    j["min_eigenvalue"] = r.min_eigenvalue;
    j["normalized_violation"] = r.normalized;
    j["worst_examined"] = r.worst_examined;
    nlohmann::json betas = nlohmann::json::array();
    for (const auto& b : r.betas) {
        nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
        for (const auto& z : b) {
            re.push_back(z.real());
            im.push_back(z.imag());
        }
        betas.push_back({{"re", re}, {"im", im}});
    }
    j["betas"] = betas;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace qcqp
