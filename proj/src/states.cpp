#include "qcqp/states.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"

namespace qcqp {

namespace {

constexpr double kTailBound = 1e-12;
constexpr double kRescale = 1e200;
const double kLogRescale = std::log(kRescale);
constexpr std::size_t kChunkRecords = 1 << 16;

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double checked_exp(double exponent, const char* who) {
    if (exponent > 709.0) {
        std::ostringstream msg;
        msg << who << ": characteristic function overflows (exponent " << exponent
            << "); reduce the |beta| range";
        throw NumericalError(msg.str());
    }
    return std::exp(exponent);
}

}  // namespace

// ---------------------------------------------------------------------------

PhaseRandomizedTMSV PhaseRandomizedTMSV::make(double p, std::optional<int> n_max) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("p must lie in (0, 1)");
    const int needed = static_cast<int>(std::ceil(std::log(kTailBound) / std::log(p)));
    const int n = n_max.value_or(needed);
    if (n < 0) throw ParameterError("n_max must be non-negative");
    if (std::pow(p, n + 1) > kTailBound) {
        std::ostringstream msg;
        msg << "n_max = " << n << " violates the truncation bound p^(n_max+1) <= 1e-12 (need >= "
            << needed << ")";
        throw ParameterError(msg.str());
    }
    return PhaseRandomizedTMSV(p, n);
}

double fock_weight(const PhaseRandomizedTMSV& state, int n) {
    if (n < 0 || n > state.n_max()) throw ParameterError("Fock index out of range");
    return (1.0 - state.p()) * std::pow(state.p(), n);
}

// ---------------------------------------------------------------------------

CharacteristicFunction::CharacteristicFunction(int mode_count, Evaluator eval, std::string label,
                                               RadialEvaluator radial,
                                               std::vector<CharacteristicFunction> factors)
    : mode_count_(mode_count),
      eval_(std::move(eval)),
      label_(std::move(label)),
      radial_(std::move(radial)),
      factors_(std::move(factors)) {
    if (mode_count_ < 1) throw ParameterError("characteristic function needs at least one mode");
    if (!eval_) throw ParameterError("characteristic function needs an evaluator");
}

cplx CharacteristicFunction::operator()(std::span<const cplx> beta) const {
    if (static_cast<int>(beta.size()) != mode_count_) throw ParameterError("mode count mismatch");
    return eval_(beta);
}

double CharacteristicFunction::radial(std::span<const double> moduli, double log_weight) const {
    if (static_cast<int>(moduli.size()) != mode_count_) throw ParameterError("mode count mismatch");
    if (radial_) return radial_(moduli, log_weight);
    std::vector<cplx> beta(moduli.begin(), moduli.end());
    return eval_(beta).real() * std::exp(log_weight);
}

CharacteristicFunction vacuum_cf(int mode_count) {
    std::vector<CharacteristicFunction> factors;
    if (mode_count > 1)
        for (int k = 0; k < mode_count; ++k) factors.push_back(vacuum_cf(1));
    return CharacteristicFunction(
        mode_count, [](std::span<const cplx>) { return cplx(1.0, 0.0); }, "vacuum",
        [](std::span<const double>, double lw) { return std::exp(lw); }, std::move(factors));
}

CharacteristicFunction thermal_cf(double nbar, int mode_count) {
    if (!(nbar >= 0.0)) throw ParameterError("mean photon number must be >= 0");
    std::vector<CharacteristicFunction> factors;
    if (mode_count > 1)
        for (int k = 0; k < mode_count; ++k) factors.push_back(thermal_cf(nbar, 1));
    std::ostringstream label;
    label << "thermal(nbar=" << nbar << ")";
    return CharacteristicFunction(
        mode_count,
        [nbar](std::span<const cplx> beta) {
            double s = 0.0;
            for (const auto& b : beta) s += std::norm(b);
            return cplx(std::exp(-nbar * s), 0.0);
        },
        label.str(),
        [nbar](std::span<const double> m, double lw) {
            double s = 0.0;
            for (double b : m) s += b * b;
            return std::exp(lw - nbar * s);
        },
        std::move(factors));
}

CharacteristicFunction coherent_cf(std::vector<cplx> amplitudes) {
    const int n = static_cast<int>(amplitudes.size());
    if (n < 1) throw ParameterError("coherent state needs at least one amplitude");
    std::vector<CharacteristicFunction> factors;
    if (n > 1)
        for (const auto& a : amplitudes) factors.push_back(coherent_cf({a}));
    std::ostringstream label;
    label << "coherent(";
    for (int k = 0; k < n; ++k) label << (k ? "," : "") << amplitudes[k].real() << "+" << amplitudes[k].imag() << "i";
    label << ")";
    return CharacteristicFunction(
        n,
        [amplitudes](std::span<const cplx> beta) {
            cplx e = 0.0;
            for (std::size_t k = 0; k < beta.size(); ++k)
                e += beta[k] * std::conj(amplitudes[k]) - std::conj(beta[k]) * amplitudes[k];
            return std::exp(e);
        },
        label.str(), {}, std::move(factors));
}

CharacteristicFunction product_cf(std::vector<CharacteristicFunction> factors) {
    if (factors.empty()) throw ParameterError("product needs at least one factor");
    if (factors.size() == 1) return factors.front();
    int modes = 0;
    bool radial = true;
    std::string label = "product(";
    for (std::size_t i = 0; i < factors.size(); ++i) {
        modes += factors[i].mode_count();
        radial = radial && factors[i].has_radial();
        label += (i ? "," : "") + factors[i].label();
    }
    label += ")";
    auto eval = [factors](std::span<const cplx> beta) {
        cplx v = 1.0;
        std::size_t off = 0;
        for (const auto& f : factors) {
            const auto m = static_cast<std::size_t>(f.mode_count());
            v *= f(beta.subspan(off, m));
            off += m;
        }
        return v;
    };
    CharacteristicFunction::RadialEvaluator rad;
    if (radial) {
        rad = [factors](std::span<const double> moduli, double lw) {
            double v = 1.0;
            std::size_t off = 0;
            for (std::size_t i = 0; i < factors.size(); ++i) {
                const auto m = static_cast<std::size_t>(factors[i].mode_count());
                v *= factors[i].radial(moduli.subspan(off, m), i == 0 ? lw : 0.0);
                off += m;
            }
            return v;
        };
    }
    // Flatten so that factors() always lists single-mode pieces when possible.
    std::vector<CharacteristicFunction> flat;
    bool all_single = true;
    for (const auto& f : factors) {
        if (f.mode_count() == 1)
            flat.push_back(f);
        else if (!f.factors().empty())
            for (const auto& g : f.factors()) flat.push_back(g);
        else
            all_single = false;
    }
    return CharacteristicFunction(modes, eval, label, rad, all_single ? flat : factors);
}

namespace {

double prtmsv_log(double p, double x, double y) {
    const double z = 2.0 * std::sqrt(p * x * y) / (1.0 - p);
    return -p * (x + y) / (1.0 - p) + z + std::log(bessel_i0_scaled(z));
}

}  // namespace

CharacteristicFunction char_fn_prtmsv(const PhaseRandomizedTMSV& state) {
    const double p = state.p();
    std::ostringstream label;
    label << "prtmsv(p=" << p << ")";
    return CharacteristicFunction(
        2,
        [p](std::span<const cplx> beta) {
            return cplx(checked_exp(prtmsv_log(p, std::norm(beta[0]), std::norm(beta[1])), "prtmsv"), 0.0);
        },
        label.str(),
        [p](std::span<const double> m, double lw) {
            return checked_exp(prtmsv_log(p, m[0] * m[0], m[1] * m[1]) + lw, "prtmsv");
        });
}

CharacteristicFunction char_fn_prtmsv_series(const PhaseRandomizedTMSV& state) {
    const double p = state.p();
    const int n_max = state.n_max();
    auto series = [p, n_max](double x, double y) {
        const auto la = laguerre_sequence(n_max, x);
        const auto lb = laguerre_sequence(n_max, y);
        NeumaierSum s;
        double pn = 1.0 - p;
        for (int n = 0; n <= n_max; ++n) {
            s.add(pn * la[n] * lb[n]);
            pn *= p;
        }
        return s.value();
    };
    std::ostringstream label;
    label << "prtmsv-series(p=" << p << ",n_max=" << n_max << ")";
    return CharacteristicFunction(
        2, [series](std::span<const cplx> beta) { return cplx(series(std::norm(beta[0]), std::norm(beta[1])), 0.0); },
        label.str(),
        [series](std::span<const double> m, double lw) { return series(m[0] * m[0], m[1] * m[1]) * std::exp(lw); });
}

CharacteristicFunction reduced_char_fn(const PhaseRandomizedTMSV& state) {
    return thermal_cf(state.mean_photon_number(), 1);
}

bool verify_phase_invariance(const CharacteristicFunction& cf, int samples, std::uint64_t seed, double tol) {
    std::mt19937_64 rng(seed);
    const auto n = static_cast<std::size_t>(cf.mode_count());
    std::vector<cplx> rotated(n), plain(n);
    for (int s = 0; s < samples; ++s) {
        for (std::size_t k = 0; k < n; ++k) {
            const double r = 2.0 * uniform01(rng);
            const double phase = 2.0 * kPi * uniform01(rng);
            plain[k] = r;
            rotated[k] = std::polar(r, phase);
        }
        const cplx a = cf(rotated), b = cf(plain);
        if (std::abs(a - b) > tol * std::max(1.0, std::abs(b))) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

std::vector<double> laguerre_sequence(int n_max, double x) {
    if (n_max < 0) throw ParameterError("Laguerre order must be >= 0");
    std::vector<double> l(static_cast<std::size_t>(n_max) + 1);
    l[0] = 1.0;
    if (n_max >= 1) l[1] = 1.0 - x;
    for (int k = 1; k < n_max; ++k) {
        l[k + 1] = ((2.0 * k + 1.0 - x) * l[k] - k * l[k - 1]) / (k + 1.0);
        if (!std::isfinite(l[k + 1]) || std::abs(l[k + 1]) > 1e300) {
            std::ostringstream msg;
            msg << "Laguerre recurrence overflow at n = " << k + 1 << ", x = " << x;
            throw NumericalError(msg.str());
        }
    }
    return l;
}

double laguerre(int n, double x) { return laguerre_sequence(n, x)[static_cast<std::size_t>(n)]; }

namespace {

// Upward recurrence ψ_{k+1} = x ψ_k/√(k+1) - √(k/(k+1)) ψ_{k-1} in scaled form;
// `visit(k, value)` receives each ψ_k.
template <class Visit>
void fock_recurrence(int n_max, double x, Visit&& visit) {
    double log_scale = -0.25 * x * x - 0.25 * std::log(2.0 * kPi);
    double prev = 0.0, cur = 1.0;
    visit(0, std::exp(log_scale));
    for (int k = 0; k < n_max; ++k) {
        const double next = x * cur / std::sqrt(k + 1.0) - std::sqrt(k / (k + 1.0)) * prev;
        prev = cur;
        cur = next;
        if (std::abs(cur) > kRescale) {
            cur /= kRescale;
            prev /= kRescale;
            log_scale += kLogRescale;
        }
        visit(k + 1, cur * std::exp(log_scale));
    }
}

double fock_single(int n, double x) {
    double out = 0.0;
    fock_recurrence(n, x, [&](int k, double v) {
        if (k == n) out = v;
    });
    return out;
}

}  // namespace

std::vector<double> fock_wavefunction_sequence(int n_max, double x) {
    if (n_max < 0) throw ParameterError("Fock index must be >= 0");
    std::vector<double> psi(static_cast<std::size_t>(n_max) + 1);
    fock_recurrence(n_max, x, [&](int k, double v) { psi[static_cast<std::size_t>(k)] = v; });
    return psi;
}

double fock_wavefunction(int n, double x) {
    if (n < 0) throw ParameterError("Fock index must be >= 0");
    return fock_single(n, x);
}

double quadrature_pdf(const PhaseRandomizedTMSV& state, double x_a, double x_b) {
    const auto pa = fock_wavefunction_sequence(state.n_max(), x_a);
    const auto pb = fock_wavefunction_sequence(state.n_max(), x_b);
    double s = 0.0, w = 1.0 - state.p();
    for (int n = 0; n <= state.n_max(); ++n) {
        s += w * pa[n] * pa[n] * pb[n] * pb[n];
        w *= state.p();
    }
    return s;
}

double thermal_quadrature_pdf(const PhaseRandomizedTMSV& state, double x) {
    const auto pa = fock_wavefunction_sequence(state.n_max(), x);
    double s = 0.0, w = 1.0 - state.p();
    for (int n = 0; n <= state.n_max(); ++n) {
        s += w * pa[n] * pa[n];
        w *= state.p();
    }
    return s;
}

// ---------------------------------------------------------------------------

FockQuadratureSampler::FockQuadratureSampler(int n_max) {
    if (n_max < 0) throw ParameterError("sampler n_max must be >= 0");
    using Rule = boost::math::quadrature::gauss<double, 7>;
    std::vector<double> gx, gw;
    {
        const auto& xs = Rule::abscissa();
        const auto& ws = Rule::weights();
        for (std::size_t i = 0; i < xs.size(); ++i) {
            gx.push_back(xs[i]);
            gw.push_back(ws[i]);
            if (xs[i] != 0.0) {
                gx.push_back(-xs[i]);
                gw.push_back(ws[i]);
            }
        }
    }
    constexpr int kPoints = 4096;
    constexpr int kCells = kPoints - 1;
    tables_.resize(static_cast<std::size_t>(n_max) + 1);
    parallel_for(tables_.size(), 0, [&](std::size_t ni) {
        const int n = static_cast<int>(ni);
        const double half = 2.0 * std::sqrt(2.0 * n + 1.0) + 6.0;
        Table t;
        t.lo = -half;
        t.step = 2.0 * half / kCells;
        t.cdf.assign(kCells + 1, 0.0);
        t.bound.assign(kCells, 0.0);
        std::vector<double> edge(kPoints);
        for (int i = 0; i < kPoints; ++i) {
            const double v = fock_single(n, t.lo + i * t.step);
            edge[i] = v * v;
        }
        NeumaierSum acc;
        for (int c = 0; c < kCells; ++c) {
            const double mid = t.lo + (c + 0.5) * t.step;
            double mass = 0.0, peak = std::max(edge[c], edge[c + 1]);
            for (std::size_t g = 0; g < gx.size(); ++g) {
                const double v = fock_single(n, mid + 0.5 * t.step * gx[g]);
                mass += gw[g] * v * v;
                peak = std::max(peak, v * v);
            }
            acc.add(0.5 * t.step * mass);
            t.cdf[c + 1] = acc.value();
            t.bound[c] = 1.05 * peak + 1e-300;
        }
        const double total = t.cdf.back();
        for (auto& v : t.cdf) v /= total;
        t.cdf.back() = 1.0;
        tables_[ni] = std::move(t);
    });
}

double FockQuadratureSampler::sample(int n, std::mt19937_64& rng) const {
    if (n < 0 || n > n_max()) throw ParameterError("Fock index outside sampler range");
    const Table& t = tables_[static_cast<std::size_t>(n)];
    const double u = uniform01(rng);
    auto it = std::upper_bound(t.cdf.begin(), t.cdf.end(), u);
    auto cell = static_cast<std::size_t>(std::distance(t.cdf.begin(), it)) - 1;
    cell = std::min(cell, t.bound.size() - 1);
    // Skip zero-mass cells that upper_bound can land on through rounding.
    while (t.cdf[cell + 1] <= t.cdf[cell] && cell + 1 < t.bound.size()) ++cell;
    const double lo = t.lo + static_cast<double>(cell) * t.step;
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const double x = lo + t.step * uniform01(rng);
        const double v = fock_single(n, x);
        if (uniform01(rng) * t.bound[cell] <= v * v) return x;
    }
    throw NumericalError("rejection sampling failed to accept a quadrature value");
}

QuadratureDataset sample_quadratures(const PhaseRandomizedTMSV& state, std::size_t n_records,
                                     std::uint64_t seed, const PhaseMode& phases, int workers) {
    if (n_records < 1) throw ParameterError("number of records must be >= 1");
    if (phases.kind == PhaseMode::Kind::FixedList) {
        if (phases.phases.empty()) throw ParameterError("fixed phase list is empty");
        for (double ph : phases.phases)
            if (!(ph >= 0.0 && ph < 2.0 * kPi)) throw ParameterError("fixed phases must lie in [0, 2pi)");
    }
    return sample_quadratures(state, FockQuadratureSampler(state.n_max()), n_records, seed, phases, workers);
}

QuadratureDataset sample_quadratures(const PhaseRandomizedTMSV& state, const FockQuadratureSampler& sampler,
                                     std::size_t n_records, std::uint64_t seed, const PhaseMode& phases,
                                     int workers) {
    if (n_records < 1) throw ParameterError("number of records must be >= 1");
    if (sampler.n_max() < state.n_max()) throw ParameterError("sampler does not cover the state's n_max");
    if (phases.kind == PhaseMode::Kind::FixedList) {
        if (phases.phases.empty()) throw ParameterError("fixed phase list is empty");
        for (double ph : phases.phases)
            if (!(ph >= 0.0 && ph < 2.0 * kPi)) throw ParameterError("fixed phases must lie in [0, 2pi)");
    }
    QuadratureDataset data;
    data.mode_count = 2;
    data.x.assign(2 * n_records, 0.0);
    data.phi.assign(2 * n_records, 0.0);
    const double log_p = std::log(state.p());
    const std::size_t chunks = (n_records + kChunkRecords - 1) / kChunkRecords;
    parallel_for(chunks, workers, [&](std::size_t c) {
        std::mt19937_64 rng(mix_seed(seed, c));
        const std::size_t begin = c * kChunkRecords;
        const std::size_t end = std::min(n_records, begin + kChunkRecords);
        for (std::size_t j = begin; j < end; ++j) {
            int n;
            do {
                const double u = 1.0 - uniform01(rng);  // (0, 1]
                const double k = std::floor(std::log(u) / log_p);
                n = k > state.n_max() ? state.n_max() + 1 : static_cast<int>(k);
            } while (n > state.n_max());
            data.x[2 * j] = sampler.sample(n, rng);
            data.x[2 * j + 1] = sampler.sample(n, rng);
            for (int m = 0; m < 2; ++m) {
                double ph;
                if (phases.kind == PhaseMode::Kind::UniformRandom)
                    ph = 2.0 * kPi * uniform01(rng);
                else
                    ph = phases.phases[j % phases.phases.size()];
                data.phi[2 * j + static_cast<std::size_t>(m)] = ph;
            }
        }
    });
    std::ostringstream src;
    src << "simulated prtmsv p=" << state.p() << " n_max=" << state.n_max();
    data.metadata["source"] = src.str();
    data.metadata["seed"] = std::to_string(seed);
    return data;
}

QuadratureDataset sample_gaussian_quadratures(std::span<const double> mu, std::span<const double> sigma,
                                              std::size_t n_records, std::uint64_t seed, int workers) {
    const auto n = mu.size();
    if (n < 1 || sigma.size() != n * n) throw ParameterError("Gaussian model dimensions do not match");
    if (n_records < 1) throw ParameterError("number of records must be >= 1");
    Eigen::MatrixXd cov(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cov(i, j) = sigma[i * n + j];
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
        throw ParameterError("covariance matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
        throw ParameterError("covariance matrix must be positive semidefinite");
    const Eigen::MatrixXd root =
        es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    QuadratureDataset data;
    data.mode_count = static_cast<int>(n);
    data.x.assign(n * n_records, 0.0);
    data.phi.assign(n * n_records, 0.0);
    const std::size_t chunks = (n_records + kChunkRecords - 1) / kChunkRecords;
    parallel_for(chunks, workers, [&](std::size_t c) {
        std::mt19937_64 rng(mix_seed(seed, c));
        std::normal_distribution<double> normal;
        Eigen::VectorXd z(n);
        const std::size_t begin = c * kChunkRecords;
        const std::size_t end = std::min(n_records, begin + kChunkRecords);
        for (std::size_t j = begin; j < end; ++j) {
            for (std::size_t k = 0; k < n; ++k) z[k] = normal(rng);
            const Eigen::VectorXd xv = root * z;
            for (std::size_t k = 0; k < n; ++k) {
                data.x[j * n + k] = mu[k] + xv[k];
                data.phi[j * n + k] = 2.0 * kPi * uniform01(rng);
            }
        }
    });
    data.metadata["source"] = "simulated gaussian quadrature model";
    data.metadata["seed"] = std::to_string(seed);
    return data;
}

}  // namespace qcqp
