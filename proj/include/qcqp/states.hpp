#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qcqp/dataset.hpp"

namespace qcqp {

using cplx = std::complex<double>;

/// Fully phase-randomized two-mode squeezed vacuum Σ (1-p) pⁿ |n,n⟩⟨n,n|,
/// truncated at n_max.
class PhaseRandomizedTMSV {
public:
    /// p in (0, 1). Without n_max the smallest truncation meeting the
    /// p^{n_max+1} <= 1e-12 tail bound is used (124 for p = 0.8).
    static PhaseRandomizedTMSV make(double p, std::optional<int> n_max = std::nullopt);

    double p() const noexcept { return p_; }
    int n_max() const noexcept { return n_max_; }
    double mean_photon_number() const noexcept { return p_ / (1.0 - p_); }

private:
    PhaseRandomizedTMSV(double p, int n_max) : p_(p), n_max_(n_max) {}
    double p_;
    int n_max_;
};

double fock_weight(const PhaseRandomizedTMSV& state, int n);

/// Normally ordered characteristic function Φ(β) of an n-mode state.
///
/// The optional radial evaluator returns Φ at real, non-negative moduli
/// multiplied by e^{log_weight}; exponents are combined before
/// exponentiation so that large Φ times a small weight does not overflow.
/// It is supplied only by phase-invariant models.
class CharacteristicFunction {
public:
    using Evaluator = std::function<cplx(std::span<const cplx>)>;
    using RadialEvaluator = std::function<double(std::span<const double>, double)>;

    CharacteristicFunction(int mode_count, Evaluator eval, std::string label,
                           RadialEvaluator radial = {},
                           std::vector<CharacteristicFunction> factors = {});

    int mode_count() const noexcept { return mode_count_; }
    const std::string& label() const noexcept { return label_; }

    cplx operator()(std::span<const cplx> beta) const;
    cplx operator()(std::initializer_list<cplx> beta) const {
        return (*this)(std::span<const cplx>(beta.begin(), beta.size()));
    }

    bool has_radial() const noexcept { return static_cast<bool>(radial_); }
    /// Radial fast path; falls back to Re Φ at real arguments times the weight.
    double radial(std::span<const double> moduli, double log_weight = 0.0) const;

    /// Non-empty when the model is a product of single-mode factors.
    const std::vector<CharacteristicFunction>& factors() const noexcept { return factors_; }

private:
    int mode_count_;
    Evaluator eval_;
    std::string label_;
    RadialEvaluator radial_;
    std::vector<CharacteristicFunction> factors_;
};

CharacteristicFunction vacuum_cf(int mode_count);
CharacteristicFunction thermal_cf(double mean_photon_number, int mode_count = 1);
/// Coherent product state; Φ(β) = Π exp(β_k α_k* - β_k* α_k).
CharacteristicFunction coherent_cf(std::vector<cplx> amplitudes);
/// Product of independent models (mode counts add up).
CharacteristicFunction product_cf(std::vector<CharacteristicFunction> factors);

/// Two-mode Φ(β_A, β_B) = (1-p) Σ pⁿ L_n(|β_A|²) L_n(|β_B|²) in closed form,
/// exp(-p(x+y)/(1-p)) I0(2√(pxy)/(1-p)), evaluated with a scaled Bessel function.
CharacteristicFunction char_fn_prtmsv(const PhaseRandomizedTMSV& state);
/// Same function from the truncated double Laguerre series.
CharacteristicFunction char_fn_prtmsv_series(const PhaseRandomizedTMSV& state);
/// Single-mode reduced state: thermal with n̄ = p/(1-p).
CharacteristicFunction reduced_char_fn(const PhaseRandomizedTMSV& state);

/// Spot check of Φ(β) = Φ(|β|) under random per-mode phases (`samples` points).
bool verify_phase_invariance(const CharacteristicFunction& cf, int samples = 20,
                             std::uint64_t seed = 7, double tol = 1e-10);

// ---------------------------------------------------------------------------
// Special functions with renormalized upward recurrences.

/// L_0(x) .. L_{n_max}(x). NumericalError if the recurrence overflows.
std::vector<double> laguerre_sequence(int n_max, double x);
double laguerre(int n, double x);

/// ψ_0(x) .. ψ_{n_max}(x) for the quadrature x = a e^{-iφ} + a† e^{iφ}
/// (vacuum variance 1).
std::vector<double> fock_wavefunction_sequence(int n_max, double x);
double fock_wavefunction(int n, double x);

/// Joint quadrature density Σ (1-p) pⁿ ψ_n(x_A)² ψ_n(x_B)² (phase independent).
double quadrature_pdf(const PhaseRandomizedTMSV& state, double x_a, double x_b);
/// Reduced single-mode density Σ (1-p) pⁿ ψ_n(x)².
double thermal_quadrature_pdf(const PhaseRandomizedTMSV& state, double x);

// ---------------------------------------------------------------------------
// Simulation.

struct PhaseMode {
    enum class Kind { UniformRandom, FixedList };
    Kind kind = Kind::UniformRandom;
    std::vector<double> phases;  // cycled per record in FixedList mode

    static PhaseMode uniform() { return {}; }
    static PhaseMode fixed(std::vector<double> list) { return {Kind::FixedList, std::move(list)}; }
};

/// Draws x ~ ψ_n(x)² from per-n inverse-CDF tables with exact rejection
/// inside each cell. Tables span ±(2√(2n+1) + 6) with 4096 points.
class FockQuadratureSampler {
public:
    explicit FockQuadratureSampler(int n_max);
    int n_max() const noexcept { return static_cast<int>(tables_.size()) - 1; }
    double sample(int n, std::mt19937_64& rng) const;

private:
    struct Table {
        double lo, step;
        std::vector<double> cdf;    // cumulative cell mass, size cells+1, cdf.back() == 1
        std::vector<double> bound;  // per-cell density bound for rejection
    };
    std::vector<Table> tables_;
};

/// N records of the phase-randomized TMSV: n ~ (1-p)pⁿ, then x_A, x_B
/// independently from ψ_n². Deterministic given the seed, independent of
/// the worker count (records are generated in fixed chunks with derived
/// substreams).
QuadratureDataset sample_quadratures(const PhaseRandomizedTMSV& state, std::size_t n_records,
                                     std::uint64_t seed, const PhaseMode& phases = PhaseMode::uniform(),
                                     int workers = 1);
/// Same, reusing a sampler built once (its n_max must cover the state's).
QuadratureDataset sample_quadratures(const PhaseRandomizedTMSV& state, const FockQuadratureSampler& sampler,
                                     std::size_t n_records, std::uint64_t seed,
                                     const PhaseMode& phases = PhaseMode::uniform(), int workers = 1);

/// Records drawn from a Gaussian quadrature model x ~ N(mu, sigma) (row-major
/// covariance), with uniform random phases. Vacuum: mu = 0, sigma = I.
QuadratureDataset sample_gaussian_quadratures(std::span<const double> mu, std::span<const double> sigma,
                                              std::size_t n_records, std::uint64_t seed, int workers = 1);

}  // namespace qcqp
