#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qcqp/dataset.hpp"
#include "qcqp/filter.hpp"
#include "qcqp/numeric.hpp"
#include "qcqp/quasiprob.hpp"

namespace qcqp {

struct PatternTableParams {
    double w = 1.5;
    double x_max = 30.0;      // x grid is [-x_max, x_max]
    double x_step = 0.01;
    double alpha_max = 4.0;   // |α| grid is [0, alpha_max]
    double alpha_step = 0.02;
    double tol = 1e-8;        // absolute quadrature tolerance per node
};

/// Phase-randomized pattern function
///   f(x, |α|; w) = (2/π) ∫₀^{b_max} b e^{b²/2} Ω(b/w) cos(bx) J₀(2b|α|) db
/// on a uniform (x, |α|) grid. Interpolation is tensor-product Lagrange:
/// 4 points along x, 8 points along |α|. f is even in x and in |α|.
class PatternTable {
public:
    PatternTable(PatternTableParams params, std::vector<double> values, std::string filter_checksum,
                 double b_max, double achieved_error);

    const PatternTableParams& params() const noexcept { return params_; }
    double w() const noexcept { return params_.w; }
    std::size_t x_count() const noexcept { return nx_; }
    std::size_t alpha_count() const noexcept { return na_; }
    double x_at(std::size_t i) const noexcept { return -params_.x_max + static_cast<double>(i) * params_.x_step; }
    double alpha_at(std::size_t j) const noexcept { return static_cast<double>(j) * params_.alpha_step; }
    /// Node value f(x_at(i), alpha_at(j)).
    double node(std::size_t i, std::size_t j) const noexcept { return values_[i * na_ + j]; }
    const std::vector<double>& values() const noexcept { return values_; }
    const std::string& filter_checksum() const noexcept { return filter_checksum_; }
    const std::string& checksum() const noexcept { return checksum_; }
    double b_max() const noexcept { return b_max_; }
    double achieved_error() const noexcept { return achieved_; }

    bool covers_x(double x) const noexcept { return std::abs(x) <= params_.x_max; }
    bool covers_alpha(double a) const noexcept { return a >= 0.0 && a <= params_.alpha_max; }

    /// Interpolated f(x, a); ParameterError outside the grid.
    double operator()(double x, double a) const;

    /// The table interpolated to a fixed |α| (one value per x node), for
    /// repeated evaluation at that |α|.
    class Column {
    public:
        double operator()(double x) const;
    private:
        friend class PatternTable;
        std::vector<double> v_;
        double x0_ = 0.0, h_ = 1.0;
    };
    Column column(double a) const;

private:
    PatternTableParams params_;
    std::size_t nx_ = 0, na_ = 0;
    std::vector<double> values_;
    std::string filter_checksum_;
    std::string checksum_;
    double b_max_ = 0.0;
    double achieved_ = 0.0;
};

PatternTable build_pattern_table(const FilterTable& table, const PatternTableParams& params, int workers = 1);

std::string pattern_cache_filename(const PatternTableParams& params, const std::string& filter_checksum);
/// Binary layout: one JSON header line, then the values as little-endian doubles.
void save_pattern_table(const PatternTable& pat, const std::filesystem::path& path);
PatternTable load_pattern_table(const std::filesystem::path& path);

struct PatternCacheResult {
    PatternTable table;
    bool cache_hit = false;
    std::filesystem::path path;
};
PatternCacheResult load_or_build_pattern_table(const FilterTable& table, const PatternTableParams& params,
                                               const std::filesystem::path& cache_dir, int workers = 1);

/// f(x, |α|; w) by direct adaptive quadrature (no table).
double pattern_value(const FilterTable& table, double x, double alpha_modulus, double w, double tol = 1e-10);

/// Phase-dependent pattern function
///   (2/π) ∫₀^∞ b e^{b²/2} Ω(b/w) cos(b s) db,  s = x - 2|α| cos(arg α - φ).
/// Its average over φ is the phase-randomized f(x, |α|; w).
double pattern_value_general(const FilterTable& table, double x, double phi, std::complex<double> alpha,
                             double w, double tol = 1e-10);
/// Imaginary part of the same integral written over the whole real b line
/// with |b|; zero up to rounding.
double pattern_imaginary_residual(const FilterTable& table, double x, double phi, std::complex<double> alpha,
                                  double w);

// ---------------------------------------------------------------------------
// Estimation

struct EstimateWithError {
    double value = 0.0;
    double sigma = 0.0;
    double delta = 0.0;
    std::optional<double> confidence;  // |value|/delta, only for value < 0 and delta > 0
    bool degenerate = false;           // value < 0 but delta == 0
    std::size_t n = 0;
};

/// Builds an estimate from the mean and population variance; enforces
/// delta = sigma/√N and the confidence rule.
EstimateWithError make_estimate(double mean, double variance, std::size_t n);

/// Single-pass moments with compensated sums and Welford updates; mergeable.
class MomentAccumulator {
public:
    void add(double v) noexcept;
    void merge(const MomentAccumulator& o) noexcept;

    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept;
    /// Welford/Chan population variance (1/N normalization).
    double variance() const noexcept;
    /// Second sample moment minus squared mean, from the compensated sums.
    double two_term_variance() const noexcept;
    double sum() const noexcept { return sum_.value(); }
    double sum_of_squares() const noexcept { return sum_sq_.value(); }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
    NeumaierSum sum_, sum_sq_;
};

/// P_QC estimate (1/N) Σ_j Π_k f(x_k[j], |α_k|; w) with its error.
EstimateWithError estimate_pqc(const QuadratureDataset& data, const PatternTable& pat,
                               std::span<const std::complex<double>> alphas, int workers = 1);

struct GridEstimate {
    QPGrid grid;
    std::vector<EstimateWithError> estimates;  // same flat order as grid.values
};

/// Estimates on a radial product grid (one |α| axis per mode, 1 or 2 modes).
GridEstimate estimate_grid(const QuadratureDataset& data, const PatternTable& pat,
                           const std::vector<std::vector<double>>& radial_axes, int workers = 1);

void write_estimates_csv(const GridEstimate& est, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Gaussian model

struct GaussianQuadratureStats {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    /// ParameterError unless sigma is symmetric and PSD within -1e-10.
    void validate() const;
};

/// Mean and 1/N covariance of the quadratures.
GaussianQuadratureStats compute_gaussian_stats(const QuadratureDataset& data);

struct GaussianVariance {
    double first_moment = 0.0;
    double second_moment = 0.0;
    double variance = 0.0;
    double achieved_error = 0.0;
};

/// Variance of the single-record two-mode pattern product when the
/// quadratures follow N(mu, sigma):
///   E[f f]   = π⁻² ∫ K_A K_B Φ(b),
///   E[f² f²] = π⁻⁴ ∫ K_A K_A' K_B K_B' e^{b·b'} Φ(b - b'),
/// with K(b) = |b| Ω(|b|/w) J₀(2|b||α|) over the real line and
/// Φ(t) = exp(½ tᵀ(I - Σ)t + i tᵀμ).
GaussianVariance gaussian_cf_variance(const GaussianQuadratureStats& stats, const FilterTable& table, double w,
                                      std::span<const double> alpha_moduli, double tol = 1e-8);

}  // namespace qcqp
