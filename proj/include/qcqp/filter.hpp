#pragma once

#include <complex>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace qcqp {

/// Parameters that identify a filter table (and its cache file).
struct FilterTableParams {
    double r_max = 8.5;
    double step = 0.005;
    double tol = 1e-10;
};

/// Ω(r) for the autocorrelated super-Gaussian filter, evaluated by 2D polar
/// quadrature about the midpoint of the two Gaussians. The absolute error is
/// at most `tol`; the integral is additionally resolved to ~1e-12 relative so
/// that ln Ω stays accurate in the far tail.
double eval_filter_radial(double r, double tol);

/// Radial samples Ω(i·step), i = 0..r_max/step, plus a clamped cubic spline of
/// ln Ω for evaluation between nodes. Immutable once constructed.
class FilterTable {
public:
    /// Validates every table invariant and throws NumericalError on failure.
    FilterTable(FilterTableParams params, std::vector<double> values,
                std::map<std::string, std::string> provenance = {});

    double r_max() const noexcept { return params_.r_max; }
    double step() const noexcept { return params_.step; }
    double quad_tolerance() const noexcept { return params_.tol; }
    const FilterTableParams& params() const noexcept { return params_; }
    const std::vector<double>& values() const noexcept { return values_; }
    const std::string& checksum() const noexcept { return checksum_; }
    const std::map<std::string, std::string>& provenance() const noexcept { return provenance_; }

    /// Interpolated Ω(r); ParameterError for r outside [0, r_max].
    double omega(double r) const;
    /// Interpolated ln Ω(r).
    double log_omega(double r) const;

    /// Smallest tabulated radius beyond which ln Ω stays below `log_threshold`.
    double radius_below(double log_threshold) const;

private:
    struct Spline;
    FilterTableParams params_;
    std::vector<double> values_;
    std::map<std::string, std::string> provenance_;
    std::string checksum_;
    std::shared_ptr<const Spline> spline_;
};

FilterTable build_filter_table(double r_max, double step, double tol);
inline FilterTable build_filter_table(const FilterTableParams& p) {
    return build_filter_table(p.r_max, p.step, p.tol);
}

/// Cache file name encoding (r_max, step, tol).
std::string filter_cache_filename(const FilterTableParams& params);
void save_filter_table(const FilterTable& table, const std::filesystem::path& path);
/// Throws DataError when the file is malformed or fails its checksum.
FilterTable load_filter_table(const std::filesystem::path& path);

struct FilterCacheResult {
    FilterTable table;
    bool cache_hit = false;
    std::filesystem::path path;
};

/// Loads the table from `cache_dir` when a file with exactly matching
/// parameters and a valid checksum exists, otherwise builds and stores it.
FilterCacheResult load_or_build_filter_table(const FilterTableParams& params,
                                             const std::filesystem::path& cache_dir);

enum class OutOfRange { Error, Truncate };

/// Ω(|β|/w) from the table. Beyond r_max: ParameterError, or 0 with Truncate.
double filter_value(const FilterTable& table, std::complex<double> beta, double w,
                    OutOfRange mode = OutOfRange::Error);

/// Single-mode smoothing kernel (2/π)∫₀^∞ b Ω(b/w) J0(2b|α|) db.
double kernel_value(const FilterTable& table, std::complex<double> alpha, double w,
                    double tol = 1e-12);

/// Radial cutoff b_max such that e^{b²/2} Ω(b/w) < threshold for all b beyond
/// it. NumericalError when the table ends before the bound is reached.
double compensated_cutoff(const FilterTable& table, double w, double threshold = 1e-14);

}  // namespace qcqp
