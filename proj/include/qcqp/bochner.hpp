#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qcqp/filter.hpp"
#include "qcqp/states.hpp"

namespace qcqp {

using BetaVector = std::vector<cplx>;  // one amplitude per mode

/// Positivity matrix M(k, k') = Φ(β_k − β_k') ∏_modes Ω(|β_k − β_k'|/w).
struct BochnerMatrix {
    std::vector<BetaVector> betas;
    Eigen::MatrixXcd entries;
    std::optional<double> w;  // absent: unfiltered characteristic function
};

/// Builds and validates (Hermitian and unit diagonal within 1e-10) the
/// positivity matrix. Differences beyond the filter table range are an
/// error unless `out_of_range` is Truncate.
BochnerMatrix bochner_matrix(const CharacteristicFunction& cf, const FilterTable* table, std::optional<double> w,
                             const std::vector<BetaVector>& betas, OutOfRange out_of_range = OutOfRange::Error);

/// Smallest eigenvalue of a Hermitian matrix (m <= 64).
double min_eigenvalue(const Eigen::MatrixXcd& m);
inline double min_eigenvalue(const BochnerMatrix& m) { return min_eigenvalue(m.entries); }

/// min eigenvalue / largest |eigenvalue| (0 for the zero matrix).
double normalized_min_eigenvalue(const Eigen::MatrixXcd& m);

/// PSD iff λ_min >= -rel_tol · max |λ|.
bool is_psd(const Eigen::MatrixXcd& m, double rel_tol = 1e-8);

enum class SearchStrategy { RandomRestart, GridSeeded };

struct SearchOptions {
    SearchStrategy strategy = SearchStrategy::RandomRestart;
    long budget = 10000;       // matrix evaluations
    std::uint64_t seed = 1;
    int workers = 1;
    double rel_tol = 1e-8;
};

struct SearchResult {
    bool found = false;  // a sequence with normalized eigenvalue < -rel_tol was seen
    std::vector<BetaVector> betas;
    double min_eigenvalue = 0.0;
    double normalized = 0.0;
    long evaluations = 0;
    double worst_examined = 0.0;  // most negative normalized eigenvalue over all evaluations
};

/// Searches for β sequences (m = 2..12) whose filtered positivity matrix is
/// not PSD. Trials of 1000 evaluations cycle through the sizes (largest
/// first) and the start scales {0.5, 1, 2}. Each runs coordinate descent
/// from random starts.
/// "Not found" is not a certificate of classicality.
SearchResult search_violation(const CharacteristicFunction& cf, const FilterTable& table, double w,
                              const SearchOptions& opt = {});

struct SchurCheck {
    bool applicable = false;  // both inputs PSD and of equal size
    bool psd = false;         // Schur product PSD (meaningful only if applicable)
    double min_eigenvalue = 0.0;
    std::string reason;
};

/// Entrywise product check; ParameterError on a dimension mismatch.
SchurCheck schur_closure_check(const Eigen::MatrixXcd& m1, const Eigen::MatrixXcd& m2, double rel_tol = 1e-8);

void write_search_report(const SearchResult& r, const SearchOptions& opt, double w, const std::string& state_label,
                         const std::filesystem::path& path);

}  // namespace qcqp
