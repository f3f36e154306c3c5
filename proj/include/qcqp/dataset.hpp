#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qcqp {

/// Multimode homodyne records {(x_k[j], φ_k[j])}, stored record-major.
struct QuadratureDataset {
    int mode_count = 0;
    std::vector<double> x;
    std::vector<double> phi;
    std::map<std::string, std::string> metadata;

    std::size_t size() const noexcept {
        return mode_count > 0 ? x.size() / static_cast<std::size_t>(mode_count) : 0;
    }
    double quadrature(std::size_t record, int mode) const {
        return x[record * static_cast<std::size_t>(mode_count) + static_cast<std::size_t>(mode)];
    }
    double phase(std::size_t record, int mode) const {
        return phi[record * static_cast<std::size_t>(mode_count) + static_cast<std::size_t>(mode)];
    }

    /// DataError unless all values are finite, phases lie in [0, 2π) and N >= 1.
    void validate() const;
};

/// CSV layout: `# modes=n`, optional `# key=value` lines, the column row
/// `x_1,phi_1,...,x_n,phi_n`, then one record per line (17 significant digits).
void save_dataset(const QuadratureDataset& data, const std::filesystem::path& path);

/// Schema-validating reader; DataError messages carry the offending line number.
QuadratureDataset load_dataset(const std::filesystem::path& path);

}  // namespace qcqp
