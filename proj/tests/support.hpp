#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "qcqp/filter.hpp"
#include "qcqp/sampling.hpp"

namespace qcqp::test {

// Regression constants fixed from independent oracles before the main build.
inline constexpr double kOmegaAtOne = 0.475778190807703;        // Ω(1)
inline constexpr double kPhiOneOne = 0.3480864566386308;        // Φ(1, 1) at p = 0.8
inline constexpr double kPatternOrigin = 9.88395785926;         // f(0, 0) at w = 1.5

inline std::filesystem::path cache_dir() {
    if (const char* env = std::getenv("QCQP_CACHE_DIR"); env && *env) return env;
    return QCQP_TEST_CACHE_DIR;
}

inline const FilterTable& shared_table() {
    static const FilterTable table = load_or_build_filter_table(FilterTableParams{}, cache_dir()).table;
    return table;
}

// Pattern table at w = 1.5 with the default grid.
inline const PatternTable& shared_pattern() {
    static const PatternTable pat = [] {
        PatternTableParams p;
        return load_or_build_pattern_table(shared_table(), p, cache_dir()).table;
    }();
    return pat;
}

}  // namespace qcqp::test
