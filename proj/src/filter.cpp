#include "qcqp/filter.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"

namespace qcqp {

namespace {

// (2/π)^{3/2} times the 4 from folding θ onto [0, π/2].
const double kFilterPrefactor = 4.0 * std::pow(2.0 / kPi, 1.5);

// e^{-41.45} ≈ 1e-18: integrand support cutoff.
constexpr double kSupportLog = 41.45;

// ∫₀^{π/2} exp(-2c sin²φ) dφ, resolved to ~1e-15 relative.
double angular_factor(double c) {
    if (c == 0.0) return 0.5 * kPi;
    const double est = std::min(0.5 * kPi, 0.5 * std::sqrt(kPi / (2.0 * c)));
    // For large c only φ ≲ sqrt(kSupportLog / 2c) contributes.
    const double phi_max = std::min(0.5 * kPi, std::sqrt(kSupportLog / (2.0 * c)) * 1.2);
    auto g = [c](double phi) {
        const double s = std::sin(phi);
        return std::exp(-2.0 * c * s * s);
    };
    return integrate_adaptive(g, 0.0, phi_max, 1e-15 * est, 2).value;
}

}  // namespace

double eval_filter_radial(double r, double tol) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ParameterError("filter radius must be >= 0");
    if (!(tol > 0.0)) throw ParameterError("filter tolerance must be positive");

    // Ω(r) = (2/π)^{3/2} e^{-r⁴/8} ∫ t dt ∫ dθ exp(-2t⁴ - r²t²(1 + 2cos²θ)),
    // using β' = -β/2 + t e^{iθ}.
    const double r2 = r * r;
    const double t2_max = (-r2 + std::sqrt(r2 * r2 + 8.0 * kSupportLog)) / 4.0;
    const double t_max = std::sqrt(t2_max);
    auto integrand = [r2](double t) {
        const double t2 = t * t;
        return t * std::exp(-2.0 * t2 * t2 - r2 * t2) * angular_factor(r2 * t2);
    };
    const double scale = kFilterPrefactor * std::exp(-r2 * r2 / 8.0);

    // Rough magnitude first, then the requested accuracy.
    const QuadResult rough = integrate_adaptive(integrand, 0.0, t_max, 1e-3, 4, 1 << 10);
    double tol_inner = 1e-12 * std::abs(rough.value);
    if (scale > 0.0) tol_inner = std::min(tol_inner, tol / scale);
    tol_inner = std::max(tol_inner, std::numeric_limits<double>::min());
    try {
        const QuadResult q = integrate_adaptive(integrand, 0.0, t_max, tol_inner, 8, 1 << 12);
        return scale * q.value;
    } catch (const NumericalError& e) {
        throw NumericalError("filter quadrature at r=" + std::to_string(r) +
                                 " did not converge: " + e.what(),
                             e.achieved_error() * scale);
    }
}

// ---------------------------------------------------------------------------

struct FilterTable::Spline {
    boost::math::interpolators::cardinal_cubic_b_spline<double> log_omega;
};

FilterTable::FilterTable(FilterTableParams params, std::vector<double> values,
                         std::map<std::string, std::string> provenance)
    : params_(params), values_(std::move(values)), provenance_(std::move(provenance)) {
    if (values_.size() < 4) throw NumericalError("filter table needs at least 4 samples");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i]))
            throw NumericalError("filter table entry " + std::to_string(i) + " is not finite");
        if (!(values_[i] > 0.0))
            throw NumericalError("filter table entry " + std::to_string(i) +
                                 " is not positive (r_max too large for double range?)");
    }
    if (std::abs(values_.front() - 1.0) > 10.0 * params_.tol)
        throw NumericalError("filter table violates Ω(0) = 1");
    if (!(values_.back() < 1e-12))
        throw NumericalError("filter table cutoff inadequate: Ω(r_max) >= 1e-12");

    std::vector<double> logs(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) logs[i] = std::log(values_[i]);
    const std::size_t n = logs.size();
    const double h = params_.step;
    // Right-end slope from a 4th order one-sided difference.
    const double right = (25.0 * logs[n - 1] - 48.0 * logs[n - 2] + 36.0 * logs[n - 3] -
                          16.0 * logs[n - 4] + 3.0 * logs[n - 5]) /
                         (12.0 * h);
    spline_ = std::make_shared<const Spline>(Spline{
        boost::math::interpolators::cardinal_cubic_b_spline<double>(logs.data(), n, 0.0, h, 0.0,
                                                                    right)});
    checksum_ = fnv1a_hex(std::span<const double>(values_));
}

double FilterTable::log_omega(double r) const {
    if (!(r >= 0.0) || r > params_.r_max * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "filter argument " << r << " outside table range [0, " << params_.r_max << "]";
        throw ParameterError(msg.str());
    }
    const double idx = r / params_.step;
    const double nearest = std::round(idx);
    if (std::abs(idx - nearest) < 1e-9) {
        const auto i = static_cast<std::size_t>(nearest);
        if (i < values_.size()) return std::log(values_[i]);
    }
    return spline_->log_omega(std::min(r, params_.r_max));
}

double FilterTable::omega(double r) const { return std::exp(log_omega(r)); }

double FilterTable::radius_below(double log_threshold) const {
    std::size_t i = values_.size();
    while (i > 0 && std::log(values_[i - 1]) < log_threshold) --i;
    return static_cast<double>(std::min(i, values_.size() - 1)) * params_.step;
}

FilterTable build_filter_table(double r_max, double step, double tol) {
    if (!(step > 0.0) || !std::isfinite(step)) throw ParameterError("filter table step must be positive");
    if (!(r_max >= 0.0) || !std::isfinite(r_max)) throw ParameterError("filter table r_max must be >= 0");
    if (!(tol > 0.0)) throw ParameterError("filter table tolerance must be positive");
    if (r_max / step > 1e6) throw ParameterError("filter table too large (r_max/step > 1e6)");
    const auto n = static_cast<std::size_t>(std::floor(r_max / step + 1e-9)) + 1;
    std::vector<double> values(n);
    parallel_for(n, 0, [&](std::size_t i) {
        values[i] = eval_filter_radial(static_cast<double>(i) * step, tol);
    });
    FilterTableParams p{r_max, step, tol};
    std::map<std::string, std::string> prov{{"method", "polar-midpoint adaptive Gauss-Legendre"}};
    return FilterTable(p, std::move(values), std::move(prov));
}

// ---------------------------------------------------------------------------
// Cache I/O

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string filter_cache_filename(const FilterTableParams& p) {
    return "filter_r" + g17(p.r_max) + "_s" + g17(p.step) + "_t" + g17(p.tol) + ".csv";
}

void save_filter_table(const FilterTable& table, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write filter table to " + tmp);
        out << "# kind: qcqp-filter-table\n";
        out << "# r_max: " << g17(table.r_max()) << "\n";
        out << "# step: " << g17(table.step()) << "\n";
        out << "# tol: " << g17(table.quad_tolerance()) << "\n";
        out << "# count: " << table.values().size() << "\n";
        out << "# checksum: " << table.checksum() << "\n";
        for (const auto& [k, v] : table.provenance()) out << "# " << k << ": " << v << "\n";
        out << "r,omega\n";
        for (std::size_t i = 0; i < table.values().size(); ++i)
            out << g17(static_cast<double>(i) * table.step()) << "," << g17(table.values()[i]) << "\n";
        if (!out) throw DataError("failed writing filter table " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

FilterTable load_filter_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open filter table " + path.string());
    std::map<std::string, std::string> header;
    std::vector<double> values;
    std::string line;
    std::size_t lineno = 0;
    bool columns_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            auto key = line.substr(1, colon - 1);
            auto val = line.substr(colon + 1);
            auto trim = [](std::string& s) {
                s.erase(0, s.find_first_not_of(" \t"));
                s.erase(s.find_last_not_of(" \t\r") + 1);
            };
            trim(key);
            trim(val);
            header[key] = val;
            continue;
        }
        if (!columns_seen) {
            if (line.rfind("r,omega", 0) != 0)
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'r,omega'");
            columns_seen = true;
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
        char* end = nullptr;
        const double v = std::strtod(line.c_str() + comma + 1, &end);
        if (end == line.c_str() + comma + 1)
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad value");
        values.push_back(v);
    }
    for (const char* key : {"kind", "r_max", "step", "tol", "count", "checksum"})
        if (!header.count(key)) throw DataError(path.string() + ": missing header '" + key + "'");
    if (header["kind"] != "qcqp-filter-table") throw DataError(path.string() + ": wrong kind");
    FilterTableParams p{std::stod(header["r_max"]), std::stod(header["step"]), std::stod(header["tol"])};
    if (std::to_string(values.size()) != header["count"])
        throw DataError(path.string() + ": row count does not match header");
    const std::string expected = header["checksum"];
    header.erase("kind");
    for (const char* key : {"r_max", "step", "tol", "count", "checksum"}) header.erase(key);
    FilterTable t(p, std::move(values), std::move(header));
    if (t.checksum() != expected) throw DataError(path.string() + ": checksum mismatch");
    return t;
}

FilterCacheResult load_or_build_filter_table(const FilterTableParams& params,
                                             const std::filesystem::path& cache_dir) {
    const auto path = cache_dir / filter_cache_filename(params);
    if (std::filesystem::exists(path)) {
        try {
            FilterTable t = load_filter_table(path);
            const auto& q = t.params();
            if (q.r_max == params.r_max && q.step == params.step && q.tol == params.tol)
                return {std::move(t), true, path};
        } catch (const Error&) {
            // fall through and rebuild a damaged cache entry
        }
    }
    FilterTable t = build_filter_table(params);
    save_filter_table(t, path);
    return {std::move(t), false, path};
}

// ---------------------------------------------------------------------------

double filter_value(const FilterTable& table, std::complex<double> beta, double w, OutOfRange mode) {
    if (!(w > 0.0)) throw ParameterError("filter width w must be positive");
    const double r = std::abs(beta) / w;
    if (r > table.r_max()) {
        if (mode == OutOfRange::Truncate) return 0.0;
        std::ostringstream msg;
        msg << "|beta|/w = " << r << " exceeds filter table r_max = " << table.r_max()
            << "; extend the table or request truncation";
        throw ParameterError(msg.str());
    }
    return table.omega(r);
}

double kernel_value(const FilterTable& table, std::complex<double> alpha, double w, double tol) {
    if (!(w > 0.0)) throw ParameterError("filter width w must be positive");
    if (!(tol > 0.0)) throw ParameterError("kernel tolerance must be positive");
    const double a = std::abs(alpha);
    const double b_max = w * table.radius_below(std::log(1e-18));
    auto f = [&](double b) { return b * table.omega(b / w) * bessel_j0(2.0 * b * a); };
    const int panels = 4 + static_cast<int>(std::ceil(2.0 * a * b_max / kPi));
    try {
        return (2.0 / kPi) * integrate_adaptive(f, 0.0, b_max, tol * kPi / 2.0, panels).value;
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("kernel quadrature failed: ") + e.what(),
                             e.achieved_error() * 2.0 / kPi);
    }
}

double compensated_cutoff(const FilterTable& table, double w, double threshold) {
    if (!(w > 0.0)) throw ParameterError("filter width w must be positive");
    const double log_thr = std::log(threshold);
    const auto& v = table.values();
    std::size_t i = v.size();
    auto g = [&](std::size_t k) {
        const double b = w * static_cast<double>(k) * table.step();
        return 0.5 * b * b + std::log(v[k]);
    };
    while (i > 0 && g(i - 1) < log_thr) --i;
    if (i == v.size()) {
        std::ostringstream msg;
        msg << "e^{b^2/2} Omega(b/w) does not fall below " << threshold << " within the filter table"
            << " (w = " << w << ", r_max = " << table.r_max() << "); extend the table";
        throw NumericalError(msg.str());
    }
    return w * static_cast<double>(i) * table.step();
}

}  // namespace qcqp
