#include "qcqp/numeric.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_sf_bessel.h>

#include <boost/math/quadrature/gauss.hpp>

#include <atomic>
#include <cstdio>
#include <cstring>
#include <thread>

namespace qcqp {

namespace {

struct GslHandlerOff {
    GslHandlerOff() { gsl_set_error_handler_off(); }
};
const GslHandlerOff gsl_handler_off;

}  // namespace

double bessel_j0(double x) { return gsl_sf_bessel_J0(x); }

double bessel_i0_scaled(double x) { return gsl_sf_bessel_I0_scaled(x); }

const QuadratureNodes& gauss_legendre_20() {
    static const QuadratureNodes rule = [] {
        using Rule = boost::math::quadrature::gauss<double, 20>;
        QuadratureNodes r;
        const auto& xs = Rule::abscissa();
        const auto& ws = Rule::weights();
        for (std::size_t i = xs.size(); i-- > 0;) {
            r.x.push_back(-xs[i]);
            r.w.push_back(ws[i]);
        }
        for (std::size_t i = 0; i < xs.size(); ++i) {
            r.x.push_back(xs[i]);
            r.w.push_back(ws[i]);
        }
        return r;
    }();
    return rule;
}

QuadratureNodes composite_gauss_legendre(double a, double b, int panels) {
    if (panels < 1) throw ParameterError("composite rule needs at least one panel");
    const auto& r = gauss_legendre_20();
    QuadratureNodes out;
    out.x.reserve(r.size() * panels);
    out.w.reserve(r.size() * panels);
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double c = a + (p + 0.5) * h;
        for (std::size_t i = 0; i < r.size(); ++i) {
            out.x.push_back(c + 0.5 * h * r.x[i]);
            out.w.push_back(0.5 * h * r.w[i]);
        }
    }
    return out;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 0) workers = default_workers();
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                bool expected = false;
                if (failed.compare_exchange_strong(expected, true)) failure = std::current_exception();
                return;
            }
        }
    };
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

int default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::vector<double> uniform_axis(double lo, double hi, double step) {
    if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo)
        throw ParameterError("invalid axis specification");
    const double span = (hi - lo) / step;
    if (span > 1e7) throw ParameterError("axis has too many points");
    const auto n = static_cast<std::size_t>(std::floor(span + 1e-6)) + 1;
    std::vector<double> axis(n);
    for (std::size_t i = 0; i < n; ++i) axis[i] = lo + static_cast<double>(i) * step;
    return axis;
}

std::vector<double> trapezoid_weights(const std::vector<double>& axis) {
    std::vector<double> w(axis.size(), 0.0);
    if (axis.size() < 2) {
        if (!w.empty()) w[0] = 1.0;
        return w;
    }
    for (std::size_t i = 0; i + 1 < axis.size(); ++i) {
        const double h = axis[i + 1] - axis[i];
        w[i] += 0.5 * h;
        w[i + 1] += 0.5 * h;
    }
    return w;
}

std::string fnv1a_hex(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fnv1a_hex(std::span<const double> values) {
    return fnv1a_hex(values.data(), values.size_bytes());
}

}  // namespace qcqp
