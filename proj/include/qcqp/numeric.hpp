#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qcqp/errors.hpp"

namespace qcqp {

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Special functions (GSL backed).
double bessel_j0(double x);
/// e^{-|x|} I0(x); finite for every real x.
double bessel_i0_scaled(double x);

// ---------------------------------------------------------------------------
// Compensated (Neumaier) summation.
class NeumaierSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    void add(const NeumaierSum& o) noexcept {
        add(o.sum_);
        add(o.comp_);
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Gauss-Legendre rules.
struct QuadratureNodes {
    std::vector<double> x;
    std::vector<double> w;
    std::size_t size() const noexcept { return x.size(); }
};

/// 20-point Gauss-Legendre rule on [-1, 1].
const QuadratureNodes& gauss_legendre_20();

/// Composite 20-point rule with `panels` equal panels on [a, b].
QuadratureNodes composite_gauss_legendre(double a, double b, int panels);

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    long evaluations = 0;
};

namespace detail {
template <class F>
double gl20(F& f, double a, double b, long& evals) {
    const auto& r = gauss_legendre_20();
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.w[i] * f(c + h * r.x[i]);
    evals += static_cast<long>(r.size());
    return s * h;
}
}  // namespace detail

/// Globally adaptive Gauss-Legendre quadrature on [a, b].
///
/// Each panel carries the 20-point value on the whole panel and on its two
/// halves; the difference is the panel error. The panel with the largest
/// error is bisected until the summed error drops below `abs_tol`. Throws
/// NumericalError (with the reached estimate) once `max_panels` is hit.
template <class F>
QuadResult integrate_adaptive(F&& f, double a, double b, double abs_tol,
                              int initial_panels = 4, int max_panels = 1 << 14) {
    struct Panel {
        double a, b, coarse, left, right;
        double fine() const { return left + right; }
        double err() const { return std::abs(left + right - coarse); }
        bool operator<(const Panel& o) const { return err() < o.err(); }
    };
    QuadResult res;
    if (!(b > a)) return res;
    std::priority_queue<Panel> heap;
    double err = 0.0;
    auto push = [&](double lo, double hi, double coarse) {
        const double mid = 0.5 * (lo + hi);
        Panel p{lo, hi, coarse, detail::gl20(f, lo, mid, res.evaluations),
                detail::gl20(f, mid, hi, res.evaluations)};
        err += p.err();
        heap.push(p);
    };
    initial_panels = std::max(1, initial_panels);
    const double h = (b - a) / initial_panels;
    for (int i = 0; i < initial_panels; ++i) {
        const double lo = a + i * h;
        const double hi = (i + 1 == initial_panels) ? b : a + (i + 1) * h;
        push(lo, hi, detail::gl20(f, lo, hi, res.evaluations));
    }
    int panels = initial_panels;
    while (err > abs_tol) {
        if (panels >= max_panels) {
            std::ostringstream msg;
            msg << "adaptive quadrature did not reach tolerance " << abs_tol
                << " on [" << a << ", " << b << "] (achieved " << err << ")";
            throw NumericalError(msg.str(), err);
        }
        const Panel worst = heap.top();
        heap.pop();
        err -= worst.err();
        const double mid = 0.5 * (worst.a + worst.b);
        push(worst.a, mid, worst.left);
        push(mid, worst.b, worst.right);
        ++panels;
    }
    NeumaierSum total;
    double e = 0.0;
    while (!heap.empty()) {
        total.add(heap.top().fine());
        e += heap.top().err();
        heap.pop();
    }
    res.value = total.value();
    res.error = e;
    return res;
}

// ---------------------------------------------------------------------------
// Deterministic parallelism.

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Work items are
/// assigned by index, so results written per index do not depend on the
/// worker count. workers <= 1 runs inline.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

/// Number of workers used when a caller passes 0.
int default_workers();

/// SplitMix64 mixing; used to derive independent RNG substreams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Small helpers.

/// Uniform axis lo, lo+step, ..., up to hi (inclusive within step/1e6).
std::vector<double> uniform_axis(double lo, double hi, double step);

/// Trapezoid weights for a uniform axis.
std::vector<double> trapezoid_weights(const std::vector<double>& axis);

/// Stable 64-bit FNV-1a checksum of raw bytes, rendered as 16 hex digits.
std::string fnv1a_hex(const void* data, std::size_t bytes);
std::string fnv1a_hex(std::span<const double> values);

}  // namespace qcqp
