#include "qcqp/quasiprob.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "json.hpp"

#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"

namespace qcqp {

namespace {

constexpr double kTruncation = 1e-14;

void require_width(double w) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ParameterError("width parameter w must be > 0");
}

void require_tol(double tol) {
    if (!(tol > 0.0)) throw ParameterError("tolerance must be > 0");
}

std::string ordering_name(Ordering o) { return o == Ordering::FilteredP ? "filtered-p" : "wigner"; }
std::string axes_name(AxesKind a) { return a == AxesKind::Radial ? "radial" : "cartesian"; }

std::string mode_letter(int k) { return std::string(1, static_cast<char>('A' + k)); }

std::vector<std::string> axis_labels(const QPGrid& g) {
    std::vector<std::string> out;
    for (int k = 0; k < g.mode_count; ++k) {
        if (g.axes_kind == AxesKind::Radial) {
            out.push_back("alpha" + mode_letter(k));
        } else {
            out.push_back("re" + mode_letter(k));
            out.push_back("im" + mode_letter(k));
        }
    }
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Per-mode weight in the Fourier integrand: ln Ω(b/w) for P_QC, -b²/2 for
// the Wigner function.
struct Weight {
    std::function<double(double)> log_weight;
    double b_max = 0.0;
};

using LogWeight = std::function<double(double)>;

// sup |Φ| e^{Σ lw(b_k)} over the shell max_k |β_k| = r. Radial states probe
// the quarter-plane shell of the modulus pair.
double radial_shell(const CharacteristicFunction& cf, const LogWeight& lw, double r) {
    if (cf.mode_count() == 1) return std::abs(cf.radial(std::vector<double>{r}, lw(r)));
    double s = 0.0;
    for (int i = 0; i <= 40; ++i) {
        const double t = r * i / 40.0;
        const double l = lw(r) + lw(t);
        s = std::max(s, std::abs(cf.radial(std::vector<double>{r, t}, l)));
        s = std::max(s, std::abs(cf.radial(std::vector<double>{t, r}, l)));
    }
    return s;
}

// Axis directions plus 64 fixed random unit directions in C^n.
std::vector<std::vector<cplx>> probe_directions(int n) {
    std::vector<std::vector<cplx>> dirs;
    for (int k = 0; k < n; ++k) {
        for (cplx u : {cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)}) {
            std::vector<cplx> d(n, 0.0);
            d[k] = u;
            dirs.push_back(d);
        }
    }
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> g;
    for (int i = 0; i < 64; ++i) {
        std::vector<cplx> d(n);
        double s = 0.0;
        for (auto& z : d) {
            z = cplx(g(rng), g(rng));
            s += std::norm(z);
        }
        for (auto& z : d) z /= std::sqrt(s);
        dirs.push_back(d);
    }
    return dirs;
}

double general_shell(const CharacteristicFunction& cf, const LogWeight& lw,
                     const std::vector<std::vector<cplx>>& dirs, double r) {
    const int n = cf.mode_count();
    std::vector<cplx> beta(n);
    double s = 0.0;
    for (const auto& d : dirs) {
        double l = 0.0;
        for (int k = 0; k < n; ++k) {
            beta[k] = r * d[k];
            l += lw(std::abs(beta[k]));
        }
        const double v = std::abs(cf(beta)) * std::exp(l);
        if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        s = std::max(s, v);
    }
    return s;
}

constexpr double kShellStep = 0.25;

// Smallest B with the shell sup below the truncation level on [B, B + 5].
double scan_up(const std::function<double(double)>& shell) {
    int run = 0;
    for (double r = kShellStep; r <= 200.0; r += kShellStep) {
        run = shell(r) < kTruncation ? run + 1 : 0;
        if (run * kShellStep >= 5.0) return r - 5.0 + kShellStep;
    }
    throw NumericalError("Gaussian-weighted characteristic function does not decay below 1e-14 by |beta| = 200");
}

// Tightens an upper cutoff: the smallest B such that the shell sup stays below
// the truncation level on [B, b_hi].
double scan_down(const std::function<double(double)>& shell, double b_hi) {
    for (double r = b_hi; r > 0.0; r -= kShellStep)
        if (!(shell(r) < kTruncation)) return std::min(b_hi, r + kShellStep);
    return std::min(b_hi, kShellStep);
}

LogWeight filter_log_weight(const FilterTable& table, double w) {
    return [&table, w](double b) { return table.log_omega(std::min(b / w, table.r_max())); };
}

// The compensated cutoff bounds the integrand for every state through
// |Φ| <= e^{|β|²/2}; the scan trims it to where this state's integrand
// actually dies out.
Weight filter_weight_radial(const CharacteristicFunction& cf, const FilterTable& table, double w) {
    Weight wt{filter_log_weight(table, w), compensated_cutoff(table, w, kTruncation)};
    wt.b_max = scan_down([&](double r) { return radial_shell(cf, wt.log_weight, r); }, wt.b_max);
    return wt;
}

Weight filter_weight_general(const CharacteristicFunction& cf, const FilterTable& table, double w) {
    Weight wt{filter_log_weight(table, w), compensated_cutoff(table, w, kTruncation)};
    const auto dirs = probe_directions(cf.mode_count());
    wt.b_max = scan_down([&](double r) { return general_shell(cf, wt.log_weight, dirs, r); }, wt.b_max);
    return wt;
}

Weight wigner_weight_radial(const CharacteristicFunction& cf) {
    LogWeight lw = [](double b) { return -0.5 * b * b; };
    const double b = scan_up([&](double r) { return radial_shell(cf, lw, r); });
    return {lw, b};
}

Weight wigner_weight_general(const CharacteristicFunction& cf) {
    LogWeight lw = [](double b) { return -0.5 * b * b; };
    const auto dirs = probe_directions(cf.mode_count());
    const double b = scan_up([&](double r) { return general_shell(cf, lw, dirs, r); });
    return {lw, b};
}

// ---------------------------------------------------------------------------
// Radial engine: composite Gauss-Legendre in b with panel doubling.

struct RadialResult {
    std::vector<double> values;  // row-major over the radial axes
    double achieved = 0.0;
};

std::vector<double> radial_level(const CharacteristicFunction& cf, const Weight& wt,
                                 const std::vector<std::vector<double>>& axes, int panels, int workers) {
    const auto q = composite_gauss_legendre(0.0, wt.b_max, panels);
    const auto nb = static_cast<Eigen::Index>(q.size());
    std::vector<double> lw(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) lw[j] = wt.log_weight(q.x[j]);

    auto bessel_matrix = [&](const std::vector<double>& radii) {
        Eigen::MatrixXd j0(static_cast<Eigen::Index>(radii.size()), nb);
        for (Eigen::Index i = 0; i < j0.rows(); ++i)
            for (Eigen::Index j = 0; j < nb; ++j) j0(i, j) = bessel_j0(2.0 * q.x[j] * radii[i]);
        return j0;
    };

    if (cf.mode_count() == 1) {
        Eigen::VectorXd c(nb);
        for (Eigen::Index j = 0; j < nb; ++j) {
            const double b = q.x[j];
            c[j] = q.w[j] * b * cf.radial(std::vector<double>{b}, lw[j]);
        }
        const Eigen::VectorXd p = (2.0 / kPi) * (bessel_matrix(axes[0]) * c);
        return {p.data(), p.data() + p.size()};
    }

    Eigen::MatrixXd m(nb, nb);
    parallel_for(static_cast<std::size_t>(nb), workers, [&](std::size_t jj) {
        const auto j = static_cast<Eigen::Index>(jj);
        double moduli[2] = {q.x[jj], 0.0};
        for (Eigen::Index k = 0; k < nb; ++k) {
            moduli[1] = q.x[k];
            m(j, k) = q.w[jj] * q.w[k] * moduli[0] * moduli[1] * cf.radial(moduli, lw[jj] + lw[k]);
        }
    });
    const Eigen::MatrixXd ja = bessel_matrix(axes[0]);
    const Eigen::MatrixXd jb = bessel_matrix(axes[1]);
    // Row-major output with the B axis fastest.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> p =
        (4.0 / (kPi * kPi)) * (ja * m * jb.transpose());
    return {p.data(), p.data() + p.size()};
}

RadialResult radial_engine(const CharacteristicFunction& cf, const Weight& wt,
                           const std::vector<std::vector<double>>& axes, double tol,
                           const RadialOptions& opt) {
    const int n = cf.mode_count();
    if (n != 1 && n != 2) throw ParameterError("radial path supports one or two modes");
    if (static_cast<int>(axes.size()) != n) throw ParameterError("need one radial axis per mode");
    double a_max = 0.0;
    for (const auto& ax : axes) {
        if (ax.empty()) throw ParameterError("radial axis is empty");
        for (double a : ax) {
            if (!(a >= 0.0) || !std::isfinite(a)) throw ParameterError("radial coordinates must be finite and >= 0");
            a_max = std::max(a_max, a);
        }
    }
    const double h0 = std::min(1.0, 4.0 / (1.0 + 2.0 * a_max));
    int panels = std::max(2, static_cast<int>(std::ceil(wt.b_max / h0)));
    auto prev = radial_level(cf, wt, axes, panels, opt.workers);
    double diff = 0.0;
    while (true) {
        if (20 * 2 * panels > opt.max_nodes) {
            std::ostringstream msg;
            msg << "radial quadrature did not reach tolerance " << tol << " within " << opt.max_nodes
                << " nodes (achieved " << diff << ")";
            throw NumericalError(msg.str(), diff);
        }
        panels *= 2;
        auto cur = radial_level(cf, wt, axes, panels, opt.workers);
        diff = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) diff = std::max(diff, std::abs(cur[i] - prev[i]));
        if (!std::isfinite(diff)) throw NumericalError("non-finite value in radial quadrature");
        if (diff <= tol) return {std::move(cur), diff};
        prev = std::move(cur);
    }
}

void require_radial(const CharacteristicFunction& cf) {
    if (!verify_phase_invariance(cf, 20))
        throw ParameterError("radial axes require a phase-invariant state (" + cf.label() + " is not)");
}

QPGrid make_radial_grid(const CharacteristicFunction& cf, const std::vector<std::vector<double>>& axes,
                        RadialResult&& r, double tol) {
    QPGrid g;
    g.mode_count = cf.mode_count();
    g.axes_kind = AxesKind::Radial;
    g.axes = axes;
    g.values = std::move(r.values);
    g.tolerance = tol;
    g.achieved_error = r.achieved;
    g.provenance["state"] = cf.label();
    g.validate();
    return g;
}

// ---------------------------------------------------------------------------
// Cartesian engine: uniform trapezoid grid over the disc |β_k| <= B per mode.

struct ModeNodes {
    std::vector<cplx> beta;
    std::vector<double> weight;  // e^{log weight}
};

ModeNodes mode_nodes(const Weight& wt, double h_target) {
    const double b = wt.b_max;
    const int n = std::max(3, static_cast<int>(std::ceil(2.0 * b / h_target)) + 1);
    const double h = 2.0 * b / (n - 1);
    ModeNodes nodes;
    for (int i = 0; i < n; ++i) {
        const double u = -b + i * h;
        for (int j = 0; j < n; ++j) {
            const double v = -b + j * h;
            const double r = std::hypot(u, v);
            if (r > b) continue;
            nodes.beta.emplace_back(u, v);
            nodes.weight.push_back(std::exp(wt.log_weight(r)));
        }
    }
    (void)h;
    return nodes;
}

double node_step(const Weight& wt, double h_target) {
    const int n = std::max(3, static_cast<int>(std::ceil(2.0 * wt.b_max / h_target)) + 1);
    return 2.0 * wt.b_max / (n - 1);
}

// e^{α β* - α* β} = e^{2i(c u - a v)} for α = a + ic, β = u + iv.
Eigen::MatrixXcd phase_matrix(const std::vector<cplx>& alphas, const ModeNodes& nodes) {
    Eigen::MatrixXcd e(static_cast<Eigen::Index>(alphas.size()), static_cast<Eigen::Index>(nodes.beta.size()));
    for (Eigen::Index i = 0; i < e.rows(); ++i) {
        const cplx a = alphas[static_cast<std::size_t>(i)];
        for (Eigen::Index s = 0; s < e.cols(); ++s) {
            const cplx b = nodes.beta[static_cast<std::size_t>(s)];
            e(i, s) = std::polar(1.0, 2.0 * (a.imag() * b.real() - a.real() * b.imag()));
        }
    }
    return e;
}

// Points are either a product of per-mode sets (mode 0 major) or a list of
// tuples where points[k][i] is the mode-k coordinate of tuple i.
struct PointSet {
    std::vector<std::vector<cplx>> per_mode;
    bool paired = false;

    std::size_t size() const {
        if (paired) return per_mode.at(0).size();
        std::size_t n = 1;
        for (const auto& p : per_mode) n *= p.size();
        return n;
    }
    // Per-mode point index of the flat output index.
    std::size_t index(std::size_t flat, int mode) const {
        if (paired) return flat;
        for (std::size_t k = per_mode.size(); k-- > static_cast<std::size_t>(mode) + 1;) flat /= per_mode[k].size();
        return flat % per_mode[static_cast<std::size_t>(mode)].size();
    }
};

std::vector<double> cartesian_level(const CharacteristicFunction& cf, const Weight& wt, const PointSet& points,
                                    double h_target, const CartesianOptions& opt) {
    const int n = cf.mode_count();
    const ModeNodes nodes = mode_nodes(wt, h_target);
    const double h = node_step(wt, h_target);
    const double cell = h * h / (kPi * kPi);
    const auto S = static_cast<Eigen::Index>(nodes.beta.size());

    if (n == 1) {
        Eigen::VectorXcd f(S);
        cplx b[1];
        for (Eigen::Index s = 0; s < S; ++s) {
            b[0] = nodes.beta[static_cast<std::size_t>(s)];
            f[s] = cf(std::span<const cplx>(b, 1)) * nodes.weight[static_cast<std::size_t>(s)];
        }
        const Eigen::VectorXcd p = phase_matrix(points.per_mode[0], nodes) * f;
        std::vector<double> out(static_cast<std::size_t>(p.size()));
        for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p[i].real() * cell;
        return out;
    }

    if (n == 2) {
        // Slices over the mode-1 nodes; mode 2 is contracted by a matrix product.
        const Eigen::MatrixXcd e1 = phase_matrix(points.per_mode[0], nodes);
        const Eigen::MatrixXcd e2t = phase_matrix(points.per_mode[1], nodes).transpose();
        const auto n1 = e1.rows(), n2 = e2t.cols();
        constexpr Eigen::Index kChunk = 64;
        const auto chunks = static_cast<std::size_t>((S + kChunk - 1) / kChunk);
        std::vector<Eigen::MatrixXcd> partial(chunks);
        parallel_for(chunks, opt.workers, [&](std::size_t c) {
            const Eigen::Index lo = static_cast<Eigen::Index>(c) * kChunk;
            const Eigen::Index len = std::min(kChunk, S - lo);
            Eigen::MatrixXcd f(len, S);
            cplx b[2];
            for (Eigen::Index i = 0; i < len; ++i) {
                b[0] = nodes.beta[static_cast<std::size_t>(lo + i)];
                const double w0 = nodes.weight[static_cast<std::size_t>(lo + i)];
                for (Eigen::Index s = 0; s < S; ++s) {
                    b[1] = nodes.beta[static_cast<std::size_t>(s)];
                    f(i, s) = cf(std::span<const cplx>(b, 2)) * (w0 * nodes.weight[static_cast<std::size_t>(s)]);
                }
            }
            const Eigen::MatrixXcd g = f * e2t;  // len × n2
            if (points.paired)
                partial[c] = (e1.middleCols(lo, len).transpose().cwiseProduct(g)).colwise().sum().transpose();
            else
                partial[c] = e1.middleCols(lo, len) * g;
        });
        Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n1, points.paired ? 1 : n2);
        for (const auto& part : partial) p += part;
        std::vector<double> out(static_cast<std::size_t>(p.size()));
        for (Eigen::Index i = 0; i < p.rows(); ++i)
            for (Eigen::Index j = 0; j < p.cols(); ++j)
                out[static_cast<std::size_t>(i * p.cols() + j)] = p(i, j).real() * cell * cell;
        return out;
    }

    // Brute force for three or more modes (guarded by the caller).
    std::vector<Eigen::MatrixXcd> phases;
    for (int k = 0; k < n; ++k) phases.push_back(phase_matrix(points.per_mode[static_cast<std::size_t>(k)], nodes));
    const std::size_t total = points.size();
    std::vector<std::size_t> node_idx(static_cast<std::size_t>(n), 0);
    std::vector<cplx> beta(static_cast<std::size_t>(n));
    std::vector<cplx> acc(total, 0.0);
    while (true) {
        double wprod = 1.0;
        for (int k = 0; k < n; ++k) {
            beta[k] = nodes.beta[node_idx[k]];
            wprod *= nodes.weight[node_idx[k]];
        }
        const cplx f = cf(beta) * wprod;
        for (std::size_t flat = 0; flat < total; ++flat) {
            cplx ph = 1.0;
            for (int k = 0; k < n; ++k)
                ph *= phases[static_cast<std::size_t>(k)](static_cast<Eigen::Index>(points.index(flat, k)),
                                                          static_cast<Eigen::Index>(node_idx[k]));
            acc[flat] += f * ph;
        }
        int k = n - 1;
        while (k >= 0 && ++node_idx[k] == nodes.beta.size()) node_idx[k--] = 0;
        if (k < 0) break;
    }
    std::vector<double> out(total);
    const double scale = std::pow(cell, n);
    for (std::size_t i = 0; i < total; ++i) out[i] = acc[i].real() * scale;
    return out;
}

struct CartesianResult {
    std::vector<double> values;
    double achieved = 0.0;
};

CartesianResult cartesian_refined(const CharacteristicFunction& cf, const Weight& wt, const PointSet& points,
                                  double tol, const CartesianOptions& opt) {
    if (!(opt.step > 0.0)) throw ParameterError("Cartesian step must be > 0");
    double h = opt.step;
    auto prev = cartesian_level(cf, wt, points, h, opt);
    if (!opt.verify) return {std::move(prev), 0.0};
    double diff = 0.0;
    for (int refine = 0; refine < 4; ++refine) {
        h *= 0.8;
        auto cur = cartesian_level(cf, wt, points, h, opt);
        diff = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) diff = std::max(diff, std::abs(cur[i] - prev[i]));
        if (diff <= tol) return {std::move(cur), diff};
        prev = std::move(cur);
    }
    std::ostringstream msg;
    msg << "Cartesian quadrature did not reach tolerance " << tol << " (achieved " << diff << ")";
    throw NumericalError(msg.str(), diff);
}

// Factorized product states reduce to single-mode transforms.
CartesianResult cartesian_engine(const CharacteristicFunction& cf, const Weight& wt, const PointSet& points,
                                 double tol, const CartesianOptions& opt) {
    const int n = cf.mode_count();
    const auto& factors = cf.factors();
    if (n > 1 && static_cast<int>(factors.size()) == n) {
        std::vector<std::vector<double>> parts;
        double achieved = 0.0;
        for (int k = 0; k < n; ++k) {
            const PointSet single{{points.per_mode[static_cast<std::size_t>(k)]}, false};
            auto r = cartesian_refined(factors[static_cast<std::size_t>(k)], wt, single, tol / n, opt);
            achieved += r.achieved;
            parts.push_back(std::move(r.values));
        }
        std::vector<double> out(points.size(), 1.0);
        for (std::size_t flat = 0; flat < out.size(); ++flat)
            for (int k = 0; k < n; ++k) out[flat] *= parts[static_cast<std::size_t>(k)][points.index(flat, k)];
        return {std::move(out), achieved};
    }
    if (n > 2 && !opt.allow_large)
        throw ParameterError("general quadrature over more than two non-factorized modes needs allow_large");
    return cartesian_refined(cf, wt, points, tol, opt);
}

PointSet mode_points(const std::vector<std::vector<double>>& axes, int modes) {
    if (static_cast<int>(axes.size()) != 2 * modes)
        throw ParameterError("Cartesian grids need two axes (Re, Im) per mode");
    PointSet pts;
    pts.per_mode.resize(static_cast<std::size_t>(modes));
    for (int k = 0; k < modes; ++k) {
        const auto& re = axes[2 * static_cast<std::size_t>(k)];
        const auto& im = axes[2 * static_cast<std::size_t>(k) + 1];
        if (re.empty() || im.empty()) throw ParameterError("Cartesian axis is empty");
        for (double a : re)
            for (double c : im) pts.per_mode[static_cast<std::size_t>(k)].emplace_back(a, c);
    }
    return pts;
}

void check_points(const CharacteristicFunction& cf, std::span<const cplx> alphas) {
    if (static_cast<int>(alphas.size()) != cf.mode_count())
        throw ParameterError("number of phase-space coordinates does not match the mode count");
    for (const auto& a : alphas)
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) throw ParameterError("non-finite alpha");
}

PointSet paired_points(const CharacteristicFunction& cf, const std::vector<std::vector<cplx>>& tuples) {
    if (tuples.empty()) throw ParameterError("no phase-space points given");
    PointSet pts;
    pts.paired = true;
    pts.per_mode.resize(static_cast<std::size_t>(cf.mode_count()));
    for (const auto& t : tuples) {
        check_points(cf, t);
        for (int k = 0; k < cf.mode_count(); ++k) pts.per_mode[static_cast<std::size_t>(k)].push_back(t[static_cast<std::size_t>(k)]);
    }
    return pts;
}

}  // namespace

// ---------------------------------------------------------------------------
// QPGrid

std::vector<std::size_t> QPGrid::shape() const {
    std::vector<std::size_t> s;
    for (const auto& a : axes) s.push_back(a.size());
    return s;
}

std::vector<double> QPGrid::coordinates(std::size_t flat) const {
    std::vector<double> c(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
        c[k] = axes[k][flat % axes[k].size()];
        flat /= axes[k].size();
    }
    return c;
}

double QPGrid::at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != axes.size()) throw ParameterError("index rank mismatch");
    std::size_t flat = 0, k = 0;
    for (std::size_t i : idx) {
        if (i >= axes[k].size()) throw ParameterError("grid index out of range");
        flat = flat * axes[k].size() + i;
        ++k;
    }
    return values[flat];
}

std::vector<double> QPGrid::measure() const {
    std::vector<std::vector<double>> w1;
    for (const auto& ax : axes) {
        auto tw = ax.size() > 1 ? trapezoid_weights(ax) : std::vector<double>{1.0};
        if (axes_kind == AxesKind::Radial)
            for (std::size_t i = 0; i < ax.size(); ++i) tw[i] *= 2.0 * kPi * ax[i];
        w1.push_back(std::move(tw));
    }
    std::vector<double> m(values.size(), 1.0);
    for (std::size_t flat = 0; flat < m.size(); ++flat) {
        std::size_t rem = flat;
        for (std::size_t k = axes.size(); k-- > 0;) {
            m[flat] *= w1[k][rem % axes[k].size()];
            rem /= axes[k].size();
        }
    }
    return m;
}

double QPGrid::normalization() const {
    const auto m = measure();
    NeumaierSum s;
    for (std::size_t i = 0; i < values.size(); ++i) s.add(m[i] * values[i]);
    return s.value();
}

void QPGrid::validate() const {
    const std::size_t per_mode = axes_kind == AxesKind::Radial ? 1 : 2;
    if (mode_count < 1 || axes.size() != per_mode * static_cast<std::size_t>(mode_count))
        throw DataError("grid axes do not match the mode count");
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    if (n != values.size()) throw DataError("grid value count does not match the axes");
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("grid contains non-finite values");
}

// ---------------------------------------------------------------------------
// Mode transforms

ModeTransform::ModeTransform(Eigen::MatrixXcd u) : u_(std::move(u)) {
    if (u_.rows() != u_.cols() || u_.rows() < 1) throw ParameterError("mode transform must be a square matrix");
    const Eigen::MatrixXcd err = u_ * u_.adjoint() - Eigen::MatrixXcd::Identity(u_.rows(), u_.cols());
    if (err.cwiseAbs().maxCoeff() > 1e-10) throw ParameterError("mode transform is not unitary within 1e-10");
}

ModeTransform ModeTransform::compose(const ModeTransform& after) const {
    if (after.mode_count() != mode_count()) throw ParameterError("mode transform dimensions differ");
    return ModeTransform(after.u_ * u_);
}

ModeTransform ModeTransform::identity(int modes) {
    return ModeTransform(Eigen::MatrixXcd::Identity(modes, modes));
}

ModeTransform ModeTransform::beam_splitter_50_50() {
    Eigen::MatrixXcd u(2, 2);
    const double s = 1.0 / std::sqrt(2.0);
    u << s, s, -s, s;
    return ModeTransform(u);
}

CharacteristicFunction transform_modes(const CharacteristicFunction& cf, const ModeTransform& t) {
    if (t.mode_count() != cf.mode_count()) throw ParameterError("mode transform does not match the mode count");
    const Eigen::MatrixXcd uh = t.matrix().adjoint();
    const auto n = static_cast<Eigen::Index>(cf.mode_count());
    auto eval = [cf, uh, n](std::span<const cplx> beta) {
        Eigen::VectorXcd b(n);
        for (Eigen::Index k = 0; k < n; ++k) b[k] = beta[static_cast<std::size_t>(k)];
        const Eigen::VectorXcd r = uh * b;
        return cf(std::span<const cplx>(r.data(), static_cast<std::size_t>(n)));
    };
    return CharacteristicFunction(cf.mode_count(), eval, "transformed(" + cf.label() + ")");
}

// ---------------------------------------------------------------------------
// Public evaluators

double pqc_point_radial(const CharacteristicFunction& cf, const FilterTable& table, double w,
                        std::span<const double> radii, double tol, const RadialOptions& opt) {
    require_width(w);
    require_tol(tol);
    if (static_cast<int>(radii.size()) != cf.mode_count()) throw ParameterError("one radius per mode required");
    require_radial(cf);
    std::vector<std::vector<double>> axes;
    for (double r : radii) axes.push_back({r});
    return radial_engine(cf, filter_weight_radial(cf, table, w), axes, tol, opt).values.at(0);
}

QPGrid pqc_grid(const CharacteristicFunction& cf, const FilterTable& table, double w,
                const std::vector<std::vector<double>>& radial_axes, double tol, const RadialOptions& opt) {
    require_width(w);
    require_tol(tol);
    require_radial(cf);
    QPGrid g = make_radial_grid(cf, radial_axes, radial_engine(cf, filter_weight_radial(cf, table, w), radial_axes, tol, opt), tol);
    g.ordering = Ordering::FilteredP;
    g.w = w;
    g.provenance["filter_checksum"] = table.checksum();
    return g;
}

QPGrid wigner_grid(const CharacteristicFunction& cf, const std::vector<std::vector<double>>& radial_axes,
                   double tol, const RadialOptions& opt) {
    require_tol(tol);
    require_radial(cf);
    const Weight wt = wigner_weight_radial(cf);
    QPGrid g = make_radial_grid(cf, radial_axes, radial_engine(cf, wt, radial_axes, tol, opt), tol);
    g.ordering = Ordering::Wigner;
    g.provenance["b_max"] = fmt(wt.b_max);
    return g;
}

std::vector<double> marginal_pqc(const CharacteristicFunction& cf, const FilterTable& table, double w,
                                 int kept_mode, const std::vector<double>& radii, double tol,
                                 const RadialOptions& opt) {
    if (cf.mode_count() != 2) throw ParameterError("marginal_pqc needs a two-mode state");
    if (kept_mode != 0 && kept_mode != 1) throw ParameterError("kept_mode must be 0 or 1");
    auto eval = [cf, kept_mode](std::span<const cplx> beta) {
        const cplx args[2] = {kept_mode == 0 ? beta[0] : cplx(0.0), kept_mode == 1 ? beta[0] : cplx(0.0)};
        return cf(std::span<const cplx>(args, 2));
    };
    CharacteristicFunction::RadialEvaluator radial;
    if (cf.has_radial()) {
        radial = [cf, kept_mode](std::span<const double> m, double lw) {
            const double args[2] = {kept_mode == 0 ? m[0] : 0.0, kept_mode == 1 ? m[0] : 0.0};
            return cf.radial(std::span<const double>(args, 2), lw);
        };
    }
    const CharacteristicFunction reduced(1, eval, "reduced(" + cf.label() + ")", radial);
    return pqc_grid(reduced, table, w, {radii}, tol, opt).values;
}

std::vector<double> integrate_out_mode(const QPGrid& grid, int traced_mode) {
    if (grid.mode_count != 2 || grid.axes_kind != AxesKind::Radial)
        throw ParameterError("integrate_out_mode expects a two-mode radial grid");
    if (traced_mode != 0 && traced_mode != 1) throw ParameterError("traced_mode must be 0 or 1");
    const auto& tr = grid.axes[static_cast<std::size_t>(traced_mode)];
    const auto& kept = grid.axes[static_cast<std::size_t>(1 - traced_mode)];
    auto tw = trapezoid_weights(tr);
    for (std::size_t i = 0; i < tr.size(); ++i) tw[i] *= 2.0 * kPi * tr[i];
    std::vector<double> out(kept.size());
    const std::size_t nb = grid.axes[1].size();
    for (std::size_t k = 0; k < kept.size(); ++k) {
        NeumaierSum s;
        for (std::size_t t = 0; t < tr.size(); ++t) {
            const std::size_t flat = traced_mode == 0 ? t * nb + k : k * nb + t;
            s.add(tw[t] * grid.values[flat]);
        }
        out[k] = s.value();
    }
    return out;
}

double pqc_point_general(const CharacteristicFunction& cf, const FilterTable& table, double w,
                         std::span<const cplx> alphas, double tol, const CartesianOptions& opt) {
    require_width(w);
    require_tol(tol);
    check_points(cf, alphas);
    return cartesian_engine(cf, filter_weight_general(cf, table, w), paired_points(cf, {{alphas.begin(), alphas.end()}}), tol, opt)
        .values.at(0);
}

std::vector<double> pqc_points_general(const CharacteristicFunction& cf, const FilterTable& table, double w,
                                       const std::vector<std::vector<cplx>>& points, double tol,
                                       const CartesianOptions& opt) {
    require_width(w);
    require_tol(tol);
    return cartesian_engine(cf, filter_weight_general(cf, table, w), paired_points(cf, points), tol, opt).values;
}

QPGrid pqc_grid_cartesian(const CharacteristicFunction& cf, const FilterTable& table, double w,
                          const std::vector<std::vector<double>>& axes, double tol,
                          const CartesianOptions& opt) {
    require_width(w);
    require_tol(tol);
    const auto pts = mode_points(axes, cf.mode_count());
    auto r = cartesian_engine(cf, filter_weight_general(cf, table, w), pts, tol, opt);
    QPGrid g;
    g.mode_count = cf.mode_count();
    g.ordering = Ordering::FilteredP;
    g.axes_kind = AxesKind::Cartesian;
    g.axes = axes;
    g.values = std::move(r.values);
    g.w = w;
    g.tolerance = tol;
    g.achieved_error = r.achieved;
    g.provenance["state"] = cf.label();
    g.provenance["filter_checksum"] = table.checksum();
    g.validate();
    return g;
}

double wigner_point(const CharacteristicFunction& cf, std::span<const cplx> alphas, double tol,
                    const CartesianOptions& opt) {
    require_tol(tol);
    check_points(cf, alphas);
    if (cf.has_radial() && cf.mode_count() <= 2 && verify_phase_invariance(cf, 20)) {
        std::vector<std::vector<double>> axes;
        for (const auto& a : alphas) axes.push_back({std::abs(a)});
        return radial_engine(cf, wigner_weight_radial(cf), axes, tol, RadialOptions{opt.workers}).values.at(0);
    }
    return cartesian_engine(cf, wigner_weight_general(cf), paired_points(cf, {{alphas.begin(), alphas.end()}}), tol, opt)
        .values.at(0);
}

// ---------------------------------------------------------------------------
// Reports and serialization

NegativityReport negativity_scan(const QPGrid& grid) {
    grid.validate();
    NegativityReport r;
    const auto m = grid.measure();
    NeumaierSum neg, norm;
    r.min_value = grid.values[0];
    r.max_value = grid.values[0];
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        const double v = grid.values[i];
        if (v < r.min_value) {
            r.min_value = v;
            r.argmin_index = i;
        }
        r.max_value = std::max(r.max_value, v);
        if (v < 0.0) neg.add(m[i] * v);
        norm.add(m[i] * v);
    }
    r.argmin = grid.coordinates(r.argmin_index);
    r.negative_mass = neg.value();
    r.normalization = norm.value();
    return r;
}

void write_qpgrid_csv(const QPGrid& grid, const std::filesystem::path& path) {
    grid.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write grid " + path.string());
    const auto p_it = grid.provenance.find("p");
    out << "# p=" << (p_it != grid.provenance.end() ? p_it->second : "none")
        << ", w=" << (grid.w ? fmt(*grid.w) : "none") << ", ordering=" << ordering_name(grid.ordering)
        << ", axes=" << axes_name(grid.axes_kind) << "\n";
    out << "# modes=" << grid.mode_count << ", tolerance=" << fmt(grid.tolerance)
        << ", achieved_error=" << fmt(grid.achieved_error) << "\n";
    for (const auto& [k, v] : grid.provenance)
        if (k != "p") out << "# " << k << "=" << v << "\n";
    const auto labels = axis_labels(grid);
    for (const auto& l : labels) out << l << ",";
    out << "value\n";
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        const auto c = grid.coordinates(i);
        std::string line;
        for (double v : c) line += fmt(v) + ",";
        line += fmt(grid.values[i]) + "\n";
        out << line;
    }
    if (!out) throw DataError("error while writing grid " + path.string());
}

QPGrid read_qpgrid_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open grid " + path.string());
    QPGrid g;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    auto parse_kv = [&](const std::string& body) {
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) continue;
            auto key = item.substr(0, eq);
            key.erase(0, key.find_first_not_of(' '));
            const auto val = item.substr(eq + 1);
            if (key == "ordering") g.ordering = val == "wigner" ? Ordering::Wigner : Ordering::FilteredP;
            else if (key == "axes") g.axes_kind = val == "cartesian" ? AxesKind::Cartesian : AxesKind::Radial;
            else if (key == "w") { if (val != "none") g.w = std::stod(val); }
            else if (key == "modes") g.mode_count = std::stoi(val);
            else if (key == "tolerance") g.tolerance = std::stod(val);
            else if (key == "achieved_error") g.achieved_error = std::stod(val);
            else g.provenance[key] = val;
        }
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line[0] == '#') {
            try {
                parse_kv(line.substr(1));
            } catch (const std::exception&) {
                throw DataError("grid line " + std::to_string(lineno) + ": malformed header");
            }
            continue;
        }
        std::stringstream ss(line);
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (header.empty()) {
            header = fields;
            continue;
        }
        if (fields.size() != header.size())
            throw DataError("grid line " + std::to_string(lineno) + ": wrong column count");
        std::vector<double> row;
        for (const auto& x : fields) {
            char* end = nullptr;
            row.push_back(std::strtod(x.c_str(), &end));
            if (end == x.c_str()) throw DataError("grid line " + std::to_string(lineno) + ": invalid number");
        }
        rows.push_back(std::move(row));
    }
    if (header.size() < 2 || rows.empty()) throw DataError("grid file " + path.string() + " holds no values");
    const std::size_t rank = header.size() - 1;
    g.axes.assign(rank, {});
    for (std::size_t k = 0; k < rank; ++k) {
        for (const auto& r : rows)
            if (std::find(g.axes[k].begin(), g.axes[k].end(), r[k]) == g.axes[k].end()) g.axes[k].push_back(r[k]);
    }
    for (const auto& r : rows) g.values.push_back(r[rank]);
    if (g.mode_count == 0) g.mode_count = static_cast<int>(g.axes_kind == AxesKind::Radial ? rank : rank / 2);
    g.validate();
    return g;
}

void write_negativity_json(const NegativityReport& report, const QPGrid& grid,
                           const std::filesystem::path& path) {
    nlohmann::json j;
    j["ordering"] = ordering_name(grid.ordering);
    j["axes"] = axes_name(grid.axes_kind);
    j["modes"] = grid.mode_count;
    j["w"] = grid.w ? nlohmann::json(*grid.w) : nlohmann::json(nullptr);
    j["min_value"] = report.min_value;
    j["max_value"] = report.max_value;
    j["negative_mass"] = report.negative_mass;
    j["normalization"] = report.normalization;
    j["tolerance"] = grid.tolerance;
    j["achieved_error"] = grid.achieved_error;
    j["negative"] = report.min_value < 0.0;
    nlohmann::json arg;
    const auto labels = axis_labels(grid);
    for (std::size_t k = 0; k < labels.size(); ++k) arg[labels[k]] = report.argmin[k];
    j["argmin"] = arg;
    for (const auto& [k, v] : grid.provenance) j["provenance"][k] = v;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace qcqp
