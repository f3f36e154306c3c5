#include "qcqp/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "qcqp/errors.hpp"

namespace qcqp {

namespace {

static_assert(std::endian::native == std::endian::little, "pattern cache assumes little-endian doubles");

constexpr std::size_t kChunkRecords = 1 << 16;
constexpr double kTruncation = 1e-14;

std::size_t axis_count(double span, double step, const char* what) {
    if (!(step > 0.0) || !std::isfinite(step)) throw ParameterError(std::string(what) + " step must be > 0");
    if (!(span >= 0.0) || !std::isfinite(span)) throw ParameterError(std::string(what) + " range must be >= 0");
    const double k = span / step;
    const double kr = std::round(k);
    if (std::abs(k - kr) > 1e-9 * std::max(1.0, k))
        throw ParameterError(std::string(what) + " range must be a whole number of steps");
    if (kr > 1e7) throw ParameterError(std::string(what) + " grid is too large");
    return static_cast<std::size_t>(kr) + 1;
}

// Lagrange weights for the N nodes base..base+N-1 at fractional index t.
template <int N>
void lagrange(double t, long base, double wgt[N]) {
    for (int k = 0; k < N; ++k) {
        double num = 1.0, den = 1.0;
        const double ok = static_cast<double>(base + k);
        for (int m = 0; m < N; ++m) {
            if (m == k) continue;
            const double om = static_cast<double>(base + m);
            num *= t - om;
            den *= ok - om;
        }
        wgt[k] = num / den;
    }
}

// Stencil width across |α|; J₀(2b|α|) varies faster along |α| than the
// cosine does along x at the default steps.
constexpr int kAlphaStencil = 8;

// Stencil start for index coordinate t on n nodes, clamped to the grid.
long clamped_base(double t, std::size_t n) {
    long base = static_cast<long>(std::floor(t)) - 1;
    return std::clamp(base, 0L, static_cast<long>(n) - 4);
}

double pattern_integrand_weight(const FilterTable& table, double b, double w) {
    return b * std::exp(0.5 * b * b + table.log_omega(b / w));
}

}  // namespace

// ---------------------------------------------------------------------------
// PatternTable

PatternTable::PatternTable(PatternTableParams params, std::vector<double> values, std::string filter_checksum,
                           double b_max, double achieved_error)
    : params_(params),
      values_(std::move(values)),
      filter_checksum_(std::move(filter_checksum)),
      b_max_(b_max),
      achieved_(achieved_error) {
    if (!(params_.w > 0.0)) throw ParameterError("pattern table width must be > 0");
    nx_ = axis_count(2.0 * params_.x_max, params_.x_step, "x");
    na_ = axis_count(params_.alpha_max, params_.alpha_step, "alpha");
    if (nx_ < 4 || na_ < kAlphaStencil)
        throw ParameterError("pattern table needs at least 4 x nodes and 8 |alpha| nodes");
    if (values_.size() != nx_ * na_) throw DataError("pattern table value count does not match its grid");
    for (std::size_t i = 0; i < nx_; ++i) {
        for (std::size_t j = 0; j < na_; ++j) {
            const double v = node(i, j);
            if (!std::isfinite(v)) throw NumericalError("pattern table contains non-finite values");
            const double m = node(nx_ - 1 - i, j);
            if (std::abs(v - m) > 1e-8 * std::max(1.0, std::abs(v)))
                throw NumericalError("pattern table is not symmetric in x");
        }
    }
    checksum_ = fnv1a_hex(values_);
}

double PatternTable::operator()(double x, double a) const {
    if (!covers_x(x) || !covers_alpha(a)) {
        std::ostringstream msg;
        msg << "pattern table does not cover (x=" << x << ", |alpha|=" << a << ")";
        throw ParameterError(msg.str());
    }
    return column(a)(x);
}

PatternTable::Column PatternTable::column(double a) const {
    if (!covers_alpha(a)) {
        std::ostringstream msg;
        msg << "pattern table does not cover |alpha| = " << a << " (max " << params_.alpha_max << ")";
        throw ParameterError(msg.str());
    }
    const double t = a / params_.alpha_step;
    // Reflection about |α| = 0 uses the evenness of f in |α|.
    long base = static_cast<long>(std::floor(t)) - (kAlphaStencil / 2 - 1);
    base = std::min(base, static_cast<long>(na_) - kAlphaStencil);
    double wgt[kAlphaStencil];
    lagrange<kAlphaStencil>(t, base, wgt);
    Column c;
    c.x0_ = -params_.x_max;
    c.h_ = params_.x_step;
    c.v_.resize(nx_);
    for (std::size_t i = 0; i < nx_; ++i) {
        double s = 0.0;
        for (int k = 0; k < kAlphaStencil; ++k) {
            const auto j = static_cast<std::size_t>(std::labs(base + k));
            s += wgt[k] * values_[i * na_ + j];
        }
        c.v_[i] = s;
    }
    return c;
}

double PatternTable::Column::operator()(double x) const {
    const double t = (x - x0_) / h_;
    const long base = clamped_base(t, v_.size());
    double wgt[4];
    lagrange<4>(t, base, wgt);
    const auto b = static_cast<std::size_t>(base);
    return wgt[0] * v_[b] + wgt[1] * v_[b + 1] + wgt[2] * v_[b + 2] + wgt[3] * v_[b + 3];
}

PatternTable build_pattern_table(const FilterTable& table, const PatternTableParams& params, int workers) {
    if (!(params.w > 0.0)) throw ParameterError("width parameter w must be > 0");
    if (!(params.tol > 0.0)) throw ParameterError("pattern tolerance must be > 0");
    const std::size_t nx = axis_count(2.0 * params.x_max, params.x_step, "x");
    const std::size_t na = axis_count(params.alpha_max, params.alpha_step, "alpha");
    const double b_max = compensated_cutoff(table, params.w, kTruncation);

    // Only x >= 0 is computed; the negative half is mirrored.
    const std::size_t half = nx / 2;  // index of x = 0
    const std::size_t nxh = nx - half;
    std::vector<double> xs(nxh), as(na);
    for (std::size_t i = 0; i < nxh; ++i) xs[i] = static_cast<double>(i) * params.x_step;
    for (std::size_t j = 0; j < na; ++j) as[j] = static_cast<double>(j) * params.alpha_step;

    auto level = [&](int panels) {
        const auto q = composite_gauss_legendre(0.0, b_max, panels);
        const auto nb = static_cast<Eigen::Index>(q.size());
        Eigen::MatrixXd g(nb, static_cast<Eigen::Index>(na));
        for (Eigen::Index k = 0; k < nb; ++k) {
            const double wk = q.w[k] * pattern_integrand_weight(table, q.x[k], params.w);
            for (std::size_t j = 0; j < na; ++j)
                g(k, static_cast<Eigen::Index>(j)) = wk * bessel_j0(2.0 * q.x[k] * as[j]);
        }
        Eigen::MatrixXd f(static_cast<Eigen::Index>(nxh), static_cast<Eigen::Index>(na));
        constexpr std::size_t kRows = 256;
        const std::size_t blocks = (nxh + kRows - 1) / kRows;
        parallel_for(blocks, workers, [&](std::size_t blk) {
            const std::size_t lo = blk * kRows, len = std::min(kRows, nxh - lo);
            Eigen::MatrixXd c(static_cast<Eigen::Index>(len), nb);
            for (std::size_t i = 0; i < len; ++i)
                for (Eigen::Index k = 0; k < nb; ++k) c(static_cast<Eigen::Index>(i), k) = std::cos(q.x[k] * xs[lo + i]);
            f.middleRows(static_cast<Eigen::Index>(lo), static_cast<Eigen::Index>(len)) = (2.0 / kPi) * (c * g);
        });
        return f;
    };

    const double h0 = std::min(0.5, 3.0 / (params.x_max + 2.0 * params.alpha_max + 1.0));
    int panels = std::max(2, static_cast<int>(std::ceil(b_max / h0)));
    Eigen::MatrixXd prev = level(panels);
    double diff = 0.0;
    for (int round = 0;; ++round) {
        if (round >= 4) {
            std::ostringstream msg;
            msg << "pattern table quadrature did not reach tolerance " << params.tol << " (achieved " << diff << ")";
            throw NumericalError(msg.str(), diff);
        }
        panels *= 2;
        Eigen::MatrixXd cur = level(panels);
        diff = (cur - prev).cwiseAbs().maxCoeff();
        prev = std::move(cur);
        if (diff <= params.tol) break;
    }

    std::vector<double> values(nx * na);
    for (std::size_t i = 0; i < nxh; ++i) {
        for (std::size_t j = 0; j < na; ++j) {
            const double v = prev(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            values[(half + i) * na + j] = v;
            values[(half - i) * na + j] = v;
        }
    }
    return PatternTable(params, std::move(values), table.checksum(), b_max, diff);
}

std::string pattern_cache_filename(const PatternTableParams& p, const std::string& filter_checksum) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "pattern_w%.6g_x%.6g_%.6g_a%.6g_%.6g_tol%.3g_%s.bin", p.w, p.x_max, p.x_step,
                  p.alpha_max, p.alpha_step, p.tol, filter_checksum.substr(0, 8).c_str());
    return buf;
}

void save_pattern_table(const PatternTable& pat, const std::filesystem::path& path) {
    nlohmann::json h;
    const auto& p = pat.params();
    h["format"] = "qcqp-pattern-v1";
    h["w"] = p.w;
    h["x_max"] = p.x_max;
    h["x_step"] = p.x_step;
    h["alpha_max"] = p.alpha_max;
    h["alpha_step"] = p.alpha_step;
    h["tol"] = p.tol;
    h["nx"] = pat.x_count();
    h["na"] = pat.alpha_count();
    h["b_max"] = pat.b_max();
    h["achieved_error"] = pat.achieved_error();
    h["filter_checksum"] = pat.filter_checksum();
    h["checksum"] = pat.checksum();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write pattern table " + path.string());
    out << h.dump() << "\n";
    out.write(reinterpret_cast<const char*>(pat.values().data()),
              static_cast<std::streamsize>(pat.values().size() * sizeof(double)));
    if (!out) throw DataError("error while writing pattern table " + path.string());
}

PatternTable load_pattern_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open pattern table " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("pattern table " + path.string() + " is empty");
    nlohmann::json h;
    try {
        h = nlohmann::json::parse(line);
        if (h.at("format") != "qcqp-pattern-v1") throw DataError("unknown pattern table format");
        PatternTableParams p;
        p.w = h.at("w");
        p.x_max = h.at("x_max");
        p.x_step = h.at("x_step");
        p.alpha_max = h.at("alpha_max");
        p.alpha_step = h.at("alpha_step");
        p.tol = h.at("tol");
        const std::size_t n = h.at("nx").get<std::size_t>() * h.at("na").get<std::size_t>();
        std::vector<double> v(n);
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
            throw DataError("pattern table " + path.string() + " is truncated");
        PatternTable t(p, std::move(v), h.at("filter_checksum"), h.at("b_max"), h.at("achieved_error"));
        if (t.checksum() != h.at("checksum").get<std::string>())
            throw DataError("pattern table " + path.string() + " fails its checksum");
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("pattern table " + path.string() + " has a malformed header: " + e.what());
    } catch (const ParameterError& e) {
        throw DataError("pattern table " + path.string() + ": " + e.what());
    } catch (const NumericalError& e) {
        throw DataError("pattern table " + path.string() + ": " + e.what());
    }
}

PatternCacheResult load_or_build_pattern_table(const FilterTable& table, const PatternTableParams& params,
                                               const std::filesystem::path& cache_dir, int workers) {
    const auto path = cache_dir / pattern_cache_filename(params, table.checksum());
    if (std::filesystem::exists(path)) {
        try {
            PatternTable t = load_pattern_table(path);
            const auto& p = t.params();
            if (p.w == params.w && p.x_max == params.x_max && p.x_step == params.x_step &&
                p.alpha_max == params.alpha_max && p.alpha_step == params.alpha_step && p.tol == params.tol &&
                t.filter_checksum() == table.checksum())
                return {std::move(t), true, path};
        } catch (const DataError&) {
            // Rebuilt below.
        }
    }
    PatternTable t = build_pattern_table(table, params, workers);
    std::filesystem::create_directories(cache_dir);
    const auto tmp = path.string() + ".tmp";
    save_pattern_table(t, tmp);
    std::filesystem::rename(tmp, path);
    return {std::move(t), false, path};
}

double pattern_value(const FilterTable& table, double x, double alpha_modulus, double w, double tol) {
    if (!(w > 0.0)) throw ParameterError("width parameter w must be > 0");
    if (!(alpha_modulus >= 0.0)) throw ParameterError("|alpha| must be >= 0");
    const double b_max = compensated_cutoff(table, w, kTruncation);
    auto f = [&](double b) {
        return pattern_integrand_weight(table, b, w) * std::cos(b * x) * bessel_j0(2.0 * b * alpha_modulus);
    };
    const int panels = std::max(4, static_cast<int>(std::ceil(b_max * (std::abs(x) + 2.0 * alpha_modulus + 1.0) / 3.0)));
    return (2.0 / kPi) * integrate_adaptive(f, 0.0, b_max, tol * kPi / 2.0, panels).value;
}

double pattern_value_general(const FilterTable& table, double x, double phi, std::complex<double> alpha, double w,
                             double tol) {
    if (!(w > 0.0)) throw ParameterError("width parameter w must be > 0");
    const double s = x - 2.0 * std::abs(alpha) * std::cos(std::arg(alpha) - phi);
    const double b_max = compensated_cutoff(table, w, kTruncation);
    auto f = [&](double b) { return pattern_integrand_weight(table, b, w) * std::cos(b * s); };
    const int panels = std::max(4, static_cast<int>(std::ceil(b_max * (std::abs(s) + 1.0) / 3.0)));
    return (2.0 / kPi) * integrate_adaptive(f, 0.0, b_max, tol * kPi / 2.0, panels).value;
}

double pattern_imaginary_residual(const FilterTable& table, double x, double phi, std::complex<double> alpha,
                                  double w) {
    if (!(w > 0.0)) throw ParameterError("width parameter w must be > 0");
    const double s = x - 2.0 * std::abs(alpha) * std::cos(std::arg(alpha) - phi);
    const double b_max = compensated_cutoff(table, w, kTruncation);
    const int panels = 2 * std::max(4, static_cast<int>(std::ceil(b_max * (std::abs(s) + 1.0) / 3.0)));
    const auto q = composite_gauss_legendre(-b_max, b_max, panels);
    NeumaierSum im;
    for (std::size_t k = 0; k < q.size(); ++k) {
        const double b = q.x[k];
        im.add(q.w[k] * pattern_integrand_weight(table, std::abs(b), w) * std::sin(b * s));
    }
    return im.value() / kPi;
}

// ---------------------------------------------------------------------------
// Moments and estimates

void MomentAccumulator::add(double v) noexcept {
    ++n_;
    const double d = v - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (v - mean_);
    sum_.add(v);
    sum_sq_.add(v * v);
}

void MomentAccumulator::merge(const MomentAccumulator& o) noexcept {
    if (o.n_ == 0) return;
    if (n_ == 0) {
        *this = o;
        return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
    const double n = na + nb;
    const double d = o.mean_ - mean_;
    mean_ += d * nb / n;
    m2_ += o.m2_ + d * d * na * nb / n;
    n_ += o.n_;
    sum_.add(o.sum_);
    sum_sq_.add(o.sum_sq_);
}

double MomentAccumulator::mean() const noexcept {
    return n_ ? sum_.value() / static_cast<double>(n_) : 0.0;
}

double MomentAccumulator::variance() const noexcept {
    return n_ ? m2_ / static_cast<double>(n_) : 0.0;
}

double MomentAccumulator::two_term_variance() const noexcept {
    if (!n_) return 0.0;
    const double m = mean();
    return sum_sq_.value() / static_cast<double>(n_) - m * m;
}

EstimateWithError make_estimate(double mean, double variance, std::size_t n) {
    if (n < 2) throw DataError("at least two records are needed for an empirical standard deviation");
    EstimateWithError e;
    e.value = mean;
    e.n = n;
    e.sigma = std::sqrt(std::max(0.0, variance));
    e.delta = e.sigma / std::sqrt(static_cast<double>(n));
    if (mean < 0.0) {
        if (e.delta > 0.0)
            e.confidence = std::abs(mean) / e.delta;
        else
            e.degenerate = true;
    }
    return e;
}

namespace {

void check_coverage(const QuadratureDataset& data, const PatternTable& pat) {
    std::vector<std::size_t> bad;
    std::size_t count = 0;
    const std::size_t n = data.size();
    for (std::size_t j = 0; j < n; ++j) {
        for (int k = 0; k < data.mode_count; ++k) {
            if (!pat.covers_x(data.quadrature(j, k))) {
                if (bad.size() < 10) bad.push_back(j);
                ++count;
                break;
            }
        }
    }
    if (count) {
        std::ostringstream msg;
        msg << count << " record(s) lie outside the pattern table x range [" << -pat.params().x_max << ", "
            << pat.params().x_max << "]; first offending records:";
        for (auto j : bad) msg << " " << j;
        throw DataError(msg.str());
    }
}

}  // namespace

EstimateWithError estimate_pqc(const QuadratureDataset& data, const PatternTable& pat,
                               std::span<const std::complex<double>> alphas, int workers) {
    data.validate();
    if (static_cast<int>(alphas.size()) != data.mode_count)
        throw DataError("dataset has " + std::to_string(data.mode_count) + " mode(s) but " +
                        std::to_string(alphas.size()) + " coordinates were requested");
    check_coverage(data, pat);
    std::vector<PatternTable::Column> cols;
    for (const auto& a : alphas) cols.push_back(pat.column(std::abs(a)));
    const std::size_t n = data.size();
    const std::size_t chunks = (n + kChunkRecords - 1) / kChunkRecords;
    std::vector<MomentAccumulator> acc(chunks);
    parallel_for(chunks, workers, [&](std::size_t c) {
        const std::size_t lo = c * kChunkRecords, hi = std::min(n, lo + kChunkRecords);
        for (std::size_t j = lo; j < hi; ++j) {
            double prod = 1.0;
            for (int k = 0; k < data.mode_count; ++k) prod *= cols[static_cast<std::size_t>(k)](data.quadrature(j, k));
            acc[c].add(prod);
        }
    });
    MomentAccumulator total;
    for (const auto& a : acc) total.merge(a);
    return make_estimate(total.mean(), total.variance(), n);
}

GridEstimate estimate_grid(const QuadratureDataset& data, const PatternTable& pat,
                           const std::vector<std::vector<double>>& radial_axes, int workers) {
    data.validate();
    const int modes = data.mode_count;
    if (modes != 1 && modes != 2) throw ParameterError("grid estimation supports one or two modes");
    if (static_cast<int>(radial_axes.size()) != modes)
        throw DataError("dataset has " + std::to_string(modes) + " mode(s) but the grid has " +
                        std::to_string(radial_axes.size()) + " axes");
    check_coverage(data, pat);
    std::vector<std::vector<PatternTable::Column>> cols(static_cast<std::size_t>(modes));
    for (int k = 0; k < modes; ++k)
        for (double a : radial_axes[static_cast<std::size_t>(k)]) cols[static_cast<std::size_t>(k)].push_back(pat.column(a));
    const auto na = static_cast<Eigen::Index>(radial_axes[0].size());
    const auto nb = modes == 2 ? static_cast<Eigen::Index>(radial_axes[1].size()) : Eigen::Index(1);

    const std::size_t n = data.size();
    const std::size_t chunks = (n + kChunkRecords - 1) / kChunkRecords;
    std::vector<Eigen::MatrixXd> s1(chunks), s2(chunks);
    parallel_for(chunks, workers, [&](std::size_t c) {
        const std::size_t lo = c * kChunkRecords, hi = std::min(n, lo + kChunkRecords);
        const auto len = static_cast<Eigen::Index>(hi - lo);
        Eigen::MatrixXd fa(len, na), fb(len, nb);
        for (Eigen::Index j = 0; j < len; ++j) {
            const double xa = data.quadrature(lo + static_cast<std::size_t>(j), 0);
            for (Eigen::Index i = 0; i < na; ++i) fa(j, i) = cols[0][static_cast<std::size_t>(i)](xa);
            if (modes == 2) {
                const double xb = data.quadrature(lo + static_cast<std::size_t>(j), 1);
                for (Eigen::Index i = 0; i < nb; ++i) fb(j, i) = cols[1][static_cast<std::size_t>(i)](xb);
            } else {
                fb(j, 0) = 1.0;
            }
        }
        s1[c] = fa.transpose() * fb;
        s2[c] = fa.cwiseAbs2().transpose() * fb.cwiseAbs2();
    });

    GridEstimate out;
    QPGrid& g = out.grid;
    g.mode_count = modes;
    g.ordering = Ordering::FilteredP;
    g.axes_kind = AxesKind::Radial;
    g.axes = radial_axes;
    g.w = pat.w();
    g.provenance["source"] = "sampled";
    g.provenance["records"] = std::to_string(n);
    g.provenance["pattern_checksum"] = pat.checksum();
    const double nd = static_cast<double>(n);
    for (Eigen::Index i = 0; i < na; ++i) {
        for (Eigen::Index j = 0; j < nb; ++j) {
            NeumaierSum a, b;
            for (std::size_t c = 0; c < chunks; ++c) {
                a.add(s1[c](i, j));
                b.add(s2[c](i, j));
            }
            const double mean = a.value() / nd;
            const auto e = make_estimate(mean, b.value() / nd - mean * mean, n);
            g.values.push_back(e.value);
            out.estimates.push_back(e);
        }
    }
    g.validate();
    return out;
}

void write_estimates_csv(const GridEstimate& est, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write estimates " + path.string());
    const auto& g = est.grid;
    out << "# w=" << (g.w ? *g.w : 0.0) << ", modes=" << g.mode_count << ", ordering=filtered-p, axes=radial, N="
        << (est.estimates.empty() ? 0 : est.estimates.front().n) << "\n";
    out << (g.mode_count == 2 ? "alphaA,alphaB" : "alphaA") << ",value,sigma,delta,confidence,N\n";
    char buf[256];
    for (std::size_t i = 0; i < est.estimates.size(); ++i) {
        const auto c = g.coordinates(i);
        const auto& e = est.estimates[i];
        std::string line;
        for (double v : c) {
            std::snprintf(buf, sizeof buf, "%.17g,", v);
            line += buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", e.value, e.sigma, e.delta);
        line += buf;
        if (e.confidence) {
            std::snprintf(buf, sizeof buf, "%.17g", *e.confidence);
            line += buf;
        }
        line += "," + std::to_string(e.n) + "\n";
        out << line;
    }
    if (!out) throw DataError("error while writing estimates " + path.string());
}

// ---------------------------------------------------------------------------
// Gaussian model

void GaussianQuadratureStats::validate() const {
    const auto n = mu.size();
    if (n < 1 || sigma.rows() != n || sigma.cols() != n) throw ParameterError("Gaussian model dimensions do not match");
    if (!mu.allFinite() || !sigma.allFinite()) throw ParameterError("Gaussian model contains non-finite values");
    const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
        throw ParameterError("covariance matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
    if (es.eigenvalues().minCoeff() < -1e-10 * scale) throw ParameterError("covariance matrix is not PSD");
}

GaussianQuadratureStats compute_gaussian_stats(const QuadratureDataset& data) {
    data.validate();
    const std::size_t n = data.size();
    if (n < 2) throw DataError("Gaussian statistics need at least two records");
    const int m = data.mode_count;
    GaussianQuadratureStats s;
    s.mu.resize(m);
    s.sigma.resize(m, m);
    for (int k = 0; k < m; ++k) {
        NeumaierSum acc;
        for (std::size_t j = 0; j < n; ++j) acc.add(data.quadrature(j, k));
        s.mu[k] = acc.value() / static_cast<double>(n);
    }
    for (int a = 0; a < m; ++a) {
        for (int b = a; b < m; ++b) {
            NeumaierSum acc;
            for (std::size_t j = 0; j < n; ++j)
                acc.add((data.quadrature(j, a) - s.mu[a]) * (data.quadrature(j, b) - s.mu[b]));
            s.sigma(a, b) = s.sigma(b, a) = acc.value() / static_cast<double>(n);
        }
    }
    return s;
}

namespace {

struct MomentPair {
    double first = 0.0, second = 0.0;
};

// Trapezoid sums on the uniform grid b = j h, |j| <= M.
MomentPair gaussian_level(const GaussianQuadratureStats& st, const FilterTable& table, double w,
                          std::span<const double> alpha, double b_max, double h) {
    const int modes = static_cast<int>(alpha.size());
    const long m = static_cast<long>(std::ceil(b_max / h));
    const long nj = 2 * m + 1;
    const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(modes, modes) - st.sigma;  // I - Σ

    std::vector<std::vector<double>> kern(static_cast<std::size_t>(modes), std::vector<double>(static_cast<std::size_t>(nj)));
    for (int k = 0; k < modes; ++k) {
        for (long j = -m; j <= m; ++j) {
            const double b = std::abs(static_cast<double>(j) * h);
            const double r = b / w;
            const double om = r <= table.r_max() ? table.omega(r) : 0.0;
            kern[static_cast<std::size_t>(k)][static_cast<std::size_t>(j + m)] = b * om * bessel_j0(2.0 * b * alpha[static_cast<std::size_t>(k)]);
        }
    }
    // A_k[d] = Σ_{j - j' = d} K(j h) K(j' h) e^{j j' h²}, d in [-2M, 2M].
    const long nd = 4 * m + 1;
    std::vector<std::vector<double>> diff(static_cast<std::size_t>(modes), std::vector<double>(static_cast<std::size_t>(nd)));
    for (int k = 0; k < modes; ++k) {
        const auto& kk = kern[static_cast<std::size_t>(k)];
        auto& a = diff[static_cast<std::size_t>(k)];
        std::vector<NeumaierSum> acc(static_cast<std::size_t>(nd));
        for (long j = -m; j <= m; ++j) {
            const double kj = kk[static_cast<std::size_t>(j + m)];
            if (kj == 0.0) continue;
            for (long jp = -m; jp <= m; ++jp) {
                const double kjp = kk[static_cast<std::size_t>(jp + m)];
                if (kjp == 0.0) continue;
                acc[static_cast<std::size_t>(j - jp + 2 * m)].add(kj * kjp * std::exp(static_cast<double>(j * jp) * h * h));
            }
        }
        for (long d = 0; d < nd; ++d) a[static_cast<std::size_t>(d)] = acc[static_cast<std::size_t>(d)].value();
    }

    auto phi = [&](const double* t) {
        double quad = 0.0, lin = 0.0;
        for (int a = 0; a < modes; ++a) {
            lin += t[a] * st.mu[a];
            for (int b = 0; b < modes; ++b) quad += t[a] * q(a, b) * t[b];
        }
        return std::exp(0.5 * quad) * std::cos(lin);
    };

    MomentPair out;
    NeumaierSum e1, e2;
    double edge = 0.0, peak = 0.0;
    if (modes == 1) {
        for (long j = -m; j <= m; ++j) {
            const double t = static_cast<double>(j) * h;
            e1.add(kern[0][static_cast<std::size_t>(j + m)] * phi(&t));
        }
        for (long d = -2 * m; d <= 2 * m; ++d) {
            const double t = static_cast<double>(d) * h;
            const double v = diff[0][static_cast<std::size_t>(d + 2 * m)] * phi(&t);
            e2.add(v);
            peak = std::max(peak, std::abs(v));
            if (std::labs(d) == 2 * m) edge = std::max(edge, std::abs(v));
        }
        out.first = e1.value() * h / kPi;
        out.second = e2.value() * std::pow(h / kPi, 2);
    } else {
        for (long j1 = -m; j1 <= m; ++j1) {
            const double k1 = kern[0][static_cast<std::size_t>(j1 + m)];
            if (k1 == 0.0) continue;
            for (long j2 = -m; j2 <= m; ++j2) {
                const double t[2] = {static_cast<double>(j1) * h, static_cast<double>(j2) * h};
                e1.add(k1 * kern[1][static_cast<std::size_t>(j2 + m)] * phi(t));
            }
        }
        for (long d1 = -2 * m; d1 <= 2 * m; ++d1) {
            const double a1 = diff[0][static_cast<std::size_t>(d1 + 2 * m)];
            if (a1 == 0.0) continue;
            for (long d2 = -2 * m; d2 <= 2 * m; ++d2) {
                const double t[2] = {static_cast<double>(d1) * h, static_cast<double>(d2) * h};
                const double v = a1 * diff[1][static_cast<std::size_t>(d2 + 2 * m)] * phi(t);
                e2.add(v);
                peak = std::max(peak, std::abs(v));
                if (std::labs(d1) == 2 * m || std::labs(d2) == 2 * m) edge = std::max(edge, std::abs(v));
            }
        }
        out.first = e1.value() * std::pow(h / kPi, 2);
        out.second = e2.value() * std::pow(h / kPi, 4);
    }
    if (!std::isfinite(out.first) || !std::isfinite(out.second) || edge > 1e-10 * peak) {
        std::ostringstream msg;
        msg << "Gaussian-model integrand is not suppressed at the cutoff (edge/peak = " << (peak > 0 ? edge / peak : 0.0)
            << "); the covariance makes the integrand grow faster than the filter decays";
        throw NumericalError(msg.str());
    }
    return out;
}

}  // namespace

GaussianVariance gaussian_cf_variance(const GaussianQuadratureStats& stats, const FilterTable& table, double w,
                                      std::span<const double> alpha_moduli, double tol) {
    stats.validate();
    if (!(w > 0.0)) throw ParameterError("width parameter w must be > 0");
    if (!(tol > 0.0)) throw ParameterError("tolerance must be > 0");
    const auto modes = static_cast<std::size_t>(stats.mu.size());
    if (modes != 1 && modes != 2) throw ParameterError("Gaussian-model variance supports one or two modes");
    if (alpha_moduli.size() != modes) throw ParameterError("one |alpha| per mode required");
    double a_max = 0.0;
    for (double a : alpha_moduli) {
        if (!(a >= 0.0)) throw ParameterError("|alpha| must be >= 0");
        a_max = std::max(a_max, a);
    }
    const double b_max = compensated_cutoff(table, w, kTruncation);
    const double h0 = std::min(0.05, 0.4 / (1.0 + 2.0 * a_max + stats.mu.cwiseAbs().maxCoeff()));

    // Romberg in h²: the |b| kink at the origin gives an even-power
    // Euler-Maclaurin expansion.
    std::vector<std::vector<MomentPair>> tab;
    double h = h0, err = 0.0;
    for (int level = 0; level < 6; ++level, h *= 0.5) {
        std::vector<MomentPair> row{gaussian_level(stats, table, w, alpha_moduli, b_max, h)};
        for (std::size_t k = 1; k <= static_cast<std::size_t>(level); ++k) {
            const double f = std::pow(4.0, static_cast<double>(k));
            const auto& up = tab.back()[k - 1];
            row.push_back({(f * row[k - 1].first - up.first) / (f - 1.0), (f * row[k - 1].second - up.second) / (f - 1.0)});
        }
        tab.push_back(std::move(row));
        if (level >= 2) {
            const auto& cur = tab.back().back();
            const auto& prev = tab[tab.size() - 2].back();
            err = std::max(std::abs(cur.first - prev.first), std::abs(cur.second - prev.second));
            if (err <= tol) {
                GaussianVariance out;
                out.first_moment = cur.first;
                out.second_moment = cur.second;
                out.variance = cur.second - cur.first * cur.first;
                out.achieved_error = err;
                return out;
            }
        }
    }
    std::ostringstream msg;
    msg << "Gaussian-model variance did not reach tolerance " << tol << " (achieved " << err << ")";
    throw NumericalError(msg.str(), err);
}

}  // namespace qcqp
