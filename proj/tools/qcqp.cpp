// Command-line front end: filter tables, quasiprobability grids, simulation,
// sampled estimates and positivity-matrix searches.

#include <CLI11.hpp>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "qcqp/bochner.hpp"
#include "qcqp/dataset.hpp"
#include "qcqp/errors.hpp"
#include "qcqp/filter.hpp"
#include "qcqp/numeric.hpp"
#include "qcqp/quasiprob.hpp"
#include "qcqp/sampling.hpp"
#include "qcqp/states.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qcqp;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Global {
    std::string cache_dir;
    int workers = 1;
    std::string config;
};

std::vector<double> parse_axis(const std::string& spec) {
    std::vector<double> parts;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ':')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ParameterError("grid must be lo:hi:step, got '" + spec + "'");
        }
    }
    if (parts.size() != 3) throw ParameterError("grid must be lo:hi:step, got '" + spec + "'");
    if (!(parts[2] > 0.0) || parts[1] < parts[0] || parts[0] < 0.0)
        throw ParameterError("grid needs 0 <= lo <= hi and step > 0");
    return uniform_axis(parts[0], parts[1], parts[2]);
}

// "a,b;c,d" -> {{a,b},{c,d}}
std::vector<std::vector<double>> parse_points(const std::string& spec) {
    std::vector<std::vector<double>> pts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ';')) {
        std::vector<double> p;
        std::stringstream is(item);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            try {
                p.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ParameterError("bad point coordinate '" + tok + "'");
            }
        }
        if (p.empty()) throw ParameterError("empty point in --points");
        for (double v : p)
            if (!(v >= 0.0)) throw ParameterError("--points takes moduli |α| >= 0");
        pts.push_back(std::move(p));
    }
    if (pts.empty()) throw ParameterError("--points is empty");
    for (const auto& p : pts)
        if (p.size() != pts.front().size()) throw ParameterError("all points need the same number of modes");
    return pts;
}

std::string file_checksum(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a_hex(bytes.data(), bytes.size());
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_json(const json& j, const fs::path& p) {
    ensure_parent(p);
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    out << j.dump(2) << "\n";
}

json manifest_base(const std::string& command, const Global& g) {
    json m;
    m["tool"] = "qcqp";
    m["version"] = kVersion;
    m["command"] = command;
    m["global"] = {{"cache_dir", g.cache_dir}, {"workers", g.workers}, {"config", g.config}};
    return m;
}

FilterTable get_filter(const Global& g, json& manifest) {
    auto res = load_or_build_filter_table(FilterTableParams{}, g.cache_dir);
    manifest["filter"] = {{"path", res.path.string()},
                          {"checksum", res.table.checksum()},
                          {"cache_hit", res.cache_hit},
                          {"r_max", res.table.r_max()},
                          {"step", res.table.step()},
                          {"tol", res.table.quad_tolerance()}};
    return std::move(res.table);
}

// Diverging heatmap: blue for negative, white at zero, red for positive.
void render_heatmap(const QPGrid& grid, const fs::path& path) {
    if (grid.axes.size() != 2) throw ParameterError("--render needs a two-axis grid");
    const std::size_t nx = grid.axes[0].size(), ny = grid.axes[1].size();
    double lo = 0.0, hi = 0.0;
    for (double v : grid.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = std::max({std::abs(lo), std::abs(hi), 1e-300});
    constexpr int kPix = 4;
    const std::size_t width = ny * kPix, height = nx * kPix;
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "P6\n" << width << " " << height << "\n255\n";
    for (std::size_t row = 0; row < height; ++row) {
        const std::size_t i = nx - 1 - row / kPix;  // |α_A| grows upwards
        for (std::size_t col = 0; col < width; ++col) {
            const double t = grid.values[i * ny + col / kPix] / scale;
            unsigned char rgb[3];
            const auto fade = static_cast<unsigned char>(std::lround(255.0 * (1.0 - std::min(1.0, std::abs(t)))));
            if (t >= 0) {
                rgb[0] = 255; rgb[1] = fade; rgb[2] = fade;
            } else {
                rgb[0] = fade; rgb[1] = fade; rgb[2] = 255;
            }
            out.write(reinterpret_cast<const char*>(rgb), 3);
        }
    }
}

// Flags > config file > defaults: config values become option defaults
// before parsing, so anything given on the command line still wins.
void apply_config(CLI::App& app, const json& section) {
    for (CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || !section.contains(name)) continue;
        const json& v = section.at(name);
        std::string s;
        if (v.is_string()) s = v.get<std::string>();
        else if (v.is_boolean()) s = v.get<bool>() ? "true" : "false";
        else if (v.is_number() || v.is_null()) s = v.dump();
        else throw ParameterError("config key '" + name + "' must be a scalar");
        opt->default_str(s);
        opt->default_val(s);
    }
}

json load_config(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) path = argv[i + 1];
        else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
    }
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw DataError("config must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        throw DataError("config " + path + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regularized quasiprobabilities from characteristic functions and homodyne data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Global g;
    const char* env_cache = std::getenv("QCQP_CACHE_DIR");
    g.cache_dir = env_cache && *env_cache ? env_cache : ".qcqp-cache";
    app.add_option("--cache-dir", g.cache_dir, "Table cache directory (env QCQP_CACHE_DIR)");
    app.add_option("--workers", g.workers, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--config", g.config, "JSON config file (flags override it)");

    // filter-table
    auto* c_filter = app.add_subcommand("filter-table", "Build or load the filter table cache");
    FilterTableParams fparams;
    c_filter->add_option("--r-max", fparams.r_max, "Largest tabulated radius")->check(CLI::PositiveNumber);
    c_filter->add_option("--step", fparams.step, "Radial step")->check(CLI::PositiveNumber);
    c_filter->add_option("--tol", fparams.tol, "Absolute quadrature tolerance")->check(CLI::PositiveNumber);

    // pqc
    auto* c_pqc = app.add_subcommand("pqc", "Two-mode radial P_QC (or Wigner) grid");
    double p = 0.8, w = 1.5, tol = 1e-10, nbar = 4.0;
    std::string grid_spec = "0:3:0.05", out = "pqc", state = "prtmsv";
    bool wigner = false, render = false;
    c_pqc->add_option("--p", p, "TMSV parameter p in (0,1)");
    c_pqc->add_option("--w", w, "Filter width")->check(CLI::PositiveNumber);
    c_pqc->add_option("--grid", grid_spec, "Radial axis lo:hi:step, used for both modes");
    c_pqc->add_option("--tol", tol, "Absolute quadrature tolerance")->check(CLI::PositiveNumber);
    c_pqc->add_option("--out", out, "Output prefix");
    c_pqc->add_option("--state", state, "prtmsv | thermal | vacuum")
        ->check(CLI::IsMember({"prtmsv", "thermal", "vacuum"}));
    c_pqc->add_option("--nbar", nbar, "Mean photon number of the thermal control")->check(CLI::NonNegativeNumber);
    c_pqc->add_flag("--wigner", wigner, "Wigner function instead of P_QC");
    c_pqc->add_flag("--render", render, "Also write a PPM heatmap");

    // simulate
    auto* c_sim = app.add_subcommand("simulate", "Simulate phase-randomized homodyne records");
    long long n_records = 1000000;
    std::uint64_t seed = 1;
    int modes = 2;
    std::string sim_out = "data.csv";
    c_sim->add_option("--p", p, "TMSV parameter p in (0,1)");
    c_sim->add_option("--n", n_records, "Number of records")->check(CLI::PositiveNumber);
    c_sim->add_option("--seed", seed, "RNG seed");
    c_sim->add_option("--out", sim_out, "Dataset CSV path");
    c_sim->add_option("--state", state, "prtmsv | thermal | vacuum")
        ->check(CLI::IsMember({"prtmsv", "thermal", "vacuum"}));
    c_sim->add_option("--nbar", nbar, "Mean photon number (thermal)")->check(CLI::NonNegativeNumber);
    c_sim->add_option("--modes", modes, "Mode count for thermal/vacuum")->check(CLI::Range(1, 2));

    // estimate
    auto* c_est = app.add_subcommand("estimate", "Estimate P_QC with error bars from a dataset");
    std::string data_path, points_spec, est_grid;
    std::string est_out = "estimate";
    int est_modes = 0;
    c_est->add_option("--data", data_path, "Dataset CSV")->required();
    c_est->add_option("--w", w, "Filter width")->check(CLI::PositiveNumber);
    auto* o_points = c_est->add_option("--points", points_spec, "Points as 'a,b;c,d' (moduli per mode)");
    auto* o_grid = c_est->add_option("--grid", est_grid, "Radial axis lo:hi:step for every mode");
    o_points->excludes(o_grid);
    c_est->add_option("--modes", est_modes, "Expected mode count of the data (0 = take from data)")
        ->check(CLI::NonNegativeNumber);
    c_est->add_option("--out", est_out, "Output prefix");

    // bochner
    auto* c_boch = app.add_subcommand("bochner", "Search for positivity-matrix violations");
    long budget = 10000;
    bool thermal = false;
    std::string strategy = "random", boch_out = "bochner.json";
    c_boch->add_option("--p", p, "TMSV parameter p in (0,1)");
    c_boch->add_option("--w", w, "Filter width")->check(CLI::PositiveNumber);
    c_boch->add_option("--budget", budget, "Matrix evaluations")->check(CLI::PositiveNumber);
    c_boch->add_option("--seed", seed, "RNG seed");
    c_boch->add_option("--strategy", strategy, "random | grid")->check(CLI::IsMember({"random", "grid"}));
    c_boch->add_flag("--thermal", thermal, "Use the classical two-mode thermal control with n̄ = p/(1-p)");
    c_boch->add_option("--out", boch_out, "JSON report path");

    try {
        const json cfg = load_config(argc, argv);
        apply_config(app, cfg);
        for (CLI::App* sub : {c_filter, c_pqc, c_sim, c_est, c_boch}) {
            if (cfg.contains(sub->get_name())) apply_config(*sub, cfg.at(sub->get_name()));
        }
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    if (g.workers == 0) g.workers = default_workers();

    try {
        if (c_filter->parsed()) {
            json m = manifest_base("filter-table", g);
            m["parameters"] = {{"r_max", fparams.r_max}, {"step", fparams.step}, {"tol", fparams.tol}};
            auto res = load_or_build_filter_table(fparams, g.cache_dir);
            const auto& t = res.table;
            std::printf("%s %s\n", res.cache_hit ? "cache hit" : "built", res.path.string().c_str());
            std::printf("omega(0) = %.12f\nr_max = %g\nstep = %g\nchecksum = %s\n", t.omega(0.0), t.r_max(),
                        t.step(), t.checksum().c_str());
            m["summary"] = {{"omega0", t.omega(0.0)}, {"checksum", t.checksum()}, {"cache_hit", res.cache_hit}};
            m["outputs"] = {res.path.string()};
            write_json(m, fs::path(res.path.string() + ".manifest.json"));
            return 0;
        }

        if (c_pqc->parsed()) {
            json m = manifest_base("pqc", g);
            const auto axis = parse_axis(grid_spec);
            CharacteristicFunction cf = vacuum_cf(2);
            std::string label = state;
            if (state == "prtmsv") {
                cf = char_fn_prtmsv(PhaseRandomizedTMSV::make(p));
                label = "prtmsv";
            } else if (state == "thermal") {
                cf = thermal_cf(nbar, 2);
            }
            m["parameters"] = {{"p", p},         {"w", w},         {"grid", grid_spec}, {"tol", tol},
                               {"state", state}, {"nbar", nbar},   {"wigner", wigner},  {"render", render},
                               {"out", out}};
            RadialOptions ro;
            ro.workers = g.workers;
            QPGrid grid;
            if (wigner) {
                grid = wigner_grid(cf, {axis, axis}, tol, ro);
            } else {
                const auto table = get_filter(g, m);
                grid = pqc_grid(cf, table, w, {axis, axis}, tol, ro);
            }
            if (state == "prtmsv") grid.provenance["p"] = std::to_string(p);
            const fs::path csv = out + ".csv", neg = out + ".negativity.json";
            ensure_parent(csv);
            write_qpgrid_csv(grid, csv);
            const auto rep = negativity_scan(grid);
            write_negativity_json(rep, grid, neg);
            json outputs = {csv.string(), neg.string()};
            if (render) {
                const fs::path img = out + ".ppm";
                render_heatmap(grid, img);
                outputs.push_back(img.string());
            }
            std::printf("%s grid %zux%zu: min %.6e at (%.4f, %.4f), max %.6e, normalization %.6f\n",
                        wigner ? "Wigner" : "P_QC", axis.size(), axis.size(), rep.min_value, rep.argmin[0],
                        rep.argmin[1], rep.max_value, rep.normalization);
            std::printf("achieved error %.3e (tolerance %.1e)\n", grid.achieved_error, tol);
            m["outputs"] = outputs;
            m["summary"] = {{"min", rep.min_value},
                            {"argmin", rep.argmin},
                            {"max", rep.max_value},
                            {"negative_mass", rep.negative_mass},
                            {"normalization", rep.normalization},
                            {"achieved_error", grid.achieved_error}};
            write_json(m, fs::path(out + ".manifest.json"));
            return 0;
        }

        if (c_sim->parsed()) {
            json m = manifest_base("simulate", g);
            QuadratureDataset data;
            double expected_var = 1.0;
            if (state == "prtmsv") {
                const auto st = PhaseRandomizedTMSV::make(p);
                data = sample_quadratures(st, static_cast<std::size_t>(n_records), seed, PhaseMode::uniform(),
                                          g.workers);
                expected_var = 1.0 + 2.0 * st.mean_photon_number();
                modes = 2;
            } else {
                const double var = state == "thermal" ? 1.0 + 2.0 * nbar : 1.0;
                std::vector<double> mu(static_cast<std::size_t>(modes), 0.0);
                std::vector<double> sigma(static_cast<std::size_t>(modes * modes), 0.0);
                for (int k = 0; k < modes; ++k) sigma[static_cast<std::size_t>(k * modes + k)] = var;
                data = sample_gaussian_quadratures(mu, sigma, static_cast<std::size_t>(n_records), seed, g.workers);
                data.metadata["state"] = state;
                expected_var = var;
            }
            ensure_parent(sim_out);
            save_dataset(data, sim_out);
            std::vector<double> var(static_cast<std::size_t>(modes), 0.0);
            for (int k = 0; k < modes; ++k) {
                MomentAccumulator acc;
                for (std::size_t j = 0; j < data.size(); ++j) acc.add(data.quadrature(j, k));
                var[static_cast<std::size_t>(k)] = acc.sum_of_squares() / static_cast<double>(acc.count());
            }
            std::printf("wrote %zu records (%d modes) to %s; <x_1^2> = %.4f (expected %.4f)\n", data.size(), modes,
                        sim_out.c_str(), var[0], expected_var);
            m["parameters"] = {{"p", p},         {"n", n_records}, {"seed", seed},   {"out", sim_out},
                               {"state", state}, {"nbar", nbar},   {"modes", modes}};
            m["outputs"] = {{{"path", sim_out}, {"checksum", file_checksum(sim_out)}}};
            m["summary"] = {{"second_moment_x", var}, {"expected_variance", expected_var}};
            write_json(m, fs::path(sim_out + ".manifest.json"));
            return 0;
        }

        if (c_est->parsed()) {
            json m = manifest_base("estimate", g);
            const auto data = load_dataset(data_path);
            if (est_modes != 0 && data.mode_count != est_modes)
                throw DataError("dataset " + data_path + " has " + std::to_string(data.mode_count) +
                                " mode(s), the request expects " + std::to_string(est_modes));
            m["inputs"] = {{{"path", data_path}, {"checksum", file_checksum(data_path)}, {"records", data.size()}}};
            m["parameters"] = {{"w", w}, {"points", points_spec}, {"grid", est_grid}, {"modes", est_modes},
                               {"out", est_out}};
            const auto table = get_filter(g, m);
            PatternTableParams pp;
            pp.w = w;
            auto pat = load_or_build_pattern_table(table, pp, g.cache_dir, g.workers);
            m["pattern_table"] = {{"path", pat.path.string()}, {"checksum", pat.table.checksum()},
                                  {"cache_hit", pat.cache_hit}};

            json summary;
            const fs::path csv = est_out + ".csv";
            ensure_parent(csv);
            std::vector<std::vector<double>> coords;
            std::vector<EstimateWithError> ests;
            if (!est_grid.empty() || points_spec.empty()) {
                const auto axis = parse_axis(est_grid.empty() ? "0:3:0.05" : est_grid);
                std::vector<std::vector<double>> axes(static_cast<std::size_t>(data.mode_count), axis);
                auto ge = estimate_grid(data, pat.table, axes, g.workers);
                write_estimates_csv(ge, csv);
                for (std::size_t i = 0; i < ge.estimates.size(); ++i) coords.push_back(ge.grid.coordinates(i));
                ests = std::move(ge.estimates);
            } else {
                const auto pts = parse_points(points_spec);
                if (static_cast<int>(pts.front().size()) != data.mode_count)
                    throw DataError("points have " + std::to_string(pts.front().size()) +
                                    " coordinate(s) but the dataset has " + std::to_string(data.mode_count) +
                                    " mode(s)");
                std::ofstream f(csv);
                if (!f) throw DataError("cannot write " + csv.string());
                f << "# w=" << w << ", modes=" << data.mode_count
                  << ", ordering=filtered-p, axes=radial, N=" << data.size() << "\n";
                for (int k = 0; k < data.mode_count; ++k) f << (k == 0 ? "alphaA" : "alphaB") << ",";
                f << "value,sigma,delta,confidence,N\n";
                char buf[128];
                for (const auto& pt : pts) {
                    std::vector<std::complex<double>> al(pt.begin(), pt.end());
                    auto e = estimate_pqc(data, pat.table, al, g.workers);
                    for (double v : pt) {
                        std::snprintf(buf, sizeof buf, "%.17g,", v);
                        f << buf;
                    }
                    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,", e.value, e.sigma, e.delta);
                    f << buf;
                    if (e.confidence) {
                        std::snprintf(buf, sizeof buf, "%.17g", *e.confidence);
                        f << buf;
                    }
                    f << "," << e.n << "\n";
                    coords.push_back(pt);
                    ests.push_back(e);
                }
            }
            std::size_t imin = 0;
            for (std::size_t i = 1; i < ests.size(); ++i)
                if (ests[i].value < ests[imin].value) imin = i;
            const auto& e = ests[imin];
            summary = {{"min_value", e.value},
                       {"argmin", coords[imin]},
                       {"sigma", e.sigma},
                       {"delta", e.delta},
                       {"N", e.n},
                       {"points", ests.size()}};
            summary["confidence"] = e.confidence ? json(*e.confidence) : json(nullptr);
            write_json(summary, fs::path(est_out + ".summary.json"));
            std::printf("%zu estimates from %zu records; minimum %.6f +- %.6f", ests.size(), data.size(), e.value,
                        e.delta);
            if (e.confidence) std::printf(" (confidence %.2f)", *e.confidence);
            std::printf("\n");
            m["outputs"] = {csv.string(), est_out + ".summary.json"};
            m["summary"] = summary;
            write_json(m, fs::path(est_out + ".manifest.json"));
            return 0;
        }

        if (c_boch->parsed()) {
            json m = manifest_base("bochner", g);
            const auto st = PhaseRandomizedTMSV::make(p);
            const auto cf = thermal ? thermal_cf(st.mean_photon_number(), 2) : char_fn_prtmsv(st);
            const std::string label = thermal ? "thermal(nbar=" + std::to_string(st.mean_photon_number()) + ")^2"
                                              : "prtmsv(p=" + std::to_string(p) + ")";
            const auto table = get_filter(g, m);
            SearchOptions so;
            so.budget = budget;
            so.seed = seed;
            so.workers = g.workers;
            so.strategy = strategy == "grid" ? SearchStrategy::GridSeeded : SearchStrategy::RandomRestart;
            const auto r = search_violation(cf, table, w, so);
            write_search_report(r, so, w, label, boch_out);
            if (r.found)
                std::printf("violation found: normalized eigenvalue %.6e with %zu points (%ld evaluations)\n",
                            r.normalized, r.betas.size(), r.evaluations);
            else
                std::printf("none found (most negative normalized eigenvalue %.3e over %ld evaluations)\n",
                            r.worst_examined, r.evaluations);
            m["parameters"] = {{"p", p},           {"w", w},           {"budget", budget}, {"seed", seed},
                               {"strategy", strategy}, {"thermal", thermal}, {"out", boch_out}};
            m["outputs"] = {boch_out};
            m["summary"] = {{"found", r.found}, {"normalized", r.normalized}, {"points", r.betas.size()}};
            write_json(m, fs::path(boch_out + ".manifest.json"));
            return 0;
        }
    } catch (const ParameterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
