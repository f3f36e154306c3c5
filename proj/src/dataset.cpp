#include "qcqp/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qcqp/errors.hpp"
#include "qcqp/numeric.hpp"

namespace qcqp {

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
    std::ostringstream msg;
    msg << "dataset line " << line << ": " << what;
    throw DataError(msg.str());
}

}  // namespace

void QuadratureDataset::validate() const {
    if (mode_count < 1) throw DataError("dataset must have at least one mode");
    if (x.size() != phi.size() || x.size() % static_cast<std::size_t>(mode_count) != 0)
        throw DataError("dataset arrays have inconsistent sizes");
    if (size() < 1) throw DataError("dataset holds no records");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) throw DataError("non-finite quadrature at record " + std::to_string(i / mode_count));
        if (!(phi[i] >= 0.0 && phi[i] < 2.0 * kPi))
            throw DataError("phase outside [0, 2pi) at record " + std::to_string(i / mode_count));
    }
}

void save_dataset(const QuadratureDataset& data, const std::filesystem::path& path) {
    data.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset " + path.string());
    out << "# modes=" << data.mode_count << "\n";
    for (const auto& [k, v] : data.metadata) {
        if (k == "modes") continue;
        out << "# " << k << "=" << v << "\n";
    }
    for (int m = 0; m < data.mode_count; ++m) out << (m ? "," : "") << "x_" << m + 1 << ",phi_" << m + 1;
    out << "\n";
    char buf[64];
    const std::size_t n = data.size();
    for (std::size_t j = 0; j < n; ++j) {
        std::string line;
        for (int m = 0; m < data.mode_count; ++m) {
            std::snprintf(buf, sizeof buf, "%s%.17g,%.17g", m ? "," : "", data.quadrature(j, m), data.phase(j, m));
            line += buf;
        }
        line += '\n';
        out << line;
    }
    if (!out) throw DataError("error while writing dataset " + path.string());
}

QuadratureDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset " + path.string());
    QuadratureDataset data;
    std::string line;
    std::size_t lineno = 0;
    bool header_done = false;
    std::vector<double> row;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (!header_done && t[0] == '#') {
            const auto body = trim(t.substr(1));
            const auto eq = body.find('=');
            if (eq == std::string::npos) continue;
            const auto key = trim(body.substr(0, eq));
            const auto val = trim(body.substr(eq + 1));
            if (key == "modes") {
                try {
                    std::size_t used = 0;
                    data.mode_count = std::stoi(val, &used);
                    if (used != val.size()) throw std::invalid_argument(val);
                } catch (const std::exception&) {
                    fail(lineno, "invalid mode count '" + val + "'");
                }
                if (data.mode_count < 1) fail(lineno, "mode count must be >= 1");
            } else {
                data.metadata[key] = val;
            }
            continue;
        }
        if (!header_done) {
            if (data.mode_count < 1) fail(lineno, "missing '# modes=n' header");
            std::ostringstream expect;
            for (int m = 0; m < data.mode_count; ++m) expect << (m ? "," : "") << "x_" << m + 1 << ",phi_" << m + 1;
            std::string cols;
            for (char c : t)
                if (c != ' ') cols += c;
            if (cols != expect.str()) fail(lineno, "expected column row '" + expect.str() + "'");
            header_done = true;
            continue;
        }
        row.clear();
        std::stringstream ss(t);
        std::string field;
        while (std::getline(ss, field, ',')) {
            const auto f = trim(field);
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (f.empty() || end != f.c_str() + f.size()) fail(lineno, "invalid number '" + f + "'");
            row.push_back(v);
        }
        if (row.size() != 2 * static_cast<std::size_t>(data.mode_count))
            fail(lineno, "expected " + std::to_string(2 * data.mode_count) + " columns, found " +
                             std::to_string(row.size()));
        for (int m = 0; m < data.mode_count; ++m) {
            const double xv = row[2 * m], ph = row[2 * m + 1];
            if (!std::isfinite(xv)) fail(lineno, "non-finite quadrature value");
            if (!(ph >= 0.0 && ph < 2.0 * kPi)) fail(lineno, "phase outside [0, 2pi)");
            data.x.push_back(xv);
            data.phi.push_back(ph);
        }
    }
    if (!header_done) throw DataError("dataset " + path.string() + " has no column row");
    if (data.size() < 1) throw DataError("dataset " + path.string() + " holds no records");
    return data;
}

}  // namespace qcqp
