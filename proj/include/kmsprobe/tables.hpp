#pragma once

// Columnar plain-text tables: curves with FW-frame data, kernel samples and
// spectra. A table starts with '#' comment lines, one of which declares the
// unit system ("# units: natural"), followed by a tab-separated header row and
// data rows.

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "kmsprobe/core.hpp"
#include "kmsprobe/correlators.hpp"
#include "kmsprobe/geometry.hpp"

namespace kmsprobe::tables {

struct Table {
    std::string units = "natural";
    std::vector<std::string> comments;  // without the leading '#'
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column(const std::string& name) const {
        for (std::size_t j = 0; j < columns.size(); ++j)
            if (columns[j] == name) return static_cast<int>(j);
        return -1;
    }
};

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    for (std::string tok; is >> tok;) out.push_back(tok);
    return out;
}

inline Table read_table(std::istream& is) {
    Table t;
    std::string line;
    bool header = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty()) continue;
        if (s[0] == '#') {
            const std::string c = trim(s.substr(1));
            if (c.rfind("units:", 0) == 0) t.units = trim(c.substr(6));
            t.comments.push_back(c);
            continue;
        }
        auto toks = split_ws(s);
        if (!header) {
            t.columns = toks;
            header = true;
            continue;
        }
        if (toks.size() != t.columns.size())
            throw ValidationError("table line " + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.columns.size()) + " fields, found " + std::to_string(toks.size()));
        std::vector<double> row;
        for (const auto& tok : toks) {
            try {
                row.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw ValidationError("table line " + std::to_string(lineno) + ": not a number: '" + tok + "'");
            }
        }
        t.rows.push_back(std::move(row));
    }
    if (!header) throw ValidationError("table: missing header row");
    return t;
}

inline void write_table(std::ostream& os, const Table& t, int precision = 12) {
    for (const auto& c : t.comments)
        if (c.rfind("units:", 0) != 0) os << "# " << c << '\n';
    os << "# units: " << t.units << '\n';
    for (std::size_t j = 0; j < t.columns.size(); ++j) os << (j ? "\t" : "") << t.columns[j];
    os << '\n';
    const auto prec = os.precision();
    os.precision(precision);
    for (const auto& r : t.rows) {
        for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "\t" : "") << r[j];
        os << '\n';
    }
    os.precision(prec);
}

// ---------------------------------------------------------------------------
// Curves
//
// Required columns: tau t x y z u0 u1 u2 u3 a0 a1 a2 a3.
// Optional: ax ay az (FW-frame acceleration) and curvature components named
// R0i0j_<i><j>, R0kil_<k><i><l>, Rikjl_<i><k><j><l> with spatial indices 1..3.

inline const std::vector<std::string>& curve_base_columns() {
    static const std::vector<std::string> c{"tau", "t", "x", "y", "z", "u0", "u1", "u2", "u3", "a0", "a1", "a2", "a3"};
    return c;
}

inline geometry::CurveData curve_from_table(const Table& t) {
    if (t.units != "natural")
        throw UnsupportedError("curve table: unit system '" + t.units + "' (only natural units are read)");
    std::vector<int> idx;
    for (const auto& name : curve_base_columns()) {
        const int j = t.column(name);
        if (j < 0) throw ValidationError("curve table: missing column '" + name + "'");
        idx.push_back(j);
    }
    const int ax = t.column("ax"), ay = t.column("ay"), az = t.column("az");
    const bool frame = ax >= 0 && ay >= 0 && az >= 0;
    std::vector<std::pair<int, std::vector<int>>> curv;  // column, (kind, indices...)
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
        const std::string& n = t.columns[j];
        auto digits = [&](std::size_t from, std::size_t count, int kind) {
            if (n.size() != from + count) return;
            std::vector<int> v{kind};
            for (std::size_t k = 0; k < count; ++k) {
                const int d = n[from + k] - '1';
                if (d < 0 || d > 2) throw ValidationError("curve table: bad curvature column '" + n + "'");
                v.push_back(d);
            }
            curv.push_back({static_cast<int>(j), v});
        };
        if (n.rfind("R0i0j_", 0) == 0) digits(6, 2, 0);
        else if (n.rfind("R0kil_", 0) == 0) digits(6, 3, 1);
        else if (n.rfind("Rikjl_", 0) == 0) digits(6, 4, 2);
    }
    geometry::CurveData c;
    c.units = t.units;
    for (const auto& r : t.rows) {
        c.tau.push_back(r[idx[0]]);
        c.events.push_back({r[idx[1]], r[idx[2]], r[idx[3]], r[idx[4]]});
        c.velocity.push_back({r[idx[5]], r[idx[6]], r[idx[7]], r[idx[8]]});
        c.acceleration.push_back({r[idx[9]], r[idx[10]], r[idx[11]], r[idx[12]]});
        if (frame) c.accel_frame.push_back({r[ax], r[ay], r[az]});
        if (!curv.empty()) {
            geometry::Curvature R;
            for (const auto& [col, v] : curv) {
                if (v[0] == 0) R.r0i0j[v[1]][v[2]] = r[col];
                else if (v[0] == 1) R.r0kil[v[1]][v[2]][v[3]] = r[col];
                else R.rikjl[v[1]][v[2]][v[3]][v[4]] = r[col];
            }
            c.curvature.push_back(R);
        }
    }
    c.validate();
    return c;
}

inline Table curve_to_table(const geometry::CurveData& c) {
    Table t;
    t.units = c.units;
    t.comments.push_back("curve: proper time, events, four-velocity, four-acceleration");
    t.columns = curve_base_columns();
    const bool frame = !c.accel_frame.empty();
    if (frame) t.columns.insert(t.columns.end(), {"ax", "ay", "az"});
    const bool curv = !c.curvature.empty();
    if (curv)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.columns.push_back("R0i0j_" + std::to_string(i + 1) + std::to_string(j + 1));
    for (std::size_t k = 0; k < c.size(); ++k) {
        std::vector<double> r{c.tau[k]};
        for (double v : c.events[k]) r.push_back(v);
        for (double v : c.velocity[k]) r.push_back(v);
        for (double v : c.acceleration[k]) r.push_back(v);
        if (frame)
            for (double v : c.accel_frame[k]) r.push_back(v);
        if (curv)
            for (const auto& row : c.curvature[k].r0i0j)
                for (double v : row) r.push_back(v);
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline geometry::CurveData read_curve(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open curve table '" + path + "'");
    return curve_from_table(read_table(is));
}

inline void write_curve(std::ostream& os, const geometry::CurveData& c) { write_table(os, curve_to_table(c)); }

// ---------------------------------------------------------------------------
// Kernels and spectra

/// (dtau, Re w, Im w, eps) sampled at w(dtau - i eps).
inline Table kernel_table(const correlators::CorrelatorKernel& k, const std::vector<double>& dtau, double eps) {
    Table t;
    t.comments.push_back("kernel: " + k.label);
    t.columns = {"dtau", "re_w", "im_w", "eps"};
    for (double x : dtau) {
        const cplx v = k.eval(x, eps);
        t.rows.push_back({x, v.real(), v.imag(), eps});
    }
    return t;
}

/// (omega, Re w~, Im w~).
inline Table spectrum_table(const correlators::CorrelatorKernel& k, const std::vector<double>& omega,
                            correlators::FourierMethod method = correlators::FourierMethod::Auto) {
    Table t;
    t.comments.push_back("spectrum: " + k.label);
    t.columns = {"omega", "re_wtilde", "im_wtilde"};
    for (double w : omega) {
        const cplx v = correlators::kernel_fourier(k, w, method);
        t.rows.push_back({w, v.real(), v.imag()});
    }
    return t;
}

}  // namespace kmsprobe::tables
