#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "agediff/field.hpp"
#include "agediff/grid.hpp"

namespace agediff {

class IoError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shortest representation that round-trips through a double.
inline std::string format_double(double v) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << body;
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::string body((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return body;
}

inline std::string csv_of_columns(const std::string& header,
                                  const std::vector<std::vector<double>>& rows) {
    std::string s = header + "\n";
    for (const auto& row : rows) {
        for (size_t k = 0; k < row.size(); ++k) {
            if (k) s += ',';
            s += format_double(row[k]);
        }
        s += '\n';
    }
    return s;
}

// Field snapshot: header row of x nodes, one row per age node.
inline std::string field_csv(const DensityField& u, const Grid& grid) {
    std::string s;
    for (int i = 0; i < grid.n_space(); ++i) {
        if (i) s += ',';
        s += format_double(grid.x_node(i));
    }
    s += '\n';
    for (int j = 0; j < u.rows(); ++j) {
        for (int i = 0; i < u.cols(); ++i) {
            if (i) s += ',';
            s += format_double(u.values(j, i));
        }
        s += '\n';
    }
    return s;
}

// Inverse of field_csv: reads a field snapshot back onto a grid.
inline DensityField load_field_csv(const std::filesystem::path& path, const Grid& grid);

struct ParsedCsv {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline ParsedCsv parse_csv(const std::string& body) {
    ParsedCsv out;
    size_t pos = 0;
    bool first = true;
    while (pos < body.size()) {
        size_t eol = body.find('\n', pos);
        std::string line = body.substr(pos, eol == std::string::npos ? eol : eol - pos);
        pos = eol == std::string::npos ? body.size() : eol + 1;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t c = 0;
        while (true) {
            size_t comma = line.find(',', c);
            cells.push_back(line.substr(c, comma == std::string::npos ? comma : comma - c));
            if (comma == std::string::npos) break;
            c = comma + 1;
        }
        if (first) {
            out.header = cells;
            first = false;
        } else {
            std::vector<double> row;
            row.reserve(cells.size());
            for (const auto& cell : cells) {
                double v = 0.0;
                auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
                if (r.ec != std::errc())
                    throw IoError("malformed csv cell '" + cell + "'");
                row.push_back(v);
            }
            out.rows.push_back(std::move(row));
        }
    }
    if (first) throw IoError("empty csv");
    return out;
}

inline DensityField load_field_csv(const std::filesystem::path& path, const Grid& grid) {
    ParsedCsv csv = parse_csv(read_text_file(path));
    if (static_cast<int>(csv.rows.size()) != grid.n_age_nodes())
        throw IoError("field csv " + path.string() + ": expected " +
                      std::to_string(grid.n_age_nodes()) + " age rows, found " +
                      std::to_string(csv.rows.size()));
    DensityField u = DensityField::zero(grid);
    for (int j = 0; j < grid.n_age_nodes(); ++j) {
        if (static_cast<int>(csv.rows[j].size()) != grid.n_space())
            throw IoError("field csv " + path.string() + ": row width mismatch");
        for (int i = 0; i < grid.n_space(); ++i) u.values(j, i) = csv.rows[j][i];
    }
    return u;
}

namespace svg_detail {

inline std::string num(double v) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
    return std::string(buf, r.ptr);
}

// Blue-to-red ramp for heat maps.
inline std::string ramp_color(double t) {
    t = std::min(1.0, std::max(0.0, t));
    int r = static_cast<int>(255 * t);
    int g = static_cast<int>(64 + 80 * (1.0 - std::abs(2.0 * t - 1.0)));
    int b = static_cast<int>(255 * (1.0 - t));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace svg_detail

// Self-contained semilog line chart of (x, y) samples with y > 0 plotted on
// a log axis; nonpositive values are dropped.
inline std::string svg_semilog_chart(const std::vector<double>& xs,
                                     const std::vector<double>& ys,
                                     const std::string& x_label,
                                     const std::string& y_label) {
    const double W = 720, H = 480, L = 70, R = 20, Tm = 20, B = 50;
    std::vector<double> px, py;
    for (size_t k = 0; k < xs.size() && k < ys.size(); ++k)
        if (ys[k] > 0.0) {
            px.push_back(xs[k]);
            py.push_back(std::log10(ys[k]));
        }
    if (px.size() < 2) throw IoError("svg chart: need at least two positive samples");
    double x0 = px.front(), x1 = px.front(), y0 = py.front(), y1 = py.front();
    for (double v : px) {
        x0 = std::min(x0, v);
        x1 = std::max(x1, v);
    }
    for (double v : py) {
        y0 = std::min(y0, v);
        y1 = std::max(y1, v);
    }
    if (x1 - x0 < 1e-300) x1 = x0 + 1.0;
    if (y1 - y0 < 1e-12) y1 = y0 + 1.0;

    auto X = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto Y = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - Tm - B); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
         "viewBox=\"0 0 720 480\">\n";
    s += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
    using svg_detail::num;
    s += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) +
         "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(L) + "\" y1=\"" + num(Tm) + "\" x2=\"" + num(L) +
         "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        double yv = y0 + (y1 - y0) * k / 4.0;
        s += "<text x=\"5\" y=\"" + num(Y(yv) + 4) + "\" font-size=\"11\">1e" +
             format_double(std::round(yv * 100) / 100) + "</text>\n";
        double xv = x0 + (x1 - x0) * k / 4.0;
        s += "<text x=\"" + num(X(xv) - 10) + "\" y=\"" + num(H - B + 18) +
             "\" font-size=\"11\">" + format_double(std::round(xv * 100) / 100) +
             "</text>\n";
    }
    s += "<text x=\"" + num((W - L - R) / 2 + L) + "\" y=\"" + num(H - 8) +
         "\" font-size=\"12\">" + x_label + "</text>\n";
    s += "<text x=\"12\" y=\"14\" font-size=\"12\">" + y_label + " (log scale)</text>\n";
    s += "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
    for (size_t k = 0; k < px.size(); ++k) {
        if (k) s += ' ';
        s += num(X(px[k])) + "," + num(Y(py[k]));
    }
    s += "\"/>\n</svg>\n";
    return s;
}

// Heat map of a field: one rect per (age row, space cell).
inline std::string svg_heatmap(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows[0].empty()) throw IoError("svg heatmap: empty field");
    const size_t nr = rows.size(), nc = rows[0].size();
    double vmin = rows[0][0], vmax = rows[0][0];
    for (const auto& r : rows)
        for (double v : r) {
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
    if (vmax - vmin < 1e-300) vmax = vmin + 1.0;

    const double W = 720, H = 480, L = 50, B = 30;
    const double cw = (W - L - 10) / nc, ch = (H - B - 10) / nr;
    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" "
         "viewBox=\"0 0 720 480\">\n";
    s += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
    using svg_detail::num;
    for (size_t j = 0; j < nr; ++j)
        for (size_t i = 0; i < nc; ++i) {
            double t = (rows[j][i] - vmin) / (vmax - vmin);
            s += "<rect x=\"" + num(L + i * cw) + "\" y=\"" + num(10 + j * ch) +
                 "\" width=\"" + num(cw + 0.5) + "\" height=\"" + num(ch + 0.5) +
                 "\" fill=\"" + svg_detail::ramp_color(t) + "\"/>\n";
        }
    s += "<text x=\"8\" y=\"" + num(H / 2) + "\" font-size=\"12\">age</text>\n";
    s += "<text x=\"" + num(W / 2) + "\" y=\"" + num(H - 8) +
         "\" font-size=\"12\">x</text>\n";
    s += "</svg>\n";
    return s;
}

}  // namespace agediff
