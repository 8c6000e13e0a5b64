#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cloth {

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw FormatError("read_csv: cannot open " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.push_back("");
        if (first) {
            t.header = cells;
            first = false;
            continue;
        }
        Vec row;
        row.reserve(cells.size());
        for (const auto& cstr : cells) {
            try {
                row.push_back(cstr.empty() ? 0.0 : std::stod(cstr));
            } catch (const std::exception&) {
                throw FormatError("read_csv: non-numeric cell '" + cstr + "' in " + path);
            }
        }
        if (row.size() != t.header.size()) throw FormatError("read_csv: ragged row in " + path);
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw FormatError("read_csv: " + path + " is empty");
    return t;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void export_plot(const std::string& csv_path, const std::vector<std::string>& columns,
                 const std::string& out_svg) {
    const CsvTable t = read_csv(csv_path);
    if (t.rows.empty()) throw FormatError("export_plot: " + csv_path + " has no data rows");
    if (columns.empty()) throw ParameterError("export_plot: no columns requested");

    std::vector<int> cols;
    for (const auto& name : columns) {
        const int c = t.column(name);
        if (c < 0) throw ParameterError("export_plot: column '" + name + "' not found");
        cols.push_back(c);
    }
    const int xcol = t.column("iter");

    const double width = 800, height = 480;
    const double ml = 70, mr = 160, mt = 30, mb = 50;
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    const size_t n = t.rows.size();
    for (size_t i = 0; i < n; ++i) {
        const double x = xcol >= 0 ? t.rows[i][xcol] : static_cast<double>(i);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        for (int c : cols) {
            ymin = std::min(ymin, t.rows[i][c]);
            ymax = std::max(ymax, t.rows[i][c]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto sx = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
    auto sy = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

    std::ostringstream s;
    s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // axes
    s << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 5; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 5.0;
        const double yv = ymin + (ymax - ymin) * k / 5.0;
        s << "<line x1=\"" << sx(xv) << "\" y1=\"" << mt + ph << "\" x2=\"" << sx(xv) << "\" y2=\"" << mt + ph + 5
          << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << sx(xv) << "\" y=\"" << mt + ph + 20
          << "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">" << num(xv) << "</text>\n";
        s << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy(yv) << "\" x2=\"" << ml << "\" y2=\"" << sy(yv)
          << "\" stroke=\"black\"/>\n";
        s << "<text x=\"" << ml - 9 << "\" y=\"" << sy(yv) + 4
          << "\" font-size=\"11\" text-anchor=\"end\" font-family=\"sans-serif\">" << num(yv) << "</text>\n";
    }
    s << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 11
      << "\" font-size=\"12\" text-anchor=\"middle\" font-family=\"sans-serif\">"
      << (xcol >= 0 ? "iter" : "row") << "</text>\n";

    // series
    for (size_t ci = 0; ci < cols.size(); ++ci) {
        const char* color = kPalette[ci % (sizeof(kPalette) / sizeof(kPalette[0]))];
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < n; ++i) {
            const double x = xcol >= 0 ? t.rows[i][xcol] : static_cast<double>(i);
            s << sx(x) << "," << sy(t.rows[i][cols[ci]]) << " ";
        }
        s << "\"/>\n";
        const double ly = mt + 16.0 * static_cast<double>(ci) + 8;
        s << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 34 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        s << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4
          << "\" font-size=\"12\" font-family=\"sans-serif\">" << columns[ci] << "</text>\n";
    }
    s << "</svg>\n";

    std::ofstream out(out_svg);
    if (!out) throw FormatError("export_plot: cannot write " + out_svg);
    out << s.str();
}

}  // namespace cloth
