#pragma once

#include <string>
#include <vector>

#include "numerics.hpp"

namespace cloth {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<Vec> rows;
    int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);

// Self-contained SVG 1.1 line chart: one polyline per requested column, the
// "iter" column (when present) on the x axis, axes with ticks and a legend.
void export_plot(const std::string& csv_path, const std::vector<std::string>& columns,
                 const std::string& out_svg);

}  // namespace cloth
