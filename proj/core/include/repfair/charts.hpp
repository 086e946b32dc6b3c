#pragma once

#include <filesystem>
#include <string>

#include "repfair/csv.hpp"

namespace repfair {

// All charts are plain SVG rendered only from CSV rows, with fixed-precision
// coordinates, so identical tables give byte-identical files. Every mark
// carries its source number in a data-value attribute and a visible label.

// One stacked bar per aggregate row (trainer x sweep point) splitting 100%
// between the two groups. Needs aggregate.csv columns trainer, sweep_value,
// runs, diverged, freq0_mean, freq1_mean.
std::string frequency_chart_svg(const CsvTable& aggregate, const std::string& title);

// Median KL per sweep point with min/max whiskers and divergence counts.
// Rows without a sweep value (the vanilla reference) become a dashed line.
std::string sweep_chart_svg(const CsvTable& aggregate, const std::string& title);

// Per-group pre-clip gradient norm over epochs from telemetry.csv rows.
std::string grad_norm_chart_svg(const CsvTable& telemetry, const std::string& title);

// Re-renders frequency.svg (and sweep.svg for sweeps) from
// <dir>/aggregate.csv and grad_norms.svg inside every <dir>/runs/* that holds
// a telemetry.csv.
void render_charts(const std::filesystem::path& dir);

}  // namespace repfair
