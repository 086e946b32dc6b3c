#include "repfair/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include "repfair/errors.hpp"

namespace repfair {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 64.0;
constexpr double kRight = 24.0;
constexpr double kTop = 48.0;
constexpr double kBottom = 72.0;
constexpr const char* kGroupColors[2] = {"#1f77b4", "#ff7f0e"};

std::string fx(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string header(const std::string& title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fx(kWidth) << "\" height=\"" << fx(kHeight)
    << "\" viewBox=\"0 0 " << fx(kWidth) << ' ' << fx(kHeight) << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << fx(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
    << "</text>\n";
  return o.str();
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle") {
  return "<text x=\"" + fx(x) + "\" y=\"" + fx(y) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

std::string legend(double x, double y) {
  std::string o;
  for (int k = 0; k < 2; ++k) {
    const double yy = y + 16.0 * k;
    o += "<rect x=\"" + fx(x) + "\" y=\"" + fx(yy - 9) + "\" width=\"10\" height=\"10\" fill=\"" + kGroupColors[k] +
         "\"/>\n";
    o += text(x + 14, yy, "group " + std::to_string(k), "start");
  }
  return o;
}

std::size_t column_or_throw(const CsvTable& t, const std::string& name) {
  try {
    return t.column(name);
  } catch (const Error&) {
    throw ChartError("chart input lacks column '" + name + "'");
  }
}

double number_at(const CsvTable& t, std::size_t row, std::size_t col) {
  try {
    return parse_number(t.rows[row][col]);
  } catch (const Error&) {
    throw ChartError("non-numeric chart value '" + t.rows[row][col] + "'");
  }
}

std::string pct(long tenths) {
  char buf[32];
  if (tenths % 10 == 0) {
    std::snprintf(buf, sizeof buf, "%ld%%", tenths / 10);
  } else {
    std::snprintf(buf, sizeof buf, "%ld.%ld%%", tenths / 10, tenths % 10);
  }
  return buf;
}

std::string row_label(const std::string& trainer, const std::string& sweep) {
  return sweep == "none" ? trainer : trainer + " @ " + sweep;
}

// Y axis with five evenly spaced ticks from 0 to top.
std::string y_axis(double top, double plot_h, const std::string& label) {
  std::string o;
  o += "<line x1=\"" + fx(kLeft) + "\" y1=\"" + fx(kTop) + "\" x2=\"" + fx(kLeft) + "\" y2=\"" + fx(kTop + plot_h) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = top * i / 4.0;
    const double y = kTop + plot_h - plot_h * i / 4.0;
    o += "<line x1=\"" + fx(kLeft - 4) + "\" y1=\"" + fx(y) + "\" x2=\"" + fx(kLeft) + "\" y2=\"" + fx(y) +
         "\" stroke=\"black\"/>\n";
    o += text(kLeft - 6, y + 4, format_number(std::round(v * 1e4) / 1e4), "end");
  }
  o += "<text x=\"14\" y=\"" + fx(kTop + plot_h / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       fx(kTop + plot_h / 2) + ")\">" + escape(label) + "</text>\n";
  return o;
}

}  // namespace

std::string frequency_chart_svg(const CsvTable& aggregate, const std::string& title) {
  const auto c_trainer = column_or_throw(aggregate, "trainer");
  const auto c_sweep = column_or_throw(aggregate, "sweep_value");
  const auto c_runs = column_or_throw(aggregate, "runs");
  const auto c_div = column_or_throw(aggregate, "diverged");
  const auto c_f0 = column_or_throw(aggregate, "freq0_mean");
  const auto c_f1 = column_or_throw(aggregate, "freq1_mean");
  if (aggregate.rows.empty()) throw ChartError("frequency chart needs at least one aggregate row");

  const double plot_w = kWidth - kLeft - kRight - 80.0;
  const double plot_h = kHeight - kTop - kBottom;
  const double slot = plot_w / static_cast<double>(aggregate.rows.size());
  const double bar_w = std::min(60.0, slot * 0.6);
  std::string o = header(title);
  o += y_axis(1.0, plot_h, "share of generated samples");
  for (std::size_t i = 0; i < aggregate.rows.size(); ++i) {
    const auto& row = aggregate.rows[i];
    const double f0 = number_at(aggregate, i, c_f0);
    const double f1 = number_at(aggregate, i, c_f1);
    const double x = kLeft + slot * (static_cast<double>(i) + 0.5) - bar_w / 2;
    const std::string label = row_label(row[c_trainer], row[c_sweep]);
    o += "<g data-trainer=\"" + escape(row[c_trainer]) + "\" data-sweep-value=\"" + escape(row[c_sweep]) +
         "\" data-runs=\"" + escape(row[c_runs]) + "\" data-diverged=\"" + escape(row[c_div]) + "\">\n";
    if (!(f0 + f1 > 0.0)) {
      o += text(x + bar_w / 2, kTop + plot_h - 6, "all diverged");
    } else {
      // Shares are shown in tenths of a percent; group 1 takes the exact
      // complement so the two labels always add up to 100%.
      const double share0 = f0 / (f0 + f1);
      const long t0 = std::lround(share0 * 1000.0);
      const long t1 = 1000 - t0;
      const double h0 = plot_h * static_cast<double>(t0) / 1000.0;
      const double h1 = plot_h - h0;
      const double y1 = kTop;
      const double y0 = kTop + h1;
      o += "<rect x=\"" + fx(x) + "\" y=\"" + fx(y0) + "\" width=\"" + fx(bar_w) + "\" height=\"" + fx(h0) +
           "\" fill=\"" + kGroupColors[0] + "\" data-group=\"0\" data-value=\"" + format_number(f0) + "\"/>\n";
      o += "<rect x=\"" + fx(x) + "\" y=\"" + fx(y1) + "\" width=\"" + fx(bar_w) + "\" height=\"" + fx(h1) +
           "\" fill=\"" + kGroupColors[1] + "\" data-group=\"1\" data-value=\"" + format_number(f1) + "\"/>\n";
      o += text(x + bar_w / 2, y0 + std::min(14.0, h0 / 2 + 4), pct(t0));
      o += text(x + bar_w / 2, y1 + std::min(14.0, h1 / 2 + 4), pct(t1));
      o += "<text class=\"sum\" x=\"" + fx(x + bar_w / 2) + "\" y=\"" + fx(kTop - 6) +
           "\" text-anchor=\"middle\">sum " + pct(t0 + t1) + "</text>\n";
    }
    o += text(x + bar_w / 2, kTop + plot_h + 16, label);
    o += "</g>\n";
  }
  o += legend(kWidth - kRight - 70, kTop + 10);
  o += "</svg>\n";
  return o;
}

std::string sweep_chart_svg(const CsvTable& aggregate, const std::string& title) {
  const auto c_trainer = column_or_throw(aggregate, "trainer");
  const auto c_sweep = column_or_throw(aggregate, "sweep_value");
  const auto c_div = column_or_throw(aggregate, "diverged");
  const auto c_runs = column_or_throw(aggregate, "runs");
  const auto c_med = column_or_throw(aggregate, "kl_median");
  const auto c_min = column_or_throw(aggregate, "kl_min");
  const auto c_max = column_or_throw(aggregate, "kl_max");

  std::vector<std::size_t> points;
  std::optional<std::size_t> reference;
  for (std::size_t i = 0; i < aggregate.rows.size(); ++i) {
    if (aggregate.rows[i][c_sweep] == "none") {
      if (aggregate.rows[i][c_trainer] == "vanilla") reference = i;
    } else {
      points.push_back(i);
    }
  }
  if (points.empty()) throw ChartError("sweep chart needs at least one sweep point");

  double top = 0.0;
  for (std::size_t i = 0; i < aggregate.rows.size(); ++i) top = std::max(top, number_at(aggregate, i, c_max));
  top = top > 0.0 ? top * 1.15 : 1.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  const double slot = plot_w / static_cast<double>(points.size());
  const double bar_w = std::min(48.0, slot * 0.6);
  const auto ypos = [&](double v) { return kTop + plot_h - plot_h * v / top; };

  std::string o = header(title);
  o += y_axis(top, plot_h, "KL to uniform (nats)");
  for (std::size_t j = 0; j < points.size(); ++j) {
    const std::size_t i = points[j];
    const auto& row = aggregate.rows[i];
    const double med = number_at(aggregate, i, c_med);
    const double lo = number_at(aggregate, i, c_min);
    const double hi = number_at(aggregate, i, c_max);
    const double cx = kLeft + slot * (static_cast<double>(j) + 0.5);
    o += "<g data-sweep-value=\"" + escape(row[c_sweep]) + "\" data-diverged=\"" + escape(row[c_div]) +
         "\" data-runs=\"" + escape(row[c_runs]) + "\">\n";
    o += "<rect x=\"" + fx(cx - bar_w / 2) + "\" y=\"" + fx(ypos(med)) + "\" width=\"" + fx(bar_w) +
         "\" height=\"" + fx(kTop + plot_h - ypos(med)) + "\" fill=\"#2ca02c\" data-value=\"" +
         format_number(med) + "\"/>\n";
    o += "<line x1=\"" + fx(cx) + "\" y1=\"" + fx(ypos(lo)) + "\" x2=\"" + fx(cx) + "\" y2=\"" + fx(ypos(hi)) +
         "\" stroke=\"black\" data-min=\"" + format_number(lo) + "\" data-max=\"" + format_number(hi) + "\"/>\n";
    o += text(cx, ypos(hi) - 6, format_number(std::round(med * 1e4) / 1e4));
    o += text(cx, kTop + plot_h + 16, row[c_sweep]);
    if (row[c_div] != "0") o += text(cx, kTop + plot_h + 30, row[c_div] + " diverged");
    o += "</g>\n";
  }
  if (reference) {
    const double v = number_at(aggregate, *reference, c_med);
    o += "<line x1=\"" + fx(kLeft) + "\" y1=\"" + fx(ypos(v)) + "\" x2=\"" + fx(kLeft + plot_w) + "\" y2=\"" +
         fx(ypos(v)) + "\" stroke=\"#d62728\" stroke-dasharray=\"6 4\" data-value=\"" + format_number(v) + "\"/>\n";
    o += text(kLeft + plot_w - 4, ypos(v) - 4, "vanilla " + format_number(std::round(v * 1e4) / 1e4), "end");
  }
  o += text(kLeft + plot_w / 2, kHeight - 16, "sweep value");
  o += "</svg>\n";
  return o;
}

std::string grad_norm_chart_svg(const CsvTable& telemetry, const std::string& title) {
  const auto c_epoch = column_or_throw(telemetry, "epoch");
  const auto c_group = column_or_throw(telemetry, "group");
  const auto c_norm = column_or_throw(telemetry, "grad_norm_preclip");
  std::vector<std::pair<double, double>> series[2];
  for (std::size_t i = 0; i < telemetry.rows.size(); ++i) {
    const double g = number_at(telemetry, i, c_group);
    if (g != 0.0 && g != 1.0) throw ChartError("telemetry group must be 0 or 1");
    series[static_cast<int>(g)].emplace_back(number_at(telemetry, i, c_epoch), number_at(telemetry, i, c_norm));
  }
  if (series[0].empty() || series[1].empty()) throw ChartError("gradient-norm chart needs rows for both groups");

  double x_max = 1.0, y_max = 0.0;
  for (const auto& s : series) {
    for (const auto& [e, v] : s) {
      x_max = std::max(x_max, e);
      if (std::isfinite(v)) y_max = std::max(y_max, v);
    }
  }
  y_max = y_max > 0.0 ? y_max * 1.1 : 1.0;
  const double plot_w = kWidth - kLeft - kRight - 80.0;
  const double plot_h = kHeight - kTop - kBottom;
  const auto xpos = [&](double e) { return kLeft + plot_w * e / x_max; };
  const auto ypos = [&](double v) { return kTop + plot_h - plot_h * std::min(v, y_max) / y_max; };

  std::string o = header(title);
  o += y_axis(y_max, plot_h, "mean pre-clip gradient norm");
  o += "<line x1=\"" + fx(kLeft) + "\" y1=\"" + fx(kTop + plot_h) + "\" x2=\"" + fx(kLeft + plot_w) + "\" y2=\"" +
       fx(kTop + plot_h) + "\" stroke=\"black\"/>\n";
  o += text(kLeft, kTop + plot_h + 16, "0");
  o += text(kLeft + plot_w, kTop + plot_h + 16, format_number(x_max));
  o += text(kLeft + plot_w / 2, kTop + plot_h + 32, "epoch");
  for (int k = 0; k < 2; ++k) {
    o += "<g data-group=\"" + std::to_string(k) + "\">\n<polyline fill=\"none\" stroke=\"" + kGroupColors[k] +
         "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].size(); ++i) {
      if (i) o += ' ';
      o += fx(xpos(series[k][i].first)) + ',' + fx(ypos(series[k][i].second));
    }
    o += "\"/>\n";
    for (const auto& [e, v] : series[k]) {
      o += "<circle cx=\"" + fx(xpos(e)) + "\" cy=\"" + fx(ypos(v)) + "\" r=\"1.2\" fill=\"" + kGroupColors[k] +
           "\" data-epoch=\"" + format_number(e) + "\" data-value=\"" + format_number(v) + "\"/>\n";
    }
    const auto& last = series[k].back();
    o += text(xpos(last.first) + 4, ypos(last.second) + 4, format_number(std::round(last.second * 1e4) / 1e4),
              "start");
    o += "</g>\n";
  }
  o += legend(kWidth - kRight - 70, kTop + 10);
  o += "</svg>\n";
  return o;
}

void render_charts(const std::filesystem::path& dir) {
  const auto write = [](const std::filesystem::path& p, const std::string& svg) {
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << svg)) throw IoError("cannot write " + p.string());
  };
  const auto agg_path = dir / "aggregate.csv";
  if (std::filesystem::exists(agg_path)) {
    const CsvTable agg = read_csv(agg_path);
    write(dir / "frequency.svg", frequency_chart_svg(agg, "Group shares of generated samples"));
    const auto c_sweep = agg.column("sweep_value");
    const bool swept = std::any_of(agg.rows.begin(), agg.rows.end(),
                                   [&](const auto& r) { return r[c_sweep] != "none"; });
    if (swept) write(dir / "sweep.svg", sweep_chart_svg(agg, "KL to uniform across the sweep"));
  }
  const auto runs = dir / "runs";
  if (!std::filesystem::is_directory(runs)) return;
  std::vector<std::filesystem::path> run_dirs;
  for (const auto& entry : std::filesystem::directory_iterator(runs)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "telemetry.csv")) {
      run_dirs.push_back(entry.path());
    }
  }
  std::sort(run_dirs.begin(), run_dirs.end());
  for (const auto& r : run_dirs) {
    const CsvTable t = read_csv(r / "telemetry.csv");
    if (t.rows.empty()) continue;
    write(r / "grad_norms.svg", grad_norm_chart_svg(t, r.filename().string()));
  }
}

}  // namespace repfair
