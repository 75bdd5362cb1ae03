#include "vmav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vmav/common.hpp"

namespace vmav {

void MetricSeries::append(double step, double value) {
  VMAV_CHECK(steps.empty() || step > steps.back(),
             "metric series '" + name + "': steps must strictly increase");
  steps.push_back(step);
  values.push_back(value);
}

MetricSeries ema_smooth(const MetricSeries& s, double rho) {
  VMAV_CHECK(rho >= 0.0 && rho < 1.0, "ema_smooth: rho must lie in [0, 1)");
  MetricSeries out;
  out.run_id = s.run_id;
  out.name = s.name;
  out.rho = rho;
  out.steps = s.steps;
  out.values.reserve(s.values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.values.size(); ++i) {
    acc = i == 0 ? s.values[0] : rho * acc + (1.0 - rho) * s.values[i];
    out.values.push_back(acc);
  }
  return out;
}

void MetricTable::add_row(const std::vector<double>& row) {
  VMAV_CHECK(row.size() == columns.size(),
             "metrics table: row width mismatch");
  rows.push_back(row);
}

MetricSeries MetricTable::series(const std::string& column,
                                 const std::string& run_id) const {
  std::size_t col = columns.size();
  for (std::size_t i = 1; i < columns.size(); ++i)
    if (columns[i] == column) col = i;
  VMAV_CHECK(col < columns.size(),
             "metrics table: no column '" + column + "'");
  MetricSeries s;
  s.run_id = run_id;
  s.name = column;
  for (const auto& r : rows) s.append(r[0], r[col]);
  return s;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void write_metrics_csv(const MetricTable& t, const std::string& path) {
  std::ofstream f(path);
  VMAV_CHECK(f.good(), "metrics: cannot write " + path);
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    f << (i ? "," : "") << t.columns[i];
  f << "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i)
      f << (i ? "," : "") << fmt(r[i]);
    f << "\n";
  }
  VMAV_CHECK(f.good(), "metrics: write failed for " + path);
}

MetricTable read_metrics_csv(const std::string& path) {
  std::ifstream f(path);
  VMAV_CHECK(f.good(), "metrics: cannot open " + path);
  MetricTable t;
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (header) {
      while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
      header = false;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    t.add_row(row);
  }
  return t;
}

void write_series_csv(const std::vector<MetricSeries>& series,
                      const std::string& path) {
  std::ofstream f(path);
  VMAV_CHECK(f.good(), "metrics: cannot write " + path);
  f << "step,name,rho,value\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.size(); ++i)
      f << fmt(s.steps[i]) << "," << s.name << "," << fmt(s.rho) << ","
        << fmt(s.values[i]) << "\n";
  VMAV_CHECK(f.good(), "metrics: write failed for " + path);
}

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c",
                         "#9467bd", "#ff7f0e", "#8c564b"};

struct Extent {
  double lo = 0.0, hi = 1.0;

  void widen(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span() const { return hi - lo > 1e-12 ? hi - lo : 1.0; }
};

}  // namespace

void write_svg_lines(const std::vector<MetricSeries>& series,
                     const std::string& title, const std::string& path) {
  const double W = 720, H = 440, L = 70, R = 20, T = 40, B = 50;
  Extent ex, ey;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (first) {
        ex.lo = ex.hi = s.steps[i];
        ey.lo = ey.hi = s.values[i];
        first = false;
      }
      ex.widen(s.steps[i]);
      ey.widen(s.values[i]);
    }
  auto px = [&](double x) {
    return L + (x - ex.lo) / ex.span() * (W - L - R);
  };
  auto py = [&](double y) {
    return H - B - (y - ey.lo) / ey.span() * (H - T - B);
  };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
      << "' height='" << H << "' viewBox='0 0 " << W << " " << H << "'>\n"
      << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n"
      << "<text x='" << W / 2 << "' y='24' text-anchor='middle' "
      << "font-family='sans-serif' font-size='16'>" << title << "</text>\n"
      << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R
      << "' y2='" << H - B << "' stroke='black'/>\n"
      << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
      << H - B << "' stroke='black'/>\n";
  for (int k = 0; k <= 4; ++k) {
    double xv = ex.lo + ex.span() * k / 4.0;
    double yv = ey.lo + ey.span() * k / 4.0;
    svg << "<text x='" << px(xv) << "' y='" << H - B + 18
        << "' text-anchor='middle' font-family='sans-serif' "
        << "font-size='11'>" << fmt(xv) << "</text>\n"
        << "<text x='" << L - 6 << "' y='" << py(yv) + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
        << fmt(yv) << "</text>\n";
  }
  int ci = 0;
  double legend_y = T + 4;
  for (const auto& s : series) {
    const char* color = kColors[ci % 6];
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='"
        << (s.rho > 0.0 ? 2.0 : 1.0) << "'"
        << (s.rho > 0.0 ? "" : " opacity='0.45'") << " points='";
    for (std::size_t i = 0; i < s.size(); ++i)
      svg << px(s.steps[i]) << "," << py(s.values[i]) << " ";
    svg << "'/>\n";
    std::string label = s.name;
    if (s.rho > 0.0) label += " (ema " + fmt(s.rho) + ")";
    svg << "<text x='" << W - R - 4 << "' y='" << legend_y
        << "' text-anchor='end' font-family='sans-serif' font-size='11' "
        << "fill='" << color << "'>" << label << "</text>\n";
    legend_y += 14;
    ++ci;
  }
  svg << "</svg>\n";

  std::ofstream f(path);
  VMAV_CHECK(f.good(), "metrics: cannot write " + path);
  f << svg.str();
  VMAV_CHECK(f.good(), "metrics: write failed for " + path);
}

void write_svg_histogram(const std::vector<double>& edges,
                         const std::vector<double>& counts,
                         const std::string& title, const std::string& path) {
  VMAV_CHECK(edges.size() == counts.size() + 1 && !counts.empty(),
             "histogram: need one more edge than counts");
  const double W = 720, H = 440, L = 70, R = 20, T = 40, B = 50;
  double cmax = 1.0;
  for (double c : counts) cmax = std::max(cmax, c);
  double xlo = edges.front(), xspan = edges.back() - edges.front();
  if (xspan <= 0) xspan = 1.0;
  auto px = [&](double x) { return L + (x - xlo) / xspan * (W - L - R); };
  auto py = [&](double c) { return H - B - c / cmax * (H - T - B); };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W
      << "' height='" << H << "' viewBox='0 0 " << W << " " << H << "'>\n"
      << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n"
      << "<text x='" << W / 2 << "' y='24' text-anchor='middle' "
      << "font-family='sans-serif' font-size='16'>" << title << "</text>\n"
      << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R
      << "' y2='" << H - B << "' stroke='black'/>\n"
      << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
      << H - B << "' stroke='black'/>\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    double x0 = px(edges[i]), x1 = px(edges[i + 1]);
    svg << "<rect x='" << x0 << "' y='" << py(counts[i]) << "' width='"
        << std::max(0.5, x1 - x0 - 1.0) << "' height='"
        << (H - B - py(counts[i])) << "' fill='#1f77b4'/>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    double xv = xlo + xspan * k / 4.0;
    double cv = cmax * k / 4.0;
    svg << "<text x='" << px(xv) << "' y='" << H - B + 18
        << "' text-anchor='middle' font-family='sans-serif' "
        << "font-size='11'>" << fmt(xv) << "</text>\n"
        << "<text x='" << L - 6 << "' y='" << py(cv) + 4
        << "' text-anchor='end' font-family='sans-serif' font-size='11'>"
        << fmt(cv) << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream f(path);
  VMAV_CHECK(f.good(), "metrics: cannot write " + path);
  f << svg.str();
  VMAV_CHECK(f.good(), "metrics: write failed for " + path);
}

}  // namespace vmav
