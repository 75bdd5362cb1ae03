#pragma once

#include <string>
#include <vector>

namespace vmav {

// An ordered (step, value) series with provenance metadata.
struct MetricSeries {
  std::string run_id;
  std::string name;
  double rho = 0.0;  // smoothing rate already applied (0 = raw)
  std::vector<double> steps;
  std::vector<double> values;

  void append(double step, double value);
  std::size_t size() const { return steps.size(); }
};

// s_0 = v_0; s_t = rho * s_{t-1} + (1 - rho) * v_t. Requires rho in [0, 1).
MetricSeries ema_smooth(const MetricSeries& s, double rho);

// Wide metrics table: first column is the x axis (iteration, update, ...).
struct MetricTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(const std::vector<double>& row);
  MetricSeries series(const std::string& column,
                      const std::string& run_id = "") const;
};

void write_metrics_csv(const MetricTable& t, const std::string& path);
MetricTable read_metrics_csv(const std::string& path);

// step,name,rho,value rows for one or more (typically smoothed) series.
void write_series_csv(const std::vector<MetricSeries>& series,
                      const std::string& path);

// Minimal static line chart; each series becomes one polyline.
void write_svg_lines(const std::vector<MetricSeries>& series,
                     const std::string& title, const std::string& path);

// Bar chart of counts per integer-range bin.
void write_svg_histogram(const std::vector<double>& edges,
                         const std::vector<double>& counts,
                         const std::string& title, const std::string& path);

}  // namespace vmav
