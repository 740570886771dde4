#pragma once

// File output for run logs and cost statistics: CSV tables with JSON
// mirrors, SVG line plots and heatmaps.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nascost/experiment.hpp"

namespace nascost {

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string str() const;
  std::size_t column(const std::string& name) const;  // throws std::out_of_range
  double number(std::size_t row, const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
/// Array of row objects in column order; fields that parse fully as numbers
/// become numbers (integers when written without a point or exponent).
nlohmann::ordered_json csv_to_json(const CsvTable& t);

/// epoch,cell,edge,candidate,logit,probability (edge written "i-j")
CsvTable alpha_table(const RunLog& log);
/// epoch,cell,edge_i,edge_j,candidate,cost_mean,cost_var,n
CsvTable cost_table(const std::vector<std::pair<int, const CostStats*>>& per_epoch);
CsvTable cost_table(const RunLog& log);
/// epoch,train_L,train_H,train_C,train_accuracy and, for bilevel runs,
/// the same columns for the search split and the search probe
CsvTable metrics_table(const RunLog& log);

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct LinePanel {
  std::string title;
  std::vector<Series> series;
};

std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<LinePanel>& panels);
/// rows x cols cells coloured on a diverging scale centred at 0 (or a
/// sequential scale when every value is >= 0).
std::string svg_heatmap(const std::string& title, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols, const std::vector<std::vector<double>>& values);

/// Throws std::runtime_error naming the path on failure.
void write_file(const std::filesystem::path& path, const std::string& text);
/// Writes name.csv and name.json.
void write_table(const std::filesystem::path& dir, const std::string& name, const CsvTable& t);

/// alpha/cost/metrics tables, run.json and the SVG figures.
void emit_run(const RunLog& log, const std::filesystem::path& dir);
/// cost table and a mean-cost heatmap for Monte Carlo estimates.
void emit_costs(const MonteCarloResult& mc, const NetworkSpec& spec, const std::filesystem::path& dir);

}  // namespace nascost
