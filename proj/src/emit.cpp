#include "nascost/emit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nascost {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

bool needs_quotes(const std::string& s) { return s.find_first_of(",\"\n") != std::string::npos; }

std::string quote(const std::string& s) {
  if (!needs_quotes(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string CsvTable::str() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& f) {
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i) out += ',';
      out += quote(f[i]);
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::out_of_range("no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, const std::string& name) const {
  const std::string& s = rows.at(row).at(column(name));
  if (auto v = parse_number(s)) return *v;
  throw std::invalid_argument("column '" + name + "' row " + std::to_string(row) + " is not a number: " + s);
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false, any = false;
  auto end_line = [&] {
    fields.push_back(cur);
    cur.clear();
    if (t.header.empty()) t.header = std::move(fields);
    else t.rows.push_back(std::move(fields));
    fields.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') cur += '"', ++i;
      else if (c == '"') quoted = false;
      else cur += c;
      continue;
    }
    any = true;
    if (c == '"') quoted = true;
    else if (c == ',') fields.push_back(std::move(cur)), cur.clear();
    else if (c == '\n') end_line();
    else if (c != '\r') cur += c;
  }
  if (quoted) throw std::invalid_argument("unterminated quoted CSV field");
  if (any) end_line();
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (t.rows[r].size() != t.header.size())
      throw std::invalid_argument("CSV row " + std::to_string(r + 1) + " has " + std::to_string(t.rows[r].size()) +
                                  " fields, header has " + std::to_string(t.header.size()));
  return t;
}

nlohmann::ordered_json csv_to_json(const CsvTable& t) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < t.header.size(); ++i) {
      std::int64_t n = 0;
      const char* b = r[i].data();
      const char* e = b + r[i].size();
      if (r[i].empty()) o[t.header[i]] = nullptr;
      else if (auto res = std::from_chars(b, e, n); res.ec == std::errc() && res.ptr == e) o[t.header[i]] = n;
      else if (auto v = parse_number(r[i]); v && std::isfinite(*v)) o[t.header[i]] = *v;
      else o[t.header[i]] = r[i];
    }
    out.push_back(std::move(o));
  }
  return out;
}

namespace {

std::string edge_label(Edge e) { return std::to_string(e.from) + "-" + std::to_string(e.to); }

}  // namespace

CsvTable alpha_table(const RunLog& log) {
  CsvTable t;
  t.header = {"epoch", "cell", "edge", "candidate", "logit", "probability"};
  for (const EpochLog& ep : log.epochs)
    for (std::size_t c = 0; c < ep.logits.size(); ++c)
      for (const auto& [e, l] : ep.logits[c]) {
        const auto ops = log.network.cells[c].ops_on(e);
        const auto& p = ep.probabilities[c].at(e);
        for (std::size_t k = 0; k < l.size(); ++k)
          t.rows.push_back({std::to_string(ep.epoch), std::to_string(c), edge_label(e), to_string(ops[k]),
                            format_number(l[k]), format_number(p[k])});
      }
  return t;
}

CsvTable cost_table(const std::vector<std::pair<int, const CostStats*>>& per_epoch) {
  CsvTable t;
  t.header = {"epoch", "cell", "edge_i", "edge_j", "candidate", "cost_mean", "cost_var", "n"};
  for (const auto& [epoch, stats] : per_epoch)
    for (const auto& [key, s] : stats->entries()) {
      const auto& [cell, e, op] = key;
      t.rows.push_back({std::to_string(epoch), std::to_string(cell), std::to_string(e.from), std::to_string(e.to),
                        to_string(op), format_number(s.mean), format_number(s.variance()), std::to_string(s.n)});
    }
  return t;
}

CsvTable cost_table(const RunLog& log) {
  std::vector<std::pair<int, const CostStats*>> v;
  for (const auto& ep : log.epochs) v.emplace_back(ep.epoch, &ep.costs);
  return cost_table(v);
}

CsvTable metrics_table(const RunLog& log) {
  CsvTable t;
  const bool bilevel = std::any_of(log.epochs.begin(), log.epochs.end(), [](const EpochLog& e) { return e.search; });
  t.header = {"epoch", "train_L", "train_H", "train_C", "train_accuracy"};
  if (bilevel)
    for (const char* p : {"search", "probe"})
      for (const char* f : {"_L", "_H", "_C", "_accuracy"}) t.header.push_back(std::string(p) + f);
  auto push = [](std::vector<std::string>& r, const std::optional<SplitMetrics>& m) {
    for (double v : {m ? m->L : NAN, m ? m->H : NAN, m ? m->C : NAN, m ? m->accuracy : NAN})
      r.push_back(std::isnan(v) ? "" : format_number(v));
  };
  for (const EpochLog& ep : log.epochs) {
    std::vector<std::string> r{std::to_string(ep.epoch)};
    push(r, ep.train);
    if (bilevel) {
      push(r, ep.search);
      push(r, ep.search_probe);
    }
    t.rows.push_back(std::move(r));
  }
  return t;
}

namespace {

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<LinePanel>& panels) {
  const int pw = 320, ph = 220, ml = 55, mr = 15, mt = 30, mb = 40, legend_h = 20;
  const int cols = panels.empty() ? 1 : std::min<int>(3, static_cast<int>(panels.size()));
  const int rows = panels.empty() ? 1 : static_cast<int>((panels.size() + static_cast<std::size_t>(cols) - 1) / cols);
  std::vector<std::string> names;
  for (const auto& p : panels)
    for (const auto& s : p.series)
      if (std::find(names.begin(), names.end(), s.name) == names.end()) names.push_back(s.name);
  const int width = cols * (pw + ml + mr);
  const int height = 30 + rows * (ph + mt + mb) + legend_h * static_cast<int>((names.size() + 3) / 4) + 10;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(title) << "</text>\n";
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const LinePanel& p = panels[pi];
    const int ox = static_cast<int>(pi % static_cast<std::size_t>(cols)) * (pw + ml + mr) + ml;
    const int oy = 30 + static_cast<int>(pi / static_cast<std::size_t>(cols)) * (ph + mt + mb) + mt;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : p.series)
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
      }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    auto sx = [&](double x) { return ox + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return oy + ph - (y - y0) / (y1 - y0) * ph; };
    o << "<g>\n<text x=\"" << ox + pw / 2 << "\" y=\"" << oy - 8 << "\" text-anchor=\"middle\">" << esc(p.title)
      << "</text>\n";
    o << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    if (y0 < 0 && y1 > 0)
      o << "<line x1=\"" << ox << "\" x2=\"" << ox + pw << "\" y1=\"" << sy(0) << "\" y2=\"" << sy(0)
        << "\" stroke=\"#aaa\" stroke-dasharray=\"4 3\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double yv = y0 + (y1 - y0) * t / 4.0, xv = x0 + (x1 - x0) * t / 4.0;
      o << "<text x=\"" << ox - 4 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv) << "</text>\n";
      o << "<text x=\"" << sx(xv) << "\" y=\"" << oy + ph + 14 << "\" text-anchor=\"middle\">" << fmt(xv)
        << "</text>\n";
    }
    o << "<text x=\"" << ox + pw / 2 << "\" y=\"" << oy + ph + 30 << "\" text-anchor=\"middle\">" << esc(xlabel)
      << "</text>\n";
    o << "<text transform=\"translate(" << ox - 42 << "," << oy + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << esc(ylabel) << "</text>\n";
    for (const auto& s : p.series) {
      const auto ci = static_cast<std::size_t>(std::find(names.begin(), names.end(), s.name) - names.begin());
      o << "<polyline fill=\"none\" stroke=\"" << kPalette[ci % 10] << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.y[i])) o << fmt(sx(s.x[i]), 6) << "," << fmt(sy(s.y[i]), 6) << " ";
      o << "\"><title>" << esc(s.name) << "</title></polyline>\n";
    }
    o << "</g>\n";
  }
  const int ly = 30 + rows * (ph + mt + mb);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const int lx = 10 + static_cast<int>(i % 4) * 150, yy = ly + static_cast<int>(i / 4) * legend_h;
    o << "<rect x=\"" << lx << "\" y=\"" << yy << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[i % 10]
      << "\"/>\n<text x=\"" << lx + 16 << "\" y=\"" << yy + 10 << "\">" << esc(names[i]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_heatmap(const std::string& title, const std::vector<std::string>& rows,
                        const std::vector<std::string>& cols, const std::vector<std::vector<double>>& values) {
  if (values.size() != rows.size()) throw std::invalid_argument("heatmap: row count mismatch");
  for (const auto& r : values)
    if (r.size() != cols.size()) throw std::invalid_argument("heatmap: column count mismatch");
  const int cw = 70, ch = 28, ml = 80, mt = 110;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& r : values)
    for (double v : r)
      if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  const bool diverging = lo < 0;
  const double amax = std::max(std::abs(lo), std::abs(hi));
  auto colour = [&](double v) {
    if (!std::isfinite(v)) return std::string("#dddddd");
    int r, g, b;
    if (diverging) {
      const double t = amax > 0 ? v / amax : 0.0;  // -1 blue .. +1 red
      r = t > 0 ? 255 : static_cast<int>(255 * (1 + t));
      b = t < 0 ? 255 : static_cast<int>(255 * (1 - t));
      g = static_cast<int>(255 * (1 - std::abs(t)));
    } else {
      const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
      r = static_cast<int>(255 * (1 - t));
      g = static_cast<int>(255 * (1 - 0.6 * t));
      b = 255;
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };
  const int width = ml + cw * static_cast<int>(cols.size()) + 20;
  const int height = mt + ch * static_cast<int>(rows.size()) + 20;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << esc(title)
    << "</text>\n";
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const int x = ml + static_cast<int>(j) * cw + cw / 2;
    o << "<text transform=\"translate(" << x << "," << mt - 6 << ") rotate(-45)\">" << esc(cols[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int y = mt + static_cast<int>(i) * ch;
    o << "<text x=\"" << ml - 6 << "\" y=\"" << y + ch / 2 + 4 << "\" text-anchor=\"end\">" << esc(rows[i])
      << "</text>\n";
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double v = values[i][j];
      const int x = ml + static_cast<int>(j) * cw;
      o << "<g class=\"cell\"><rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch
        << "\" fill=\"" << colour(v) << "\" stroke=\"white\"/><text x=\"" << x + cw / 2 << "\" y=\"" << y + ch / 2 + 4
        << "\" text-anchor=\"middle\">" << (std::isfinite(v) ? fmt(v) : "") << "</text></g>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_table(const std::filesystem::path& dir, const std::string& name, const CsvTable& t) {
  write_file(dir / (name + ".csv"), t.str());
  write_file(dir / (name + ".json"), csv_to_json(t).dump(1) + "\n");
}

namespace {

struct EdgeRow {
  std::size_t cell;
  Edge edge;
  std::string label;
};

std::vector<EdgeRow> edge_rows(const NetworkSpec& spec, bool include_fixed) {
  std::vector<EdgeRow> out;
  for (std::size_t c = 0; c < spec.cells.size(); ++c)
    for (Edge e : spec.cells[c].edges()) {
      if (!include_fixed && spec.cells[c].is_fixed(e)) continue;
      out.push_back({c, e, (spec.cells.size() > 1 ? "c" + std::to_string(c) + " " : "") + e.str()});
    }
  return out;
}

std::vector<std::string> op_columns() {
  std::vector<std::string> v;
  for (OpKind k : kAllOps) v.push_back(to_string(k));
  return v;
}

std::vector<std::vector<double>> cost_grid(const CostStats& stats, const std::vector<EdgeRow>& rows) {
  std::vector<std::vector<double>> grid;
  for (const auto& r : rows) {
    std::vector<double> line;
    for (OpKind k : kAllOps) {
      const RunningStat* s = stats.find(static_cast<int>(r.cell), r.edge, k);
      line.push_back(s && s->n ? s->mean : NAN);
    }
    grid.push_back(std::move(line));
  }
  return grid;
}

}  // namespace

void emit_run(const RunLog& log, const std::filesystem::path& dir) {
  write_table(dir, "alpha", alpha_table(log));
  write_table(dir, "cost", cost_table(log));
  const CsvTable metrics = metrics_table(log);
  write_table(dir, "metrics", metrics);

  nlohmann::json run{{"config", log.config},
                     {"epochs_logged", log.epochs.size()},
                     {"aborted", log.aborted},
                     {"abort_reason", log.abort_reason},
                     {"channel_mean", log.channel_mean},
                     {"channel_std", log.channel_std},
                     {"theta_examples_train", log.theta_examples_train},
                     {"theta_examples_search", log.theta_examples_search}};
  if (log.epochs.size() >= 3) run["patterns"] = detect_patterns(log);
  write_file(dir / "run.json", run.dump(2) + "\n");

  const auto rows = edge_rows(log.network, false);
  std::vector<LinePanel> alpha_panels, cost_panels;
  for (const auto& r : rows) {
    LinePanel ap{r.label, {}}, cp{r.label, {}};
    const auto ops = log.network.cells[r.cell].ops_on(r.edge);
    for (std::size_t k = 0; k < ops.size(); ++k) {
      Series s{to_string(ops[k]), {}, {}};
      for (const auto& ep : log.epochs) {
        s.x.push_back(ep.epoch);
        s.y.push_back(ep.probabilities[r.cell].at(r.edge)[k]);
      }
      ap.series.push_back(std::move(s));
    }
    Series pooled{"pooled cost", {}, {}};
    for (const auto& ep : log.epochs) {
      const RunningStat s = ep.costs.edge_pooled(static_cast<int>(r.cell), r.edge);
      pooled.x.push_back(ep.epoch);
      pooled.y.push_back(s.n ? s.mean : NAN);
    }
    cp.series.push_back(std::move(pooled));
    alpha_panels.push_back(std::move(ap));
    cost_panels.push_back(std::move(cp));
  }
  write_file(dir / "alpha_evolution.svg", svg_line_plot("architecture probabilities", "epoch", "p", alpha_panels));
  write_file(dir / "cost_evolution.svg", svg_line_plot("mean edge cost", "epoch", "cost", cost_panels));

  std::vector<LinePanel> metric_panels;
  for (const std::string split : {"train", "search", "probe"}) {
    if (std::find(metrics.header.begin(), metrics.header.end(), split + "_C") == metrics.header.end()) continue;
    LinePanel p{split, {}};
    for (const std::string f : {"L", "H", "C"}) {
      Series s{f, {}, {}};
      for (std::size_t i = 0; i < metrics.rows.size(); ++i) {
        s.x.push_back(metrics.number(i, "epoch"));
        const std::string& cell = metrics.rows[i][metrics.column(split + "_" + f)];
        s.y.push_back(cell.empty() ? NAN : metrics.number(i, split + "_" + f));
      }
      p.series.push_back(std::move(s));
    }
    metric_panels.push_back(std::move(p));
  }
  write_file(dir / "loss_entropy_cost.svg", svg_line_plot("L, H and C = L - H", "epoch", "nats", metric_panels));

  std::vector<std::string> labels;
  std::vector<std::vector<double>> grid;
  for (const auto& r : rows) {
    labels.push_back(r.label);
    std::vector<double> line(kAllOps.size(), NAN);
    if (!log.epochs.empty()) {
      const auto ops = log.network.cells[r.cell].ops_on(r.edge);
      const auto& p = log.epochs.back().probabilities[r.cell].at(r.edge);
      for (std::size_t k = 0; k < ops.size(); ++k) line[static_cast<std::size_t>(ops[k])] = p[k];
    }
    grid.push_back(std::move(line));
  }
  write_file(dir / "alpha_heatmap.svg", svg_heatmap("final architecture probabilities", labels, op_columns(), grid));

  CostStats all;
  for (const auto& ep : log.epochs) all.merge(ep.costs);
  const auto crow = edge_rows(log.network, true);
  std::vector<std::string> clabels;
  for (const auto& r : crow) clabels.push_back(r.label);
  write_file(dir / "cost_heatmap.svg", svg_heatmap("mean cost per candidate", clabels, op_columns(), cost_grid(all, crow)));
}

void emit_costs(const MonteCarloResult& mc, const NetworkSpec& spec, const std::filesystem::path& dir) {
  std::vector<std::pair<int, const CostStats*>> v;
  for (std::size_t e = 0; e < mc.per_epoch.size(); ++e) v.emplace_back(static_cast<int>(e + 1), &mc.per_epoch[e]);
  write_table(dir, "cost", cost_table(v));
  const auto rows = edge_rows(spec, true);
  std::vector<std::string> labels;
  for (const auto& r : rows) labels.push_back(r.label);
  write_file(dir / "cost_heatmap.svg", svg_heatmap("Monte Carlo mean cost", labels, op_columns(), cost_grid(mc.total, rows)));
}

}  // namespace nascost
