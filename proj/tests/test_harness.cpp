#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "nascost/emit.hpp"

using namespace nascost;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nascost_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config(RunMode mode, int epochs) {
  ExperimentConfig c;
  c.network.cells = {build_minimal_cell()};
  c.network.channels = 4;
  c.dataset.size = 64;
  c.dataset.noise = 0.5;
  c.batch_size = 16;
  c.epochs = epochs;
  c.mode = mode;
  c.seed = 3;
  c.alpha_optimizer.lr = 0.05;
  return c;
}

// Log with every edge's logits held at `logits`.
RunLog constant_log(const std::vector<double>& logits, int epochs) {
  RunLog log;
  log.network.cells = {build_minimal_cell()};
  for (int e = 1; e <= epochs; ++e) {
    EpochLog ep;
    ep.epoch = e;
    ep.logits.resize(1);
    ep.probabilities.resize(1);
    for (Edge edge : log.network.cells[0].searchable_edges()) {
      ep.logits[0][edge] = logits;
      ep.probabilities[0][edge] = softmax(logits);
    }
    log.append(std::move(ep));
  }
  return log;
}

}  // namespace

TEST_CASE("csv round trip recovers values") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1e3);
  CsvTable t;
  t.header = {"name", "value"};
  std::vector<double> values;
  for (int i = 0; i < 200; ++i) {
    const double v = i % 7 == 0 ? nd(rng) * 1e-290 : nd(rng);
    values.push_back(v);
    t.rows.push_back({i % 5 == 0 ? "quoted, \"name\"" : "row" + std::to_string(i), format_number(v)});
  }
  const CsvTable back = parse_csv(t.str());
  REQUIRE(back.rows.size() == values.size());
  CHECK(back.header == t.header);
  for (std::size_t i = 0; i < values.size(); ++i) {
    CHECK(std::abs(back.number(i, "value") - values[i]) <= 1e-12 * std::abs(values[i]));
    CHECK(back.rows[i][0] == t.rows[i][0]);
  }
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(NAN) == "nan");
  CHECK_THROWS_AS(parse_csv("a,b\n1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_csv("a\n\"open\n"), std::invalid_argument);
  CHECK_THROWS_AS(back.column("missing"), std::out_of_range);

  const auto j = csv_to_json(parse_csv("epoch,x,label\n3,0.5,none\n"));
  CHECK(j[0]["epoch"].is_number_integer());
  CHECK(j[0]["x"].get<double>() == 0.5);
  CHECK(j[0]["label"] == "none");
  CHECK(j[0].begin().key() == "epoch");
}

TEST_CASE("zero epochs give an empty log and header-only tables") {
  const RunResult r = run_evolution(small_config(RunMode::single_level, 0));
  CHECK(r.log.epochs.empty());
  CHECK_FALSE(r.log.aborted);
  CHECK_THROWS_AS(detect_patterns(r.log), std::invalid_argument);
  const fs::path dir = scratch_dir("empty");
  emit_run(r.log, dir);
  CHECK(slurp(dir / "alpha.csv") == "epoch,cell,edge,candidate,logit,probability\n");
  CHECK(slurp(dir / "cost.csv") == "epoch,cell,edge_i,edge_j,candidate,cost_mean,cost_var,n\n");
  CHECK(nlohmann::json::parse(slurp(dir / "alpha.json")).empty());
  CHECK(fs::exists(dir / "alpha_heatmap.svg"));
}

TEST_CASE("emitted tables follow the schemas") {
  const RunResult r = run_evolution(small_config(RunMode::single_level, 3));
  const CsvTable alpha = alpha_table(r.log);
  CHECK(alpha.rows.size() == 3 * 5 * 8);
  double psum = 0.0;
  for (std::size_t i = 0; i < 8; ++i) psum += alpha.number(i, "probability");
  CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(alpha.rows[0][2] == "0-2");

  const CsvTable cost = cost_table(r.log);
  for (std::size_t i = 0; i < cost.rows.size(); ++i) {
    CHECK(cost.number(i, "n") >= 1.0);
    CHECK(cost.number(i, "cost_var") >= 0.0);
    if (cost.rows[i][cost.column("candidate")] == "none") CHECK(cost.number(i, "cost_mean") == 0.0);
  }

  const fs::path dir = scratch_dir("schemas");
  emit_run(r.log, dir);
  for (const char* name : {"alpha", "cost", "metrics"}) {
    const CsvTable t = parse_csv(slurp(dir / (std::string(name) + ".csv")));
    CHECK(nlohmann::json::parse(slurp(dir / (std::string(name) + ".json"))).size() == t.rows.size());
  }
  const auto run = nlohmann::json::parse(slurp(dir / "run.json"));
  CHECK(run.contains("patterns"));
  CHECK(run["config"]["mode"] == "single_level");
}

TEST_CASE("heatmap has one cell per edge and candidate") {
  std::vector<std::vector<double>> v(5, std::vector<double>(8, 0.1));
  v[1][2] = -0.3;
  v[4][7] = NAN;
  const std::string svg = svg_heatmap("t", {"a", "b", "c", "d", "e"}, {"0", "1", "2", "3", "4", "5", "6", "7"}, v);
  std::size_t cells = 0;
  for (std::size_t pos = 0; (pos = svg.find("class=\"cell\"", pos)) != std::string::npos; ++pos) ++cells;
  CHECK(cells == 40);
  CHECK_THROWS_AS(svg_heatmap("t", {"a"}, {"x", "y"}, {{1.0}}), std::invalid_argument);
}

TEST_CASE("write failures name the path") {
  const fs::path dir = scratch_dir("blocked");
  write_file(dir / "file", "x");
  try {
    write_file(dir / "file" / "inner.csv", "y");
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("inner.csv") != std::string::npos);
  }
}

TEST_CASE("repeated runs are bit-identical") {
  for (RunMode mode : {RunMode::single_level, RunMode::bilevel}) {
    ExperimentConfig c = small_config(mode, 2);
    c.framework = mode == RunMode::bilevel ? Framework::snas : Framework::dsnas;
    const RunResult a = run_evolution(c), b = run_evolution(c);
    CHECK(alpha_table(a.log).str() == alpha_table(b.log).str());
    CHECK(cost_table(a.log).str() == cost_table(b.log).str());
    CHECK(metrics_table(a.log).str() == metrics_table(b.log).str());
  }
}

TEST_CASE("bilevel runs keep the search split out of theta updates") {
  ExperimentConfig c = small_config(RunMode::bilevel, 2);
  c.split_ratio = 0.25;
  const RunResult r = run_evolution(c);
  CHECK(r.log.theta_examples_search == 0);
  CHECK(r.log.theta_examples_train == 2 * 16);
  REQUIRE(r.log.epochs.size() == 2);
  CHECK(r.log.epochs[0].search.has_value());
  CHECK(r.log.epochs[0].search_probe.has_value());
  CHECK(metrics_table(r.log).header.size() == 13);
}

TEST_CASE("every framework runs") {
  for (Framework f : {Framework::snas, Framework::dsnas, Framework::darts, Framework::proxyless}) {
    ExperimentConfig c = small_config(RunMode::single_level, 1);
    c.framework = f;
    const RunResult r = run_evolution(c);
    CHECK_FALSE(r.log.aborted);
    CHECK(r.log.epochs.size() == 1);
    CHECK(r.log.epochs[0].logits[0].at(Edge{0, 2}) != std::vector<double>(8, 0.0));
  }
}

TEST_CASE("frozen alpha leaves the architecture untouched") {
  const RunResult r = run_evolution(small_config(RunMode::frozen_alpha, 2));
  for (const auto& ep : r.log.epochs)
    for (const auto& [e, l] : ep.logits[0]) CHECK(l == std::vector<double>(8, 0.0));
}

TEST_CASE("divergence aborts and keeps the log") {
  ExperimentConfig c = small_config(RunMode::single_level, 4);
  c.theta_optimizer.lr = 1e305;
  c.theta_optimizer.momentum = 0.0;
  c.init = InitScheme::unit_normal;
  const RunResult r = run_evolution(c);
  CHECK(r.log.aborted);
  CHECK_FALSE(r.log.abort_reason.empty());
  CHECK(r.log.epochs.size() < 4);
}

TEST_CASE("pattern detection") {
  CHECK_THROWS_AS(detect_patterns(constant_log(std::vector<double>(8, 0.0), 2)), std::invalid_argument);
  const PatternReport flat = detect_patterns(constant_log(std::vector<double>(8, 0.0), 5));
  CHECK_FALSE(flat.p1_growing);
  CHECK_FALSE(flat.p2_width_pref);
  CHECK_FALSE(flat.p3_catastrophic);

  std::vector<double> none_wins(8, 0.0);
  none_wins[0] = 1.0;
  const PatternReport dropped = detect_patterns(constant_log(none_wins, 4));
  CHECK(dropped.p3_catastrophic);
  CHECK_FALSE(dropped.p1_growing);  // nothing recovers
  CHECK_FALSE(dropped.p2_width_pref);

  // none dominates everywhere for two epochs, then input edges recover
  RunLog log = constant_log(none_wins, 2);
  std::vector<double> conv_wins(8, 0.0);
  conv_wins[4] = 2.0;
  for (int e = 3; e <= 5; ++e) {
    EpochLog ep = log.epochs.back();
    ep.epoch = e;
    for (auto& [edge, l] : ep.logits[0])
      if (edge != Edge{2, 3}) l = conv_wins;
    for (auto& [edge, p] : ep.probabilities[0]) p = softmax(ep.logits[0][edge]);
    log.append(std::move(ep));
  }
  const PatternReport p = detect_patterns(log);
  CHECK(p.p1_growing);
  CHECK(p.p1_onset == 1);
  CHECK(p.p1_recovery == 3);
  CHECK(p.p2_width_pref);
  CHECK(p.intermediate_dwell == 5.0);
  CHECK(p.input_dwell == 2.0);
  CHECK_FALSE(p.p3_catastrophic);
  CHECK_THROWS_AS(log.append(EpochLog{}), std::logic_error);
}

TEST_CASE("config parsing and validation") {
  const fs::path dir = scratch_dir("config");
  write_file(dir / "net.json", R"({"cells": ["minimal", "minimal"], "channels": 4})");
  write_file(dir / "run.json", R"({"network": "net.json", "mode": "bilevel", "split_ratio": 0.3,
      "temperature": 0.5, "epochs": 2, "output_dir": "o"})");
  const ExperimentConfig c = load_config(dir / "run.json");
  CHECK(c.network.cells.size() == 2);
  CHECK(c.network.channels == 4);
  CHECK(c.mode == RunMode::bilevel);
  CHECK(c.temperature.initial == 0.5);
  CHECK(c.temperature.final == 0.5);
  CHECK_NOTHROW(c.validate());
  const ExperimentConfig again = config_from_json(nlohmann::json(c));
  CHECK(nlohmann::json(again) == nlohmann::json(c));

  CHECK_THROWS_AS(config_from_json({{"network", {{"cells", {"minimal"}}}}, {"epochs", 2}, {"epoch", 3}}),
                  std::invalid_argument);
  ExperimentConfig bad = c;
  bad.split_ratio = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ExperimentConfig cifar = c;
  cifar.dataset.kind = "cifar10";
  cifar.dataset.files = {dir / "missing.bin"};
  CHECK_THROWS_AS(cifar.validate(), std::invalid_argument);
}

TEST_CASE("cifar-10 binary records") {
  const fs::path dir = scratch_dir("cifar");
  std::string bytes;
  for (int r = 0; r < 3; ++r) {
    bytes.push_back(static_cast<char>(r * 3));
    for (std::size_t i = 0; i < 3072; ++i) bytes.push_back(static_cast<char>((i * 7 + r * 31) % 256));
  }
  write_file(dir / "ok.bin", bytes);
  const Dataset raw = load_cifar10_binary({dir / "ok.bin"}, 0, false);
  CHECK(raw.size() == 3);
  CHECK(raw.labels == std::vector<int>{0, 3, 6});
  const auto rec = cifar10_record(raw, 1);
  CHECK(std::string(rec.begin(), rec.end()) == bytes.substr(kCifarRecordBytes, kCifarRecordBytes));
  CHECK(load_cifar10_binary({dir / "ok.bin"}, 2).size() == 2);

  const Dataset std_ = load_cifar10_binary({dir / "ok.bin"});
  REQUIRE(std_.channel_mean.size() == 3);
  double m = 0.0;
  for (std::size_t i = 0; i < 1024; ++i) m += std_.images[i];
  CHECK(std::isfinite(m));

  write_file(dir / "short.bin", bytes.substr(0, kCifarRecordBytes + 100));
  try {
    load_cifar10_binary({dir / "short.bin"});
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("offset 3073") != std::string::npos);
  }
  std::string bad = bytes;
  bad[kCifarRecordBytes] = static_cast<char>(255);
  write_file(dir / "label.bin", bad);
  CHECK_THROWS_AS(load_cifar10_binary({dir / "label.bin"}), std::runtime_error);
}

TEST_CASE("synthetic data") {
  const Dataset a = synth_dataset(10, 3, 8, 8, 40, 0.3, 9), b = synth_dataset(10, 3, 8, 8, 40, 0.3, 9);
  CHECK(a.images == b.images);
  CHECK(a.labels[13] == 3);
  CHECK(synth_dataset(10, 3, 8, 8, 40, 0.3, 10).images != a.images);
  const Dataset clean = synth_dataset(10, 3, 8, 8, 20, 0.0, 9);
  // noise-free items equal their class prototype
  for (std::size_t k = 0; k < clean.item_size(); ++k) CHECK(clean.images[k] == clean.images[10 * clean.item_size() + k]);
  CHECK_THROWS(synth_dataset(1, 3, 8, 8, 20, 0.0, 9));
}

TEST_CASE("ablation is deterministic") {
  ExperimentConfig c = small_config(RunMode::frozen_alpha, 1);
  const AblationReport a = intermediate_edge_ablation(AblationVariant::modified, c);
  const AblationReport b = intermediate_edge_ablation(AblationVariant::modified, c);
  REQUIRE(a.edges.size() == b.edges.size());
  for (std::size_t i = 0; i < a.edges.size(); ++i) {
    CHECK(a.edges[i].first == b.edges[i].first);
    CHECK(a.edges[i].second.mean == b.edges[i].second.mean);
  }
  CHECK(a.at(Edge{1, 2}).n > 0);
  CHECK_THROWS(a.at(Edge{0, 3}));
}
