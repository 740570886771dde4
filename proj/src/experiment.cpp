#include "nascost/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "nascost/rng.hpp"

namespace nascost {

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::single_level: return "single_level";
    case RunMode::bilevel: return "bilevel";
    case RunMode::frozen_alpha: return "frozen_alpha";
  }
  return "?";
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "single_level" || s == "single") return RunMode::single_level;
  if (s == "bilevel") return RunMode::bilevel;
  if (s == "frozen_alpha" || s == "frozen") return RunMode::frozen_alpha;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

double TemperatureSchedule::at(int epoch, int epochs) const {
  if (epochs <= 1) return initial;
  const double f = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return initial + (final - initial) * f;
}

void ExperimentConfig::validate() const {
  network.validate();
  theta_optimizer.validate();
  alpha_optimizer.validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (mode == RunMode::bilevel && !(split_ratio > 0.0 && split_ratio < 1.0))
    throw std::invalid_argument("bilevel mode needs split_ratio in (0, 1), got " + std::to_string(split_ratio));
  if (!(temperature.initial > 0.0) || !(temperature.final > 0.0))
    throw std::invalid_argument("temperatures must be positive");
  if (dataset.kind == "synthetic") {
    if (dataset.size < 2) throw std::invalid_argument("synthetic dataset needs at least 2 items");
    if (network.num_classes < 2) throw std::invalid_argument("synthetic dataset needs at least 2 classes");
  } else if (dataset.kind == "cifar10") {
    if (dataset.files.empty()) throw std::invalid_argument("cifar10 dataset lists no files");
    for (const auto& f : dataset.files)
      if (!std::filesystem::exists(f)) throw std::invalid_argument("dataset file not found: " + f.string());
    if (network.in_channels != 3 || network.height != 32 || network.width != 32 || network.num_classes != 10)
      throw std::invalid_argument("cifar10 needs a 3x32x32 input and 10 classes");
  } else {
    throw std::invalid_argument("unknown dataset kind '" + dataset.kind + "'");
  }
  if (mc_epochs < 0 || mc_replicas < 1) throw std::invalid_argument("bad monte_carlo settings");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json ds{{"kind", c.dataset.kind}};
  if (c.dataset.kind == "synthetic") {
    ds["size"] = c.dataset.size;
    ds["noise"] = c.dataset.noise;
    if (c.dataset.seed) ds["seed"] = *c.dataset.seed;
  } else {
    ds["files"] = nlohmann::json::array();
    for (const auto& f : c.dataset.files) ds["files"].push_back(f.string());
    ds["limit"] = c.dataset.limit;
  }
  j = nlohmann::json{{"network", c.network},
                     {"dataset", ds},
                     {"theta_optimizer", c.theta_optimizer},
                     {"alpha_optimizer", c.alpha_optimizer},
                     {"mode", to_string(c.mode)},
                     {"framework", to_string(c.framework)},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"temperature", {{"initial", c.temperature.initial}, {"final", c.temperature.final}}},
                     {"split_ratio", c.split_ratio},
                     {"init", to_string(c.init)},
                     {"monte_carlo", {{"epochs", c.mc_epochs}, {"replicas", c.mc_replicas}}},
                     {"output_dir", c.output_dir.string()}};
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  static const std::set<std::string> known{"network", "dataset",    "theta_optimizer", "alpha_optimizer", "mode",
                                           "framework", "epochs",   "batch_size",      "seed",            "temperature",
                                           "split_ratio", "init",   "monte_carlo",     "output_dir"};
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw std::invalid_argument("unknown config key '" + k + "'");
  ExperimentConfig c;
  if (j.contains("network")) {
    const auto& n = j.at("network");
    if (n.is_string()) {
      const auto path = resolve(base, n.get<std::string>());
      std::ifstream in(path);
      if (!in) throw std::invalid_argument("network file not found: " + path.string());
      c.network = nlohmann::json::parse(in).get<NetworkSpec>();
    } else {
      c.network = n.get<NetworkSpec>();
    }
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    c.dataset.kind = d.value("kind", c.dataset.kind);
    c.dataset.size = d.value("size", c.dataset.size);
    c.dataset.noise = d.value("noise", c.dataset.noise);
    if (d.contains("seed")) c.dataset.seed = d.at("seed").get<std::uint64_t>();
    for (const auto& f : d.value("files", std::vector<std::string>{})) c.dataset.files.push_back(resolve(base, f));
    c.dataset.limit = d.value("limit", c.dataset.limit);
  }
  if (j.contains("theta_optimizer")) from_json(j.at("theta_optimizer"), c.theta_optimizer);
  if (j.contains("alpha_optimizer")) from_json(j.at("alpha_optimizer"), c.alpha_optimizer);
  if (j.contains("mode")) c.mode = run_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("framework")) c.framework = framework_from_string(j.at("framework").get<std::string>());
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("temperature")) {
    const auto& t = j.at("temperature");
    if (t.is_number()) {
      c.temperature.initial = c.temperature.final = t.get<double>();
    } else {
      c.temperature.initial = t.value("initial", c.temperature.initial);
      c.temperature.final = t.value("final", c.temperature.initial);
    }
  }
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  if (j.contains("init")) c.init = init_scheme_from_string(j.at("init").get<std::string>());
  if (j.contains("monte_carlo")) {
    c.mc_epochs = j.at("monte_carlo").value("epochs", c.mc_epochs);
    c.mc_replicas = j.at("monte_carlo").value("replicas", c.mc_replicas);
  }
  if (j.contains("output_dir")) c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::invalid_argument("cannot open config " + file.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(file.string() + ": " + e.what());
  }
  return config_from_json(j, file.parent_path());
}

Dataset make_dataset(const ExperimentConfig& cfg) {
  const auto& n = cfg.network;
  if (cfg.dataset.kind == "cifar10") return load_cifar10_binary(cfg.dataset.files, cfg.dataset.limit);
  return synth_dataset(n.num_classes, n.in_channels, n.height, n.width, cfg.dataset.size, cfg.dataset.noise,
                       cfg.dataset.seed.value_or(cfg.seed));
}

void RunLog::append(EpochLog e) {
  if (!epochs.empty() && e.epoch <= epochs.back().epoch)
    throw std::logic_error("run log epochs must increase");
  epochs.push_back(std::move(e));
}

namespace {

enum class SplitTag { train, search };

struct Accum {
  double L = 0.0, H = 0.0, C = 0.0;
  std::size_t correct = 0, n = 0;

  void add(const Tensor& logits, std::span<const int> labels, const LossAndEntropy& le) {
    const double b = static_cast<double>(labels.size());
    L += le.value * b;
    H += le.entropy * b;
    C += logit_form_cost(logits, labels) * b;
    const std::size_t N = logits.shape().c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const auto row = logits.data().subspan(i * N, N);
      correct += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) ==
                 static_cast<std::size_t>(labels[i]);
    }
    n += labels.size();
  }
  SplitMetrics metrics() const {
    const double d = n ? static_cast<double>(n) : 1.0;
    return {L / d, H / d, C / d, static_cast<double>(correct) / d, n};
  }
};

std::vector<std::vector<std::size_t>> batches_of(std::span<const std::size_t> order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  if (order.empty()) return out;
  const std::size_t nb = std::max<std::size_t>(1, order.size() / batch);
  const std::size_t b = std::min(batch, order.size());
  for (std::size_t i = 0; i < nb; ++i) out.emplace_back(order.begin() + i * b, order.begin() + (i + 1) * b);
  return out;
}

// One recorded pass: the sampled weights per framework and the trace.
struct Pass {
  Graph g;
  ForwardTrace trace;
  LossAndEntropy loss{};
  std::vector<int> labels;
  std::optional<ArchSample> discrete;
  std::optional<RelaxedSample> relaxed;
};

std::unique_ptr<Pass> run_pass(const ExperimentConfig& cfg, const NetworkParams& params, const ArchState& arch,
                               const Dataset& data, std::span<const std::size_t> idx, std::uint64_t draw,
                               bool theta_grad) {
  auto p = std::make_unique<Pass>();
  std::vector<CellWeights> w;
  if (cfg.mode == RunMode::frozen_alpha) {
    p->discrete = sample_discrete(arch, true, draw);
    w = make_weights(p->g, *p->discrete);
  } else {
    switch (cfg.framework) {
      case Framework::dsnas:
        p->discrete = sample_discrete(arch, false, draw);
        w = make_weights(p->g, *p->discrete);
        break;
      case Framework::proxyless:
        p->discrete = sample_discrete(arch, false, draw);
        w = make_weights(p->g, *p->discrete, true);
        break;
      case Framework::darts:
        p->relaxed = darts_weights(arch);
        w = make_weights(p->g, *p->relaxed);
        break;
      case Framework::snas:
        p->relaxed = sample_gumbel_softmax(arch, draw);
        w = make_weights(p->g, *p->relaxed);
        break;
    }
  }
  ForwardOptions fo;
  fo.params_require_grad = theta_grad;
  p->labels = data.batch_labels(idx);
  p->trace = forward(p->g, cfg.network, params, data.batch(idx), w, fo);
  p->loss = ce_loss_and_entropy(p->g, p->trace.logits, p->labels);
  if (!std::isfinite(p->loss.value)) throw std::runtime_error("loss is not finite");
  p->g.backward(p->loss.loss);
  return p;
}

// Parameters that took part in the pass; the others keep their state, as
// when a framework leaves unsampled parameters without a gradient.
std::vector<std::size_t> active_params(const NetworkSpec& spec, const NetworkParams& params, const ForwardTrace& t) {
  std::set<std::size_t> ids;
  auto add_block = [&](const BlockParams& b) {
    ids.insert(b.weights.begin(), b.weights.end());
    if (b.gamma) ids.insert(*b.gamma);
    if (b.beta) ids.insert(*b.beta);
  };
  add_block(params.stem);
  ids.insert(params.head);
  for (std::size_t c = 0; c < spec.cells.size(); ++c) {
    const CellParams& cp = params.cells[c];
    for (const auto& b : cp.preprocess) add_block(b);
    for (const auto& [e, blocks] : cp.ops) {
      if (spec.cells[c].is_fixed(e)) {
        for (const auto& b : blocks) add_block(b);
        continue;
      }
      auto it = t.weights[c].find(e);
      if (it == t.weights[c].end()) continue;
      for (const EdgeChoice& ch : it->second) add_block(blocks.at(ch.candidate));
    }
  }
  return {ids.begin(), ids.end()};
}

void theta_step(Optimizer& opt, NetworkParams& params, const Pass& p, const NetworkSpec& spec) {
  for (std::size_t id : active_params(spec, params, p.trace)) {
    const Tensor& grad = p.g.grad(p.trace.params[id]);
    opt.step(id, params.values[id].data(), grad.data(), params.names[id]);
  }
  opt.next();
}

PerEdge<std::vector<double>> pass_arch_grad(const ExperimentConfig& cfg, const Pass& p, const ArchState& arch) {
  const auto costs = candidate_costs(p.g, p.trace, arch);
  return p.discrete ? arch_grad(cfg.framework, costs, *p.discrete, arch)
                    : arch_grad(cfg.framework, costs, *p.relaxed, arch);
}

void alpha_step(Optimizer& opt, ArchState& arch, const PerEdge<std::vector<double>>& grad) {
  std::size_t slot = 0;
  for (std::size_t c = 0; c < arch.logits.size(); ++c)
    for (auto& [e, l] : arch.logits[c]) {
      opt.step(slot++, l, grad[c].at(e), "alpha cell " + std::to_string(c) + " edge " + e.str());
    }
  opt.next();
}

void log_costs(CostStats& stats, const ExperimentConfig& cfg, const Pass& p, const ArchState& arch, int epoch,
               int batch) {
  if (p.discrete) {
    for (const CostRecord& r : sampled_costs(p.g, p.trace, cfg.network, *p.discrete, epoch, batch)) stats.add(r);
    return;
  }
  const auto costs = candidate_costs(p.g, p.trace, arch);
  for (std::size_t c = 0; c < costs.size(); ++c)
    for (const auto& [e, v] : costs[c]) {
      const auto ops = cfg.network.cells[c].ops_on(e);
      for (std::size_t k = 0; k < v.size(); ++k)
        stats.add({static_cast<int>(c), e, ops[k], v[k], epoch, batch});
    }
}

PerEdge<std::vector<double>> probabilities(const ArchState& arch) {
  PerEdge<std::vector<double>> out(arch.logits.size());
  for (std::size_t c = 0; c < arch.logits.size(); ++c)
    for (const auto& [e, l] : arch.logits[c]) out[c][e] = softmax(l);
  return out;
}

SplitMetrics probe_split(const ExperimentConfig& cfg, const NetworkParams& params, const ArchState& arch,
                         const Dataset& data, std::span<const std::size_t> idx) {
  constexpr std::size_t kProbeItems = 256;
  Accum acc;
  const auto batches = batches_of(idx.first(std::min(kProbeItems, idx.size())), cfg.batch_size);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    Graph g;
    ArchState uniform = arch;
    uniform.seed = hash_counter({cfg.seed, 0x9e});
    const auto w = make_weights(g, sample_discrete(uniform, true, b));
    ForwardOptions fo;
    fo.capture = false;
    fo.params_require_grad = false;
    const ForwardTrace t = forward(g, cfg.network, params, data.batch(batches[b]), w, fo);
    const auto labels = data.batch_labels(batches[b]);
    acc.add(g.value(t.logits), labels, ce_loss_and_entropy(g, t.logits, labels));
  }
  return acc.metrics();
}

}  // namespace

RunResult run_evolution(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult r;
  r.log.config = cfg;
  r.log.network = cfg.network;
  const Dataset data = make_dataset(cfg);
  r.log.channel_mean = data.channel_mean;
  r.log.channel_std = data.channel_std;
  r.params = init_parameters(cfg.network, cfg.seed, cfg.init);
  r.arch = ArchState::uniform(cfg.network, hash_counter({cfg.seed, 0xa5}), cfg.temperature.initial);

  std::vector<std::size_t> train_idx, search_idx;
  {
    const auto perm = shuffled_indices(data.size(), hash_counter({cfg.seed, 0x5b}));
    std::size_t n_train = perm.size();
    if (cfg.mode == RunMode::bilevel) {
      n_train = static_cast<std::size_t>(std::llround(cfg.split_ratio * static_cast<double>(perm.size())));
      n_train = std::clamp<std::size_t>(n_train, 1, perm.size() - 1);
    }
    train_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    search_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  }
  std::vector<SplitTag> split_of(data.size(), SplitTag::train);
  for (std::size_t i : search_idx) split_of[i] = SplitTag::search;

  Optimizer theta_opt(cfg.theta_optimizer);
  Optimizer alpha_opt(cfg.alpha_optimizer);
  std::uint64_t draw = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    r.arch.temperature = cfg.temperature.at(epoch - 1, cfg.epochs);
    EpochLog log;
    log.epoch = epoch;
    Accum train_acc, search_acc;
    try {
      auto order = shuffled_indices(train_idx.size(), hash_counter({cfg.seed, static_cast<std::uint64_t>(epoch), 1}));
      for (auto& i : order) i = train_idx[i];
      std::vector<std::vector<std::size_t>> search_batches;
      if (cfg.mode == RunMode::bilevel) {
        auto s = shuffled_indices(search_idx.size(), hash_counter({cfg.seed, static_cast<std::uint64_t>(epoch), 2}));
        for (auto& i : s) i = search_idx[i];
        search_batches = batches_of(s, cfg.batch_size);
      }
      const auto train_batches = batches_of(order, cfg.batch_size);
      for (std::size_t b = 0; b < train_batches.size(); ++b) {
        const auto& idx = train_batches[b];
        auto p = run_pass(cfg, r.params, r.arch, data, idx, draw++, true);
        train_acc.add(p->g.value(p->trace.logits), p->labels, p->loss);
        for (std::size_t i : idx) {
          if (split_of[i] == SplitTag::search) {
            ++r.log.theta_examples_search;
            throw std::logic_error("search-split example " + std::to_string(i) + " reached a parameter update");
          }
          ++r.log.theta_examples_train;
        }

        if (cfg.mode == RunMode::bilevel) {
          theta_step(theta_opt, r.params, *p, cfg.network);
          const auto& sidx = search_batches[b % search_batches.size()];
          auto q = run_pass(cfg, r.params, r.arch, data, sidx, draw++, false);
          search_acc.add(q->g.value(q->trace.logits), q->labels, q->loss);
          log_costs(log.costs, cfg, *q, r.arch, epoch, static_cast<int>(b));
          alpha_step(alpha_opt, r.arch, pass_arch_grad(cfg, *q, r.arch));
        } else {
          log_costs(log.costs, cfg, *p, r.arch, epoch, static_cast<int>(b));
          if (cfg.mode == RunMode::single_level) {
            const auto ag = pass_arch_grad(cfg, *p, r.arch);
            theta_step(theta_opt, r.params, *p, cfg.network);
            alpha_step(alpha_opt, r.arch, ag);
          } else {
            theta_step(theta_opt, r.params, *p, cfg.network);
          }
        }
      }
    } catch (const std::runtime_error& e) {
      r.log.aborted = true;
      r.log.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }
    log.logits = r.arch.logits;
    log.probabilities = probabilities(r.arch);
    log.train = train_acc.metrics();
    if (cfg.mode == RunMode::bilevel) {
      log.search = search_acc.metrics();
      log.search_probe = probe_split(cfg, r.params, r.arch, data, search_idx);
    }
    r.log.append(std::move(log));
  }
  return r;
}

void to_json(nlohmann::json& j, const PatternReport& r) {
  j = nlohmann::json{{"p1_growing", r.p1_growing},
                     {"p2_width_pref", r.p2_width_pref},
                     {"p3_catastrophic", r.p3_catastrophic},
                     {"input_none_dwell", r.input_dwell},
                     {"intermediate_none_dwell", r.intermediate_dwell}};
  j["p1_onset"] = r.p1_onset ? nlohmann::json(*r.p1_onset) : nlohmann::json();
  j["p1_recovery"] = r.p1_recovery ? nlohmann::json(*r.p1_recovery) : nlohmann::json();
  j["none_dwell"] = nlohmann::json::object();
  for (const auto& [k, v] : r.none_dwell) j["none_dwell"][k] = v;
}

PatternReport detect_patterns(const RunLog& log, const PatternThresholds& th) {
  if (log.epochs.size() < 3) throw std::invalid_argument("pattern detection needs at least 3 logged epochs");
  struct Tracked {
    std::size_t cell;
    Edge edge;
    EdgeRole role;
    std::optional<std::size_t> none_pos;
  };
  std::vector<Tracked> edges;
  for (std::size_t c = 0; c < log.network.cells.size(); ++c) {
    const CellSpec& cell = log.network.cells[c];
    for (Edge e : cell.searchable_edges()) {
      const auto ops = cell.ops_on(e);
      auto it = std::find(ops.begin(), ops.end(), OpKind::none);
      std::optional<std::size_t> pos;
      if (it != ops.end()) pos = static_cast<std::size_t>(it - ops.begin());
      edges.push_back({c, e, cell.role(e), pos});
    }
  }
  auto dominated = [&](const EpochLog& ep, const Tracked& t) {
    if (!t.none_pos) return false;
    const auto& p = ep.probabilities.at(t.cell).at(t.edge);
    for (std::size_t k = 0; k < p.size(); ++k)
      if (k != *t.none_pos && p[k] >= p[*t.none_pos]) return false;
    return true;
  };
  auto recovered = [&](const EpochLog& ep, const Tracked& t) {
    if (!t.none_pos) return true;
    const auto& p = ep.probabilities.at(t.cell).at(t.edge);
    for (std::size_t k = 0; k < p.size(); ++k)
      if (k != *t.none_pos && p[k] > p[*t.none_pos]) return true;
    return false;
  };

  PatternReport r;
  if (edges.empty()) return r;
  for (const EpochLog& ep : log.epochs) {
    if (!r.p1_onset) {
      std::size_t d = 0;
      for (const auto& t : edges) d += dominated(ep, t);
      if (static_cast<double>(d) >= th.p1_none_share * static_cast<double>(edges.size())) r.p1_onset = ep.epoch;
    } else if (!r.p1_recovery) {
      for (const auto& t : edges)
        if (t.role == EdgeRole::input && recovered(ep, t)) {
          r.p1_recovery = ep.epoch;
          break;
        }
    }
  }
  r.p1_growing = r.p1_onset && r.p1_recovery;

  double in_sum = 0.0, mid_sum = 0.0;
  std::size_t in_n = 0, mid_n = 0;
  for (const auto& t : edges) {
    int dwell = 0;
    for (const EpochLog& ep : log.epochs) dwell += dominated(ep, t);
    r.none_dwell.emplace_back(std::to_string(t.cell) + ":" + t.edge.str(), dwell);
    if (t.role == EdgeRole::input) in_sum += dwell, ++in_n;
    if (t.role == EdgeRole::intermediate) mid_sum += dwell, ++mid_n;
  }
  if (in_n) r.input_dwell = in_sum / static_cast<double>(in_n);
  if (mid_n) r.intermediate_dwell = mid_sum / static_cast<double>(mid_n);
  r.p2_width_pref = in_n && mid_n && r.intermediate_dwell > r.input_dwell;

  r.p3_catastrophic = true;
  for (const auto& t : edges) r.p3_catastrophic = r.p3_catastrophic && dominated(log.epochs.back(), t);
  return r;
}

const RunningStat& AblationReport::at(Edge e) const {
  for (const auto& [k, v] : edges)
    if (k == e) return v;
  throw std::out_of_range("ablation has no edge " + e.str());
}

AblationReport intermediate_edge_ablation(AblationVariant variant, const ExperimentConfig& cfg) {
  ExperimentConfig c = cfg;
  c.mode = RunMode::frozen_alpha;
  c.network.cells = {variant == AblationVariant::simplified ? build_simplified_cell() : build_modified_cell()};
  AblationReport rep;
  rep.variant = variant;
  rep.log = run_evolution(c).log;
  CostStats all;
  for (const auto& ep : rep.log.epochs) all.merge(ep.costs);
  for (Edge e : c.network.cells[0].edges()) {
    if (c.network.cells[0].role(e) == EdgeRole::output) continue;
    rep.edges.emplace_back(e, all.edge_pooled(0, e));
  }
  return rep;
}

}  // namespace nascost
