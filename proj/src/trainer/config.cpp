// SPDX-License-Identifier: Apache-2.0
#include "sagmm/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "sagmm/errors.hpp"

namespace sagmm {

using nlohmann::json;

namespace {

std::string_view init_name(gate::GateInit i) { return i == gate::GateInit::Zeros ? "zeros" : "randn"; }
gate::GateInit parse_init(const std::string& s) {
  if (s == "zeros") return gate::GateInit::Zeros;
  if (s == "randn") return gate::GateInit::Randn;
  throw ConfigError("gate_init: unknown value '" + s + "' (zeros, randn)");
}
std::string_view grad_name(ad::MaskGradient g) {
  return g == ad::MaskGradient::StraightThrough ? "straight_through" : "exact";
}
ad::MaskGradient parse_grad(const std::string& s) {
  if (s == "straight_through") return ad::MaskGradient::StraightThrough;
  if (s == "exact") return ad::MaskGradient::Exact;
  throw ConfigError("mask_gradient: unknown value '" + s + "' (straight_through, exact)");
}
std::string_view signal_name(moe::PruneSignal s) {
  return s == moe::PruneSignal::RawGates ? "raw_gates" : "thresholded_gates";
}
std::string_view norm_name(experts::GcnNorm n) { return n == experts::GcnNorm::Symmetric ? "sym" : "row"; }
experts::GcnNorm parse_norm(const std::string& s) {
  if (s == "sym") return experts::GcnNorm::Symmetric;
  if (s == "row") return experts::GcnNorm::Row;
  throw ConfigError("expert.gcn_norm: unknown value '" + s + "' (sym, row)");
}

const std::map<std::string, std::string>& docs() {
  static const std::map<std::string, std::string> d{
      {"task", "node_cls, graph_cls, graph_reg or link_pred"},
      {"epochs", "training epochs"},
      {"batch_size", "nodes (node tasks), graphs or positive edges per step; 0 = everything in one step"},
      {"lr", "Adam learning rate"},
      {"weight_decay", "decoupled weight decay"},
      {"dropout", "dropout on features and hidden layers"},
      {"hidden", "expert hidden width"},
      {"layers", "expert depth"},
      {"proj_dim", "shared width of the per-expert projections"},
      {"seed", "seed for initialization, shuffling, dropout and negative sampling"},
      {"divergence_threshold", "abort when the training loss exceeds this magnitude"},
      {"gating_mode", "taag, noisy_topk, top_any or none"},
      {"topk_k", "experts per node for noisy_topk"},
      {"gate_init", "threshold initialization: zeros or randn"},
      {"mask_gradient", "backward rule of the mask: straight_through or exact"},
      {"pe_dim", "Laplacian positional encoding dimension"},
      {"experts", "expert kinds; empty list selects the task default pool"},
      {"diverse", "false replaces the pool by the same number of GCN experts"},
      {"pruning", "enable importance-based pruning"},
      {"expert.cheb_order", "Chebyshev order K"},
      {"expert.gin_learn_eps", "learn GIN epsilon"},
      {"expert.mixhop_powers", "adjacency powers of MixHop"},
      {"expert.sgc_steps", "propagation steps of SGC"},
      {"expert.gat_slope", "LeakyReLU slope of GAT attention"},
      {"expert.gcn_norm", "GCN normalization: sym or row"},
      {"expert.output_activation", "ReLU after the last expert layer"},
      {"expert.bias_init_std", "stddev of expert bias init; 0 = zeros"},
      {"alpha", "EMA factor of importance scores"},
      {"eta", "prune threshold on max-normalized importance"},
      {"prune_interval", "epochs between prune checks"},
      {"prune_delta", "validation drop that triggers a rollback"},
      {"prune_type", "raw_gates or thresholded_gates"},
      {"gamma_normalization", "rms rescales expert outputs to unit RMS before contribution scores; none uses them as is"},
      {"w_imp", "weight of the importance loss"},
      {"w_div", "weight of the diversity loss"},
      {"pe_mode", "pretrain experts independently, freeze them, train router and head"},
      {"pe_fraction", "fraction of training items used to pretrain experts"},
      {"router_fraction", "PE mode: fraction of training items used to train router and head"},
      {"pe_epochs", "pretraining epochs per expert; 0 = epochs"},
      {"expert_checkpoint", "checkpoint with pretrained expert parameters (pe_mode)"},
      {"metric", "accuracy, rocauc, rmse or hits; auto picks by task"},
      {"hits_k", "K of HITS@K"},
      {"data.source", "sbm, toy_graph, sbm_link or files"},
      {"data.sbm.sizes", "block sizes"},
      {"data.sbm.p_in", "within-block edge probability (homophilic blocks)"},
      {"data.sbm.p_out", "between-block edge probability"},
      {"data.sbm.feature_dim", "feature dimension"},
      {"data.sbm.signal", "norm of class means"},
      {"data.sbm.noise", "feature noise stddev"},
      {"data.sbm.mixed", "make half of the blocks heterophilic"},
      {"data.sbm.train_fraction", "training share"},
      {"data.sbm.valid_fraction", "validation share"},
      {"data.sbm.seed", "generator seed"},
      {"data.toy.num_graphs", "number of graphs"},
      {"data.toy.min_nodes", "smallest graph"},
      {"data.toy.max_nodes", "largest graph"},
      {"data.toy.feature_dim", "feature dimension"},
      {"data.toy.train_fraction", "training share"},
      {"data.toy.valid_fraction", "validation share"},
      {"data.toy.seed", "generator seed"},
      {"data.link.valid_fraction", "held-out validation edges"},
      {"data.link.test_fraction", "held-out test edges"},
      {"data.link.negatives_per_positive", "evaluation negatives per held-out edge"},
      {"data.link.seed", "split seed"},
      {"data.files.edges", "edge list path"},
      {"data.files.features", "feature CSV path"},
      {"data.files.labels", "label CSV path"},
      {"data.files.splits", "split CSV path"},
      {"data.files.graph_ids", "graph membership CSV path (graph tasks)"},
  };
  return d;
}

json to_j(const TrainConfig& c) {
  json kinds = json::array();
  for (auto k : c.experts) kinds.push_back(std::string(experts::kind_name(k)));
  const auto& e = c.expert;
  const auto& d = c.data;
  return json{
      {"task", std::string(data::task_name(c.task))},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"weight_decay", c.weight_decay},
      {"dropout", c.dropout},
      {"hidden", c.hidden},
      {"layers", c.layers},
      {"proj_dim", c.proj_dim},
      {"seed", c.seed},
      {"divergence_threshold", c.divergence_threshold},
      {"gating_mode", std::string(gate::mode_name(c.gating_mode))},
      {"topk_k", c.topk_k},
      {"gate_init", std::string(init_name(c.gate_init))},
      {"mask_gradient", std::string(grad_name(c.mask_gradient))},
      {"pe_dim", c.pe_dim},
      {"experts", kinds},
      {"diverse", c.diverse},
      {"pruning", c.pruning},
      {"expert",
       {{"cheb_order", e.cheb_order},
        {"gin_learn_eps", e.gin_learn_eps},
        {"mixhop_powers", e.mixhop_powers},
        {"sgc_steps", e.sgc_steps},
        {"gat_slope", e.gat_slope},
        {"gcn_norm", std::string(norm_name(e.gcn_norm))},
        {"output_activation", e.output_activation},
        {"bias_init_std", e.bias_init_std}}},
      {"alpha", c.alpha},
      {"eta", c.eta},
      {"prune_interval", c.prune_interval},
      {"prune_delta", c.prune_delta},
      {"prune_type", std::string(signal_name(c.prune_type))},
      {"gamma_normalization", c.gamma_normalization == GammaNormalization::Rms ? "rms" : "none"},
      {"w_imp", c.w_imp},
      {"w_div", c.w_div},
      {"pe_mode", c.pe_mode},
      {"pe_fraction", c.pe_fraction},
      {"router_fraction", c.router_fraction},
      {"pe_epochs", c.pe_epochs},
      {"expert_checkpoint", c.expert_checkpoint},
      {"metric", std::string(metrics::metric_name(c.metric))},
      {"hits_k", c.hits_k},
      {"data",
       {{"source", d.source},
        {"sbm",
         {{"sizes", d.sbm.sizes},
          {"p_in", d.sbm.p_in},
          {"p_out", d.sbm.p_out},
          {"feature_dim", d.sbm.feature_dim},
          {"signal", d.sbm.signal},
          {"noise", d.sbm.noise},
          {"mixed", d.sbm.mixed},
          {"train_fraction", d.sbm.train_fraction},
          {"valid_fraction", d.sbm.valid_fraction},
          {"seed", d.sbm.seed}}},
        {"toy",
         {{"num_graphs", d.toy.num_graphs},
          {"min_nodes", d.toy.min_nodes},
          {"max_nodes", d.toy.max_nodes},
          {"feature_dim", d.toy.feature_dim},
          {"train_fraction", d.toy.train_fraction},
          {"valid_fraction", d.toy.valid_fraction},
          {"seed", d.toy.seed}}},
        {"link",
         {{"valid_fraction", d.link.valid_fraction},
          {"test_fraction", d.link.test_fraction},
          {"negatives_per_positive", d.link.negatives_per_positive},
          {"seed", d.link.seed}}},
        {"files",
         {{"edges", d.files.edges.string()},
          {"features", d.files.features.string()},
          {"labels", d.files.labels.string()},
          {"splits", d.files.splits.string()},
          {"graph_ids", d.files.graph_ids.string()}}}}},
  };
}

std::string type_of(const json& v) {
  if (v.is_boolean()) return "bool";
  if (v.is_number_unsigned() || v.is_number_integer()) return "int";
  if (v.is_number()) return "real";
  if (v.is_string()) return "string";
  if (v.is_array()) return "list";
  if (v.is_object()) return "object";
  return "null";
}

// Default lists may be empty, so list element types are fixed here.
std::string list_type(const std::string& key) {
  if (key == "experts") return "string_list";
  return "int_list";
}

void check_against(const json& user, const json& defaults, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const json& def = defaults[it.key()];
    const json& val = it.value();
    const std::string want = type_of(def), got = type_of(val);
    if (want == "object") {
      check_against(val, def, key);
      continue;
    }
    bool ok = want == got || (want == "real" && got == "int");
    if (ok && want == "int" && val.is_number_integer() && val.get<long long>() < 0) ok = false;
    if (ok && want == "list") {
      const bool strings = list_type(key) == "string_list";
      for (const json& x : val)
        if (strings ? !x.is_string() : !(x.is_number_unsigned() || (x.is_number_integer() && x.get<long long>() >= 0)))
          ok = false;
    }
    if (!ok) throw ConfigError("config key '" + key + "' has the wrong type (expected " + (want == "list" ? list_type(key) : want) + ")");
  }
}

json* locate(json& root, const std::string& dotted, std::string& leaf) {
  json* node = &root;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object()) return nullptr;
    node = &(*node)[parts[i]];
  }
  leaf = parts.empty() ? "" : parts.back();
  if (!node->contains(leaf) || (*node)[leaf].is_object()) return nullptr;
  return node;
}

json parse_raw(const std::string& key, const std::string& type, const std::string& raw) {
  auto bad = [&]() -> ConfigError { return ConfigError("config key '" + key + "': cannot parse '" + raw + "' as " + type); };
  if (type == "string") return raw;
  if (type == "bool") {
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw bad();
  }
  if (type == "string_list" || type == "int_list") {
    json arr = json::array();
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      if (type == "string_list") arr.push_back(item);
      else arr.push_back(parse_raw(key, "int", item));
    }
    return arr;
  }
  try {
    std::size_t pos = 0;
    if (type == "int") {
      if (!raw.empty() && raw[0] == '-') throw bad();
      const unsigned long long v = std::stoull(raw, &pos);
      if (pos != raw.size()) throw bad();
      return v;
    }
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw bad();
    return v;
  } catch (const std::logic_error&) {
    throw bad();
  }
}

void merge(json& base, const json& user) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (it.value().is_object()) merge(base[it.key()], it.value());
    else base[it.key()] = it.value();
  }
}

template <class T>
T get(const json& j, const char* key) {
  return j.at(key).get<T>();
}

TrainConfig from_j(const json& j) {
  TrainConfig c;
  c.task = data::parse_task(get<std::string>(j, "task"));
  c.epochs = get<std::size_t>(j, "epochs");
  c.batch_size = get<std::size_t>(j, "batch_size");
  c.lr = get<double>(j, "lr");
  c.weight_decay = get<double>(j, "weight_decay");
  c.dropout = get<double>(j, "dropout");
  c.hidden = get<std::size_t>(j, "hidden");
  c.layers = get<std::size_t>(j, "layers");
  c.proj_dim = get<std::size_t>(j, "proj_dim");
  c.seed = get<std::uint64_t>(j, "seed");
  c.divergence_threshold = get<double>(j, "divergence_threshold");
  c.gating_mode = gate::parse_mode(get<std::string>(j, "gating_mode"));
  c.topk_k = get<std::size_t>(j, "topk_k");
  c.gate_init = parse_init(get<std::string>(j, "gate_init"));
  c.mask_gradient = parse_grad(get<std::string>(j, "mask_gradient"));
  c.pe_dim = get<std::size_t>(j, "pe_dim");
  for (const auto& k : j.at("experts")) c.experts.push_back(experts::parse_kind(k.get<std::string>()));
  c.diverse = get<bool>(j, "diverse");
  c.pruning = get<bool>(j, "pruning");
  const json& e = j.at("expert");
  c.expert.cheb_order = get<std::size_t>(e, "cheb_order");
  c.expert.gin_learn_eps = get<bool>(e, "gin_learn_eps");
  c.expert.mixhop_powers = get<std::vector<std::size_t>>(e, "mixhop_powers");
  c.expert.sgc_steps = get<std::size_t>(e, "sgc_steps");
  c.expert.gat_slope = get<double>(e, "gat_slope");
  c.expert.gcn_norm = parse_norm(get<std::string>(e, "gcn_norm"));
  c.expert.output_activation = get<bool>(e, "output_activation");
  c.expert.bias_init_std = get<double>(e, "bias_init_std");
  c.expert.layers = c.layers;
  c.expert.hidden = c.hidden;
  c.alpha = get<double>(j, "alpha");
  c.eta = get<double>(j, "eta");
  c.prune_interval = get<std::size_t>(j, "prune_interval");
  c.prune_delta = get<double>(j, "prune_delta");
  c.prune_type = moe::parse_prune_signal(get<std::string>(j, "prune_type"));
  const std::string gn = get<std::string>(j, "gamma_normalization");
  if (gn == "rms") c.gamma_normalization = GammaNormalization::Rms;
  else if (gn == "none") c.gamma_normalization = GammaNormalization::None;
  else throw ConfigError("gamma_normalization: unknown value '" + gn + "' (rms, none)");
  c.w_imp = get<double>(j, "w_imp");
  c.w_div = get<double>(j, "w_div");
  c.pe_mode = get<bool>(j, "pe_mode");
  c.pe_fraction = get<double>(j, "pe_fraction");
  c.router_fraction = get<double>(j, "router_fraction");
  c.pe_epochs = get<std::size_t>(j, "pe_epochs");
  c.expert_checkpoint = get<std::string>(j, "expert_checkpoint");
  const std::string metric = get<std::string>(j, "metric");
  if (metric == "auto") {
    switch (c.task) {
      case data::TaskKind::NodeClassification:
      case data::TaskKind::GraphClassification: c.metric = metrics::Metric::Accuracy; break;
      case data::TaskKind::GraphRegression: c.metric = metrics::Metric::Rmse; break;
      case data::TaskKind::LinkPrediction: c.metric = metrics::Metric::Hits; break;
    }
  } else {
    c.metric = metrics::parse_metric(metric);
  }
  c.hits_k = get<std::size_t>(j, "hits_k");
  const json& d = j.at("data");
  c.data.source = get<std::string>(d, "source");
  const json& s = d.at("sbm");
  c.data.sbm.sizes = get<std::vector<std::size_t>>(s, "sizes");
  c.data.sbm.p_in = get<double>(s, "p_in");
  c.data.sbm.p_out = get<double>(s, "p_out");
  c.data.sbm.feature_dim = get<std::size_t>(s, "feature_dim");
  c.data.sbm.signal = get<double>(s, "signal");
  c.data.sbm.noise = get<double>(s, "noise");
  c.data.sbm.mixed = get<bool>(s, "mixed");
  c.data.sbm.train_fraction = get<double>(s, "train_fraction");
  c.data.sbm.valid_fraction = get<double>(s, "valid_fraction");
  c.data.sbm.seed = get<std::uint64_t>(s, "seed");
  const json& t = d.at("toy");
  c.data.toy.num_graphs = get<std::size_t>(t, "num_graphs");
  c.data.toy.min_nodes = get<std::size_t>(t, "min_nodes");
  c.data.toy.max_nodes = get<std::size_t>(t, "max_nodes");
  c.data.toy.feature_dim = get<std::size_t>(t, "feature_dim");
  c.data.toy.train_fraction = get<double>(t, "train_fraction");
  c.data.toy.valid_fraction = get<double>(t, "valid_fraction");
  c.data.toy.seed = get<std::uint64_t>(t, "seed");
  c.data.toy.regression = c.task == data::TaskKind::GraphRegression;
  const json& l = d.at("link");
  c.data.link.valid_fraction = get<double>(l, "valid_fraction");
  c.data.link.test_fraction = get<double>(l, "test_fraction");
  c.data.link.negatives_per_positive = get<std::size_t>(l, "negatives_per_positive");
  c.data.link.seed = get<std::uint64_t>(l, "seed");
  const json& f = d.at("files");
  c.data.files.edges = get<std::string>(f, "edges");
  c.data.files.features = get<std::string>(f, "features");
  c.data.files.labels = get<std::string>(f, "labels");
  c.data.files.splits = get<std::string>(f, "splits");
  c.data.files.graph_ids = get<std::string>(f, "graph_ids");
  return c;
}

json defaults_json() {
  json j = to_j(TrainConfig{});
  j["metric"] = "auto";
  return j;
}

void flatten(const json& j, const std::string& prefix, std::vector<ConfigKey>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      flatten(it.value(), key, out);
      continue;
    }
    std::string type = type_of(it.value());
    if (type == "list") type = list_type(key);
    const auto d = docs().find(key);
    out.push_back({key, type, it.value().dump(), d == docs().end() ? "" : d->second});
  }
}

}  // namespace

std::vector<experts::ExpertKind> TrainConfig::pool_kinds() const {
  std::vector<experts::ExpertKind> k = experts.empty() ? experts::default_kinds(task) : experts;
  if (!diverse) std::fill(k.begin(), k.end(), experts::ExpertKind::GCN);
  return k;
}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = [] {
    std::vector<ConfigKey> out;
    flatten(defaults_json(), "", out);
    return out;
  }();
  return schema;
}

void validate(const TrainConfig& c) {
  auto need = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("config key '" + key + "' " + what);
  };
  need(c.epochs >= 1, "epochs", "must be >= 1");
  need(c.lr > 0, "lr", "must be > 0");
  need(c.divergence_threshold > 0, "divergence_threshold", "must be > 0");
  need(c.weight_decay >= 0, "weight_decay", "must be >= 0");
  need(c.dropout >= 0 && c.dropout < 1, "dropout", "must lie in [0, 1)");
  need(c.hidden >= 1, "hidden", "must be >= 1");
  need(c.layers >= 1, "layers", "must be >= 1");
  need(c.proj_dim >= 1, "proj_dim", "must be >= 1");
  need(c.pe_dim >= 1, "pe_dim", "must be >= 1");
  need(c.topk_k >= 1, "topk_k", "must be >= 1");
  need(c.alpha >= 0 && c.alpha <= 1, "alpha", "must lie in [0, 1]");
  need(c.eta >= 0 && c.eta <= 1, "eta", "must lie in [0, 1]");
  need(c.prune_interval >= 1, "prune_interval", "must be >= 1");
  need(c.prune_delta >= 0, "prune_delta", "must be >= 0");
  need(c.w_imp >= 0, "w_imp", "must be >= 0");
  need(c.w_div >= 0, "w_div", "must be >= 0");
  need(c.pe_fraction > 0 && c.pe_fraction <= 1, "pe_fraction", "must lie in (0, 1]");
  need(c.router_fraction > 0 && c.router_fraction <= 1, "router_fraction", "must lie in (0, 1]");
  need(c.hits_k >= 1, "hits_k", "must be >= 1");
  const auto kinds = c.pool_kinds();
  need(!kinds.empty(), "experts", "must not be empty");
  need(c.gating_mode != gate::GatingMode::NoisyTopK || c.topk_k <= kinds.size(), "topk_k",
       "must not exceed the number of experts");
  using data::TaskKind;
  using metrics::Metric;
  const bool cls = c.task == TaskKind::NodeClassification || c.task == TaskKind::GraphClassification;
  need((cls && (c.metric == Metric::Accuracy || c.metric == Metric::RocAuc)) ||
           (c.task == TaskKind::GraphRegression && c.metric == Metric::Rmse) ||
           (c.task == TaskKind::LinkPrediction && c.metric == Metric::Hits),
       "metric", "does not fit task " + std::string(data::task_name(c.task)));
  const std::string& src = c.data.source;
  need(src == "sbm" || src == "toy_graph" || src == "sbm_link" || src == "files", "data.source",
       "must be sbm, toy_graph, sbm_link or files");
  need(src != "sbm" || c.task == TaskKind::NodeClassification, "data.source", "sbm serves node_cls only");
  need(src != "sbm_link" || c.task == TaskKind::LinkPrediction, "data.source", "sbm_link serves link_pred only");
  need(src != "toy_graph" || (c.task == TaskKind::GraphClassification || c.task == TaskKind::GraphRegression),
       "data.source", "toy_graph serves graph_cls and graph_reg only");
  experts::ExpertSpec probe = c.expert;
  for (auto k : kinds) {
    probe.kind = k;
    experts::validate_spec(probe);
  }
}

TrainConfig parse_config(std::string_view text, const std::vector<std::pair<std::string, std::string>>& overrides) {
  json user;
  try {
    user = text.empty() ? json::object() : json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  const json defaults = defaults_json();
  check_against(user, defaults, "");
  json merged = defaults;
  merge(merged, user);
  for (const auto& [key, raw] : overrides) {
    std::string leaf;
    json* parent = locate(merged, key, leaf);
    if (parent == nullptr) throw ConfigError("unknown config key '" + key + "'");
    std::string type;
    for (const ConfigKey& k : config_schema())
      if (k.name == key) type = k.type;
    (*parent)[leaf] = parse_raw(key, type, raw);
  }
  TrainConfig c = from_j(merged);
  validate(c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string to_json(const TrainConfig& cfg) { return to_j(cfg).dump(2); }

}  // namespace sagmm
