// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "artifacts.hpp"
#include "sagmm/errors.hpp"
#include "sagmm/theory.hpp"
#include "sagmm/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sagmm;
using namespace sagmm::cli;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// One string slot per schema key; only flags given on the command line
/// become overrides.
struct SchemaFlags {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> options;

  void attach(CLI::App* app) {
    for (const auto& k : config_schema()) {
      auto* opt = app->add_option("--" + k.name, values[k.name], k.doc + " [" + k.type + ", default " +
                                                                        k.default_json + "]");
      opt->group("Config keys");
      options.emplace_back(k.name, opt);
    }
  }
  [[nodiscard]] Overrides collect() const {
    Overrides o;
    for (const auto& [name, opt] : options)
      if (opt->count() > 0) o.emplace_back(name, values.at(name));
    return o;
  }
};

struct DataFlags {
  std::string edges, features, labels, splits, graph_ids;

  void attach(CLI::App* app) {
    app->add_option("--edges", edges, "edge list (u<TAB>v per line); switches data.source to files");
    app->add_option("--features", features, "node feature CSV");
    app->add_option("--labels", labels, "label CSV");
    app->add_option("--splits", splits, "split CSV");
    app->add_option("--graph-ids", graph_ids, "graph membership CSV");
  }
  void apply(Overrides& o) const {
    if (edges.empty()) {
      if (!features.empty() || !labels.empty() || !splits.empty() || !graph_ids.empty())
        throw ConfigError("--features/--labels/--splits/--graph-ids need --edges");
      return;
    }
    o.emplace_back("data.source", "files");
    o.emplace_back("data.files.edges", edges);
    if (!features.empty()) o.emplace_back("data.files.features", features);
    if (!labels.empty()) o.emplace_back("data.files.labels", labels);
    if (!splits.empty()) o.emplace_back("data.files.splits", splits);
    if (!graph_ids.empty()) o.emplace_back("data.files.graph_ids", graph_ids);
  }
};

TrainConfig resolve_config(const std::string& path, const Overrides& o) {
  return path.empty() ? parse_config("{}", o) : load_config(path, o);
}

void make_out_dir(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
}

/// Content hashes of every file the run reads, plus one hash over all of them.
json input_hashes(const std::string& config_text, const TrainConfig& cfg) {
  json inputs = json::object();
  std::string all = git_blob_hash(config_text);
  inputs["config"] = all;
  auto add = [&](const std::string& key, const fs::path& p) {
    if (p.empty()) return;
    const std::string h = git_blob_hash_file(p);
    inputs[key] = {{"path", p.string()}, {"hash", h}};
    all += h;
  };
  if (cfg.data.source == "files") {
    add("data.files.edges", cfg.data.files.edges);
    add("data.files.features", cfg.data.files.features);
    add("data.files.labels", cfg.data.files.labels);
    add("data.files.splits", cfg.data.files.splits);
    add("data.files.graph_ids", cfg.data.files.graph_ids);
  }
  if (cfg.pe_mode) add("expert_checkpoint", cfg.expert_checkpoint);
  return {{"files", inputs}, {"input_hash", sha1_hex(all)}};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

void set_seeds(TrainConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.data.sbm.seed = seed;
  c.data.toy.seed = seed;
  c.data.link.seed = seed;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::size_t> size_list(const std::string& s, const char* flag) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(item, &pos);
      if (pos != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError(std::string(flag) + ": expected positive integers, got '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string(flag) + ": list is empty");
  return out;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string out;
  bool verbose = false;
  SchemaFlags schema;
  DataFlags data;
};

int cmd_train(const TrainArgs& a) {
  Overrides o = a.schema.collect();
  a.data.apply(o);
  const TrainConfig cfg = resolve_config(a.config, o);
  const std::string cfg_text = to_json(cfg);
  const fs::path out = a.out;
  const json hashes = input_hashes(cfg_text, cfg);
  make_out_dir(out);

  const auto ds = train::make_dataset(cfg);
  train::TrainOptions opts;
  if (a.verbose) opts.progress = &std::cerr;
  const auto r = train::train(ds, cfg, opts);

  save_checkpoint(r.best, out / "checkpoint.bin");
  write_text(out / "config.json", json::parse(cfg_text).dump(2) + "\n");
  {
    CsvWriter w(out / "metrics.csv",
                {"epoch", "train_loss", "val_metric", "test_metric", "alive_experts", "mean_k_u"});
    for (const auto& e : r.log) {
      w.cell(e.epoch).cell(e.train_loss).cell(e.val_metric).cell(e.test_metric).cell(e.alive_experts).cell(e.mean_k_u);
      w.end_row();
    }
  }
  {
    CsvWriter w(out / "prune_report.csv", {"epoch", "expert", "kind", "importance", "action"});
    for (const auto& p : r.prunes) {
      w.cell(p.epoch).cell(p.expert).cell(p.kind).cell(p.importance).cell(std::string(moe::action_name(p.action)));
      w.end_row();
    }
  }
  {
    CsvWriter w(out / "k_histogram.csv", {"k", "count"});
    for (const auto& [k, n] : r.k_histogram) {
      w.cell(k).cell(n);
      w.end_row();
    }
  }
  const auto metric = std::string(metrics::metric_name(cfg.metric));
  json manifest = {
      {"schema_version", kSchemaVersion},
      {"command", "train"},
      {"seed", cfg.seed},
      {"config", json::parse(cfg_text)},
      {"inputs", hashes},
      {"artifacts",
       {{"checkpoint", "checkpoint.bin"},
        {"config", "config.json"},
        {"metrics", "metrics.csv"},
        {"prune_report", "prune_report.csv"},
        {"k_histogram", "k_histogram.csv"}}},
      {"summary",
       {{"metric", metric},
        {"best_epoch", r.best_epoch},
        {"best_val", r.best_val},
        {"test_at_best", r.test_at_best},
        {"alive_experts", r.log.empty() ? 0 : r.log.back().alive_experts},
        {"rollbacks", r.rollbacks},
        {"min_k", r.min_k}}}};
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
  std::printf("train metric=%s best_epoch=%zu val=%.17g test=%.17g min_k=%zu out=%s\n", metric.c_str(), r.best_epoch,
              r.best_val, r.test_at_best, r.min_k, out.string().c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string split = "test";
  std::string out;
  DataFlags data;
};

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  data::Split split;
  try {
    split = data::parse_split(a.split);
  } catch (const InputError& e) {
    throw ConfigError(std::string("--split: ") + e.what());
  }
  Overrides o;
  a.data.apply(o);
  const TrainConfig cfg = parse_config(ckpt.config_json, o);
  const auto ds = train::make_dataset(cfg);
  const auto r = train::evaluate(ds, ckpt, split, nullptr);
  const auto metric = std::string(metrics::metric_name(r.metric));
  if (!a.out.empty()) {
    make_out_dir(a.out);
    CsvWriter w(fs::path(a.out) / "eval.csv", {"split", "metric", "value", "items", "epoch"});
    w.cell(std::string(data::split_name(split))).cell(metric).cell(r.value).cell(r.items);
    w.cell(static_cast<std::size_t>(ckpt.epoch));
    w.end_row();
  }
  std::printf("eval split=%s metric=%s value=%.17g items=%zu epoch=%lld\n", std::string(data::split_name(split)).c_str(),
              metric.c_str(), r.value, r.items, static_cast<long long>(ckpt.epoch));
  return 0;
}

// ---------------------------------------------------------------- theory

struct BoundArgs {
  std::size_t k_min = 2, k_max = 8;
  double eps0 = 1e-3, a = 0.3;
  double samples = 1e5;
  std::size_t d = 8, n = 64, c = 16;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
};

int cmd_bound(const BoundArgs& a) {
  if (a.k_min < 2 || a.k_max < a.k_min) throw ConfigError("--k-min/--k-max: need 2 <= k-min <= k-max");
  if (!(a.eps0 > 0) || !std::isfinite(a.eps0)) throw ConfigError("--eps0 must be positive");
  if (!(a.a > 0) || !(a.a < -std::log(a.eps0))) throw ConfigError("--a must lie in (0, -ln eps0)");
  if (!(a.samples >= 1) || a.samples != std::floor(a.samples) || a.samples > 1e12)
    throw ConfigError("--samples must be a positive integer");
  if (a.d == 0 || a.n < 3 || a.c == 0) throw ConfigError("--d, --c must be positive and --n at least 3");
  theory::McConfig mc;
  mc.eps0 = a.eps0;
  mc.a = a.a;
  mc.samples = static_cast<std::uint64_t>(a.samples);
  mc.d = a.d;
  mc.n = a.n;
  mc.c = a.c;
  mc.seed = a.seed;
  mc.threads = a.threads;
  const auto rows = theory::bound_table(a.k_min, a.k_max, mc);
  std::optional<CsvWriter> w;
  if (!a.out.empty()) {
    make_out_dir(a.out);
    w.emplace(fs::path(a.out) / "bound.csv", std::vector<std::string>{"k", "f", "bound", "mc_estimate", "ci_low", "ci_high"});
  }
  std::printf("# schema_version=%d\nk,f,bound,mc_estimate,ci_low,ci_high\n", kSchemaVersion);
  for (const auto& r : rows) {
    std::printf("%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.k, r.f, r.bound.value, r.mc.prob.estimate, r.mc.prob.low,
                r.mc.prob.high);
    if (w) {
      w->cell(r.k).cell(r.f).cell(r.bound.value).cell(r.mc.prob.estimate).cell(r.mc.prob.low).cell(r.mc.prob.high);
      w->end_row();
    }
  }
  return 0;
}

struct CaseArgs {
  std::string graph = "star3";
  std::string edges;
  std::size_t seeds = 100, width = 8, in_dim = 4;
  std::string out;
};

int cmd_case_study(const CaseArgs& a) {
  if (a.seeds == 0 || a.width == 0 || a.in_dim == 0) throw ConfigError("--seeds, --width and --in-dim must be positive");
  graph::Graph g;
  if (!a.edges.empty()) {
    g = graph::read_edge_list(a.edges);
  } else if (a.graph.rfind("star", 0) == 0 && a.graph.size() > 4) {
    g = theory::star(size_list(a.graph.substr(4), "--graph").front());
  } else {
    throw ConfigError("--graph must look like star<leaves>, e.g. star3");
  }
  const auto rows = theory::case_study(g, a.seeds, a.in_dim, a.width);
  std::optional<CsvWriter> w;
  if (!a.out.empty()) {
    make_out_dir(a.out);
    w.emplace(fs::path(a.out) / "case_study.csv",
              std::vector<std::string>{"seed", "alpha_gcn", "alpha_sage", "alpha_gin", "skipped_gcn", "skipped_sage",
                                       "skipped_gin"});
  }
  std::printf("# schema_version=%d\nseed,alpha_gcn,alpha_sage,alpha_gin,skipped_gcn,skipped_sage,skipped_gin\n",
              kSchemaVersion);
  std::size_t gin_selected = 0;
  for (const auto& r : rows) {
    std::printf("%llu,%.6e,%.6e,%.6e,%zu,%zu,%zu\n", static_cast<unsigned long long>(r.seed), r.gcn.alpha, r.sage.alpha,
                r.gin.alpha, r.gcn.skipped, r.sage.skipped, r.gin.skipped);
    if (w) {
      w->cell(static_cast<std::size_t>(r.seed)).cell(r.gcn.alpha).cell(r.sage.alpha).cell(r.gin.alpha);
      w->cell(r.gcn.skipped).cell(r.sage.skipped).cell(r.gin.skipped);
      w->end_row();
    }
    gin_selected += r.gin.alpha > std::max(r.gcn.alpha, r.sage.alpha) + 1e-6;
  }
  std::fprintf(stderr, "gin has the largest score in %zu of %zu seeds\n", gin_selected, rows.size());
  return 0;
}

struct SketchArgs {
  std::string dims = "16,100", widths = "8,16,32,64";
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sketch_check(const SketchArgs& a) {
  const auto dims = size_list(a.dims, "--dims");
  const auto widths = size_list(a.widths, "--widths");
  if (a.trials < 2) throw ConfigError("--trials must be at least 2");
  const auto rows = theory::cs_inner_check(dims, widths, a.trials, a.seed);
  std::optional<CsvWriter> w;
  if (!a.out.empty()) {
    make_out_dir(a.out);
    w.emplace(fs::path(a.out) / "sketch_check.csv",
              std::vector<std::string>{"dim", "width", "trials", "truth", "mean", "ci_half", "rms_error"});
  }
  std::printf("# schema_version=%d\ndim,width,trials,truth,mean,ci_half,rms_error\n", kSchemaVersion);
  for (const auto& r : rows) {
    std::printf("%zu,%zu,%zu,%.10g,%.10g,%.10g,%.10g\n", r.dim, r.width, r.trials, r.truth, r.mean, r.ci_half,
                r.rms_error);
    if (w) {
      w->cell(r.dim).cell(r.width).cell(r.trials).cell(r.truth).cell(r.mean).cell(r.ci_half).cell(r.rms_error);
      w->end_row();
    }
  }
  return 0;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string config;
  std::string out;
  std::string seeds = "0,1,2,3,4";
  bool verbose = false;
  SchemaFlags schema;
  DataFlags data;
};

int cmd_ablate(const AblateArgs& a) {
  Overrides o = a.schema.collect();
  a.data.apply(o);
  const TrainConfig base = resolve_config(a.config, o);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(a.seeds)) {
    try {
      std::size_t pos = 0;
      seeds.push_back(std::stoull(s, &pos));
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
      throw ConfigError("--seeds: expected non-negative integers, got '" + s + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds: list is empty");

  struct Variant {
    const char* name;
    Overrides set;
  };
  const std::vector<Variant> variants{{"sagmm", {}},
                                      {"wo_diverse", {{"diverse", "false"}}},
                                      {"topk_gating", {{"gating_mode", "noisy_topk"}}},
                                      {"topany_gating", {{"gating_mode", "top_any"}}},
                                      {"wo_pruning", {{"pruning", "false"}}}};
  const std::string base_text = to_json(base);
  std::vector<TrainConfig> configs;
  for (const auto& v : variants) configs.push_back(parse_config(base_text, v.set));

  make_out_dir(a.out);
  const auto metric = std::string(metrics::metric_name(base.metric));
  CsvWriter runs(fs::path(a.out) / "ablation.csv",
                 {"variant", "seed", "metric", "test_metric", "best_val", "best_epoch", "alive_experts", "min_k"});
  std::vector<std::vector<double>> tests(variants.size());
  for (auto seed : seeds) {
    TrainConfig seeded = base;
    set_seeds(seeded, seed);
    const auto ds = train::make_dataset(seeded);
    const Matrix pe = train::positional_encodings(ds, base.pe_dim);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      TrainConfig c = configs[v];
      set_seeds(c, seed);
      train::TrainOptions opts;
      opts.pe = &pe;
      if (a.verbose) opts.progress = &std::cerr;
      const auto r = train::train(ds, c, opts);
      runs.cell(std::string(variants[v].name)).cell(static_cast<std::size_t>(seed)).cell(metric).cell(r.test_at_best);
      runs.cell(r.best_val).cell(r.best_epoch).cell(r.log.empty() ? std::size_t{0} : r.log.back().alive_experts);
      runs.cell(r.min_k);
      runs.end_row();
      tests[v].push_back(r.test_at_best);
      std::fprintf(stderr, "%s seed=%llu test=%.6f\n", variants[v].name, static_cast<unsigned long long>(seed),
                   r.test_at_best);
    }
  }
  CsvWriter summary(fs::path(a.out) / "ablation_summary.csv", {"variant", "metric", "mean_test", "std_test", "runs"});
  std::printf("variant,mean_test,std_test\n");
  for (std::size_t v = 0; v < variants.size(); ++v) {
    double mean = 0, sq = 0;
    for (double t : tests[v]) mean += t;
    mean /= static_cast<double>(tests[v].size());
    for (double t : tests[v]) sq += (t - mean) * (t - mean);
    const double sd = tests[v].size() > 1 ? std::sqrt(sq / static_cast<double>(tests[v].size() - 1)) : 0.0;
    summary.cell(std::string(variants[v].name)).cell(metric).cell(mean).cell(sd).cell(tests[v].size());
    summary.end_row();
    std::printf("%s,%.6f,%.6f\n", variants[v].name, mean, sd);
  }
  json manifest = {{"schema_version", kSchemaVersion},
                   {"command", "ablate"},
                   {"seeds", seeds},
                   {"config", json::parse(base_text)},
                   {"inputs", input_hashes(base_text, base)},
                   {"artifacts", {{"runs", "ablation.csv"}, {"summary", "ablation_summary.csv"}}}};
  write_text(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------- export-data

int cmd_export(const TrainArgs& a) {
  const TrainConfig cfg = resolve_config(a.config, a.schema.collect());
  const auto ds = train::make_dataset(cfg);
  make_out_dir(a.out);
  const fs::path out = a.out;
  data::DataFiles files{out / "edges.csv", out / "features.csv", out / "labels.csv", out / "splits.csv", {}};
  if (ds.task == data::TaskKind::GraphClassification || ds.task == data::TaskKind::GraphRegression)
    files.graph_ids = out / "graph_ids.csv";
  data::save_dataset(ds, files);
  std::printf("--edges %s --features %s --labels %s --splits %s", files.edges.c_str(), files.features.c_str(),
              files.labels.c_str(), files.splits.c_str());
  if (!files.graph_ids.empty()) std::printf(" --graph-ids %s", files.graph_ids.c_str());
  std::printf("\n");
  return 0;
}

// ---------------------------------------------------------------- schema

int cmd_schema() {
  std::printf("| key | type | default | description |\n|---|---|---|---|\n");
  for (const auto& k : config_schema())
    std::printf("| `%s` | %s | `%s` | %s |\n", k.name.c_str(), k.type.c_str(), k.default_json.c_str(), k.doc.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sagmm: mixture of graph neural network experts"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint, logs and manifest");
  train_cmd->add_option("-c,--config", ta.config, "JSON config file (defaults apply when omitted)");
  train_cmd->add_option("-o,--out", ta.out, "output directory")->required();
  train_cmd->add_flag("-v,--verbose", ta.verbose, "per-epoch progress on stderr");
  ta.data.attach(train_cmd);
  ta.schema.attach(train_cmd);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--split", ea.split, "train, valid or test");
  eval_cmd->add_option("-o,--out", ea.out, "directory for eval.csv");
  ea.data.attach(eval_cmd);

  BoundArgs ba;
  auto* bound_cmd = app.add_subcommand("bound", "closed-form bound and Monte Carlo estimate per k");
  bound_cmd->add_option("--k-min", ba.k_min, "smallest k");
  bound_cmd->add_option("--k-max", ba.k_max, "largest k");
  bound_cmd->add_option("--eps0", ba.eps0, "loss stability constant");
  bound_cmd->add_option("--a", ba.a, "loss level");
  bound_cmd->add_option("--samples", ba.samples, "Monte Carlo samples per k");
  bound_cmd->add_option("--d", ba.d, "feature dim");
  bound_cmd->add_option("--n", ba.n, "nodes in the sampled graph");
  bound_cmd->add_option("--c", ba.c, "sketch width");
  bound_cmd->add_option("--seed", ba.seed, "base seed");
  bound_cmd->add_option("--threads", ba.threads, "worker threads (0 = all cores)");
  bound_cmd->add_option("-o,--out", ba.out, "directory for bound.csv");

  CaseArgs ca;
  auto* case_cmd = app.add_subcommand("case-study", "variance gate scores of GCN, SAGE and GIN on all-ones input");
  case_cmd->add_option("--graph", ca.graph, "built-in graph, star<leaves>");
  case_cmd->add_option("--edges", ca.edges, "edge list file instead of --graph");
  case_cmd->add_option("--seeds", ca.seeds, "number of random initializations");
  case_cmd->add_option("--width", ca.width, "expert width");
  case_cmd->add_option("--in-dim", ca.in_dim, "input feature dim");
  case_cmd->add_option("-o,--out", ca.out, "directory for case_study.csv");

  SketchArgs sa;
  auto* sketch_cmd = app.add_subcommand("sketch-check", "count-sketch inner product error table");
  sketch_cmd->add_option("--dims", sa.dims, "comma-separated vector lengths");
  sketch_cmd->add_option("--widths", sa.widths, "comma-separated sketch widths");
  sketch_cmd->add_option("--trials", sa.trials, "sketch seeds per cell");
  sketch_cmd->add_option("--seed", sa.seed, "base seed");
  sketch_cmd->add_option("-o,--out", sa.out, "directory for sketch_check.csv");

  AblateArgs aa;
  auto* ablate_cmd = app.add_subcommand("ablate", "sagmm, w/o diverse, top-k, top-any and w/o pruning over seeds");
  ablate_cmd->add_option("-c,--config", aa.config, "JSON config file");
  ablate_cmd->add_option("-o,--out", aa.out, "output directory")->required();
  ablate_cmd->add_option("--seeds", aa.seeds, "comma-separated seeds (training and data)");
  ablate_cmd->add_flag("-v,--verbose", aa.verbose, "per-epoch progress on stderr");
  aa.data.attach(ablate_cmd);
  aa.schema.attach(ablate_cmd);

  TrainArgs xa;
  auto* export_cmd = app.add_subcommand("export-data", "write the configured dataset as loader CSV files");
  export_cmd->add_option("-c,--config", xa.config, "JSON config file");
  export_cmd->add_option("-o,--out", xa.out, "output directory")->required();
  xa.schema.attach(export_cmd);

  app.add_subcommand("schema", "print the config schema as a markdown table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*bound_cmd) return cmd_bound(ba);
    if (*case_cmd) return cmd_case_study(ca);
    if (*sketch_cmd) return cmd_sketch_check(sa);
    if (*ablate_cmd) return cmd_ablate(aa);
    if (*export_cmd) return cmd_export(xa);
    return cmd_schema();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  }
}
