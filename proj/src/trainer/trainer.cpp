// SPDX-License-Identifier: Apache-2.0
#include "sagmm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "sagmm/errors.hpp"
#include "sagmm/metrics.hpp"
#include "sagmm/optim.hpp"

namespace sagmm::train {

using ad::Tape;
using ad::Var;
using data::Dataset;
using data::EdgePair;
using data::Split;
using data::TaskKind;

namespace {

bool graph_level(TaskKind t) { return t == TaskKind::GraphClassification || t == TaskKind::GraphRegression; }

std::size_t output_width(const TrainConfig& cfg, const Dataset& ds) {
  switch (ds.task) {
    case TaskKind::NodeClassification: return ds.multilabel() ? ds.targets.cols() : ds.num_classes;
    case TaskKind::GraphClassification: return ds.num_classes;
    case TaskKind::GraphRegression: return 1;
    case TaskKind::LinkPrediction: return cfg.proj_dim;
  }
  return 1;
}

Matrix slice_rows(const Matrix& m, std::span<const graph::NodeId> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(static_cast<std::size_t>(rows[i]), j);
  return out;
}

// One forward unit: a (sub)graph with its inputs and supervision in local ids.
struct Batch {
  graph::Graph graph;
  Matrix x;
  Matrix ctx;
  std::vector<std::size_t> rows;   // supervised local rows (nodes or graphs)
  std::vector<int> labels;         // indexed by local row
  Matrix targets;                  // indexed by local row
  std::vector<std::size_t> membership;
  std::size_t groups = 0;
  std::vector<EdgePair> pairs;     // link tasks
  Matrix pair_targets;
};

class Runner {
 public:
  Runner(const Dataset& ds, const TrainConfig& cfg, const Matrix& pe, const TrainOptions& opts)
      : ds_(ds), cfg_(cfg), pe_(pe), opts_(opts), rng_(cfg.seed ^ 0x3c6ef372fe94f82bULL) {
    full_ = make_full();
    full_prop_ = std::make_unique<experts::Propagation>(full_.graph);
  }

  moe::MoeModel& model() { return *model_; }

  void build_model() {
    model_ = std::make_unique<moe::MoeModel>(model_config(cfg_, ds_), cfg_.seed);
  }

  TrainResult run(std::span<const std::size_t> train_items) {
    TrainResult res;
    res.min_k = std::numeric_limits<std::size_t>::max();
    const std::size_t N = model_->pool().initial_count();
    for (std::size_t j = 0; j < N; ++j) res.expert_names.push_back(model_->pool()[j].name());
    ad::AdamConfig ac;
    ac.lr = cfg_.lr;
    ac.weight_decay = cfg_.weight_decay;
    ad::Adam adam(ac);
    moe::PruneController pc(N, cfg_.alpha, cfg_.eta, cfg_.prune_interval, cfg_.prune_delta);
    if (train_items.empty()) throw InputError("training split is empty");
    std::vector<std::size_t> items(train_items.begin(), train_items.end());
    is_train_.assign(ds_.num_nodes(), false);
    if (ds_.task == TaskKind::NodeClassification && cfg_.batch_size != 0) {
      for (std::size_t u : train_items) is_train_[u] = true;
      items.resize(ds_.num_nodes());
      std::iota(items.begin(), items.end(), 0);
    }
    bool have_best = false;

    for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      std::shuffle(items.begin(), items.end(), rng_);
      const std::size_t bs = cfg_.batch_size == 0 ? items.size() : std::min(cfg_.batch_size, items.size());
      double loss_sum = 0.0, k_sum = 0.0;
      std::size_t n_batches = 0, n_steps = 0;
      for (std::size_t b0 = 0; b0 < items.size(); b0 += bs, ++n_batches) {
        const std::span<const std::size_t> chunk(items.data() + b0, std::min(bs, items.size() - b0));
        const std::optional<double> loss = step(epoch, n_batches, chunk, adam, pc, res, k_sum);
        if (!loss) continue;
        loss_sum += *loss;
        ++n_steps;
      }
      EpochLog log;
      log.epoch = epoch;
      log.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(n_steps, 1));
      log.val_metric = metric_on(Split::Valid);
      log.test_metric = ds_.split(Split::Test).empty() ? std::nan("") : metric_on(Split::Test);
      log.alive_experts = model_->pool().alive_count();
      log.mean_k_u = k_sum / static_cast<double>(std::max<std::size_t>(n_steps, 1));
      res.log.push_back(log);
      if (opts_.progress)
        *opts_.progress << "epoch " << epoch << " loss " << log.train_loss << " val " << log.val_metric << " test "
                        << log.test_metric << " alive " << log.alive_experts << " k " << log.mean_k_u << "\n";
      const double s = score(cfg_.metric, log.val_metric);
      if (!have_best || s > score(cfg_.metric, res.best_val)) {
        have_best = true;
        res.best_epoch = epoch;
        res.best_val = log.val_metric;
        res.test_at_best = log.test_metric;
        res.best = snapshot(adam, pc, epoch);
      }
      if (cfg_.pruning) pc.on_epoch_end(epoch, s, *model_);
    }
    res.prunes = pc.history();
    res.rollbacks = pc.rollbacks();
    res.importance = pc.tracker().scores();
    for (std::size_t j = 0; j < N; ++j) res.pruned_epoch.push_back(pc.pruned_at(j));
    return res;
  }

  double metric_on(Split split) {
    const auto& items = ds_.split(split);
    if (items.empty()) throw InputError("split '" + std::string(data::split_name(split)) + "' is empty");
    Tape tape;
    moe::ForwardResult fr = model_->forward(tape, *full_prop_, full_.x, full_.ctx, false, nullptr);
    return score_split(tape, fr, split);
  }

 private:
  Batch make_full() const {
    Batch b;
    b.graph = ds_.graph;
    b.x = ds_.features;
    b.ctx = context_for(ds_, pe_);
    if (graph_level(ds_.task)) {
      b.membership = ds_.graph_id;
      b.groups = ds_.num_graphs;
    }
    return b;
  }

  // Supervised batch over `chunk` (training item ids).
  Batch make_batch(std::span<const std::size_t> chunk) {
    const std::size_t n = ds_.num_nodes();
    if (ds_.task == TaskKind::LinkPrediction) {
      Batch b;
      std::uniform_int_distribution<std::size_t> node(0, n - 1);
      std::bernoulli_distribution side(0.5);
      const auto& pos = ds_.link_pos[0];
      for (std::size_t id : chunk) b.pairs.push_back(pos[id]);
      for (std::size_t id : chunk) {
        EdgePair e = pos[id];
        (side(rng_) ? e.first : e.second) = node(rng_);
        b.pairs.push_back(e);
      }
      b.pair_targets = Matrix(b.pairs.size(), 1);
      for (std::size_t i = 0; i < chunk.size(); ++i) b.pair_targets(i, 0) = 1.0;
      return b;
    }
    if (graph_level(ds_.task)) {
      std::vector<std::size_t> order(chunk.begin(), chunk.end());
      std::vector<std::size_t> local(ds_.num_graphs, std::numeric_limits<std::size_t>::max());
      for (std::size_t i = 0; i < order.size(); ++i) local[order[i]] = i;
      std::vector<graph::NodeId> nodes;
      for (std::size_t u = 0; u < n; ++u)
        if (local[ds_.graph_id[u]] != std::numeric_limits<std::size_t>::max()) nodes.push_back(static_cast<graph::NodeId>(u));
      graph::Subgraph sub = graph::induced_subgraph(ds_.graph, nodes);
      Batch b;
      b.graph = std::move(sub.graph);
      b.x = slice_rows(ds_.features, nodes);
      b.ctx = slice_rows(full_.ctx, nodes);
      for (graph::NodeId u : nodes) b.membership.push_back(local[ds_.graph_id[static_cast<std::size_t>(u)]]);
      b.groups = order.size();
      b.rows.resize(order.size());
      std::iota(b.rows.begin(), b.rows.end(), 0);
      if (ds_.task == TaskKind::GraphClassification)
        for (std::size_t g : order) b.labels.push_back(ds_.labels[g]);
      else {
        b.targets = Matrix(order.size(), 1);
        for (std::size_t i = 0; i < order.size(); ++i) b.targets(i, 0) = ds_.targets(order[i], 0);
      }
      return b;
    }
    // Node tasks. Full-batch mode keeps the whole graph; otherwise the
    // batch is the subgraph induced by one part of a random partition of
    // all nodes, supervised on its training nodes.
    if (cfg_.batch_size == 0) {
      Batch b;
      b.rows.assign(chunk.begin(), chunk.end());
      std::sort(b.rows.begin(), b.rows.end());
      supervise_nodes(b, b.rows);
      return b;  // graph, x and ctx come from the full batch
    }
    std::vector<graph::NodeId> nodes;
    nodes.reserve(chunk.size());
    for (std::size_t u : chunk) nodes.push_back(static_cast<graph::NodeId>(u));
    graph::Subgraph sub = graph::induced_subgraph(ds_.graph, nodes);
    Batch b;
    b.x = slice_rows(ds_.features, nodes);
    b.ctx = graph::context_features_with_pe(sub.graph, b.x, slice_rows(pe_, nodes));
    b.graph = std::move(sub.graph);
    std::vector<std::size_t> global;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (is_train_[static_cast<std::size_t>(nodes[i])]) {
        b.rows.push_back(i);
        global.push_back(static_cast<std::size_t>(nodes[i]));
      }
    supervise_nodes(b, global);
    return b;
  }

  // Labels or targets aligned with b.rows, taken from the given node ids.
  void supervise_nodes(Batch& b, const std::vector<std::size_t>& global) const {
    if (ds_.multilabel()) {
      b.targets = Matrix(global.size(), ds_.targets.cols());
      for (std::size_t i = 0; i < global.size(); ++i)
        for (std::size_t j = 0; j < ds_.targets.cols(); ++j) b.targets(i, j) = ds_.targets(global[i], j);
    } else {
      for (std::size_t u : global) b.labels.push_back(ds_.labels[u]);
    }
  }

  Var task_loss(Tape& tape, moe::ForwardResult& fr, const Batch& b, const Batch& src) {
    switch (ds_.task) {
      case TaskKind::NodeClassification: {
        Var out = model_->head(tape, fr.mixed);
        if (ds_.multilabel()) return ad::bce_with_logits(out, b.targets, b.rows);
        return ad::cross_entropy(out, b.labels, b.rows);
      }
      case TaskKind::GraphClassification: {
        Var out = model_->head(tape, metrics::graph_pool(fr.mixed, src.membership, src.groups));
        return ad::cross_entropy(out, b.labels, b.rows);
      }
      case TaskKind::GraphRegression: {
        Var out = model_->head(tape, metrics::graph_pool(fr.mixed, src.membership, src.groups));
        return ad::mse(out, b.targets, b.rows);
      }
      case TaskKind::LinkPrediction: {
        Var emb = model_->head(tape, fr.mixed);
        Var s = metrics::link_decode(emb, b.pairs);
        std::vector<std::size_t> all(b.pairs.size());
        std::iota(all.begin(), all.end(), 0);
        return ad::bce_with_logits(s, b.pair_targets, all);
      }
    }
    throw ConfigError("unhandled task");
  }

  std::optional<double> step(std::size_t epoch, std::size_t batch_idx, std::span<const std::size_t> chunk, ad::Adam& adam,
              moe::PruneController& pc, TrainResult& res, double& k_sum) {
    Batch b = make_batch(chunk);
    if (b.rows.empty() && b.pairs.empty()) return std::nullopt;  // no supervised node in this part
    const bool use_full = ds_.task == TaskKind::LinkPrediction ||
                          (ds_.task == TaskKind::NodeClassification && cfg_.batch_size == 0);
    const Batch& src = use_full ? full_ : b;
    std::unique_ptr<experts::Propagation> own;
    if (!use_full) own = std::make_unique<experts::Propagation>(b.graph);
    const experts::Propagation& prop = use_full ? *full_prop_ : *own;

    for (ad::Parameter* p : model_->all_parameters()) p->zero_grad();
    Tape tape;
    moe::ForwardResult fr = model_->forward(tape, prop, src.x, src.ctx, true, &rng_);
    const std::vector<bool> alive = model_->alive_mask();
    Var task = task_loss(tape, fr, b, src);
    moe::AuxLosses aux = moe::aux_losses(fr.gate.gates, alive);
    Var total = ad::add(task, ad::add(ad::scale(aux.importance, cfg_.w_imp), ad::scale(aux.diversity, cfg_.w_div)));

    // Contribution scores; with rms normalization each expert output is first
    // rescaled to unit RMS over the batch so that magnitude alone (sum
    // aggregators grow with degree) does not decide importance.
    const Matrix& gsrc = cfg_.prune_type == moe::PruneSignal::RawGates ? fr.gate.zprime.value() : fr.gate.gates.value();
    const std::size_t N = alive.size();
    std::vector<double> gamma(N, 0.0);
    std::vector<double> column(gsrc.rows());
    for (std::size_t j : fr.active) {
      for (std::size_t u = 0; u < gsrc.rows(); ++u) column[u] = gsrc(u, j);
      const Matrix& h = fr.expert_values[j];
      double g = moe::contribution_score(column, h);
      if (cfg_.gamma_normalization == GammaNormalization::Rms) {
        double ss = 0.0;
        for (double v : h.values()) ss += v * v;
        const double rms = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(h.size(), 1)));
        g = rms > 0.0 ? g / rms : 0.0;
      }
      gamma[j] = g;
    }

    const double loss = total.item();
    if (!std::isfinite(loss) || std::abs(loss) > cfg_.divergence_threshold)
      throw NumericalError(diagnostic(epoch, batch_idx, loss, gamma, fr));
    tape.backward(total);
    auto params = model_->trainable();
    try {
      adam.step(params);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + "\n" + diagnostic(epoch, batch_idx, loss, gamma, fr));
    }
    pc.tracker().update(gamma, alive);

    std::size_t min_k = std::numeric_limits<std::size_t>::max();
    double mean_k = 0.0;
    for (std::size_t k : fr.gate.k) {
      min_k = std::min(min_k, k);
      mean_k += static_cast<double>(k);
      ++res.k_histogram[k];
    }
    mean_k /= static_cast<double>(std::max<std::size_t>(fr.gate.k.size(), 1));
    res.min_k = std::min(res.min_k, min_k);
    ++res.steps;
    k_sum += mean_k;
    if (opts_.on_step) opts_.on_step(StepInfo{epoch, batch_idx, loss, fr.active, gamma, min_k, mean_k, *model_});
    return loss;
  }

  std::string diagnostic(std::size_t epoch, std::size_t batch, double loss, const std::vector<double>& gamma,
                         const moe::ForwardResult& fr) const {
    std::ostringstream os;
    os << (std::isfinite(loss) ? "diverged" : "non-finite") << " training loss at epoch " << epoch << ", batch " << batch << " (loss " << loss << ")\n";
    os << "  gamma per expert:";
    for (std::size_t j = 0; j < gamma.size(); ++j) os << " " << model_->pool()[j].name() << "=" << gamma[j];
    const Matrix& g = fr.gate.gates.value();
    std::size_t fallback = 0, min_k = std::numeric_limits<std::size_t>::max(), max_k = 0;
    for (bool f : fr.gate.fallback) fallback += f ? 1 : 0;
    for (std::size_t k : fr.gate.k) {
      min_k = std::min(min_k, k);
      max_k = std::max(max_k, k);
    }
    double gmax = 0.0;
    bool finite = true;
    for (double v : g.values()) {
      finite = finite && std::isfinite(v);
      if (std::isfinite(v)) gmax = std::max(gmax, std::abs(v));
    }
    os << "\n  gate stats: rows " << g.rows() << ", k_u in [" << min_k << ", " << max_k << "], fallback rows "
       << fallback << ", max |G| " << gmax << (finite ? "" : ", non-finite entries present");
    return os.str();
  }

  double score_split(Tape& tape, moe::ForwardResult& fr, Split split) {
    const auto& items = ds_.split(split);
    using metrics::Metric;
    switch (ds_.task) {
      case TaskKind::NodeClassification: {
        const Matrix out = model_->head(tape, fr.mixed).value();
        if (ds_.multilabel()) return metrics::roc_auc_columns(out, ds_.targets, items);
        if (cfg_.metric == Metric::RocAuc) return binary_auc(out, ds_.labels, items);
        return metrics::accuracy(out, ds_.labels, items);
      }
      case TaskKind::GraphClassification: {
        const Matrix out = model_->head(tape, metrics::graph_pool(fr.mixed, full_.membership, full_.groups)).value();
        if (cfg_.metric == Metric::RocAuc) return binary_auc(out, ds_.labels, items);
        return metrics::accuracy(out, ds_.labels, items);
      }
      case TaskKind::GraphRegression: {
        const Matrix out = model_->head(tape, metrics::graph_pool(fr.mixed, full_.membership, full_.groups)).value();
        return metrics::rmse(out, ds_.targets, items);
      }
      case TaskKind::LinkPrediction: {
        const auto si = static_cast<std::size_t>(split);
        Var emb = model_->head(tape, fr.mixed);
        const Matrix pos = metrics::link_decode(emb, ds_.link_pos[si]).value();
        const Matrix neg = metrics::link_decode(emb, ds_.link_neg[si]).value();
        return metrics::hits_at_k(pos.values(), neg.values(), cfg_.hits_k);
      }
    }
    throw ConfigError("unhandled task");
  }

  static double binary_auc(const Matrix& logits, const std::vector<int>& labels, std::span<const std::size_t> rows) {
    if (logits.cols() != 2) throw ConfigError("metric rocauc needs a binary task or multi-label targets");
    std::vector<double> s;
    std::vector<int> y;
    for (std::size_t r : rows) {
      s.push_back(logits(r, 1) - logits(r, 0));
      y.push_back(labels[r]);
    }
    return metrics::roc_auc(s, y);
  }

  Checkpoint snapshot(const ad::Adam& adam, const moe::PruneController& pc, std::size_t epoch) {
    Checkpoint c;
    c.config_json = to_json(cfg_);
    c.params = model_->state();
    for (const auto& [k, v] : adam.slots()) c.optimizer[k] = v;
    for (bool a : model_->alive_mask()) c.alive.push_back(a ? 1 : 0);
    c.importance = pc.tracker().scores();
    c.eta = pc.tracker().eta();
    c.epoch = static_cast<std::int64_t>(epoch);
    return c;
  }

  const Dataset& ds_;
  const TrainConfig& cfg_;
  const Matrix& pe_;
  const TrainOptions& opts_;
  std::mt19937_64 rng_;
  Batch full_;
  std::unique_ptr<experts::Propagation> full_prop_;
  std::unique_ptr<moe::MoeModel> model_;
  std::vector<bool> is_train_;
};

void restore(moe::MoeModel& model, const Checkpoint& ckpt) {
  model.load_state(ckpt.params);
  const std::size_t N = model.pool().initial_count();
  if (ckpt.alive.size() != N)
    throw DataError("checkpoint has " + std::to_string(ckpt.alive.size()) + " expert flags, model has " + std::to_string(N));
  for (std::size_t j = 0; j < N; ++j)
    if (ckpt.alive[j]) model.pool().set_alive(j, true);
  for (std::size_t j = 0; j < N; ++j)
    if (!ckpt.alive[j]) model.pool().set_alive(j, false);
}

std::vector<std::size_t> pretrain_subset(const Dataset& ds, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> items = ds.split(Split::Train);
  std::mt19937_64 rng(seed ^ 0xa54ff53a5f1d36f1ULL);
  std::shuffle(items.begin(), items.end(), rng);
  const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(fraction * static_cast<double>(items.size()))));
  items.resize(std::min(keep, items.size()));
  std::sort(items.begin(), items.end());
  return items;
}

}  // namespace

data::Dataset make_dataset(const TrainConfig& cfg) {
  const DataConfig& d = cfg.data;
  if (d.source == "sbm") return data::sbm_generate(d.sbm);
  if (d.source == "toy_graph") {
    data::GraphToyConfig t = d.toy;
    t.regression = cfg.task == TaskKind::GraphRegression;
    return data::toy_graph_dataset(t);
  }
  if (d.source == "sbm_link") {
    Dataset base = data::sbm_generate(d.sbm);
    return data::make_link_dataset(base.graph, base.features, d.link);
  }
  return data::load_dataset(d.files, cfg.task);
}

Matrix positional_encodings(const Dataset& ds, std::size_t p) {
  const std::size_t n = ds.num_nodes();
  if (!graph_level(ds.task)) {
    if (p >= n) throw ConfigError("pe_dim=" + std::to_string(p) + " must be below the node count " + std::to_string(n));
    return graph::laplacian_pe(ds.graph, p);
  }
  Matrix pe(n, p);
  std::vector<std::vector<graph::NodeId>> members(ds.num_graphs);
  for (std::size_t u = 0; u < n; ++u) members[ds.graph_id[u]].push_back(static_cast<graph::NodeId>(u));
  for (const auto& nodes : members) {
    if (nodes.size() < 2) continue;
    graph::Subgraph sub = graph::induced_subgraph(ds.graph, nodes);
    const std::size_t q = std::min(p, nodes.size() - 1);
    const Matrix local = graph::laplacian_pe(sub.graph, q);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (std::size_t j = 0; j < q; ++j) pe(static_cast<std::size_t>(nodes[i]), j) = local(i, j);
  }
  return pe;
}

Matrix context_for(const Dataset& ds, const Matrix& pe) {
  if (!graph_level(ds.task)) return graph::context_features_with_pe(ds.graph, ds.features, pe);
  const std::size_t n = ds.num_nodes(), d = ds.feature_dim();
  Matrix mean(ds.num_graphs, d);
  std::vector<double> count(ds.num_graphs, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    count[ds.graph_id[u]] += 1.0;
    for (std::size_t j = 0; j < d; ++j) mean(ds.graph_id[u], j) += ds.features(u, j);
  }
  Matrix ctx(n, d + pe.cols());
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t g = ds.graph_id[u];
    for (std::size_t j = 0; j < d; ++j) ctx(u, j) = mean(g, j) / count[g];
    for (std::size_t j = 0; j < pe.cols(); ++j) ctx(u, d + j) = pe(u, j);
  }
  return ctx;
}

moe::ModelConfig model_config(const TrainConfig& cfg, const Dataset& ds) {
  moe::ModelConfig m;
  m.pool.kinds = cfg.pool_kinds();
  m.pool.allow_duplicates = !cfg.diverse || !cfg.experts.empty();
  m.pool.base = cfg.expert;
  m.pool.base.layers = cfg.layers;
  m.pool.base.hidden = cfg.hidden;
  m.gate.mode = cfg.gating_mode;
  m.gate.topk_k = cfg.topk_k;
  m.gate.threshold_init = cfg.gate_init;
  m.gate.mask_gradient = cfg.mask_gradient;
  m.in_dim = ds.feature_dim();
  m.ctx_dim = ds.feature_dim() + cfg.pe_dim;
  m.proj_dim = cfg.proj_dim;
  m.out_dim = output_width(cfg, ds);
  m.dropout = cfg.dropout;
  return m;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const TrainOptions& opts) {
  validate(cfg);
  data::validate(ds);
  if (ds.task != cfg.task)
    throw ConfigError("config task " + std::string(data::task_name(cfg.task)) + " does not match dataset task " +
                      std::string(data::task_name(ds.task)));
  Matrix own_pe;
  if (opts.pe == nullptr) own_pe = positional_encodings(ds, cfg.pe_dim);
  const Matrix& pe = opts.pe ? *opts.pe : own_pe;
  if (pe.rows() != ds.num_nodes() || pe.cols() != cfg.pe_dim) throw ConfigError("positional encodings have the wrong shape");

  Runner main(ds, cfg, pe, opts);
  main.build_model();
  std::map<std::string, Matrix> pretrained;
  if (cfg.pe_mode) {
    moe::MoeModel& model = main.model();
    std::map<std::string, Matrix> state = model.state();
    if (!cfg.expert_checkpoint.empty()) {
      const Checkpoint src = load_checkpoint(cfg.expert_checkpoint);
      for (std::size_t j = 0; j < model.pool().initial_count(); ++j)
        for (const ad::Parameter* p : std::as_const(model.pool()[j]).parameters()) {
          const auto it = src.params.find(p->name());
          if (it == src.params.end())
            throw DataError("expert checkpoint " + cfg.expert_checkpoint + " lacks parameters of expert " +
                            model.pool()[j].name() + " (" + p->name() + ")");
          state[p->name()] = it->second;
        }
    } else {
      const std::vector<std::size_t> subset = pretrain_subset(ds, cfg.pe_fraction, cfg.seed);
      const auto kinds = cfg.pool_kinds();
      for (std::size_t j = 0; j < kinds.size(); ++j) {
        TrainConfig sub = cfg;
        sub.experts = {kinds[j]};
        sub.diverse = true;
        sub.gating_mode = gate::GatingMode::None;
        sub.pruning = false;
        sub.w_imp = sub.w_div = 0.0;
        sub.pe_mode = false;
        sub.epochs = cfg.pe_epochs == 0 ? cfg.epochs : cfg.pe_epochs;
        sub.seed = cfg.seed + 1000003ULL * (j + 1);
        TrainOptions quiet;
        Runner r(ds, sub, pe, quiet);
        r.build_model();
        TrainResult tr = r.run(subset);
        // single-expert names map onto slot j
        const std::string from = r.model().pool()[0].name();
        const std::string to = model.pool()[j].name();
        for (const auto& [name, value] : tr.best.params) {
          if (name.rfind(from + ".", 0) == 0) state[to + name.substr(from.size())] = value;
          else if (name.rfind("proj0.", 0) == 0) state["proj" + std::to_string(j) + name.substr(5)] = value;
        }
      }
    }
    model.load_state(state);
    model.freeze_experts(true);
    for (std::size_t j = 0; j < model.pool().initial_count(); ++j)
      for (const ad::Parameter* p : std::as_const(model.pool()[j]).parameters()) pretrained[p->name()] = p->value();
  }
  TrainResult res = cfg.pe_mode && cfg.router_fraction < 1.0
                        ? main.run(pretrain_subset(ds, cfg.router_fraction, cfg.seed ^ 0x726f75746572ULL))
                        : main.run(ds.split(Split::Train));
  res.pretrained = std::move(pretrained);
  return res;
}

EvalResult evaluate(const Dataset& ds, const Checkpoint& ckpt, Split split, const Matrix* pe_in) {
  const TrainConfig cfg = parse_config(ckpt.config_json);
  if (ds.task != cfg.task) throw DataError("checkpoint was trained for " + std::string(data::task_name(cfg.task)));
  if (ds.split(split).empty()) throw InputError("split '" + std::string(data::split_name(split)) + "' is empty");
  Matrix own;
  if (pe_in == nullptr) own = positional_encodings(ds, cfg.pe_dim);
  const Matrix& pe = pe_in ? *pe_in : own;
  TrainOptions opts;
  Runner r(ds, cfg, pe, opts);
  r.build_model();
  restore(r.model(), ckpt);
  const auto& items = ds.split(split);
  return EvalResult{cfg.metric, r.metric_on(split), items.size()};
}

}  // namespace sagmm::train
