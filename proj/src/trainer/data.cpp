// SPDX-License-Identifier: Apache-2.0
#include "sagmm/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "sagmm/errors.hpp"

namespace sagmm::data {

std::string_view task_name(TaskKind t) noexcept {
  switch (t) {
    case TaskKind::NodeClassification: return "node_cls";
    case TaskKind::GraphClassification: return "graph_cls";
    case TaskKind::GraphRegression: return "graph_reg";
    case TaskKind::LinkPrediction: return "link_pred";
  }
  return "?";
}

TaskKind parse_task(std::string_view s) {
  for (TaskKind t : {TaskKind::NodeClassification, TaskKind::GraphClassification, TaskKind::GraphRegression,
                     TaskKind::LinkPrediction})
    if (task_name(t) == s) return t;
  throw ConfigError("unknown task '" + std::string(s) + "' (node_cls, graph_cls, graph_reg, link_pred)");
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "valid" || s == "val") return Split::Valid;
  if (s == "test") return Split::Test;
  throw InputError("unknown split '" + std::string(s) + "' (train, valid, test)");
}

void validate(const Dataset& ds) {
  const std::size_t n = ds.num_nodes();
  if (ds.features.rows() != n)
    throw DataError("feature rows " + std::to_string(ds.features.rows()) + " != node count " + std::to_string(n));
  if (!ds.features.all_finite()) throw DataError("features contain non-finite values");
  const bool graph_level = ds.task == TaskKind::GraphClassification || ds.task == TaskKind::GraphRegression;
  std::size_t items = n;
  if (graph_level) {
    if (ds.graph_id.size() != n) throw DataError("graph_id must list every node");
    for (std::size_t g : ds.graph_id)
      if (g >= ds.num_graphs) throw DataError("graph id " + std::to_string(g) + " out of range");
    items = ds.num_graphs;
  }
  switch (ds.task) {
    case TaskKind::NodeClassification:
    case TaskKind::GraphClassification:
      if (ds.task == TaskKind::NodeClassification && ds.multilabel()) {
        if (ds.targets.rows() != items) throw DataError("multi-label rows != node count");
        break;
      }
      if (ds.labels.size() != items)
        throw DataError("label count " + std::to_string(ds.labels.size()) + " != " + std::to_string(items));
      if (ds.num_classes < 2) throw DataError("classification needs at least 2 classes");
      for (int y : ds.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= ds.num_classes)
          throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(ds.num_classes) + ")");
      break;
    case TaskKind::GraphRegression:
      if (ds.targets.rows() != items || ds.targets.cols() != 1) throw DataError("regression targets must be graphs x 1");
      break;
    case TaskKind::LinkPrediction:
      items = ds.link_pos[0].size() + ds.link_pos[1].size() + ds.link_pos[2].size();
      for (const auto* list : {&ds.link_pos, &ds.link_neg})
        for (const auto& part : *list)
          for (const EdgePair& e : part)
            if (e.first >= n || e.second >= n) throw DataError("link endpoint out of range");
      break;
  }
  std::vector<char> seen(items, 0);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t id : ds.splits[s]) {
      if (id >= items) throw DataError("split id " + std::to_string(id) + " out of range");
      if (seen[id]) throw DataError("item " + std::to_string(id) + " appears in more than one split");
      seen[id] = 1;
    }
}

namespace {

void assign_splits(Dataset& ds, std::size_t items, double train, double valid, std::mt19937_64& rng) {
  if (train < 0 || valid < 0 || train + valid > 1.0) throw ConfigError("split fractions must be in [0,1] and sum <= 1");
  std::vector<std::size_t> order(items);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::round(train * static_cast<double>(items)));
  const auto n_valid = static_cast<std::size_t>(std::round(valid * static_cast<double>(items)));
  for (std::size_t i = 0; i < items; ++i) {
    const std::size_t s = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
    ds.splits[s].push_back(order[i]);
  }
  for (auto& s : ds.splits) std::sort(s.begin(), s.end());
}

// Bernoulli(p) over `count` slots via geometric skips; calls f(slot).
template <class F>
void bernoulli_slots(std::size_t count, double p, std::mt19937_64& rng, F&& f) {
  if (p <= 0.0 || count == 0) return;
  if (p >= 1.0) {
    for (std::size_t t = 0; t < count; ++t) f(t);
    return;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double log_q = std::log1p(-p);
  double t = -1.0;
  while (true) {
    const double r = 1.0 - u(rng);  // (0, 1]
    t += 1.0 + std::floor(std::log(r) / log_q);
    if (t >= static_cast<double>(count)) return;
    f(static_cast<std::size_t>(t));
  }
}

Matrix class_means(std::size_t classes, std::size_t dim, double signal, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix m(classes, dim);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      m(c, j) = nd(rng);
      norm += m(c, j) * m(c, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < dim; ++j) m(c, j) *= norm > 0 ? signal / norm : 0.0;
  }
  return m;
}

}  // namespace

std::vector<bool> sbm_heterophilic_blocks(const SbmConfig& cfg) {
  const std::size_t b = cfg.sizes.size();
  std::vector<bool> het(b, false);
  if (cfg.mixed)
    for (std::size_t i = b - b / 2; i < b; ++i) het[i] = true;
  return het;
}

Dataset sbm_generate(const SbmConfig& cfg) {
  const std::size_t B = cfg.sizes.size();
  if (B < 2) throw ConfigError("SBM needs at least 2 blocks");
  if (cfg.p_in < 0 || cfg.p_in > 1 || cfg.p_out < 0 || cfg.p_out > 1)
    throw ConfigError("SBM probabilities must lie in [0, 1]");
  if (cfg.feature_dim == 0) throw ConfigError("SBM feature_dim must be >= 1");
  std::vector<std::size_t> start(B + 1, 0);
  for (std::size_t b = 0; b < B; ++b) {
    if (cfg.sizes[b] == 0) throw ConfigError("SBM block sizes must be >= 1");
    start[b + 1] = start[b] + cfg.sizes[b];
  }
  const std::size_t n = start[B];
  const std::vector<bool> het = sbm_heterophilic_blocks(cfg);
  auto prob = [&](std::size_t a, std::size_t b) {
    if (a == b) return het[a] ? cfg.p_out : cfg.p_in;
    if (het[a] || het[b]) return cfg.p_in / static_cast<double>(B - 1);
    return cfg.p_out;
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<graph::Edge> edges;
  for (std::size_t a = 0; a < B; ++a)
    for (std::size_t b = a; b < B; ++b) {
      const std::size_t sa = cfg.sizes[a], sb = cfg.sizes[b];
      if (a == b) {
        // slots enumerate pairs i < j inside the block
        const std::size_t count = sa * (sa - 1) / 2;
        std::size_t row = 0, row_start = 0;
        bernoulli_slots(count, prob(a, a), rng, [&](std::size_t t) {
          while (t >= row_start + (sa - 1 - row)) {
            row_start += sa - 1 - row;
            ++row;
          }
          const std::size_t j = row + 1 + (t - row_start);
          edges.push_back({static_cast<graph::NodeId>(start[a] + row), static_cast<graph::NodeId>(start[a] + j)});
        });
      } else {
        bernoulli_slots(sa * sb, prob(a, b), rng, [&](std::size_t t) {
          edges.push_back({static_cast<graph::NodeId>(start[a] + t / sb), static_cast<graph::NodeId>(start[b] + t % sb)});
        });
      }
    }

  Dataset ds;
  ds.task = TaskKind::NodeClassification;
  ds.graph = graph::Graph::from_edges(edges, n);
  ds.num_classes = B;
  ds.labels.resize(n);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = start[b]; i < start[b + 1]; ++i) ds.labels[i] = static_cast<int>(b);
  const Matrix mu = class_means(B, cfg.feature_dim, cfg.signal, rng);
  std::normal_distribution<double> nd(0.0, cfg.noise);
  ds.features = Matrix(n, cfg.feature_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < cfg.feature_dim; ++j)
      ds.features(i, j) = mu(static_cast<std::size_t>(ds.labels[i]), j) + nd(rng);
  assign_splits(ds, n, cfg.train_fraction, cfg.valid_fraction, rng);
  validate(ds);
  return ds;
}

Dataset toy_graph_dataset(const GraphToyConfig& cfg) {
  if (cfg.num_graphs < 3) throw ConfigError("toy graph dataset needs >= 3 graphs");
  if (cfg.min_nodes < 2 || cfg.max_nodes < cfg.min_nodes) throw ConfigError("toy graph sizes must satisfy 2 <= min <= max");
  if (cfg.feature_dim == 0) throw ConfigError("toy graph feature_dim must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> size_d(cfg.min_nodes, cfg.max_nodes);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd;
  Dataset ds;
  ds.task = cfg.regression ? TaskKind::GraphRegression : TaskKind::GraphClassification;
  ds.num_graphs = cfg.num_graphs;
  std::vector<graph::Edge> edges;
  std::vector<std::vector<double>> rows;
  if (cfg.regression) ds.targets = Matrix(cfg.num_graphs, 1);
  else ds.num_classes = 2;
  std::size_t offset = 0;
  for (std::size_t g = 0; g < cfg.num_graphs; ++g) {
    const std::size_t m = size_d(rng);
    const int cls = static_cast<int>(g % 2);
    const double p = cfg.regression ? 0.1 + 0.5 * u(rng) : (cls == 0 ? 0.2 : 0.6);
    std::size_t count = 0;
    for (std::size_t i = 0; i + 1 < m; ++i)  // a path keeps every graph connected
      edges.push_back({static_cast<graph::NodeId>(offset + i), static_cast<graph::NodeId>(offset + i + 1)});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 2; j < m; ++j)
        if (u(rng) < p) {
          edges.push_back({static_cast<graph::NodeId>(offset + i), static_cast<graph::NodeId>(offset + j)});
          ++count;
        }
    if (cfg.regression) ds.targets(g, 0) = 2.0 * static_cast<double>(count + m - 1) / static_cast<double>(m);
    else ds.labels.push_back(cls);
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> r(cfg.feature_dim);
      for (double& v : r) v = nd(rng);
      r[0] = 1.0;  // constant channel so that sum aggregators can count
      rows.push_back(std::move(r));
      ds.graph_id.push_back(g);
    }
    offset += m;
  }
  ds.graph = graph::Graph::from_edges(edges, offset);
  ds.features = Matrix(offset, cfg.feature_dim);
  for (std::size_t i = 0; i < offset; ++i)
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) ds.features(i, j) = rows[i][j];
  assign_splits(ds, cfg.num_graphs, cfg.train_fraction, cfg.valid_fraction, rng);
  validate(ds);
  return ds;
}

Dataset make_link_dataset(const graph::Graph& g, Matrix features, const LinkSplitConfig& cfg) {
  if (cfg.valid_fraction < 0 || cfg.test_fraction < 0 || cfg.valid_fraction + cfg.test_fraction >= 1.0)
    throw ConfigError("link split fractions must be >= 0 and sum < 1");
  std::mt19937_64 rng(cfg.seed);
  std::vector<graph::Edge> all;
  for (const graph::Edge& e : g.edge_list())
    if (e.u != e.v) all.push_back(e);
  if (all.size() < 3) throw DataError("link prediction needs at least 3 edges");
  std::shuffle(all.begin(), all.end(), rng);
  const std::size_t m = all.size();
  const auto n_valid = static_cast<std::size_t>(std::round(cfg.valid_fraction * static_cast<double>(m)));
  const auto n_test = static_cast<std::size_t>(std::round(cfg.test_fraction * static_cast<double>(m)));
  Dataset ds;
  ds.task = TaskKind::LinkPrediction;
  ds.features = std::move(features);
  std::vector<graph::Edge> train_edges;
  std::size_t id = 0;
  for (std::size_t i = 0; i < m; ++i, ++id) {
    const std::size_t s = i < n_valid ? 1 : (i < n_valid + n_test ? 2 : 0);
    const auto u = static_cast<std::size_t>(all[i].u), v = static_cast<std::size_t>(all[i].v);
    ds.link_pos[s].push_back({u, v});
    if (s == 0) train_edges.push_back(all[i]);
  }
  // item ids enumerate train, valid, test positives in that order
  std::size_t next = 0;
  for (std::size_t s : {0u, 1u, 2u})
    for (std::size_t i = 0; i < ds.link_pos[s].size(); ++i) ds.splits[s].push_back(next++);
  ds.graph = graph::Graph::from_edges(train_edges, g.num_nodes());
  std::uniform_int_distribution<std::size_t> node(0, g.num_nodes() - 1);
  for (std::size_t s : {1u, 2u}) {
    const std::size_t want = ds.link_pos[s].size() * cfg.negatives_per_positive;
    for (std::size_t tries = 0; ds.link_neg[s].size() < want && tries < 100 * want + 100; ++tries) {
      const std::size_t u = node(rng), v = node(rng);
      if (u != v && !g.has_edge(static_cast<graph::NodeId>(u), static_cast<graph::NodeId>(v)))
        ds.link_neg[s].push_back({u, v});
    }
  }
  validate(ds);
  return ds;
}

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

struct CsvRow {
  std::size_t line;
  std::vector<std::string> cells;
};

std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    CsvRow r{lineno, {}};
    std::stringstream ss(t);
    std::string cell;
    while (std::getline(ss, cell, ',')) r.cells.push_back(trim(cell));
    rows.push_back(std::move(r));
  }
  if (header) throw DataError(path.string() + ": missing header row");
  return rows;
}

[[noreturn]] void fail(const std::filesystem::path& p, std::size_t line, const std::string& msg) {
  throw DataError(p.string() + ":" + std::to_string(line) + ": " + msg);
}

double parse_real(const std::filesystem::path& p, const CsvRow& r, std::size_t i) {
  const std::string& s = r.cells[i];
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    fail(p, r.line, "not a finite number: '" + s + "'");
  return v;
}

long long parse_int(const std::filesystem::path& p, const CsvRow& r, std::size_t i) {
  const std::string& s = r.cells[i];
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail(p, r.line, "not an integer: '" + s + "'");
  return v;
}

void expect_cols(const std::filesystem::path& p, const CsvRow& r, std::size_t want) {
  if (r.cells.size() != want)
    fail(p, r.line, "expected " + std::to_string(want) + " columns, found " + std::to_string(r.cells.size()));
}

}  // namespace

Dataset load_dataset(const DataFiles& files, TaskKind task) {
  Dataset ds;
  ds.task = task;

  const auto feat = read_csv(files.features);
  if (feat.empty()) throw DataError(files.features.string() + ": no feature rows");
  const std::size_t d = feat.front().cells.size();
  ds.features = Matrix(feat.size(), d);
  for (std::size_t i = 0; i < feat.size(); ++i) {
    expect_cols(files.features, feat[i], d);
    for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = parse_real(files.features, feat[i], j);
  }
  const std::size_t n = feat.size();
  try {
    ds.graph = graph::read_edge_list(files.edges, n);
  } catch (const InputError& e) {
    throw DataError(e.what());
  }
  if (ds.graph.num_nodes() != n)
    throw DataError(files.edges.string() + ": edge list implies " + std::to_string(ds.graph.num_nodes()) +
                    " nodes but " + files.features.string() + " has " + std::to_string(n) + " rows");

  const bool graph_level = task == TaskKind::GraphClassification || task == TaskKind::GraphRegression;
  std::size_t items = n;
  if (graph_level) {
    const auto gid = read_csv(files.graph_ids);
    if (gid.size() != n)
      throw DataError(files.graph_ids.string() + ": " + std::to_string(gid.size()) + " rows but " + std::to_string(n) +
                      " nodes");
    for (const CsvRow& r : gid) {
      expect_cols(files.graph_ids, r, 1);
      const long long g = parse_int(files.graph_ids, r, 0);
      if (g < 0) fail(files.graph_ids, r.line, "negative graph id");
      ds.graph_id.push_back(static_cast<std::size_t>(g));
      ds.num_graphs = std::max(ds.num_graphs, static_cast<std::size_t>(g) + 1);
    }
    items = ds.num_graphs;
  }

  if (task != TaskKind::LinkPrediction) {
    const auto lab = read_csv(files.labels);
    if (lab.size() != items)
      throw DataError(files.labels.string() + ": " + std::to_string(lab.size()) + " label rows but " +
                      std::to_string(items) + (graph_level ? " graphs" : " nodes"));
    const std::size_t c = lab.front().cells.size();
    if (task == TaskKind::GraphRegression) {
      ds.targets = Matrix(items, 1);
      for (std::size_t i = 0; i < items; ++i) {
        expect_cols(files.labels, lab[i], 1);
        ds.targets(i, 0) = parse_real(files.labels, lab[i], 0);
      }
    } else if (c > 1) {
      if (task != TaskKind::NodeClassification) throw DataError(files.labels.string() + ": multi-label needs node_cls");
      ds.targets = Matrix(items, c);
      for (std::size_t i = 0; i < items; ++i) {
        expect_cols(files.labels, lab[i], c);
        for (std::size_t j = 0; j < c; ++j) {
          const long long b = parse_int(files.labels, lab[i], j);
          if (b != 0 && b != 1) fail(files.labels, lab[i].line, "multi-label entries must be 0 or 1");
          ds.targets(i, j) = static_cast<double>(b);
        }
      }
    } else {
      long long max_label = -1;
      for (const CsvRow& r : lab) {
        expect_cols(files.labels, r, 1);
        const long long y = parse_int(files.labels, r, 0);
        if (y < 0) fail(files.labels, r.line, "label " + std::to_string(y) + " is negative");
        max_label = std::max(max_label, y);
        ds.labels.push_back(static_cast<int>(y));
      }
      ds.num_classes = static_cast<std::size_t>(max_label + 1);
    }
  }

  const auto spl = read_csv(files.splits);
  if (task == TaskKind::LinkPrediction) {
    std::array<std::vector<std::size_t>, 3> ids;
    for (const CsvRow& r : spl) {
      expect_cols(files.splits, r, 4);
      const long long u = parse_int(files.splits, r, 0), v = parse_int(files.splits, r, 1);
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
        fail(files.splits, r.line, "endpoint outside [0, " + std::to_string(n) + ")");
      Split s{};
      try {
        s = parse_split(r.cells[2]);
      } catch (const InputError& e) {
        fail(files.splits, r.line, e.what());
      }
      const long long label = parse_int(files.splits, r, 3);
      const auto si = static_cast<std::size_t>(s);
      const EdgePair e{static_cast<std::size_t>(u), static_cast<std::size_t>(v)};
      if (label == 1) ds.link_pos[si].push_back(e);
      else if (label == 0 && s != Split::Train) ds.link_neg[si].push_back(e);
      else fail(files.splits, r.line, "label must be 1, or 0 for valid/test negatives");
    }
    std::size_t next = 0;
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < ds.link_pos[s].size(); ++i) ds.splits[s].push_back(next++);
  } else {
    if (spl.size() != items)
      throw DataError(files.splits.string() + ": " + std::to_string(spl.size()) + " split rows but " +
                      std::to_string(items) + " items");
    for (std::size_t i = 0; i < spl.size(); ++i) {
      expect_cols(files.splits, spl[i], 1);
      if (spl[i].cells[0] == "none") continue;  // unsupervised item
      try {
        ds.splits[static_cast<std::size_t>(parse_split(spl[i].cells[0]))].push_back(i);
      } catch (const InputError& e) {
        fail(files.splits, spl[i].line, e.what());
      }
    }
  }
  validate(ds);
  return ds;
}

void save_dataset(const Dataset& ds, const DataFiles& files) {
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    out.precision(17);
    return out;
  };
  graph::write_edge_list(files.edges, ds.graph);
  {
    auto out = open(files.features);
    for (std::size_t j = 0; j < ds.feature_dim(); ++j) out << (j ? "," : "") << "x" << j;
    out << '\n';
    for (std::size_t i = 0; i < ds.num_nodes(); ++i) {
      for (std::size_t j = 0; j < ds.feature_dim(); ++j) out << (j ? "," : "") << ds.features(i, j);
      out << '\n';
    }
  }
  const bool graph_level = ds.task == TaskKind::GraphClassification || ds.task == TaskKind::GraphRegression;
  if (graph_level) {
    auto out = open(files.graph_ids);
    out << "graph\n";
    for (std::size_t g : ds.graph_id) out << g << '\n';
  }
  if (ds.task != TaskKind::LinkPrediction) {
    auto out = open(files.labels);
    if (!ds.labels.empty()) {
      out << "label\n";
      for (int y : ds.labels) out << y << '\n';
    } else {
      for (std::size_t j = 0; j < ds.targets.cols(); ++j) out << (j ? "," : "") << "y" << j;
      out << '\n';
      for (std::size_t i = 0; i < ds.targets.rows(); ++i) {
        for (std::size_t j = 0; j < ds.targets.cols(); ++j) out << (j ? "," : "") << ds.targets(i, j);
        out << '\n';
      }
    }
    std::vector<std::string> which(graph_level ? ds.num_graphs : ds.num_nodes(), "none");
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t id : ds.splits[s]) which[id] = std::string(split_name(static_cast<Split>(s)));
    auto sp = open(files.splits);
    sp << "split\n";
    for (const auto& w : which) sp << w << '\n';
  } else {
    auto sp = open(files.splits);
    sp << "u,v,split,label\n";
    for (std::size_t s = 0; s < 3; ++s) {
      const auto name = split_name(static_cast<Split>(s));
      for (const EdgePair& e : ds.link_pos[s]) sp << e.first << ',' << e.second << ',' << name << ",1\n";
      for (const EdgePair& e : ds.link_neg[s]) sp << e.first << ',' << e.second << ',' << name << ",0\n";
    }
  }
}

}  // namespace sagmm::data
