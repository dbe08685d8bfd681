#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dsgc/autodiff.hpp"
#include "dsgc/errors.hpp"

namespace dsgc {

using Edge = std::pair<std::size_t, std::size_t>;

/// Immutable undirected simple graph with a node-feature matrix and an optional class label.
class Graph {
public:
  Graph() = default;

  /// Edges may be given in either orientation and may repeat; they are stored
  /// once with i < j. Self-loops and out-of-range endpoints are rejected.
  Graph(std::size_t n, std::vector<Edge> edges, ad::Matrix features = {}, std::optional<int> label = {})
      : n_(n), features_(std::move(features)), label_(label) {
    for (auto& [a, b] : edges) {
      if (a >= n || b >= n)
        throw ContractError("Graph: edge (" + std::to_string(a) + ", " + std::to_string(b) +
                            ") out of range for " + std::to_string(n) + " nodes");
      if (a == b) throw ContractError("Graph: self-loop at node " + std::to_string(a));
      if (a > b) std::swap(a, b);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
    if (features_.size() == 0 && features_.rows() == 0) features_ = ad::Matrix(n_, 0);
    if (features_.rows() != n_)
      throw ContractError("Graph: feature matrix has " + std::to_string(features_.rows()) + " rows for " +
                          std::to_string(n_) + " nodes");
    if (label_ && *label_ < 0) throw ContractError("Graph: negative label");
    adjacency_.assign(n_, {});
    for (const auto& [a, b] : edges_) {
      adjacency_[a].push_back(b);
      adjacency_[b].push_back(a);
    }
    for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
  }

  std::size_t num_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const ad::Matrix& features() const noexcept { return features_; }
  std::size_t feature_width() const noexcept { return features_.cols(); }
  const std::optional<int>& label() const noexcept { return label_; }
  const std::vector<std::size_t>& neighbors(std::size_t v) const { return adjacency_.at(v); }
  std::size_t degree(std::size_t v) const { return adjacency_.at(v).size(); }
  bool has_edge(std::size_t a, std::size_t b) const {
    const auto& nb = adjacency_.at(a);
    return std::binary_search(nb.begin(), nb.end(), b);
  }

  Graph with_features(ad::Matrix features) const { return Graph(n_, edges_, std::move(features), label_); }
  Graph with_label(std::optional<int> label) const { return Graph(n_, edges_, features_, label); }

private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  ad::Matrix features_;
  std::optional<int> label_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// True when the graph has exactly one connected component.
inline bool is_connected(const Graph& g) {
  const std::size_t n = g.num_nodes();
  if (n == 0) return false;
  std::vector<char> seen(n, 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    const std::size_t v = q.front();
    q.pop();
    for (std::size_t w : g.neighbors(v))
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        q.push(w);
      }
  }
  return reached == n;
}

struct Dataset {
  std::string name;
  std::vector<Graph> graphs;
  int num_classes = 0;
  /// Original label value for each dense class index.
  std::vector<long long> label_values;

  std::size_t size() const noexcept { return graphs.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline long long parse_integer(std::string_view tok, const std::string& file, std::size_t line) {
  tok = trim(tok);
  long long v = 0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || tok.empty()) {
    // Some TU label files store integral values as reals ("1.0").
    try {
      std::size_t used = 0;
      const double d = std::stod(std::string(tok), &used);
      if (used == tok.size() && d == static_cast<double>(static_cast<long long>(d)))
        return static_cast<long long>(d);
    } catch (const std::exception&) {
    }
    throw ParseError(file, line, "expected an integer, got '" + std::string(tok) + "'");
  }
  return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw LoadError("cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

inline std::string dataset_prefix(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const std::string base = dir.filename().empty() ? dir.parent_path().filename().string()
                                                  : dir.filename().string();
  if (fs::exists(dir / (base + "_A.txt"))) return base;
  if (fs::is_directory(dir))
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string f = entry.path().filename().string();
      if (f.size() > 6 && f.ends_with("_A.txt")) return f.substr(0, f.size() - 6);
    }
  return base;
}

}  // namespace detail

/// Loads a dataset in the TU graph-kernel text format. Node ids are 1-indexed
/// and global; both edge directions are collapsed into one undirected edge.
/// Graphs carry empty feature matrices; see synthesize_features.
inline Dataset parse_tu_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw LoadError("dataset directory not found: " + dir.string());
  const std::string ds = detail::dataset_prefix(dir);
  const fs::path edge_file = dir / (ds + "_A.txt");
  const fs::path indicator_file = dir / (ds + "_graph_indicator.txt");
  const fs::path label_file = dir / (ds + "_graph_labels.txt");
  for (const auto& p : {edge_file, indicator_file, label_file})
    if (!fs::exists(p)) throw LoadError("missing dataset file " + p.string());

  const auto label_lines = detail::read_lines(label_file);
  std::vector<long long> raw_labels;
  raw_labels.reserve(label_lines.size());
  for (std::size_t i = 0; i < label_lines.size(); ++i)
    raw_labels.push_back(detail::parse_integer(label_lines[i], label_file.string(), i + 1));
  const std::size_t num_graphs = raw_labels.size();

  const auto indicator_lines = detail::read_lines(indicator_file);
  const std::size_t num_nodes = indicator_lines.size();
  std::vector<std::size_t> graph_of(num_nodes), local_of(num_nodes);
  std::vector<std::size_t> graph_sizes(num_graphs, 0);
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const long long gid = detail::parse_integer(indicator_lines[i], indicator_file.string(), i + 1);
    if (gid < 1 || static_cast<std::size_t>(gid) > num_graphs)
      throw ParseError(indicator_file.string(), i + 1,
                       "graph id " + std::to_string(gid) + " outside [1, " + std::to_string(num_graphs) + "]");
    graph_of[i] = static_cast<std::size_t>(gid - 1);
    local_of[i] = graph_sizes[graph_of[i]]++;
  }

  std::vector<std::vector<Edge>> edges(num_graphs);
  const auto edge_lines = detail::read_lines(edge_file);
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    const std::string_view line = edge_lines[i];
    if (detail::trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos)
      throw ParseError(edge_file.string(), i + 1, "expected 'a, b', got '" + std::string(line) + "'");
    const long long a = detail::parse_integer(line.substr(0, comma), edge_file.string(), i + 1);
    const long long b = detail::parse_integer(line.substr(comma + 1), edge_file.string(), i + 1);
    for (long long id : {a, b})
      if (id < 1 || static_cast<std::size_t>(id) > num_nodes)
        throw ParseError(edge_file.string(), i + 1,
                         "node id " + std::to_string(id) + " outside [1, " + std::to_string(num_nodes) + "]");
    const std::size_t u = static_cast<std::size_t>(a - 1), v = static_cast<std::size_t>(b - 1);
    if (graph_of[u] != graph_of[v])
      throw ParseError(edge_file.string(), i + 1, "edge joins nodes of different graphs");
    if (u == v) continue;
    edges[graph_of[u]].emplace_back(local_of[u], local_of[v]);
  }

  std::set<long long> distinct(raw_labels.begin(), raw_labels.end());
  Dataset out;
  out.name = ds;
  out.label_values.assign(distinct.begin(), distinct.end());
  out.num_classes = static_cast<int>(out.label_values.size());
  std::map<long long, int> dense;
  for (std::size_t k = 0; k < out.label_values.size(); ++k) dense[out.label_values[k]] = static_cast<int>(k);
  out.graphs.reserve(num_graphs);
  for (std::size_t gi = 0; gi < num_graphs; ++gi)
    out.graphs.emplace_back(graph_sizes[gi], std::move(edges[gi]), ad::Matrix{}, dense[raw_labels[gi]]);
  return out;
}

/// Writes `ds` in TU format (both edge directions, 1-indexed) under `dir`.
inline void write_tu_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream a(dir / (ds.name + "_A.txt"));
  std::ofstream ind(dir / (ds.name + "_graph_indicator.txt"));
  std::ofstream lab(dir / (ds.name + "_graph_labels.txt"));
  if (!a || !ind || !lab) throw LoadError("cannot write dataset under " + dir.string());
  std::size_t offset = 0;
  for (std::size_t gi = 0; gi < ds.graphs.size(); ++gi) {
    const Graph& g = ds.graphs[gi];
    for (std::size_t v = 0; v < g.num_nodes(); ++v) ind << gi + 1 << '\n';
    for (const auto& [u, v] : g.edges()) {
      a << offset + u + 1 << ", " << offset + v + 1 << '\n';
      a << offset + v + 1 << ", " << offset + u + 1 << '\n';
    }
    const int label = g.label().value_or(0);
    const long long raw =
        static_cast<std::size_t>(label) < ds.label_values.size() ? ds.label_values[label] : label;
    lab << raw << '\n';
    offset += g.num_nodes();
  }
}

/// Keeps the graphs that form a single connected component, in order.
inline Dataset filter_connected(const Dataset& ds) {
  Dataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  out.label_values = ds.label_values;
  for (const auto& g : ds.graphs)
    if (is_connected(g)) out.graphs.push_back(g);
  return out;
}

/// One-hot encoding of min(degree, cap); width cap + 1.
inline Graph synthesize_features(const Graph& g, std::size_t cap) {
  if (cap == 0) throw ContractError("synthesize_features: cap must be positive");
  ad::Matrix x(g.num_nodes(), cap + 1);
  for (std::size_t v = 0; v < g.num_nodes(); ++v) x(v, std::min(g.degree(v), cap)) = 1.0;
  return g.with_features(std::move(x));
}

inline Dataset synthesize_features(const Dataset& ds, std::size_t cap) {
  Dataset out = ds;
  for (auto& g : out.graphs) g = synthesize_features(g, cap);
  return out;
}

struct DatasetStats {
  std::size_t graphs = 0;
  int classes = 0;
  double mean_nodes = 0.0;
  double mean_edges = 0.0;
};

inline DatasetStats dataset_stats(const Dataset& ds) {
  if (ds.graphs.empty()) throw ContractError("dataset_stats: empty dataset");
  DatasetStats s;
  s.graphs = ds.graphs.size();
  std::set<int> labels;
  double nodes = 0.0, edges = 0.0;
  for (const auto& g : ds.graphs) {
    nodes += static_cast<double>(g.num_nodes());
    edges += static_cast<double>(g.num_edges());
    if (g.label()) labels.insert(*g.label());
  }
  s.classes = static_cast<int>(labels.size());
  s.mean_nodes = nodes / static_cast<double>(s.graphs);
  s.mean_edges = edges / static_cast<double>(s.graphs);
  return s;
}

}  // namespace dsgc
