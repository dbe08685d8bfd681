#pragma once

// Connected node-induced sub-graph samplers used to build the two views of a graph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "dsgc/errors.hpp"
#include "dsgc/graph.hpp"

namespace dsgc {

struct SamplerConfig {
  double rate = 0.8;
  std::uint64_t seed = 0;
};

enum class SamplerKind { diffusion, community_expansion };

inline std::string_view to_string(SamplerKind k) {
  return k == SamplerKind::diffusion ? "diffusion" : "community";
}

inline SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "diffusion") return SamplerKind::diffusion;
  if (name == "community" || name == "community_expansion") return SamplerKind::community_expansion;
  throw ContractError("unknown sampler '" + std::string(name) + "' (valid: diffusion, community)");
}

struct SampledGraph {
  Graph graph;
  /// original_ids[k] is the node of the source graph that became node k.
  std::vector<std::size_t> original_ids;
};

/// max(1, round(rate * n)).
inline std::size_t sample_target_size(std::size_t n, double rate) {
  if (!(rate > 0.0 && rate <= 1.0))
    throw ContractError("sampling rate must lie in (0, 1], got " + std::to_string(rate));
  const auto t = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  return std::clamp<std::size_t>(t, 1, std::max<std::size_t>(n, 1));
}

/// Node-induced sub-graph on `nodes` (in the given order); features rows are carried over.
inline SampledGraph induced_subgraph(const Graph& g, std::vector<std::size_t> nodes) {
  std::vector<std::size_t> local(g.num_nodes(), static_cast<std::size_t>(-1));
  for (std::size_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = k;
  std::vector<Edge> edges;
  for (const auto& [a, b] : g.edges())
    if (local[a] != static_cast<std::size_t>(-1) && local[b] != static_cast<std::size_t>(-1))
      edges.emplace_back(local[a], local[b]);
  ad::Matrix x(nodes.size(), g.feature_width());
  for (std::size_t k = 0; k < nodes.size(); ++k)
    for (std::size_t j = 0; j < g.feature_width(); ++j) x(k, j) = g.features()(nodes[k], j);
  return {Graph(nodes.size(), std::move(edges), std::move(x), g.label()), std::move(nodes)};
}

namespace detail {

inline void require_sampleable(const char* op, const Graph& g) {
  if (g.num_nodes() == 0) throw ContractError(std::string(op) + ": empty graph");
  if (!is_connected(g)) throw ContractError(std::string(op) + ": input graph is disconnected");
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace detail

/// Frontier diffusion: starting from a random node, repeatedly pick a random
/// member of S that still has outside neighbors and add one of them at random.
inline SampledGraph diffusion_sample(const Graph& g, const SamplerConfig& cfg) {
  detail::require_sampleable("diffusion_sample", g);
  const std::size_t target = sample_target_size(g.num_nodes(), cfg.rate);
  std::mt19937_64 rng(cfg.seed);
  std::vector<char> in(g.num_nodes(), 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(target);
  const std::size_t start = detail::uniform_index(rng, g.num_nodes());
  chosen.push_back(start);
  in[start] = 1;

  std::vector<std::size_t> active, outside;
  while (chosen.size() < target) {
    active.clear();
    for (std::size_t v : chosen)
      for (std::size_t w : g.neighbors(v))
        if (!in[w]) {
          active.push_back(v);
          break;
        }
    const std::size_t u = active[detail::uniform_index(rng, active.size())];
    outside.clear();
    for (std::size_t w : g.neighbors(u))
      if (!in[w]) outside.push_back(w);
    const std::size_t v = outside[detail::uniform_index(rng, outside.size())];
    in[v] = 1;
    chosen.push_back(v);
  }
  return induced_subgraph(g, std::move(chosen));
}

/// Greedy community expansion: from a random start node, repeatedly add the
/// frontier node with the most neighbors outside S and outside the current
/// frontier; ties go to the smallest node id.
inline SampledGraph community_expansion_sample(const Graph& g, const SamplerConfig& cfg) {
  detail::require_sampleable("community_expansion_sample", g);
  const std::size_t target = sample_target_size(g.num_nodes(), cfg.rate);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = g.num_nodes();
  // 0 = unseen, 1 = frontier, 2 = selected
  std::vector<char> state(n, 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(target);
  auto select = [&](std::size_t v) {
    state[v] = 2;
    chosen.push_back(v);
    for (std::size_t w : g.neighbors(v))
      if (state[w] == 0) state[w] = 1;
  };
  select(detail::uniform_index(rng, n));

  while (chosen.size() < target) {
    std::size_t best = n;
    std::size_t best_score = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (state[v] != 1) continue;
      std::size_t score = 0;
      for (std::size_t w : g.neighbors(v))
        if (state[w] == 0) ++score;
      if (best == n || score > best_score) {
        best = v;
        best_score = score;
      }
    }
    select(best);
  }
  return induced_subgraph(g, std::move(chosen));
}

inline SampledGraph sample(SamplerKind kind, const Graph& g, const SamplerConfig& cfg) {
  return kind == SamplerKind::diffusion ? diffusion_sample(g, cfg) : community_expansion_sample(g, cfg);
}

}  // namespace dsgc
