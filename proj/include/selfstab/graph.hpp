#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selfstab/rng.hpp"

namespace selfstab {

// Undirected connected topology with per-node unique identifiers.
// Node indices are 0..n-1; identifiers are an arbitrary permutation of 1..n
// so that id-based algorithms are not biased by generation order.
struct Graph {
  int n = 0;
  std::vector<std::vector<int>> adj;  // sorted neighbor lists
  std::vector<int> ids;               // unique positive identifiers

  int degree(int v) const { return static_cast<int>(adj[v].size()); }

  bool has_edge(int u, int v) const {
    return std::binary_search(adj[u].begin(), adj[u].end(), v);
  }

  long edge_count() const {
    long total = 0;
    for (const auto& nb : adj) total += static_cast<long>(nb.size());
    return total / 2;
  }

  double average_degree() const { return n == 0 ? 0.0 : 2.0 * edge_count() / n; }

  // BFS distances from src; unreachable nodes get -1.
  std::vector<int> distances(int src) const {
    std::vector<int> dist(n, -1);
    std::queue<int> q;
    dist[src] = 0;
    q.push(src);
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int w : adj[u]) {
        if (dist[w] < 0) {
          dist[w] = dist[u] + 1;
          q.push(w);
        }
      }
    }
    return dist;
  }

  bool connected() const {
    if (n == 0) return false;
    auto d = distances(0);
    return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
  }
};

namespace detail {

inline void finalize_edges(Graph& g, std::vector<std::pair<int, int>> edges) {
  g.adj.assign(g.n, {});
  for (auto [u, v] : edges) {
    g.adj[u].push_back(v);
    g.adj[v].push_back(u);
  }
  for (auto& nb : g.adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
}

inline void assign_random_ids(Graph& g, uint64_t seed) {
  g.ids.resize(g.n);
  std::iota(g.ids.begin(), g.ids.end(), 1);
  RngStream rng(seed, 0, 0, Draw::Ids);
  for (int i = g.n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(i) + 1));
    std::swap(g.ids[i], g.ids[j]);
  }
}

}  // namespace detail

inline void validate(const Graph& g) {
  if (g.n <= 0) throw std::invalid_argument("graph: empty");
  for (int v = 0; v < g.n; ++v) {
    for (int w : g.adj[v]) {
      if (w < 0 || w >= g.n) throw std::invalid_argument("graph: neighbor out of range");
      if (w == v) throw std::invalid_argument("graph: self loop");
      if (!g.has_edge(w, v)) throw std::invalid_argument("graph: asymmetric adjacency");
    }
  }
  if (!g.connected()) throw std::invalid_argument("graph: not connected");
  std::vector<int> ids = g.ids;
  std::sort(ids.begin(), ids.end());
  if (static_cast<int>(ids.size()) != g.n) throw std::invalid_argument("graph: id count");
  for (int i = 0; i < g.n; ++i) {
    if (ids[i] <= 0) throw std::invalid_argument("graph: non-positive id");
    if (i > 0 && ids[i] == ids[i - 1]) throw std::invalid_argument("graph: duplicate id");
  }
}

// Preferential attachment: seed clique on m+1 nodes, every later node attaches
// to m distinct existing nodes chosen proportionally to degree.
inline Graph generate_ba(int n, int m, uint64_t seed) {
  if (m < 1 || n < m + 1) throw std::invalid_argument("generate_ba: need n >= m+1, m >= 1");
  Graph g;
  g.n = n;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> endpoints;
  for (int u = 0; u < m + 1; ++u) {
    for (int v = u + 1; v < m + 1; ++v) {
      edges.emplace_back(u, v);
      endpoints.push_back(u);
      endpoints.push_back(v);
    }
  }
  RngStream rng(seed, 0, 0, Draw::Graph);
  std::vector<int> targets;
  for (int v = m + 1; v < n; ++v) {
    targets.clear();
    while (static_cast<int>(targets.size()) < m) {
      int t = endpoints[rng.below(endpoints.size())];
      if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
    }
    for (int t : targets) {
      edges.emplace_back(v, t);
      endpoints.push_back(v);
      endpoints.push_back(t);
    }
  }
  detail::finalize_edges(g, std::move(edges));
  detail::assign_random_ids(g, seed);
  validate(g);
  return g;
}

// Erdos-Renyi G(n, p), regenerated with a derived seed until connected.
inline Graph generate_er(int n, double p, uint64_t seed) {
  if (n < 2 || p <= 0.0 || p > 1.0) throw std::invalid_argument("generate_er: need n >= 2, 0 < p <= 1");
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Graph g;
    g.n = n;
    RngStream rng(seed, static_cast<uint64_t>(attempt), 0, Draw::Graph);
    std::vector<std::pair<int, int>> edges;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v)
        if (rng.bernoulli(p)) edges.emplace_back(u, v);
    detail::finalize_edges(g, std::move(edges));
    if (!g.connected()) continue;
    detail::assign_random_ids(g, seed);
    validate(g);
    return g;
  }
  throw std::runtime_error("generate_er: no connected graph within " + std::to_string(kMaxAttempts) +
                           " attempts");
}

// --- fixed shapes used by tests and the verification catalog ---

inline Graph graph_from_edges(int n, std::vector<std::pair<int, int>> edges) {
  Graph g;
  g.n = n;
  detail::finalize_edges(g, std::move(edges));
  g.ids.resize(n);
  std::iota(g.ids.begin(), g.ids.end(), 1);  // node i has id i+1
  return g;
}

inline Graph path_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return graph_from_edges(n, std::move(e));
}

inline Graph cycle_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
  return graph_from_edges(n, std::move(e));
}

// Center is node 0.
inline Graph star_graph(int leaves) {
  std::vector<std::pair<int, int>> e;
  for (int i = 1; i <= leaves; ++i) e.emplace_back(0, i);
  return graph_from_edges(leaves + 1, std::move(e));
}

inline Graph complete_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) e.emplace_back(u, v);
  return graph_from_edges(n, std::move(e));
}

// k-hop view of an agent: members at distance <= k, boundary at distance
// exactly k, plus the induced edge set.
struct Locality {
  int focal = 0;
  int radius = 0;
  std::vector<int> members;   // ascending node index
  std::vector<int> dist;      // per member, distance from focal
  std::vector<int> boundary;  // members at distance exactly k
  std::vector<std::pair<int, int>> induced_edges;

  int index_of(int node) const {
    auto it = std::lower_bound(members.begin(), members.end(), node);
    if (it == members.end() || *it != node) return -1;
    return static_cast<int>(it - members.begin());
  }
};

inline Locality locality(const Graph& g, int v, int k) {
  if (v < 0 || v >= g.n) throw std::invalid_argument("locality: bad node");
  if (k < 1) throw std::invalid_argument("locality: k >= 1");
  auto d = g.distances(v);
  Locality loc;
  loc.focal = v;
  loc.radius = k;
  for (int u = 0; u < g.n; ++u)
    if (d[u] >= 0 && d[u] <= k) loc.members.push_back(u);
  loc.dist.reserve(loc.members.size());
  for (int u : loc.members) {
    loc.dist.push_back(d[u]);
    if (d[u] == k) loc.boundary.push_back(u);
  }
  for (int u : loc.members)
    for (int w : g.adj[u])
      if (w > u && d[w] >= 0 && d[w] <= k) loc.induced_edges.emplace_back(u, w);
  return loc;
}

// Diameter estimate log(n)/log(log(n)) used for the vpMIS p = 1/D variant.
inline double estimate_diameter(int n) {
  if (n < 3) throw std::invalid_argument("estimate_diameter: n >= 3");
  return std::log(static_cast<double>(n)) / std::log(std::log(static_cast<double>(n)));
}

// Edge-list text format: "n <count>", one "u v" per line, then an "ids" line
// followed by the n identifiers.
inline std::string to_edge_list(const Graph& g) {
  std::ostringstream out;
  out << "n " << g.n << "\n";
  for (int u = 0; u < g.n; ++u)
    for (int w : g.adj[u])
      if (w > u) out << u << " " << w << "\n";
  out << "ids\n";
  for (int i = 0; i < g.n; ++i) out << g.ids[i] << (i + 1 == g.n ? "\n" : " ");
  return out.str();
}

inline Graph from_edge_list(std::istream& in) {
  std::string tag;
  int n = 0;
  if (!(in >> tag >> n) || tag != "n") throw std::invalid_argument("edge list: missing 'n <count>'");
  Graph g;
  g.n = n;
  std::vector<std::pair<int, int>> edges;
  while (in >> tag) {
    if (tag == "ids") break;
    int u = std::stoi(tag);
    int v = 0;
    if (!(in >> v)) throw std::invalid_argument("edge list: dangling endpoint");
    edges.emplace_back(u, v);
  }
  if (tag != "ids") throw std::invalid_argument("edge list: missing 'ids' line");
  g.ids.resize(n);
  for (int i = 0; i < n; ++i)
    if (!(in >> g.ids[i])) throw std::invalid_argument("edge list: expected " + std::to_string(n) + " ids");
  detail::finalize_edges(g, std::move(edges));
  validate(g);
  return g;
}

inline Graph from_edge_list(const std::string& text) {
  std::istringstream in(text);
  return from_edge_list(in);
}

}  // namespace selfstab
