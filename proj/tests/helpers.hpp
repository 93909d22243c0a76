#pragma once

#include <queue>
#include <string>
#include <vector>

#include "selfstab/core.hpp"
#include "selfstab/graph.hpp"

namespace selfstab::test {

// "IOI" -> configuration with nodes 0,2 IN.
inline Configuration config_from(const std::string& states) {
  Configuration c(static_cast<int>(states.size()));
  for (size_t i = 0; i < states.size(); ++i)
    c.agents[i].state = states[i] == 'I' ? NodeState::IN : NodeState::OUT;
  return c;
}

// Independent BFS used as the oracle for locality queries.
inline std::vector<int> bfs_distances(const Graph& g, int src) {
  std::vector<int> dist(g.n, -1);
  std::queue<int> q;
  dist[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int w : g.adj[u])
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        q.push(w);
      }
  }
  return dist;
}

}  // namespace selfstab::test
