#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfstab/graph.hpp"

namespace selfstab {

enum class NodeState : uint8_t { OUT = 0, IN = 1 };

constexpr int kNoParent = -1;

// Variable names an algorithm may declare; used for rule `touches` masks,
// configuration digests and serialization.
enum VarBit : unsigned {
  kVarState = 1u,
  kVarParent = 2u,
  kVarParents = 4u,
};

// One agent's variables. Every agent carries all three variables; algorithms
// that do not declare a variable simply never read or write it.
struct AgentState {
  NodeState state = NodeState::OUT;
  int parent = kNoParent;    // pfMIS
  std::vector<int> parents;  // dtMIS, kept sorted and unique

  bool operator==(const AgentState&) const = default;
};

struct Configuration {
  std::vector<AgentState> agents;

  Configuration() = default;
  explicit Configuration(int n) : agents(n) {}

  int size() const { return static_cast<int>(agents.size()); }
  bool is_in(int v) const { return agents[v].state == NodeState::IN; }

  bool operator==(const Configuration&) const = default;
};

inline void insert_parent(std::vector<int>& parents, int w) {
  auto it = std::lower_bound(parents.begin(), parents.end(), w);
  if (it == parents.end() || *it != w) parents.insert(it, w);
}

inline bool contains_parent(const std::vector<int>& parents, int w) {
  return std::binary_search(parents.begin(), parents.end(), w);
}

// An agent gains theta from being clustered and pays zeta for heading the
// cluster; 0 < zeta < theta.
struct GainParams {
  double theta = 10.0;
  double zeta = 1.0;

  void validate() const {
    if (!(0.0 < zeta && zeta < theta)) throw std::invalid_argument("gain: need 0 < zeta < theta");
  }
};

inline bool pending(const Graph& g, const Configuration& c, int v) {
  if (c.is_in(v)) return false;
  for (int w : g.adj[v])
    if (c.is_in(w)) return false;
  return true;
}

inline bool conflict(const Graph& g, const Configuration& c, int v) {
  if (!c.is_in(v)) return false;
  for (int w : g.adj[v])
    if (c.is_in(w)) return true;
  return false;
}

// IN-set is independent and every OUT node has an IN neighbor.
inline bool is_mis(const Graph& g, const Configuration& c) {
  for (int v = 0; v < g.n; ++v) {
    bool covered = c.is_in(v);
    for (int w : g.adj[v]) {
      if (c.is_in(w)) {
        if (c.is_in(v)) return false;  // adjacent members
        covered = true;
      }
    }
    if (!covered) return false;  // uncovered OUT node
  }
  return true;
}

inline bool system_property(const Graph& g, const Configuration& c) {
  for (int v = 0; v < g.n; ++v)
    if (conflict(g, c, v) || pending(g, c, v)) return false;
  return true;
}

inline double gain(const Graph& g, const Configuration& c, int v, const GainParams& p) {
  if (pending(g, c, v)) return 0.0;
  if (!c.is_in(v)) return p.theta;
  return p.theta - p.zeta;
}

// FNV-1a digest over the variables declared by the active algorithm only, so
// dead fields never distinguish configurations.
inline uint64_t digest(const Configuration& c, unsigned declared_vars) {
  uint64_t h = 1469598103934665603ull;
  auto feed = [&h](uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  for (const AgentState& a : c.agents) {
    if (declared_vars & kVarState) feed(static_cast<uint64_t>(a.state));
    if (declared_vars & kVarParent) feed(static_cast<uint64_t>(a.parent + 2));
    if (declared_vars & kVarParents) {
      feed(a.parents.size());
      for (int p : a.parents) feed(static_cast<uint64_t>(p + 2));
    }
  }
  return h;
}

inline std::string digest_hex(const Configuration& c, unsigned declared_vars) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest(c, declared_vars)));
  return buf;
}

// 'I'/'O' per node in index order, followed by the declared secondary
// variables.
inline std::string to_string(const Configuration& c, unsigned declared_vars) {
  std::ostringstream out;
  for (const AgentState& a : c.agents) out << (a.state == NodeState::IN ? 'I' : 'O');
  if (declared_vars & kVarParent) {
    out << " parent=";
    for (int v = 0; v < c.size(); ++v) {
      if (v) out << ",";
      if (c.agents[v].parent == kNoParent)
        out << "-";
      else
        out << c.agents[v].parent;
    }
  }
  if (declared_vars & kVarParents) {
    out << " parents=";
    for (int v = 0; v < c.size(); ++v) {
      if (v) out << ";";
      out << "{";
      for (size_t i = 0; i < c.agents[v].parents.size(); ++i) {
        if (i) out << " ";
        out << c.agents[v].parents[i];
      }
      out << "}";
    }
  }
  return out.str();
}

}  // namespace selfstab
