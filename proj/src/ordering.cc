#include "risam/ordering.h"

#include <algorithm>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace risam {

SymbolicElimination minimumDegreeOrdering(const std::vector<Key>& variables,
                                          const std::vector<std::vector<Key>>& factor_keys,
                                          const std::set<Key>& constrained_last) {
  const int n = static_cast<int>(variables.size());
  std::unordered_map<Key, int> local;
  local.reserve(variables.size());
  for (int i = 0; i < n; ++i) local.emplace(variables[i], i);

  std::vector<std::vector<int>> adj(n);
  for (const auto& keys : factor_keys) {
    for (Key a : keys) {
      const auto ia = local.find(a);
      if (ia == local.end()) throw std::invalid_argument("ordering: factor key outside the variable set");
      for (Key b : keys)
        if (a != b) adj[ia->second].push_back(local.at(b));
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  auto group = [&](int i) { return constrained_last.count(variables[i]) ? 1 : 0; };
  using Entry = std::tuple<int, std::size_t, Key, int>;
  std::set<Entry> queue;
  for (int i = 0; i < n; ++i) queue.emplace(group(i), adj[i].size(), variables[i], i);

  std::vector<char> eliminated(n, 0);
  std::vector<int> position(n, -1);
  std::vector<std::vector<int>> local_parents(n);
  SymbolicElimination out;
  out.order.reserve(n);

  std::vector<int> merged;
  for (int step = 0; step < n; ++step) {
    const auto [g, deg, key, v] = *queue.begin();
    queue.erase(queue.begin());
    eliminated[v] = 1;
    position[v] = step;
    out.order.push_back(key);
    const std::vector<int> nbrs = adj[v];
    local_parents[v] = nbrs;
    // Connect the neighbours pairwise and drop v.
    for (int u : nbrs) {
      queue.erase(Entry(group(u), adj[u].size(), variables[u], u));
      merged.clear();
      std::set_union(adj[u].begin(), adj[u].end(), nbrs.begin(), nbrs.end(), std::back_inserter(merged));
      merged.erase(std::remove_if(merged.begin(), merged.end(), [&](int w) { return w == u || w == v; }),
                   merged.end());
      adj[u].swap(merged);
      queue.emplace(group(u), adj[u].size(), variables[u], u);
    }
    adj[v].clear();
  }

  out.parents.resize(n);
  for (int step = 0; step < n; ++step) {
    const int v = local.at(out.order[step]);
    auto lp = local_parents[v];
    std::sort(lp.begin(), lp.end(), [&](int a, int b) { return position[a] < position[b]; });
    out.parents[step].reserve(lp.size());
    for (int u : lp) out.parents[step].push_back(variables[u]);
  }
  return out;
}

}  // namespace risam
