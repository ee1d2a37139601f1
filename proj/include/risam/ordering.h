#pragma once

#include <set>
#include <vector>

#include "risam/linear_factor.h"

namespace risam {

struct SymbolicElimination {
  std::vector<Key> order;                 // elimination order
  std::vector<std::vector<Key>> parents;  // separator of order[i], in elimination order
};

/// Greedy minimum-degree elimination of `variables` for the hypergraph given
/// by `factor_keys`. Variables in `constrained_last` are eliminated after all
/// others. Ties break by ascending key so the result is deterministic.
SymbolicElimination minimumDegreeOrdering(const std::vector<Key>& variables,
                                          const std::vector<std::vector<Key>>& factor_keys,
                                          const std::set<Key>& constrained_last);

}  // namespace risam
