#include "risam/bayes_tree.h"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <Eigen/QR>

#include "risam/ordering.h"

namespace risam {

BayesTree::BayesTree(int var_dim) : dim_(var_dim) {
  if (var_dim <= 0) throw std::invalid_argument("BayesTree: variable dimension must be positive");
}

int BayesTree::allocate() {
  ++num_alive_;
  if (!free_ids_.empty()) {
    const int id = free_ids_.back();
    free_ids_.pop_back();
    cliques_[id] = Clique{};
    alive_[id] = 1;
    return id;
  }
  cliques_.emplace_back();
  alive_.push_back(1);
  return static_cast<int>(cliques_.size()) - 1;
}

void BayesTree::release(int id) {
  --num_alive_;
  alive_[id] = 0;
  cliques_[id] = Clique{};
  free_ids_.push_back(id);
}

std::vector<int> BayesTree::cliqueIds() const {
  std::vector<int> ids;
  for (int i = 0; i < static_cast<int>(alive_.size()); ++i)
    if (alive_[i]) ids.push_back(i);
  return ids;
}

std::vector<int> BayesTree::preorder() const {
  std::vector<int> out;
  out.reserve(num_alive_);
  std::vector<int> stack(roots_.rbegin(), roots_.rend());
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    out.push_back(c);
    const auto& ch = cliques_[c].children;
    stack.insert(stack.end(), ch.rbegin(), ch.rend());
  }
  return out;
}

BayesTree::UpdateStats BayesTree::update(std::size_t num_new_variables, const std::set<Key>& marked,
                                         const std::set<Key>& constrained_last,
                                         const Relinearizer& relinearize) {
  UpdateStats stats;
  const std::size_t old_n = numVariables();

  // 1. Detach every clique containing a marked key, plus ancestors.
  std::vector<int> removed;
  std::vector<char> is_removed(cliques_.size(), 0);
  auto remove_path = [&](int c) {
    while (c >= 0 && !is_removed[c]) {
      is_removed[c] = 1;
      removed.push_back(c);
      c = cliques_[c].parent;
    }
  };
  for (Key k : marked) {
    if (k >= old_n) continue;
    if (frontal_clique_[k] >= 0) remove_path(frontal_clique_[k]);
    for (int c : separator_cliques_[k]) remove_path(c);
  }
  std::sort(removed.begin(), removed.end());

  std::vector<int> orphans;
  std::vector<Key> top;
  for (int c : removed) {
    for (int child : cliques_[c].children)
      if (!is_removed[child]) orphans.push_back(child);
    top.insert(top.end(), cliques_[c].frontals.begin(), cliques_[c].frontals.end());
  }
  std::sort(orphans.begin(), orphans.end());
  for (std::size_t i = 0; i < num_new_variables; ++i) top.push_back(old_n + i);
  std::sort(top.begin(), top.end());

  stats.removed_cliques = removed.size();
  stats.orphans = orphans.size();
  stats.eliminated_variables = top.size();

  // Unregister the removed cliques.
  for (int c : removed) {
    for (Key k : cliques_[c].separator) separator_cliques_[k].erase(c);
  }
  roots_.erase(std::remove_if(roots_.begin(), roots_.end(), [&](int r) { return is_removed[r]; }), roots_.end());
  std::vector<LinearFactor> orphan_marginals;
  orphan_marginals.reserve(orphans.size());
  for (int o : orphans) {
    cliques_[o].parent = -1;
    orphan_marginals.push_back(cliques_[o].marginal);
  }
  for (int c : removed) release(c);

  frontal_clique_.resize(old_n + num_new_variables, -1);
  separator_cliques_.resize(old_n + num_new_variables);
  for (Key k : top) frontal_clique_[k] = -1;
  if (top.empty()) return stats;

  // 2. Gather the factors of the top: relinearized originals + orphan marginals.
  std::vector<LinearFactor> factors = relinearize(top);
  for (auto& m : orphan_marginals) factors.push_back(std::move(m));

  std::vector<std::vector<Key>> factor_keys;
  factor_keys.reserve(factors.size());
  for (const auto& f : factors) factor_keys.push_back(f.keys);

  std::set<Key> constrained;
  for (Key k : constrained_last)
    if (std::binary_search(top.begin(), top.end(), k)) constrained.insert(k);
  if (constrained.size() == top.size()) constrained.clear();

  // 3. Symbolic elimination and clique assembly (reverse elimination order).
  const SymbolicElimination sym = minimumDegreeOrdering(top, factor_keys, constrained);
  std::unordered_map<Key, int> position;
  position.reserve(top.size());
  for (std::size_t i = 0; i < sym.order.size(); ++i) position.emplace(sym.order[i], static_cast<int>(i));

  std::vector<int> new_cliques;
  for (std::size_t i = sym.order.size(); i-- > 0;) {
    const Key j = sym.order[i];
    const auto& parents = sym.parents[i];
    if (parents.empty()) {
      const int id = allocate();
      cliques_[id].frontals = {j};
      frontal_clique_[j] = id;
      roots_.push_back(id);
      new_cliques.push_back(id);
      continue;
    }
    const int pc = frontal_clique_[parents.front()];
    Clique& parent_clique = cliques_[pc];
    if (parent_clique.frontals.size() + parent_clique.separator.size() == parents.size()) {
      parent_clique.frontals.insert(parent_clique.frontals.begin(), j);
      frontal_clique_[j] = pc;
    } else {
      const int id = allocate();
      Clique& c = cliques_[id];  // allocate() may reallocate; re-fetch parent below
      c.frontals = {j};
      c.separator = parents;
      c.parent = pc;
      cliques_[pc].children.push_back(id);
      frontal_clique_[j] = id;
      new_cliques.push_back(id);
    }
  }
  std::sort(roots_.begin(), roots_.end());

  // Reattach orphans below the clique holding their earliest separator key.
  for (int o : orphans) {
    const auto& sep = cliques_[o].separator;
    Key first = sep.front();
    for (Key k : sep)
      if (position.at(k) < position.at(first)) first = k;
    const int pc = frontal_clique_[first];
    cliques_[o].parent = pc;
    cliques_[pc].children.push_back(o);
  }

  for (int id : new_cliques)
    for (Key k : cliques_[id].separator) separator_cliques_[k].insert(id);

  // 4. Numeric elimination, children before parents.
  std::unordered_map<int, std::vector<std::size_t>> assigned;
  for (std::size_t f = 0; f < factors.size(); ++f) {
    if (factors[f].keys.empty()) continue;
    Key first = factors[f].keys.front();
    for (Key k : factors[f].keys)
      if (position.at(k) < position.at(first)) first = k;
    assigned[frontal_clique_[first]].push_back(f);
  }

  std::vector<char> is_new(cliques_.size(), 0);
  for (int id : new_cliques) is_new[id] = 1;
  // new_cliques was filled parents-first; reverse is a valid children-first order.
  for (auto it = new_cliques.rbegin(); it != new_cliques.rend(); ++it) {
    const int id = *it;
    Clique& c = cliques_[id];
    const int nf = static_cast<int>(c.frontals.size());
    const int ns = static_cast<int>(c.separator.size());
    const Eigen::Index n = static_cast<Eigen::Index>(nf) * dim_;
    const Eigen::Index s = static_cast<Eigen::Index>(ns) * dim_;

    std::unordered_map<Key, Eigen::Index> column;
    for (int i = 0; i < nf; ++i) column.emplace(c.frontals[i], static_cast<Eigen::Index>(i) * dim_);
    for (int i = 0; i < ns; ++i) column.emplace(c.separator[i], n + static_cast<Eigen::Index>(i) * dim_);

    std::vector<const LinearFactor*> inputs;
    for (std::size_t f : assigned[id]) inputs.push_back(&factors[f]);
    for (int child : c.children)
      if (is_new[child]) inputs.push_back(&cliques_[child].marginal);

    Eigen::Index rows = 0;
    for (const auto* f : inputs) rows += f->rows();
    if (rows < n) {
      throw IndeterminateSystem("clique with frontal key " + std::to_string(c.frontals.front()) +
                                " is under-constrained");
    }
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, n + s + 1);
    Eigen::Index row = 0;
    for (const auto* f : inputs) {
      for (std::size_t b = 0; b < f->keys.size(); ++b) {
        const auto col = column.find(f->keys[b]);
        if (col == column.end()) throw std::logic_error("factor key outside clique scope");
        M.block(row, col->second, f->rows(), dim_) += f->A.middleCols(static_cast<Eigen::Index>(b) * dim_, dim_);
      }
      M.block(row, n + s, f->rows(), 1) = f->b;
      row += f->rows();
    }

    Eigen::HouseholderQR<Eigen::Ref<Eigen::MatrixXd>> qr(M);
    const Eigen::Index keep = std::min(rows, n + s);
    Eigen::MatrixXd T = M.topRows(keep).triangularView<Eigen::Upper>();

    const double scale = std::max(1.0, T.topLeftCorner(n, n).diagonal().cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!(std::abs(T(i, i)) > 1e-12 * scale) || !std::isfinite(T(i, i))) {
        throw IndeterminateSystem("singular conditional for key " +
                                  std::to_string(c.frontals[static_cast<std::size_t>(i / dim_)]));
      }
    }
    c.R = T.topLeftCorner(n, n);
    c.S = T.block(0, n, n, s);
    c.d = T.block(0, n + s, n, 1);
    c.marginal.keys = c.separator;
    c.marginal.A = T.block(n, n, keep - n, s);
    c.marginal.b = T.block(n, n + s, keep - n, 1);
  }
  return stats;
}

Eigen::VectorXd BayesTree::solve() const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(numVariables()) * dim_);
  for (int id : preorder()) {
    const Clique& c = cliques_[id];
    Eigen::VectorXd rhs = c.d;
    for (std::size_t i = 0; i < c.separator.size(); ++i)
      rhs.noalias() -= c.S.middleCols(static_cast<Eigen::Index>(i) * dim_, dim_) *
                       x.segment(static_cast<Eigen::Index>(c.separator[i]) * dim_, dim_);
    const Eigen::VectorXd xf = c.R.triangularView<Eigen::Upper>().solve(rhs);
    for (std::size_t i = 0; i < c.frontals.size(); ++i)
      x.segment(static_cast<Eigen::Index>(c.frontals[i]) * dim_, dim_) =
          xf.segment(static_cast<Eigen::Index>(i) * dim_, dim_);
  }
  return x;
}

Eigen::VectorXd BayesTree::gradientAtZero() const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(numVariables()) * dim_);
  for (int id : cliqueIds()) {
    const Clique& c = cliques_[id];
    const Eigen::VectorXd gf = -(c.R.transpose() * c.d);
    const Eigen::VectorXd gs = -(c.S.transpose() * c.d);
    for (std::size_t i = 0; i < c.frontals.size(); ++i)
      g.segment(static_cast<Eigen::Index>(c.frontals[i]) * dim_, dim_) +=
          gf.segment(static_cast<Eigen::Index>(i) * dim_, dim_);
    for (std::size_t i = 0; i < c.separator.size(); ++i)
      g.segment(static_cast<Eigen::Index>(c.separator[i]) * dim_, dim_) +=
          gs.segment(static_cast<Eigen::Index>(i) * dim_, dim_);
  }
  return g;
}

double BayesTree::rNormSquared(const Eigen::VectorXd& v) const {
  double total = 0.0;
  for (int id : cliqueIds()) {
    const Clique& c = cliques_[id];
    Eigen::VectorXd r = Eigen::VectorXd::Zero(c.R.rows());
    for (std::size_t i = 0; i < c.frontals.size(); ++i)
      r.noalias() += c.R.middleCols(static_cast<Eigen::Index>(i) * dim_, dim_) *
                     v.segment(static_cast<Eigen::Index>(c.frontals[i]) * dim_, dim_);
    for (std::size_t i = 0; i < c.separator.size(); ++i)
      r.noalias() += c.S.middleCols(static_cast<Eigen::Index>(i) * dim_, dim_) *
                     v.segment(static_cast<Eigen::Index>(c.separator[i]) * dim_, dim_);
    total += r.squaredNorm();
  }
  return total;
}

double BayesTree::modelDecrease(const Eigen::VectorXd& delta) const {
  return -gradientAtZero().dot(delta) - 0.5 * rNormSquared(delta);
}

void BayesTree::checkInvariants() const {
  std::vector<int> owner(numVariables(), -1);
  for (int id : cliqueIds()) {
    const Clique& c = cliques_[id];
    for (Key k : c.frontals) {
      if (owner[k] != -1) throw std::logic_error("key " + std::to_string(k) + " is frontal in two cliques");
      owner[k] = id;
      if (frontal_clique_[k] != id) throw std::logic_error("stale frontal index for key " + std::to_string(k));
    }
    if (c.parent >= 0) {
      const Clique& p = cliques_[c.parent];
      if (!alive_[c.parent]) throw std::logic_error("dead parent");
      if (std::find(p.children.begin(), p.children.end(), id) == p.children.end())
        throw std::logic_error("parent does not list child");
      for (Key k : c.separator) {
        const bool in_parent = std::find(p.frontals.begin(), p.frontals.end(), k) != p.frontals.end() ||
                               std::find(p.separator.begin(), p.separator.end(), k) != p.separator.end();
        if (!in_parent) throw std::logic_error("separator key " + std::to_string(k) + " not in parent clique");
      }
    } else {
      if (!c.separator.empty()) throw std::logic_error("root clique with non-empty separator");
      if (std::find(roots_.begin(), roots_.end(), id) == roots_.end()) throw std::logic_error("unlisted root");
    }
    for (int ch : c.children)
      if (cliques_[ch].parent != id) throw std::logic_error("child does not point to parent");
    for (Key k : c.separator)
      if (!separator_cliques_[k].count(id)) throw std::logic_error("separator index out of date");
  }
  for (std::size_t k = 0; k < owner.size(); ++k)
    if (owner[k] == -1) throw std::logic_error("key " + std::to_string(k) + " has no frontal clique");
}

void BayesTree::print(std::ostream& os) const {
  std::vector<std::pair<int, int>> stack;
  for (auto it = roots_.rbegin(); it != roots_.rend(); ++it) stack.emplace_back(*it, 0);
  while (!stack.empty()) {
    const auto [id, depth] = stack.back();
    stack.pop_back();
    const Clique& c = cliques_[id];
    os << std::string(static_cast<std::size_t>(depth) * 2, ' ');
    for (std::size_t i = 0; i < c.frontals.size(); ++i) os << (i ? " " : "") << c.frontals[i];
    os << " |";
    for (Key k : c.separator) os << ' ' << k;
    os << '\n';
    for (auto it = c.children.rbegin(); it != c.children.rend(); ++it) stack.emplace_back(*it, depth + 1);
  }
}

std::string BayesTree::dump() const {
  std::ostringstream ss;
  print(ss);
  return ss.str();
}

}  // namespace risam
