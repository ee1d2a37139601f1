// Square-root information Bayes tree with incremental re-elimination of the
// affected top.
//
// Every variable has the same tangent dimension. Keys are dense indices
// 0..numVariables()-1; new variables must extend that range contiguously.
#pragma once

#include <functional>
#include <iosfwd>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "risam/linear_factor.h"

namespace risam {

/// Raised when a clique conditional is singular (under-constrained problem).
class IndeterminateSystem : public std::runtime_error {
 public:
  explicit IndeterminateSystem(const std::string& what) : std::runtime_error(what) {}
};

struct Clique {
  std::vector<Key> frontals;   // in elimination order
  std::vector<Key> separator;  // in elimination order
  // Conditional  R * x_F + S * x_S = d  with R upper triangular.
  Eigen::MatrixXd R;
  Eigen::MatrixXd S;
  Eigen::VectorXd d;
  // Marginal factor on the separator left over after eliminating the frontals.
  LinearFactor marginal;
  int parent = -1;
  std::vector<int> children;
};

class BayesTree {
 public:
  /// Supplies the linear factors to eliminate, given the variables of the
  /// removed top (existing and new, ascending). Every returned factor must
  /// only involve those variables.
  using Relinearizer = std::function<std::vector<LinearFactor>(const std::vector<Key>& top)>;

  struct UpdateStats {
    std::size_t removed_cliques = 0;
    std::size_t orphans = 0;
    std::size_t eliminated_variables = 0;
  };

  explicit BayesTree(int var_dim);

  int varDim() const { return dim_; }
  std::size_t numVariables() const { return frontal_clique_.size(); }
  std::size_t numCliques() const { return num_alive_; }
  bool empty() const { return num_alive_ == 0; }

  /// Removes every clique containing a key of `marked` (as frontal or
  /// separator) together with its ancestors, appends `num_new_variables`
  /// variables, re-eliminates the resulting top together with the cached
  /// marginals of the orphaned subtrees and reattaches the orphans.
  /// Keys in `constrained_last` are ordered after all other top variables.
  /// Throws IndeterminateSystem if a conditional is singular; the tree is left
  /// unusable in that case.
  UpdateStats update(std::size_t num_new_variables, const std::set<Key>& marked,
                     const std::set<Key>& constrained_last, const Relinearizer& relinearize);

  /// Full back-substitution: solution of R * delta = d.
  Eigen::VectorXd solve() const;

  /// Gradient of 0.5 |R delta - d|^2 at delta = 0, i.e. -R^T d.
  Eigen::VectorXd gradientAtZero() const;

  /// |R * v|^2
  double rNormSquared(const Eigen::VectorXd& v) const;

  /// Decrease of the quadratic model 0.5 |R delta - d|^2 from delta = 0.
  double modelDecrease(const Eigen::VectorXd& delta) const;

  const Clique& clique(int id) const { return cliques_.at(id); }
  int frontalClique(Key key) const { return frontal_clique_.at(key); }
  const std::vector<int>& roots() const { return roots_; }
  std::vector<int> cliqueIds() const;

  /// Throws std::logic_error if the frontal partition, separator containment
  /// or parent/child links are broken.
  void checkInvariants() const;

  /// One clique per line, children indented: "f1 f2 | s1 s2".
  void print(std::ostream& os) const;
  std::string dump() const;

 private:
  int allocate();
  void release(int id);
  std::vector<int> preorder() const;

  int dim_;
  std::vector<Clique> cliques_;
  std::vector<char> alive_;
  std::vector<int> free_ids_;
  std::size_t num_alive_ = 0;
  std::vector<int> frontal_clique_;
  std::vector<std::set<int>> separator_cliques_;
  std::vector<int> roots_;
};

}  // namespace risam
