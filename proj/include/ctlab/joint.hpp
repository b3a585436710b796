#pragma once

#include <span>
#include <vector>

#include "ctlab/cpt.hpp"
#include "ctlab/scm.hpp"

namespace ctlab {

/// Dense distribution over all |V|^T full assignments; v_1 is the most
/// significant digit of the index.
class JointTable {
public:
    JointTable(int vocab, int num_vars, std::vector<double> probs);

    int vocab() const { return vocab_; }
    int num_vars() const { return num_vars_; }
    const std::vector<double>& probs() const { return probs_; }
    double prob(std::span<const int> assignment) const;

    /// Marginal over `vars` (in the given order) as a mixed-radix table.
    std::vector<double> marginal(std::span<const int> vars) const;

private:
    int vocab_;
    int num_vars_;
    std::vector<double> probs_;
};

/// Sums the truncated factorization over confounder states; rejects tables
/// larger than `budget` entries.
JointTable exact_joint(const Scm& scm, std::size_t budget = table_budget());

/// Exact P(v_target | v_given); rows with zero conditioning mass are uniform
/// and flagged.
Cpt exact_conditional(const JointTable& joint, int target, std::span<const int> given);

struct PositivityReport {
    bool ok = false;
    double min_mass = 0.0;
};

inline constexpr double kDefaultPositivityEpsilon = 1e-9;

PositivityReport validate_positivity(const JointTable& joint, double epsilon = kDefaultPositivityEpsilon);

}  // namespace ctlab
