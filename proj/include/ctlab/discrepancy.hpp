#pragma once

#include <compare>
#include <set>
#include <string>
#include <vector>

#include "ctlab/scm.hpp"

namespace ctlab {

/// A (position, domain) pair. Domains 0..K-1 are sources; K is the target.
struct Site {
    int position = 0;
    int domain = 0;
    auto operator<=>(const Site&) const = default;
};

/// Mechanism-equality structure across positions and domains, stored as an
/// equivalence-class id per site. Delta(a, b) is false exactly when both sites
/// share a class, so the zero-relation is an equivalence by construction.
class DiscrepancyOracle {
public:
    DiscrepancyOracle() = default;
    /// `classes[d][i]` is an arbitrary label for site (i, d); labels are
    /// canonicalized to first-appearance order over (domain, position).
    explicit DiscrepancyOracle(std::vector<std::vector<int>> classes);

    int num_domains() const { return static_cast<int>(classes_.size()); }
    int target_domain() const { return num_domains() - 1; }
    int domain_size(int d) const { return static_cast<int>(classes_.at(static_cast<std::size_t>(d)).size()); }
    int class_of(Site s) const;
    int num_classes() const { return num_classes_; }

    /// True when the mechanisms at the two sites may differ.
    bool operator()(Site a, Site b) const { return class_of(a) != class_of(b); }

    /// Every other site with Delta = 0 relative to `s`, in (domain, position) order.
    std::vector<Site> matches(Site s) const;

    /// Restricted-growth string of class ids over sites in (domain, position) order.
    std::vector<int> encoding() const;
    const std::vector<std::vector<int>>& classes() const { return classes_; }

private:
    std::vector<std::vector<int>> classes_;
    int num_classes_ = 0;
};

/// Delta(i,j;i',j') = 0 iff the mechanisms carry the same operator kind and
/// noise level (or the same explicit table and confounder law).
DiscrepancyOracle induced_discrepancy_oracle(const DomainCollection& domains);

/// Coarse per-source discrepancy sets Delta_{j,*}: positions whose mechanism
/// differs from the target's at the same position.
using DeltaSets = std::vector<std::set<int>>;
DeltaSets coarse_delta_sets(const DomainCollection& domains);

}  // namespace ctlab
