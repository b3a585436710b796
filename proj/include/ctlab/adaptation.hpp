#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ctlab/circuit.hpp"
#include "ctlab/dataset.hpp"
#include "ctlab/discrepancy.hpp"
#include "ctlab/transport.hpp"

namespace ctlab {

/// One hypothesized domain knowledge: a partition of all (position, domain)
/// sites plus a diagram per domain (target last).
struct StructureHypothesis {
    DiscrepancyOracle oracle;
    std::vector<CausalDiagram> diagrams;
    std::string label;

    /// Per domain, per node: arity followed by the ordered parents.
    std::vector<int> diagram_encoding() const;
    /// Tie-break order: partition string first, then diagrams.
    bool precedes(const StructureHypothesis& other) const;
};

void to_json(nlohmann::json& j, const StructureHypothesis& h);
void from_json(const nlohmann::json& j, StructureHypothesis& h);

/// Induced oracle and true diagrams of a collection.
StructureHypothesis true_structure(const DomainCollection& domains);

/// Every site its own class; each node takes its `max_parents` most recent predecessors.
StructureHypothesis no_transport_hypothesis(std::span<const int> domain_sizes, int max_parents);

struct SearchConfig {
    int target_size = 0;  // T*; 0 means the full target width
    int prefix_len = 1;   // M
    int max_parents = 2;
    std::size_t partition_cap = 4140;  // Bell(8)
    std::size_t diagram_cap = 64;
    std::vector<StructureHypothesis> candidates;  // non-empty selects guided mode
    double holdout = 0.5;
    std::uint64_t split_seed = 0;
    TransportOptions transport;
    int jobs = 1;
};

/// Number of ordered parent tuples of length <= max_parents drawn from i predecessors.
std::size_t parent_choices(int i, int max_parents);

/// Exhaustive within caps; otherwise the explicit list plus no-transport.
/// Throws BudgetExceeded when the caps are exceeded without a list.
std::vector<StructureHypothesis> enumerate_structures(const SearchConfig& config, std::span<const int> domain_sizes);

struct HypothesisCount {
    double count = 0.0;
    double log_count = 0.0;
    double excess_bound(double n) const;  // sqrt(log|H| / n)
};

/// Exhaustive |H| = Bell(|E|) * prod over domains and nodes of parent_choices.
HypothesisCount hypothesis_count(int max_parents, std::span<const int> domain_sizes);

struct CandidateScore {
    std::string label;
    std::vector<int> partition;
    double nll = 0.0;
    bool valid = true;  // false when a pooled class mixes parent arities
};

struct SelectionResult {
    CircuitPredictor predictor;
    StructureHypothesis chosen;
    std::size_t chosen_index = 0;
    std::vector<CandidateScore> scores;
    double count = 0.0;
    double log_count = 0.0;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
};

nlohmann::json selection_json(const SelectionResult& result);

/// Target columns seen by a size-T* hypothesis: the first T*-1 columns and the query.
std::vector<int> target_view_columns(int target_width, int target_size);

/// `sources` must expose exactly the K source domains.
SelectionResult circuit_ad(const FamilySource& sources, const Dataset& target, const SearchConfig& config);
SelectionResult circuit_ad(const std::vector<Dataset>& sources, const Dataset& target, const SearchConfig& config);

/// Single-module hypotheses of size M+1: the query node takes every ordered
/// parent tuple of length <= max_parents from the prefix and either a fresh
/// class or one source class of matching arity. Sources keep their true structure.
std::vector<StructureHypothesis> module_hypotheses(const StructureHypothesis& sources_truth, int prefix_len,
                                                   int max_parents);

struct SimpleAdResult {
    Cpt psi;
    std::vector<int> pooled;  // chosen source subset, sorted
    std::vector<std::pair<std::vector<int>, double>> scores;
    std::size_t count = 0;  // 2^K
};

/// Y is the last column, X the rest. Held-out selection over all source subsets.
SimpleAdResult simple_ad(const std::vector<Dataset>& sources, const Dataset& target, std::uint64_t split_seed,
                         double alpha = kDefaultAlpha);

/// Smoothed P(v_query | v_0..v_{M-1}) on pooled source and target rows.
CircuitPredictor erm_pool(const std::vector<const Dataset*>& datasets, int prefix_len, double alpha = kDefaultAlpha);

struct RegimeReport {
    bool fast = false;
    double threshold = 0.0;
};

/// threshold = cbrt(n / K); fast iff L <= threshold.
RegimeReport regime_report(double circuit_size, double n, double num_sources);

}  // namespace ctlab
