#pragma once

#include <span>
#include <vector>

#include "ctlab/cpt.hpp"

namespace ctlab {

inline constexpr int kDefaultFrontierWidth = 6;

/// One factor P(v_position | v_parents) of a circuit.
struct CircuitNode {
    int position = 0;
    std::vector<int> parents;
    Cpt cpt;
};

/// Elimination schedule for nodes generated in causal order: before each
/// multiplication the factor scope holds only variables still referenced
/// downstream (or requested at the end).
struct EliminationPlan {
    struct Step {
        std::vector<int> scope;           // scope after multiplying the node's Cpt; last entry is the node
        std::vector<int> parent_slot;     // per parent: index into scope, or -1 - evidence position
        std::vector<std::size_t> keep;    // indices into scope that survive this step
    };
    int vocab = 2;
    std::vector<Step> steps;
    std::vector<int> final_scope;
    int width = 0;

    /// `nodes` must be sorted by position; parents below `first_free` are evidence.
    static EliminationPlan build(int vocab, const std::vector<CircuitNode>& nodes, int first_free,
                                 const std::vector<int>& final_keep);
    /// Runs the plan; `evidence[k]` is the value of position k < first_free.
    std::vector<double> run(const std::vector<CircuitNode>& nodes, std::span<const int> evidence) const;
};

/// mu(v_{T-1} | v_{0..M-1}) as the marginal of a product of per-position Cpts
/// over positions M..T-1 (0-based; the query is the last node).
class CircuitPredictor {
public:
    CircuitPredictor() = default;
    CircuitPredictor(int vocab, int prefix_len, std::vector<CircuitNode> nodes,
                     int max_width = kDefaultFrontierWidth);

    int vocab() const { return vocab_; }
    int prefix_length() const { return prefix_len_; }
    int target_length() const { return prefix_len_ + static_cast<int>(nodes_.size()); }
    int query_position() const { return target_length() - 1; }
    const std::vector<CircuitNode>& nodes() const { return nodes_; }
    /// Prefix positions read by some node, ascending.
    const std::vector<int>& prefix_support() const { return support_; }
    int frontier_width() const { return plan_.width; }

    std::vector<double> predict(std::span<const int> prefix) const;
    std::vector<double> predict(std::span<const Token> prefix) const;

private:
    int vocab_ = 2;
    int prefix_len_ = 0;
    std::vector<CircuitNode> nodes_;
    std::vector<int> support_;
    EliminationPlan plan_;
};

std::vector<double> variable_eliminate(const CircuitPredictor& circuit, std::span<const int> prefix);

/// Marginal over `keep` (ascending positions) of a complete network on
/// positions 0..L-1; rejects intermediate factors above `budget` entries.
std::vector<double> network_marginal(int vocab, const std::vector<CircuitNode>& nodes, std::vector<int> keep,
                                     std::size_t budget);

}  // namespace ctlab
