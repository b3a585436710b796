#include "ctlab/circuit.hpp"

#include <algorithm>
#include <set>

namespace ctlab {

EliminationPlan EliminationPlan::build(int vocab, const std::vector<CircuitNode>& nodes, int first_free,
                                       const std::vector<int>& final_keep) {
    EliminationPlan plan;
    plan.vocab = vocab;
    std::vector<int> scope;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const CircuitNode& node = nodes[k];
        require(node.position >= first_free, "circuit node overlaps the evidence prefix");
        require(k == 0 || node.position > nodes[k - 1].position, "circuit nodes must be in causal order");
        require(node.cpt.arity() == static_cast<int>(node.parents.size()), "cpt arity differs from parent count");
        require(node.cpt.vocab() == vocab, "cpt vocabulary differs from circuit vocabulary");
        Step step;
        step.scope = scope;
        step.scope.push_back(node.position);
        for (int p : node.parents) {
            require(p < node.position, "circuit parent must precede its child");
            if (p < first_free) {
                step.parent_slot.push_back(-1 - p);
                continue;
            }
            const auto it = std::find(scope.begin(), scope.end(), p);
            require(it != scope.end(), "circuit parent is not generated by the circuit");
            step.parent_slot.push_back(static_cast<int>(it - scope.begin()));
        }
        plan.width = std::max(plan.width, static_cast<int>(step.scope.size()));

        std::set<int> needed(final_keep.begin(), final_keep.end());
        for (std::size_t l = k + 1; l < nodes.size(); ++l)
            needed.insert(nodes[l].parents.begin(), nodes[l].parents.end());
        scope.clear();
        for (std::size_t s = 0; s < step.scope.size(); ++s)
            if (needed.count(step.scope[s])) {
                step.keep.push_back(s);
                scope.push_back(step.scope[s]);
            }
        plan.steps.push_back(std::move(step));
    }
    plan.final_scope = scope;
    for (int q : final_keep)
        require(std::find(scope.begin(), scope.end(), q) != scope.end(), "requested variable is not generated");
    return plan;
}

std::vector<double> EliminationPlan::run(const std::vector<CircuitNode>& nodes, std::span<const int> evidence) const {
    const std::size_t V = static_cast<std::size_t>(vocab);
    std::vector<double> f{1.0};
    std::vector<std::size_t> digits;
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const Step& step = steps[k];
        const Cpt& cpt = nodes[k].cpt;
        const std::size_t n = step.scope.size();  // includes the new node
        std::vector<double> g(f.size() * V, 0.0);
        digits.assign(n, 0);
        for (std::size_t idx = 0; idx < f.size(); ++idx) {
            const double w = f[idx];
            // digits of idx over the old scope (n - 1 entries), most significant first
            std::size_t rem = idx;
            for (std::size_t s = n - 1; s-- > 0;) {
                digits[s] = rem % V;
                rem /= V;
            }
            if (w == 0.0) continue;
            std::size_t row = 0;
            for (int slot : step.parent_slot) {
                const std::size_t val = slot < 0 ? static_cast<std::size_t>(evidence[static_cast<std::size_t>(-1 - slot)])
                                                 : digits[static_cast<std::size_t>(slot)];
                row = row * V + val;
            }
            const auto probs = cpt.row(row);
            for (std::size_t v = 0; v < V; ++v) g[idx * V + v] = w * probs[v];
        }
        if (step.keep.size() == n) {
            f = std::move(g);
            continue;
        }
        std::vector<double> h(ipow(V, static_cast<int>(step.keep.size())), 0.0);
        for (std::size_t idx = 0; idx < g.size(); ++idx) {
            if (g[idx] == 0.0) continue;
            std::size_t rem = idx;
            for (std::size_t s = n; s-- > 0;) {
                digits[s] = rem % V;
                rem /= V;
            }
            std::size_t out = 0;
            for (std::size_t s : step.keep) out = out * V + digits[s];
            h[out] += g[idx];
        }
        f = std::move(h);
    }
    return f;
}

CircuitPredictor::CircuitPredictor(int vocab, int prefix_len, std::vector<CircuitNode> nodes, int max_width)
    : vocab_(vocab), prefix_len_(prefix_len), nodes_(std::move(nodes)) {
    require(prefix_len >= 0, "prefix length must be nonnegative");
    require(!nodes_.empty(), "circuit needs at least the query node");
    for (std::size_t k = 0; k < nodes_.size(); ++k)
        require(nodes_[k].position == prefix_len + static_cast<int>(k), "circuit nodes must cover positions M..T-1");
    plan_ = EliminationPlan::build(vocab, nodes_, prefix_len, {query_position()});
    if (plan_.width > max_width)
        throw BudgetExceeded("circuit frontier width " + std::to_string(plan_.width) + " exceeds budget " +
                             std::to_string(max_width));
    std::set<int> support;
    for (const auto& node : nodes_)
        for (int p : node.parents)
            if (p < prefix_len) support.insert(p);
    support_.assign(support.begin(), support.end());
}

std::vector<double> CircuitPredictor::predict(std::span<const int> prefix) const {
    require(static_cast<int>(prefix.size()) == prefix_len_, "prefix length must equal M");
    for (int t : prefix) require(t >= 0 && t < vocab_, "prefix token out of vocabulary");
    return plan_.run(nodes_, prefix);
}

std::vector<double> CircuitPredictor::predict(std::span<const Token> prefix) const {
    std::vector<int> p(prefix.begin(), prefix.end());
    return predict(std::span<const int>(p));
}

std::vector<double> variable_eliminate(const CircuitPredictor& circuit, std::span<const int> prefix) {
    return circuit.predict(prefix);
}

std::vector<double> network_marginal(int vocab, const std::vector<CircuitNode>& nodes, std::vector<int> keep,
                                     std::size_t budget) {
    std::sort(keep.begin(), keep.end());
    for (std::size_t k = 0; k < nodes.size(); ++k)
        require(nodes[k].position == static_cast<int>(k), "network must cover positions 0..L-1");
    const auto plan = EliminationPlan::build(vocab, nodes, 0, keep);
    if (static_cast<double>(ipow(static_cast<std::size_t>(vocab), plan.width)) > static_cast<double>(budget))
        throw BudgetExceeded("marginal needs a factor of width " + std::to_string(plan.width));
    require(plan.final_scope == keep, "marginal scope mismatch");
    return plan.run(nodes, {});
}

}  // namespace ctlab
