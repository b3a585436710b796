#include "ctlab/joint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace ctlab {

namespace {

constexpr double kJointSumTolerance = 1e-10;

// Depth-first product over positions; `acc` is the mass of the current prefix.
void fill_joint(const Scm& scm, int conf, int depth, double acc, std::size_t index, std::vector<int>& values,
                std::vector<double>& out) {
    const int T = scm.size();
    const int V = scm.vocab_size();
    if (depth == T) {
        out[index] += acc;
        return;
    }
    const auto& pa = scm.parents(depth);
    std::size_t prow = 0;
    for (int p : pa) prow = prow * static_cast<std::size_t>(V) + static_cast<std::size_t>(values[static_cast<std::size_t>(p)]);
    auto row = scm.kernel_row(depth, prow, conf);
    for (int v = 0; v < V; ++v) {
        const double p = row[static_cast<std::size_t>(v)];
        if (p == 0.0) continue;
        values[static_cast<std::size_t>(depth)] = v;
        fill_joint(scm, conf, depth + 1, acc * p, index * static_cast<std::size_t>(V) + static_cast<std::size_t>(v),
                   values, out);
    }
}

}  // namespace

JointTable::JointTable(int vocab, int num_vars, std::vector<double> probs)
    : vocab_(vocab), num_vars_(num_vars), probs_(std::move(probs)) {
    require(probs_.size() == ipow(static_cast<std::size_t>(vocab), num_vars), "joint table has wrong size");
    double s = 0.0;
    for (double p : probs_) {
        require(p >= 0.0, "joint probabilities must be nonnegative");
        s += p;
    }
    require(std::abs(s - 1.0) <= kJointSumTolerance, "joint table must sum to 1");
}

double JointTable::prob(std::span<const int> assignment) const {
    require(static_cast<int>(assignment.size()) == num_vars_, "assignment length must equal T");
    return probs_[row_index(assignment, vocab_)];
}

std::vector<double> JointTable::marginal(std::span<const int> vars) const {
    std::set<int> seen;
    for (int v : vars) {
        require(v >= 0 && v < num_vars_, "marginal variable out of range");
        require(seen.insert(v).second, "marginal variables must be distinct");
    }
    const std::size_t V = static_cast<std::size_t>(vocab_);
    std::vector<double> out(ipow(V, static_cast<int>(vars.size())), 0.0);
    // stride of variable i in the joint index
    std::vector<std::size_t> stride(static_cast<std::size_t>(num_vars_));
    for (int i = 0; i < num_vars_; ++i) stride[static_cast<std::size_t>(i)] = ipow(V, num_vars_ - 1 - i);
    for (std::size_t idx = 0; idx < probs_.size(); ++idx) {
        const double p = probs_[idx];
        if (p == 0.0) continue;
        std::size_t m = 0;
        for (int v : vars) m = m * V + (idx / stride[static_cast<std::size_t>(v)]) % V;
        out[m] += p;
    }
    return out;
}

JointTable exact_joint(const Scm& scm, std::size_t budget) {
    const std::size_t V = static_cast<std::size_t>(scm.vocab_size());
    const int T = scm.size();
    const double entries = std::pow(static_cast<double>(V), T);
    if (entries > static_cast<double>(budget))
        throw BudgetExceeded("joint table needs " + std::to_string(static_cast<long double>(entries)) +
                             " entries, budget is " + std::to_string(budget));
    std::vector<double> probs(ipow(V, T), 0.0);
    std::vector<int> values(static_cast<std::size_t>(T), 0);
    const int C = scm.confounder_states();
    for (int c = 0; c < C; ++c) {
        const double w = scm.confounder() ? scm.confounder()->weights[static_cast<std::size_t>(c)] : 1.0;
        if (w == 0.0) continue;
        fill_joint(scm, c, 0, w, 0, values, probs);
    }
    return JointTable(scm.vocab_size(), T, std::move(probs));
}

Cpt exact_conditional(const JointTable& joint, int target, std::span<const int> given) {
    require(target >= 0 && target < joint.num_vars(), "target index out of range");
    for (int g : given) require(g != target, "target cannot be conditioned on itself");
    std::vector<int> vars(given.begin(), given.end());
    vars.push_back(target);
    const auto m = joint.marginal(vars);  // throws on duplicates
    const std::size_t V = static_cast<std::size_t>(joint.vocab());
    const std::size_t rows = m.size() / V;
    std::vector<double> table(m.size());
    std::vector<std::size_t> flagged;
    for (std::size_t r = 0; r < rows; ++r) {
        double mass = 0.0;
        for (std::size_t y = 0; y < V; ++y) mass += m[r * V + y];
        if (mass <= 0.0) {
            flagged.push_back(r);
            for (std::size_t y = 0; y < V; ++y) table[r * V + y] = 1.0 / static_cast<double>(V);
            continue;
        }
        double s = 0.0;
        for (std::size_t y = 0; y < V; ++y) s += (table[r * V + y] = m[r * V + y] / mass);
        for (std::size_t y = 0; y < V; ++y) table[r * V + y] /= s;
    }
    return Cpt(static_cast<int>(given.size()), joint.vocab(), std::move(table), 0.0, std::move(flagged));
}

PositivityReport validate_positivity(const JointTable& joint, double epsilon) {
    require(epsilon > 0.0, "positivity epsilon must be positive");
    PositivityReport rep;
    rep.min_mass = *std::min_element(joint.probs().begin(), joint.probs().end());
    rep.ok = rep.min_mass >= epsilon;
    return rep;
}

}  // namespace ctlab
