#include "ctlab/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace ctlab {

namespace {

double neg_log(double p) { return p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity(); }

// Accumulates one conditioning cell with weight w, truth t and prediction m.
void accumulate(RiskReport& r, double w, std::span<const double> t, std::span<const double> m) {
    for (std::size_t y = 0; y < t.size(); ++y) {
        if (t[y] <= 0.0) continue;
        r.nll += w * t[y] * neg_log(m[y]);
        r.bayes_nll += w * t[y] * neg_log(t[y]);
        r.kl += w * t[y] * (std::log(t[y]) - std::log(m[y]));
    }
}

}  // namespace

const std::vector<double>& PredictionCache::get(std::span<const int> prefix) {
    std::size_t key = 0;
    for (int p : predictor_->prefix_support())
        key = key * static_cast<std::size_t>(predictor_->vocab()) + static_cast<std::size_t>(prefix[static_cast<std::size_t>(p)]);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, predictor_->predict(prefix)).first;
    return it->second;
}

const std::vector<double>& PredictionCache::get(std::span<const Token> prefix) {
    scratch_.assign(prefix.begin(), prefix.end());
    return get(std::span<const int>(scratch_));
}

double nll_risk(const CircuitPredictor& predictor, const Dataset& rows, int query_col) {
    if (query_col < 0) query_col = predictor.query_position();
    const int M = predictor.prefix_length();
    require(rows.num_vars() >= M && query_col < rows.num_vars() && query_col >= M,
            "evaluation rows do not cover the predictor scope");
    require(rows.rows() > 0, "nll of an empty dataset is undefined");
    PredictionCache cache(predictor);
    double total = 0.0;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
        const auto row = rows.row(r);
        const auto& mu = cache.get(row.first(static_cast<std::size_t>(M)));
        total += neg_log(mu[row[static_cast<std::size_t>(query_col)]]);
    }
    return total / static_cast<double>(rows.rows());
}

double nll_risk(const Cpt& cpt, const RowSet& rows) {
    require(cpt.arity() == rows.arity, "cpt arity differs from rows");
    require(rows.size() > 0, "nll of an empty row set is undefined");
    double total = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r)
        total += neg_log(cpt.prob(rows.y(r), row_index(rows.x(r), cpt.vocab())));
    return total / static_cast<double>(rows.size());
}

RiskReport true_risk(const CircuitPredictor& predictor, const JointTable& joint, int query_col) {
    if (query_col < 0) query_col = predictor.query_position();
    const int M = predictor.prefix_length();
    require(query_col >= M && query_col < joint.num_vars() && M <= joint.num_vars(), "joint does not cover the query");
    require(joint.vocab() == predictor.vocab(), "joint vocabulary differs from predictor");
    std::vector<int> vars;
    for (int i = 0; i < M; ++i) vars.push_back(i);
    vars.push_back(query_col);
    const auto m = joint.marginal(vars);
    const std::size_t V = static_cast<std::size_t>(joint.vocab());
    PredictionCache cache(predictor);
    RiskReport rep;
    std::vector<int> prefix(static_cast<std::size_t>(M));
    std::vector<double> t(V);
    for (std::size_t x = 0; x < m.size() / V; ++x) {
        double px = 0.0;
        for (std::size_t y = 0; y < V; ++y) px += m[x * V + y];
        if (px <= 0.0) continue;
        for (std::size_t y = 0; y < V; ++y) t[y] = m[x * V + y] / px;
        std::size_t rem = x;
        for (int i = M; i-- > 0;) {
            prefix[static_cast<std::size_t>(i)] = static_cast<int>(rem % V);
            rem /= V;
        }
        accumulate(rep, px, t, cache.get(std::span<const int>(prefix)));
    }
    rep.excess = rep.nll - rep.bayes_nll;
    return rep;
}

Cpt mechanism_cpt(const Scm& scm, int i) {
    require(scm.confounder_states() == 1, "mechanism cpt needs an unconfounded scm");
    const int arity = static_cast<int>(scm.parents(i).size());
    const std::size_t rows = ipow(static_cast<std::size_t>(scm.vocab_size()), arity);
    std::vector<double> table;
    table.reserve(rows * static_cast<std::size_t>(scm.vocab_size()));
    for (std::size_t r = 0; r < rows; ++r) {
        const auto row = scm.kernel_row(i, r);
        table.insert(table.end(), row.begin(), row.end());
    }
    return Cpt(arity, scm.vocab_size(), std::move(table));
}

QueryTruth::QueryTruth(const Scm& target, int prefix_len, int query, std::size_t exact_limit, std::size_t mc_rows,
                       std::uint64_t mc_seed)
    : target_(target), prefix_len_(prefix_len), query_(query < 0 ? target.size() - 1 : query),
      exact_limit_(exact_limit), mc_rows_(mc_rows), mc_seed_(mc_seed) {
    require(prefix_len >= 0 && prefix_len <= query_ && query_ < target.size(), "query must follow the prefix");
    std::vector<CircuitNode> nodes;
    for (int i = 0; i < target.size(); ++i) {
        CircuitNode node{i, target.parents(i), mechanism_cpt(target, i)};
        if (i < prefix_len) prefix_nodes_.push_back(node);
        else if (i <= query_) nodes.push_back(std::move(node));
    }
    truth_ = CircuitPredictor(target.vocab_size(), prefix_len, std::move(nodes), 16);
}

RiskReport QueryTruth::evaluate(const CircuitPredictor& predictor) const {
    require(predictor.prefix_length() == prefix_len_, "predictor prefix length differs from the query");
    require(predictor.vocab() == target_.vocab_size(), "predictor vocabulary differs from the target");
    const std::size_t V = static_cast<std::size_t>(target_.vocab_size());
    std::set<int> uset(predictor.prefix_support().begin(), predictor.prefix_support().end());
    uset.insert(truth_.prefix_support().begin(), truth_.prefix_support().end());
    const std::vector<int> U(uset.begin(), uset.end());
    PredictionCache mu(predictor);
    PredictionCache truth(truth_);
    RiskReport rep;
    std::vector<int> prefix(static_cast<std::size_t>(prefix_len_), 0);

    const double cells = std::pow(static_cast<double>(V), static_cast<double>(U.size()));
    if (cells <= static_cast<double>(exact_limit_)) {
        const auto marginal = U.empty() ? std::vector<double>{1.0} : network_marginal(static_cast<int>(V), prefix_nodes_, U, exact_limit_);
        for (std::size_t u = 0; u < marginal.size(); ++u) {
            if (marginal[u] <= 0.0) continue;
            std::size_t rem = u;
            for (std::size_t k = U.size(); k-- > 0;) {
                prefix[static_cast<std::size_t>(U[k])] = static_cast<int>(rem % V);
                rem /= V;
            }
            const std::span<const int> pv(prefix);
            accumulate(rep, marginal[u], truth.get(pv), mu.get(pv));
        }
        rep.excess = rep.nll - rep.bayes_nll;
        return rep;
    }

    // Monte Carlo over prefixes; the inner expectation over the query is exact.
    const Dataset sample = sample_dataset(target_, mc_rows_, mc_seed_);
    double sum_kl = 0.0, sum_kl2 = 0.0;
    for (std::size_t r = 0; r < sample.rows(); ++r) {
        const auto row = sample.row(r);
        for (int i = 0; i < prefix_len_; ++i) prefix[static_cast<std::size_t>(i)] = row[static_cast<std::size_t>(i)];
        const std::span<const int> pv(prefix);
        RiskReport one;
        accumulate(one, 1.0, truth.get(pv), mu.get(pv));
        rep.nll += one.nll;
        rep.bayes_nll += one.bayes_nll;
        sum_kl += one.kl;
        sum_kl2 += one.kl * one.kl;
    }
    const double n = static_cast<double>(sample.rows());
    rep.nll /= n;
    rep.bayes_nll /= n;
    rep.kl = sum_kl / n;
    rep.excess = rep.nll - rep.bayes_nll;
    rep.mc_stderr = std::sqrt(std::max(0.0, sum_kl2 / n - rep.kl * rep.kl) / n);
    return rep;
}

}  // namespace ctlab
