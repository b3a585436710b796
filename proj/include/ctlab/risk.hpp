#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "ctlab/circuit.hpp"
#include "ctlab/joint.hpp"

namespace ctlab {

struct RiskReport {
    double nll = 0.0;
    double bayes_nll = 0.0;
    double excess = 0.0;
    double kl = 0.0;
    double mc_stderr = 0.0;  // nonzero only for Monte Carlo evaluation
};

/// Mean -log mu(y | prefix) over rows; `query_col` defaults to the predictor's query position.
double nll_risk(const CircuitPredictor& predictor, const Dataset& rows, int query_col = -1);
double nll_risk(const Cpt& cpt, const RowSet& rows);

/// Exact risk of mu(v_query | v_{0..M-1}) under a joint table.
RiskReport true_risk(const CircuitPredictor& predictor, const JointTable& joint, int query_col = -1);

/// Exact Cpt of an unconfounded SCM's mechanism at position i.
Cpt mechanism_cpt(const Scm& scm, int i);

/// Ground-truth evaluator for P*(v_query | v_{0..M-1}) of an unconfounded SCM,
/// computed by elimination instead of a dense joint; falls back to a seeded
/// Monte Carlo estimate when the prefix marginal would exceed `exact_limit` cells.
class QueryTruth {
public:
    QueryTruth(const Scm& target, int prefix_len, int query = -1, std::size_t exact_limit = 2'000'000,
               std::size_t mc_rows = 100'000, std::uint64_t mc_seed = 0x5eed);

    RiskReport evaluate(const CircuitPredictor& predictor) const;
    const CircuitPredictor& truth() const { return truth_; }
    int prefix_length() const { return prefix_len_; }
    int query() const { return query_; }

private:
    Scm target_;
    int prefix_len_;
    int query_;
    std::size_t exact_limit_;
    std::size_t mc_rows_;
    std::uint64_t mc_seed_;
    CircuitPredictor truth_;
    std::vector<CircuitNode> prefix_nodes_;
};

/// Memoizes predictions by the values of the predictor's prefix support.
class PredictionCache {
public:
    explicit PredictionCache(const CircuitPredictor& predictor) : predictor_(&predictor) {}
    const std::vector<double>& get(std::span<const int> prefix);
    const std::vector<double>& get(std::span<const Token> prefix);

private:
    const CircuitPredictor* predictor_;
    std::map<std::size_t, std::vector<double>> cache_;
    std::vector<int> scratch_;
};

}  // namespace ctlab
