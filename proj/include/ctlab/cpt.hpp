#pragma once

// Conditional probability tables: the estimator object shared by every algorithm.

#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ctlab/dataset.hpp"

namespace ctlab {

inline constexpr double kDefaultAlpha = 0.1;

/// P(y | x_1..x_c) with |V|^c rows of |V| probabilities. Rows are indexed by the
/// mixed-radix value of x, first scope element most significant.
class Cpt {
public:
    Cpt() = default;
    Cpt(int arity, int vocab, std::vector<double> table, double alpha = 0.0,
        std::vector<std::size_t> flagged = {});

    static Cpt uniform(int arity, int vocab, bool flag_rows = false);

    int arity() const { return arity_; }
    int vocab() const { return vocab_; }
    std::size_t rows() const { return ipow(static_cast<std::size_t>(vocab_), arity_); }
    double alpha() const { return alpha_; }
    const std::vector<double>& table() const { return table_; }
    const std::vector<std::size_t>& flagged() const { return flagged_; }
    bool is_flagged(std::size_t row) const;

    std::span<const double> row(std::size_t r) const {
        return {table_.data() + r * static_cast<std::size_t>(vocab_), static_cast<std::size_t>(vocab_)};
    }
    double prob(int y, std::size_t row_idx) const {
        return table_[row_idx * static_cast<std::size_t>(vocab_) + static_cast<std::size_t>(y)];
    }
    double prob(int y, std::span<const int> x) const;

    bool operator==(const Cpt&) const = default;

private:
    int arity_ = 0;
    int vocab_ = 2;
    std::vector<double> table_;
    double alpha_ = 0.0;
    std::vector<std::size_t> flagged_;
};

/// Weighted contingency table over (x, y); weights may be counts or exact masses.
struct CountTable {
    int arity = 0;
    int vocab = 2;
    std::vector<double> weights;

    CountTable() = default;
    CountTable(int arity_, int vocab_);

    std::size_t rows() const { return ipow(static_cast<std::size_t>(vocab), arity); }
    double& at(std::size_t row, int y) { return weights[row * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(y)]; }
    double at(std::size_t row, int y) const { return weights[row * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(y)]; }
    CountTable& operator+=(const CountTable& other);
    double total() const;
};

/// Projected training rows: per row `arity` parent tokens followed by the label.
struct RowSet {
    int arity = 0;
    std::vector<Token> cells;

    std::size_t size() const { return cells.size() / static_cast<std::size_t>(arity + 1); }
    std::span<const Token> x(std::size_t r) const {
        return {cells.data() + r * static_cast<std::size_t>(arity + 1), static_cast<std::size_t>(arity)};
    }
    Token y(std::size_t r) const { return cells[r * static_cast<std::size_t>(arity + 1) + static_cast<std::size_t>(arity)]; }
    void add(std::span<const Token> x, Token y);
};

/// One dataset projected onto (label column; ordered covariate columns).
struct RowMapping {
    const Dataset* data = nullptr;
    int y = 0;
    std::vector<int> x;
};

/// Concatenates the projections; every mapping must have the same arity.
RowSet pool_rows(std::span<const RowMapping> mappings);
RowSet project_rows(const Dataset& data, int y, std::span<const int> x);

CountTable count_rows(const RowSet& rows, int vocab);

/// Smoothed empirical conditional (count + alpha) / (row count + alpha |V|).
/// Rows with zero weight and alpha == 0 are set uniform and flagged.
Cpt fit_cpt(const CountTable& counts, double alpha = kDefaultAlpha);
Cpt fit_cpt(const RowSet& rows, int vocab, double alpha = kDefaultAlpha);

void to_json(nlohmann::json& j, const Cpt& cpt);
void from_json(const nlohmann::json& j, Cpt& cpt);

}  // namespace ctlab
