#include "ctlab/cpt.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace ctlab {

namespace {
constexpr double kRowSumTolerance = 1e-10;
}

Cpt::Cpt(int arity, int vocab, std::vector<double> table, double alpha, std::vector<std::size_t> flagged)
    : arity_(arity), vocab_(vocab), table_(std::move(table)), alpha_(alpha), flagged_(std::move(flagged)) {
    require(arity >= 0, "cpt arity must be nonnegative");
    require(vocab >= 2, "cpt vocabulary must have at least two tokens");
    require(table_.size() == rows() * static_cast<std::size_t>(vocab), "cpt table has wrong size");
    for (std::size_t r = 0; r < rows(); ++r) {
        double s = 0.0;
        for (double p : row(r)) {
            require(p >= 0.0, "cpt probabilities must be nonnegative");
            s += p;
        }
        require(std::abs(s - 1.0) <= kRowSumTolerance, "cpt rows must sum to 1");
    }
    std::sort(flagged_.begin(), flagged_.end());
}

Cpt Cpt::uniform(int arity, int vocab, bool flag_rows) {
    const std::size_t rows = ipow(static_cast<std::size_t>(vocab), arity);
    std::vector<double> t(rows * static_cast<std::size_t>(vocab), 1.0 / vocab);
    std::vector<std::size_t> flagged;
    if (flag_rows)
        for (std::size_t r = 0; r < rows; ++r) flagged.push_back(r);
    return Cpt(arity, vocab, std::move(t), 0.0, std::move(flagged));
}

bool Cpt::is_flagged(std::size_t r) const { return std::binary_search(flagged_.begin(), flagged_.end(), r); }

double Cpt::prob(int y, std::span<const int> x) const {
    require(static_cast<int>(x.size()) == arity_, "cpt scope arity mismatch");
    return prob(y, row_index(x, vocab_));
}

CountTable::CountTable(int arity_, int vocab_) : arity(arity_), vocab(vocab_) {
    weights.assign(rows() * static_cast<std::size_t>(vocab), 0.0);
}

CountTable& CountTable::operator+=(const CountTable& other) {
    require(arity == other.arity && vocab == other.vocab, "count tables must share scope shape");
    for (std::size_t k = 0; k < weights.size(); ++k) weights[k] += other.weights[k];
    return *this;
}

double CountTable::total() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

void RowSet::add(std::span<const Token> x, Token y) {
    require(static_cast<int>(x.size()) == arity, "row arity mismatch");
    cells.insert(cells.end(), x.begin(), x.end());
    cells.push_back(y);
}

RowSet project_rows(const Dataset& data, int y, std::span<const int> x) {
    require(y >= 0 && y < data.num_vars(), "label index out of range");
    for (int c : x) require(c >= 0 && c < data.num_vars(), "covariate index out of range");
    RowSet out;
    out.arity = static_cast<int>(x.size());
    out.cells.reserve(data.rows() * (x.size() + 1));
    for (std::size_t r = 0; r < data.rows(); ++r) {
        auto row = data.row(r);
        for (int c : x) out.cells.push_back(row[static_cast<std::size_t>(c)]);
        out.cells.push_back(row[static_cast<std::size_t>(y)]);
    }
    return out;
}

RowSet pool_rows(std::span<const RowMapping> mappings) {
    RowSet out;
    if (mappings.empty()) return out;
    out.arity = static_cast<int>(mappings.front().x.size());
    for (const auto& m : mappings) {
        require(m.data != nullptr, "row mapping without dataset");
        if (static_cast<int>(m.x.size()) != out.arity)
            throw ContractViolation("pooled mappings disagree on arity (" + std::to_string(out.arity) + " vs " +
                                    std::to_string(m.x.size()) + ")");
        RowSet part = project_rows(*m.data, m.y, m.x);
        out.cells.insert(out.cells.end(), part.cells.begin(), part.cells.end());
    }
    return out;
}

CountTable count_rows(const RowSet& rows, int vocab) {
    CountTable counts(rows.arity, vocab);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const Token y = rows.y(r);
        require(y < vocab, "label out of vocabulary");
        counts.at(row_index(rows.x(r), vocab), y) += 1.0;
    }
    return counts;
}

Cpt fit_cpt(const CountTable& counts, double alpha) {
    require(alpha >= 0.0, "smoothing alpha must be nonnegative");
    const std::size_t V = static_cast<std::size_t>(counts.vocab);
    std::vector<double> table(counts.weights.size());
    std::vector<std::size_t> flagged;
    for (std::size_t r = 0; r < counts.rows(); ++r) {
        double n = 0.0;
        for (std::size_t y = 0; y < V; ++y) n += counts.weights[r * V + y];
        const double denom = n + alpha * static_cast<double>(V);
        if (denom <= 0.0) {
            flagged.push_back(r);
            for (std::size_t y = 0; y < V; ++y) table[r * V + y] = 1.0 / static_cast<double>(V);
            continue;
        }
        double s = 0.0;
        for (std::size_t y = 0; y < V; ++y) {
            table[r * V + y] = (counts.weights[r * V + y] + alpha) / denom;
            s += table[r * V + y];
        }
        for (std::size_t y = 0; y < V; ++y) table[r * V + y] /= s;
        if (n <= 0.0) flagged.push_back(r);
    }
    return Cpt(counts.arity, counts.vocab, std::move(table), alpha, std::move(flagged));
}

Cpt fit_cpt(const RowSet& rows, int vocab, double alpha) { return fit_cpt(count_rows(rows, vocab), alpha); }

void to_json(nlohmann::json& j, const Cpt& cpt) {
    auto rows = nlohmann::json::array();
    for (std::size_t r = 0; r < cpt.rows(); ++r) {
        auto span = cpt.row(r);
        rows.push_back(std::vector<double>(span.begin(), span.end()));
    }
    j = nlohmann::json{{"arity", cpt.arity()}, {"vocab", cpt.vocab()}, {"rows", rows},
                       {"alpha", cpt.alpha()}, {"flagged", cpt.flagged()}};
}

void from_json(const nlohmann::json& j, Cpt& cpt) {
    const int arity = j.at("arity").get<int>();
    const int vocab = j.at("vocab").get<int>();
    std::vector<double> table;
    for (const auto& row : j.at("rows")) {
        require(static_cast<int>(row.size()) == vocab, "cpt json row has wrong length");
        for (const auto& p : row) table.push_back(p.get<double>());
    }
    cpt = Cpt(arity, vocab, std::move(table), j.value("alpha", 0.0),
              j.value("flagged", std::vector<std::size_t>{}));
}

}  // namespace ctlab
