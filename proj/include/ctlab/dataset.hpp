#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ctlab/scm.hpp"

namespace ctlab {

inline constexpr int kTargetDomain = -1;

/// n x T token matrix drawn from one domain, row-major.
class Dataset {
public:
    Dataset() = default;
    Dataset(int domain_id, int num_vars, int vocab, std::uint64_t seed);

    int domain_id() const { return domain_id_; }
    int num_vars() const { return num_vars_; }
    int vocab() const { return vocab_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t rows() const { return num_vars_ == 0 ? 0 : cells_.size() / static_cast<std::size_t>(num_vars_); }
    bool empty() const { return cells_.empty(); }

    Token at(std::size_t r, int c) const {
        return cells_[r * static_cast<std::size_t>(num_vars_) + static_cast<std::size_t>(c)];
    }
    std::span<const Token> row(std::size_t r) const {
        return {cells_.data() + r * static_cast<std::size_t>(num_vars_), static_cast<std::size_t>(num_vars_)};
    }

    void append(std::span<const Token> row);
    Dataset subset(std::span<const std::size_t> indices) const;
    Dataset head(std::size_t n) const;

private:
    int domain_id_ = kTargetDomain;
    int num_vars_ = 0;
    int vocab_ = 2;
    std::uint64_t seed_ = 0;
    std::vector<Token> cells_;
};

/// Keeps the listed columns in the given order.
Dataset select_columns(const Dataset& data, std::span<const int> columns);

/// Ancestral sampling in causal order; deterministic for a given seed.
Dataset sample_dataset(const Scm& scm, std::size_t n, std::uint64_t seed, int domain_id = kTargetDomain);

/// Seeded shuffle of row indices cut into consecutive parts of the given fractions;
/// the last part takes the remainder.
std::vector<Dataset> split_dataset(const Dataset& data, std::span<const double> fractions, std::uint64_t seed);

void write_csv(std::ostream& os, const Dataset& data);
/// vocab == 0 infers the vocabulary as max token + 1.
Dataset read_csv(std::istream& is, int vocab = 0);

}  // namespace ctlab
