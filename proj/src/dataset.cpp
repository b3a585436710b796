#include "ctlab/dataset.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

namespace ctlab {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

int uniform_token(std::mt19937_64& rng, int vocab) {
    return static_cast<int>(rng() % static_cast<std::uint64_t>(vocab));
}

int draw_categorical(std::span<const double> probs, double u) {
    double acc = 0.0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
        acc += probs[v];
        if (u < acc) return static_cast<int>(v);
    }
    // Rounding can leave u just above the accumulated mass.
    for (std::size_t v = probs.size(); v-- > 0;)
        if (probs[v] > 0.0) return static_cast<int>(v);
    return 0;
}

}  // namespace

Dataset::Dataset(int domain_id, int num_vars, int vocab, std::uint64_t seed)
    : domain_id_(domain_id), num_vars_(num_vars), vocab_(vocab), seed_(seed) {
    require(num_vars >= 1, "dataset needs at least one column");
    require(vocab >= 2 && vocab <= 255, "vocabulary size must lie in [2, 255]");
}

void Dataset::append(std::span<const Token> row) {
    require(static_cast<int>(row.size()) == num_vars_, "row length must equal T");
    for (Token t : row) require(t < vocab_, "token out of vocabulary");
    cells_.insert(cells_.end(), row.begin(), row.end());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out(domain_id_, num_vars_, vocab_, seed_);
    out.cells_.reserve(indices.size() * static_cast<std::size_t>(num_vars_));
    for (std::size_t r : indices) {
        require(r < rows(), "row index out of range");
        auto src = row(r);
        out.cells_.insert(out.cells_.end(), src.begin(), src.end());
    }
    return out;
}

Dataset Dataset::head(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, rows()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return subset(idx);
}

Dataset sample_dataset(const Scm& scm, std::size_t n, std::uint64_t seed, int domain_id) {
    const int T = scm.size();
    const int V = scm.vocab_size();
    Dataset out(domain_id, T, V, seed);
    std::mt19937_64 rng(seed);
    std::vector<Token> row(static_cast<std::size_t>(T));
    std::vector<int> args;
    const auto& conf = scm.confounder();

    for (std::size_t r = 0; r < n; ++r) {
        int c = 0;
        if (conf) c = draw_categorical(conf->weights, uniform01(rng));
        for (int i = 0; i < T; ++i) {
            const auto& pa = scm.parents(i);
            args.resize(pa.size());
            for (std::size_t q = 0; q < pa.size(); ++q) args[q] = row[static_cast<std::size_t>(pa[q])];
            int value = 0;
            if (const auto* op = std::get_if<NoisyOperator>(&scm.mechanism(i))) {
                NoiseDraw draw;
                draw.u = uniform01(rng);
                draw.token = uniform_token(rng, V);
                value = apply_operator(*op, args, scm.vocab(), draw);
            } else {
                value = draw_categorical(scm.kernel_row(i, row_index(args, V), c), uniform01(rng));
            }
            row[static_cast<std::size_t>(i)] = static_cast<Token>(value);
        }
        out.append(row);
    }
    return out;
}

Dataset select_columns(const Dataset& data, std::span<const int> columns) {
    for (int c : columns) require(c >= 0 && c < data.num_vars(), "column out of range");
    Dataset out(data.domain_id(), static_cast<int>(columns.size()), data.vocab(), data.seed());
    std::vector<Token> row(columns.size());
    for (std::size_t r = 0; r < data.rows(); ++r) {
        for (std::size_t k = 0; k < columns.size(); ++k) row[k] = data.at(r, columns[k]);
        out.append(row);
    }
    return out;
}

std::vector<Dataset> split_dataset(const Dataset& data, std::span<const double> fractions, std::uint64_t seed) {
    require(!fractions.empty(), "split needs at least one part");
    std::vector<std::size_t> idx(data.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    // Fisher-Yates with our own index draw so the permutation is library-independent.
    for (std::size_t k = idx.size(); k > 1; --k) {
        const std::size_t j = static_cast<std::size_t>(rng() % k);
        std::swap(idx[k - 1], idx[j]);
    }
    std::vector<Dataset> parts;
    std::size_t begin = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
        std::size_t end = idx.size();
        if (p + 1 < fractions.size()) {
            require(fractions[p] >= 0.0, "split fractions must be nonnegative");
            end = std::min(idx.size(), begin + static_cast<std::size_t>(fractions[p] * static_cast<double>(idx.size())));
        }
        parts.push_back(data.subset(std::span(idx).subspan(begin, end - begin)));
        begin = end;
    }
    return parts;
}

void write_csv(std::ostream& os, const Dataset& data) {
    const std::string domain = data.domain_id() == kTargetDomain ? std::string("*") : std::to_string(data.domain_id());
    os << "domain_id,seed";
    for (int c = 0; c < data.num_vars(); ++c) os << ",v" << (c + 1);
    os << "\r\n";
    for (std::size_t r = 0; r < data.rows(); ++r) {
        os << domain << ',' << data.seed();
        for (int c = 0; c < data.num_vars(); ++c) os << ',' << static_cast<int>(data.at(r, c));
        os << "\r\n";
    }
}

Dataset read_csv(std::istream& is, int vocab) {
    std::string line;
    auto strip = [](std::string& s) {
        while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
    };
    require(static_cast<bool>(std::getline(is, line)), "empty dataset file");
    strip(line);
    require(line.rfind("domain_id,seed,", 0) == 0, "dataset header must start with domain_id,seed");
    const int T = static_cast<int>(std::count(line.begin(), line.end(), ',')) - 1;
    require(T >= 1, "dataset needs at least one token column");

    int domain = kTargetDomain;
    std::uint64_t seed = 0;
    std::vector<Token> cells;
    bool first = true;
    int max_token = 0;
    while (std::getline(is, line)) {
        strip(line);
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell;
        int c = -2;
        while (std::getline(fields, cell, ',')) {
            if (c == -2) {
                const int d = cell == "*" ? kTargetDomain : std::stoi(cell);
                require(first || d == domain, "mixed domain ids in one dataset file");
                domain = d;
            } else if (c == -1) {
                seed = std::stoull(cell);
            } else {
                require(c < T, "too many columns in dataset row");
                const int v = std::stoi(cell);
                require(v >= 0 && v <= 255, "token out of range");
                max_token = std::max(max_token, v);
                cells.push_back(static_cast<Token>(v));
            }
            ++c;
        }
        require(c == T, "too few columns in dataset row");
        first = false;
    }
    if (vocab == 0) vocab = std::max(2, max_token + 1);
    require(max_token < vocab, "token out of vocabulary");
    Dataset out(domain, T, vocab, seed);
    for (std::size_t off = 0; off < cells.size(); off += static_cast<std::size_t>(T))
        out.append(std::span(cells).subspan(off, static_cast<std::size_t>(T)));
    return out;
}

}  // namespace ctlab
