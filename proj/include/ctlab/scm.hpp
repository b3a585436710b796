#pragma once

// Discrete structural causal models over a shared token vocabulary.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ctlab/error.hpp"

namespace ctlab {

using Token = std::uint8_t;

class Vocabulary {
public:
    explicit Vocabulary(int size);

    int size() const { return size_; }
    bool contains(int token) const { return token >= 0 && token < size_; }
    bool operator==(const Vocabulary&) const = default;

private:
    int size_;
};

enum class OpKind {
    Unif,
    Copy,
    Plus1,
    Minus1,
    Times2,
    Sum,
    Min,
    Max,
    Subtract,
    Mult,
    Mod,
};

int arity_of(OpKind kind);
std::string_view to_string(OpKind kind);
OpKind op_kind_from_string(std::string_view name);

struct NoisyOperator {
    OpKind kind = OpKind::Unif;
    double noise_p = 0.0;

    NoisyOperator() = default;
    NoisyOperator(OpKind k, double p);

    int arity() const { return arity_of(kind); }
    bool operator==(const NoisyOperator&) const = default;
};

/// Randomness consumed by one operator application.
struct NoiseDraw {
    double u = 1.0;  // uniform in [0,1); a flip happens when u < noise_p
    int token = 0;   // uniform replacement token
};

/// Deterministic part of an operator, reduced mod |V|. Not defined for Unif.
int skeleton(OpKind kind, std::span<const int> args, int vocab);

int apply_operator(const NoisyOperator& op, std::span<const int> args, const Vocabulary& vocab,
                   NoiseDraw draw);

/// Explicit P(v | parents, confounder) table; layout [conf][parent row][value].
struct TableMechanism {
    int arity = 0;
    int confounder_states = 1;
    std::vector<double> probs;

    bool operator==(const TableMechanism&) const = default;
};

using Mechanism = std::variant<NoisyOperator, TableMechanism>;

std::string describe(const Mechanism& m);

class CausalDiagram {
public:
    CausalDiagram() = default;
    explicit CausalDiagram(std::vector<std::vector<int>> parents);

    int size() const { return static_cast<int>(parents_.size()); }
    const std::vector<int>& parents(int i) const { return parents_.at(static_cast<std::size_t>(i)); }
    const std::vector<std::vector<int>>& all() const { return parents_; }
    bool operator==(const CausalDiagram&) const = default;

private:
    std::vector<std::vector<int>> parents_;
};

/// Unobserved variable shared by several mechanisms (bow-graph confounding).
struct SharedExogenous {
    std::string name;
    std::vector<double> weights;
};

class Scm {
public:
    Scm(Vocabulary vocab, CausalDiagram diagram, std::vector<Mechanism> mechanisms,
        std::optional<SharedExogenous> confounder = std::nullopt,
        std::vector<std::string> names = {});

    const Vocabulary& vocab() const { return vocab_; }
    int vocab_size() const { return vocab_.size(); }
    int size() const { return diagram_.size(); }
    const CausalDiagram& diagram() const { return diagram_; }
    const std::vector<int>& parents(int i) const { return diagram_.parents(i); }
    const Mechanism& mechanism(int i) const { return mechanisms_.at(static_cast<std::size_t>(i)); }
    const std::optional<SharedExogenous>& confounder() const { return confounder_; }
    int confounder_states() const;
    const std::string& name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
    int index_of(std::string_view name) const;

    /// P(v_i = . | pa_i = parent_row, conf) for all values; parent_row is the
    /// mixed-radix index of the ordered parent values (first parent most significant).
    std::span<const double> kernel_row(int i, std::size_t parent_row, int conf = 0) const;

private:
    Vocabulary vocab_;
    CausalDiagram diagram_;
    std::vector<Mechanism> mechanisms_;
    std::optional<SharedExogenous> confounder_;
    std::vector<std::string> names_;
    std::vector<std::vector<double>> kernels_;
};

/// The sub-SCM on nodes 0..T-1 (parents always precede their children).
Scm prefix_scm(const Scm& scm, int T);

struct DomainCollection {
    std::vector<Scm> sources;
    Scm target;

    DomainCollection(std::vector<Scm> srcs, Scm tgt);
    int num_sources() const { return static_cast<int>(sources.size()); }
    /// Domain d in [0, K) is a source, d == K is the target.
    const Scm& domain(int d) const;
};

std::size_t ipow(std::size_t base, int exp);

/// Mixed-radix index of tokens, first element most significant.
template <typename Seq>
std::size_t row_index(const Seq& values, int vocab) {
    std::size_t idx = 0;
    for (auto v : values) idx = idx * static_cast<std::size_t>(vocab) + static_cast<std::size_t>(v);
    return idx;
}

}  // namespace ctlab
