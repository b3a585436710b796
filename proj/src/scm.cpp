#include "ctlab/scm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>

namespace ctlab {

namespace {

constexpr double kSumTolerance = 1e-12;

struct OpName {
    OpKind kind;
    std::string_view name;
    int arity;
};

constexpr std::array<OpName, 11> kOps{{
    {OpKind::Unif, "unif", 0},
    {OpKind::Copy, "copy", 1},
    {OpKind::Plus1, "plus1", 1},
    {OpKind::Minus1, "minus1", 1},
    {OpKind::Times2, "times2", 1},
    {OpKind::Sum, "sum", 2},
    {OpKind::Min, "min", 2},
    {OpKind::Max, "max", 2},
    {OpKind::Subtract, "subtract", 2},
    {OpKind::Mult, "mult", 2},
    {OpKind::Mod, "mod", 2},
}};

int wrap(long value, int vocab) {
    long r = value % vocab;
    return static_cast<int>(r < 0 ? r + vocab : r);
}

}  // namespace

std::size_t table_budget() {
    if (const char* env = std::getenv("CTLAB_BUDGET")) {
        char* end = nullptr;
        const double v = std::strtod(env, &end);
        if (end != env && v >= 1.0) return static_cast<std::size_t>(v);
    }
    return 100'000'000;
}

Vocabulary::Vocabulary(int size) : size_(size) {
    require(size >= 2 && size <= 255, "vocabulary size must lie in [2, 255]");
}

int arity_of(OpKind kind) {
    for (const auto& op : kOps)
        if (op.kind == kind) return op.arity;
    throw ContractViolation("unknown operator kind");
}

std::string_view to_string(OpKind kind) {
    for (const auto& op : kOps)
        if (op.kind == kind) return op.name;
    throw ContractViolation("unknown operator kind");
}

OpKind op_kind_from_string(std::string_view name) {
    for (const auto& op : kOps)
        if (op.name == name) return op.kind;
    // Aliases used in figures.
    if (name == "x2" || name == "double") return OpKind::Times2;
    if (name == "-" || name == "sub") return OpKind::Subtract;
    if (name == "+1") return OpKind::Plus1;
    if (name == "-1") return OpKind::Minus1;
    throw ContractViolation("unknown operator: " + std::string(name));
}

NoisyOperator::NoisyOperator(OpKind k, double p) : kind(k), noise_p(p) {
    require(p >= 0.0 && p <= 1.0, "noise_p must lie in [0,1]");
}

int skeleton(OpKind kind, std::span<const int> args, int vocab) {
    require(static_cast<int>(args.size()) == arity_of(kind), "operator arity mismatch");
    const long a = args.empty() ? 0 : args[0];
    const long b = args.size() < 2 ? 0 : args[1];
    switch (kind) {
    case OpKind::Unif: throw ContractViolation("unif has no skeleton");
    case OpKind::Copy: return wrap(a, vocab);
    case OpKind::Plus1: return wrap(a + 1, vocab);
    case OpKind::Minus1: return wrap(a - 1, vocab);
    case OpKind::Times2: return wrap(2 * a, vocab);
    case OpKind::Sum: return wrap(a + b, vocab);
    case OpKind::Min: return wrap(std::min(a, b), vocab);
    case OpKind::Max: return wrap(std::max(a, b), vocab);
    case OpKind::Subtract: return wrap(a - b, vocab);
    case OpKind::Mult: return wrap(a * b, vocab);
    case OpKind::Mod: return wrap(b == 0 ? a : a % b, vocab);
    }
    throw ContractViolation("unknown operator kind");
}

int apply_operator(const NoisyOperator& op, std::span<const int> args, const Vocabulary& vocab,
                   NoiseDraw draw) {
    require(static_cast<int>(args.size()) == op.arity(), "operator arity mismatch");
    for (int t : args) require(vocab.contains(t), "operator argument out of vocabulary");
    require(vocab.contains(draw.token), "noise token out of vocabulary");
    if (op.kind == OpKind::Unif || draw.u < op.noise_p) return draw.token;
    return skeleton(op.kind, args, vocab.size());
}

std::string describe(const Mechanism& m) {
    if (const auto* op = std::get_if<NoisyOperator>(&m)) {
        std::ostringstream os;
        os << to_string(op->kind) << "(p=" << op->noise_p << ")";
        return os.str();
    }
    const auto& t = std::get<TableMechanism>(m);
    return "table(arity=" + std::to_string(t.arity) + ")";
}

CausalDiagram::CausalDiagram(std::vector<std::vector<int>> parents) : parents_(std::move(parents)) {
    for (std::size_t i = 0; i < parents_.size(); ++i) {
        std::set<int> seen;
        for (int p : parents_[i]) {
            require(p >= 0 && p < static_cast<int>(i), "parents must precede their child in causal order");
            require(seen.insert(p).second, "duplicate parent");
        }
    }
}

std::size_t ipow(std::size_t base, int exp) {
    std::size_t r = 1;
    for (int k = 0; k < exp; ++k) r *= base;
    return r;
}

Scm::Scm(Vocabulary vocab, CausalDiagram diagram, std::vector<Mechanism> mechanisms,
         std::optional<SharedExogenous> confounder, std::vector<std::string> names)
    : vocab_(vocab),
      diagram_(std::move(diagram)),
      mechanisms_(std::move(mechanisms)),
      confounder_(std::move(confounder)),
      names_(std::move(names)) {
    const int T = diagram_.size();
    require(T >= 1, "an SCM needs at least one variable");
    require(static_cast<int>(mechanisms_.size()) == T, "one mechanism per variable");
    if (names_.empty())
        for (int i = 0; i < T; ++i) names_.push_back("V" + std::to_string(i + 1));
    require(static_cast<int>(names_.size()) == T, "one name per variable");

    if (confounder_) {
        require(!confounder_->weights.empty(), "confounder needs at least one state");
        double s = 0.0;
        for (double w : confounder_->weights) {
            require(w >= 0.0, "confounder weights must be nonnegative");
            s += w;
        }
        require(std::abs(s - 1.0) <= kSumTolerance, "confounder weights must sum to 1");
    }
    const int conf = confounder_states();
    const int V = vocab_.size();

    kernels_.resize(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        const int a = static_cast<int>(diagram_.parents(i).size());
        const std::size_t rows = ipow(static_cast<std::size_t>(V), a);
        auto& k = kernels_[static_cast<std::size_t>(i)];
        if (const auto* op = std::get_if<NoisyOperator>(&mechanisms_[static_cast<std::size_t>(i)])) {
            require(op->arity() == a, "mechanism arity must equal parent count at " + names_[static_cast<std::size_t>(i)]);
            k.assign(static_cast<std::size_t>(conf) * rows * static_cast<std::size_t>(V), 0.0);
            std::vector<int> args(static_cast<std::size_t>(a));
            for (std::size_t r = 0; r < rows; ++r) {
                std::size_t rem = r;
                for (int q = a - 1; q >= 0; --q) {
                    args[static_cast<std::size_t>(q)] = static_cast<int>(rem % static_cast<std::size_t>(V));
                    rem /= static_cast<std::size_t>(V);
                }
                std::vector<double> row(static_cast<std::size_t>(V), 0.0);
                if (op->kind == OpKind::Unif) {
                    std::fill(row.begin(), row.end(), 1.0 / V);
                } else {
                    for (auto& x : row) x = op->noise_p / V;
                    row[static_cast<std::size_t>(skeleton(op->kind, args, V))] += 1.0 - op->noise_p;
                }
                for (int c = 0; c < conf; ++c)
                    std::copy(row.begin(), row.end(),
                              k.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(c) * rows + r) * static_cast<std::size_t>(V)));
            }
        } else {
            const auto& t = std::get<TableMechanism>(mechanisms_[static_cast<std::size_t>(i)]);
            require(t.arity == a, "mechanism arity must equal parent count at " + names_[static_cast<std::size_t>(i)]);
            require(t.confounder_states == 1 || t.confounder_states == conf,
                    "table mechanism confounder states mismatch");
            const std::size_t per_conf = rows * static_cast<std::size_t>(V);
            require(t.probs.size() == per_conf * static_cast<std::size_t>(t.confounder_states),
                    "table mechanism has wrong size");
            for (std::size_t r = 0; r < rows * static_cast<std::size_t>(t.confounder_states); ++r) {
                double s = 0.0;
                for (int v = 0; v < V; ++v) {
                    const double p = t.probs[r * static_cast<std::size_t>(V) + static_cast<std::size_t>(v)];
                    require(p >= 0.0, "table probabilities must be nonnegative");
                    s += p;
                }
                require(std::abs(s - 1.0) <= kSumTolerance, "table mechanism rows must sum to 1");
            }
            k.resize(static_cast<std::size_t>(conf) * per_conf);
            for (int c = 0; c < conf; ++c) {
                const std::size_t src = t.confounder_states == 1 ? 0 : static_cast<std::size_t>(c);
                std::copy(t.probs.begin() + static_cast<std::ptrdiff_t>(src * per_conf),
                          t.probs.begin() + static_cast<std::ptrdiff_t>((src + 1) * per_conf),
                          k.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(c) * per_conf));
            }
        }
    }
}

int Scm::confounder_states() const {
    return confounder_ ? static_cast<int>(confounder_->weights.size()) : 1;
}

int Scm::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    throw ContractViolation("no variable named " + std::string(name));
}

std::span<const double> Scm::kernel_row(int i, std::size_t parent_row, int conf) const {
    const auto& k = kernels_.at(static_cast<std::size_t>(i));
    const std::size_t V = static_cast<std::size_t>(vocab_.size());
    const std::size_t rows = ipow(V, static_cast<int>(parents(i).size()));
    const std::size_t off = (static_cast<std::size_t>(conf) * rows + parent_row) * V;
    return {k.data() + off, V};
}

DomainCollection::DomainCollection(std::vector<Scm> srcs, Scm tgt)
    : sources(std::move(srcs)), target(std::move(tgt)) {
    require(!sources.empty(), "at least one source domain is required");
    for (const auto& s : sources)
        require(s.vocab() == target.vocab(), "all domains must share the vocabulary");
}

const Scm& DomainCollection::domain(int d) const {
    if (d == num_sources()) return target;
    require(d >= 0 && d < num_sources(), "domain index out of range");
    return sources[static_cast<std::size_t>(d)];
}

}  // namespace ctlab

namespace ctlab {

Scm prefix_scm(const Scm& scm, int T) {
    require(T >= 1 && T <= scm.size(), "prefix length out of range");
    std::vector<std::vector<int>> parents;
    std::vector<Mechanism> mechs;
    std::vector<std::string> names;
    for (int i = 0; i < T; ++i) {
        parents.push_back(scm.parents(i));
        mechs.push_back(scm.mechanism(i));
        names.push_back(scm.name(i));
    }
    return Scm(scm.vocab(), CausalDiagram(std::move(parents)), std::move(mechs), scm.confounder(), std::move(names));
}

}  // namespace ctlab
