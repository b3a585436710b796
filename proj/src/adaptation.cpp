#include "ctlab/adaptation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "ctlab/error.hpp"
#include "ctlab/risk.hpp"

namespace ctlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sources from any FamilySource, target counts from a dataset.
class StackedFamilies final : public FamilySource {
public:
    StackedFamilies(const FamilySource& sources, const Dataset& target)
        : sources_(&sources), target_({&target}) {
        require(sources.num_domains() == 0 || sources.vocab() == target.vocab(), "source and target vocabularies differ");
    }
    int vocab() const override { return target_.vocab(); }
    int num_domains() const override { return sources_->num_domains() + 1; }
    int domain_size(int d) const override {
        return d == sources_->num_domains() ? target_.domain_size(0) : sources_->domain_size(d);
    }
    CountTable family(int d, int position, std::span<const int> parents) const override {
        return d == sources_->num_domains() ? target_.family(0, position, parents)
                                            : sources_->family(d, position, parents);
    }

private:
    const FamilySource* sources_;
    DataFamilies target_;
};

std::vector<int> recency_parents(int i, int max_parents) {
    std::vector<int> pa;
    for (int p = std::max(0, i - max_parents); p < i; ++p) pa.push_back(p);
    return pa;
}

// Ordered tuples of distinct earlier positions, by length then lexicographically.
std::vector<std::vector<int>> parent_options(int i, int max_parents) {
    std::vector<std::vector<int>> out{{}};
    std::vector<std::vector<int>> frontier{{}};
    for (int len = 1; len <= std::min(max_parents, i); ++len) {
        std::vector<std::vector<int>> next;
        for (const auto& t : frontier)
            for (int p = 0; p < i; ++p)
                if (std::find(t.begin(), t.end(), p) == t.end()) {
                    auto u = t;
                    u.push_back(p);
                    next.push_back(std::move(u));
                }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// log Bell(n) via the Bell triangle in log space.
double log_bell(int n) {
    if (n <= 1) return 0.0;
    std::vector<double> row{0.0};
    for (int i = 1; i < n; ++i) {
        std::vector<double> next{row.back()};
        for (double v : row) next.push_back(log_add(next.back(), v));
        row = std::move(next);
    }
    return row.back();
}

// Some target position >= M pools sites whose parent arities disagree.
bool mixes_arity(const StructureHypothesis& h, int prefix_len) {
    const int K = h.oracle.target_domain();
    const auto& target = h.diagrams.back();
    for (int i = prefix_len; i < target.size(); ++i) {
        const std::size_t arity = target.parents(i).size();
        for (const Site& s : h.oracle.matches({i, K}))
            if (h.diagrams[static_cast<std::size_t>(s.domain)].parents(s.position).size() != arity) return true;
    }
    return false;
}

std::vector<int> subset_of(std::size_t mask, int K) {
    std::vector<int> out;
    for (int j = 0; j < K; ++j)
        if (mask >> j & 1u) out.push_back(j);
    return out;
}

}  // namespace

std::vector<int> StructureHypothesis::diagram_encoding() const {
    std::vector<int> out;
    for (const auto& d : diagrams)
        for (const auto& pa : d.all()) {
            out.push_back(static_cast<int>(pa.size()));
            out.insert(out.end(), pa.begin(), pa.end());
        }
    return out;
}

bool StructureHypothesis::precedes(const StructureHypothesis& other) const {
    const auto a = oracle.encoding(), b = other.oracle.encoding();
    if (a != b) return a < b;
    return diagram_encoding() < other.diagram_encoding();
}

void to_json(nlohmann::json& j, const StructureHypothesis& h) {
    auto diagrams = nlohmann::json::array();
    for (const auto& d : h.diagrams) diagrams.push_back(d.all());
    j = {{"label", h.label}, {"classes", h.oracle.classes()}, {"diagrams", diagrams}};
}

void from_json(const nlohmann::json& j, StructureHypothesis& h) {
    try {
        h.label = j.value("label", std::string{});
        h.oracle = DiscrepancyOracle(j.at("classes").get<std::vector<std::vector<int>>>());
        h.diagrams.clear();
        for (const auto& d : j.at("diagrams")) h.diagrams.emplace_back(d.get<std::vector<std::vector<int>>>());
    } catch (const nlohmann::json::exception& e) {
        throw ContractViolation(std::string("malformed structure hypothesis: ") + e.what());
    }
    require(static_cast<int>(h.diagrams.size()) == h.oracle.num_domains(), "one diagram per domain");
    for (int d = 0; d < h.oracle.num_domains(); ++d)
        require(h.diagrams[static_cast<std::size_t>(d)].size() == h.oracle.domain_size(d),
                "diagram size differs from the partition");
}

StructureHypothesis true_structure(const DomainCollection& domains) {
    StructureHypothesis h{induced_discrepancy_oracle(domains), {}, "true"};
    for (int d = 0; d <= domains.num_sources(); ++d) h.diagrams.push_back(domains.domain(d).diagram());
    return h;
}

StructureHypothesis no_transport_hypothesis(std::span<const int> domain_sizes, int max_parents) {
    std::vector<std::vector<int>> classes;
    StructureHypothesis h;
    int next = 0;
    for (int T : domain_sizes) {
        std::vector<int> c(static_cast<std::size_t>(T));
        std::vector<std::vector<int>> pa;
        for (int i = 0; i < T; ++i) {
            c[static_cast<std::size_t>(i)] = next++;
            pa.push_back(recency_parents(i, max_parents));
        }
        classes.push_back(std::move(c));
        h.diagrams.emplace_back(std::move(pa));
    }
    h.oracle = DiscrepancyOracle(std::move(classes));
    h.label = "no-transport";
    return h;
}

std::size_t parent_choices(int i, int max_parents) {
    std::size_t total = 0, falling = 1;
    for (int k = 0; k <= std::min(i, max_parents); ++k) {
        total += falling;
        falling *= static_cast<std::size_t>(i - k);
    }
    return total;
}

double HypothesisCount::excess_bound(double n) const {
    require(n > 0, "sample size must be positive");
    return std::sqrt(log_count / n);
}

HypothesisCount hypothesis_count(int max_parents, std::span<const int> domain_sizes) {
    require(max_parents >= 0, "max_parents must be nonnegative");
    int sites = 0;
    double log_count = 0.0;
    for (int T : domain_sizes) {
        sites += T;
        for (int i = 0; i < T; ++i) log_count += std::log(static_cast<double>(parent_choices(i, max_parents)));
    }
    log_count += log_bell(sites);
    return {std::exp(log_count), log_count};
}

std::vector<StructureHypothesis> enumerate_structures(const SearchConfig& config, std::span<const int> domain_sizes) {
    require(config.partition_cap >= 1 && config.diagram_cap >= 1, "caps must be at least 1");
    require(config.max_parents >= 0, "max_parents must be nonnegative");
    if (!config.candidates.empty()) {
        std::vector<StructureHypothesis> out = config.candidates;
        out.push_back(no_transport_hypothesis(domain_sizes, config.max_parents));
        return out;
    }
    int sites = 0;
    double log_diagrams = 0.0;
    for (int T : domain_sizes) {
        sites += T;
        for (int i = 0; i < T; ++i) log_diagrams += std::log(static_cast<double>(parent_choices(i, config.max_parents)));
    }
    const double partitions = std::round(std::exp(log_bell(sites)));
    const double diagrams = std::round(std::exp(log_diagrams));
    if (partitions > static_cast<double>(config.partition_cap) || diagrams > static_cast<double>(config.diagram_cap))
        throw BudgetExceeded("structure enumeration needs " + nlohmann::json(partitions).dump() + " partitions x " +
                             nlohmann::json(diagrams).dump() + " diagram sets; raise the caps or give candidates");

    // Diagram sets as a mixed-radix counter over (domain, node) options.
    std::vector<std::vector<std::vector<int>>> options;
    std::vector<std::pair<int, int>> slot;
    for (std::size_t d = 0; d < domain_sizes.size(); ++d)
        for (int i = 0; i < domain_sizes[d]; ++i) {
            options.push_back(parent_options(i, config.max_parents));
            slot.emplace_back(static_cast<int>(d), i);
        }
    std::vector<std::vector<CausalDiagram>> diagram_sets;
    std::vector<std::size_t> digit(options.size(), 0);
    while (true) {
        std::vector<std::vector<std::vector<int>>> pa(domain_sizes.size());
        for (std::size_t k = 0; k < options.size(); ++k)
            pa[static_cast<std::size_t>(slot[k].first)].push_back(options[k][digit[k]]);
        std::vector<CausalDiagram> set;
        for (auto& p : pa) set.emplace_back(std::move(p));
        diagram_sets.push_back(std::move(set));
        std::size_t k = options.size();
        while (k > 0 && ++digit[k - 1] == options[k - 1].size()) digit[--k] = 0;
        if (k == 0) break;
    }

    // Restricted-growth strings over sites in (domain, position) order.
    std::vector<StructureHypothesis> out;
    std::vector<int> rgs(static_cast<std::size_t>(sites), 0), maxp(static_cast<std::size_t>(sites), 0);
    while (true) {
        std::vector<std::vector<int>> classes;
        std::size_t k = 0;
        for (int T : domain_sizes) {
            classes.emplace_back(rgs.begin() + static_cast<std::ptrdiff_t>(k), rgs.begin() + static_cast<std::ptrdiff_t>(k + static_cast<std::size_t>(T)));
            k += static_cast<std::size_t>(T);
        }
        const DiscrepancyOracle oracle(classes);
        for (const auto& ds : diagram_sets) out.push_back({oracle, ds, {}});
        int pos = sites - 1;
        while (pos > 0 && rgs[static_cast<std::size_t>(pos)] == maxp[static_cast<std::size_t>(pos - 1)] + 1) --pos;
        if (pos <= 0) break;
        ++rgs[static_cast<std::size_t>(pos)];
        for (int q = pos; q < sites; ++q) {
            if (q > pos) rgs[static_cast<std::size_t>(q)] = 0;
            maxp[static_cast<std::size_t>(q)] =
                std::max(q > 0 ? maxp[static_cast<std::size_t>(q - 1)] : 0, rgs[static_cast<std::size_t>(q)]);
        }
    }
    return out;
}

std::vector<int> target_view_columns(int target_width, int target_size) {
    require(target_size >= 1 && target_size <= target_width, "T* must lie in [1, T]");
    std::vector<int> cols(static_cast<std::size_t>(target_size - 1));
    std::iota(cols.begin(), cols.end(), 0);
    cols.push_back(target_width - 1);
    return cols;
}

SelectionResult circuit_ad(const FamilySource& sources, const Dataset& target, const SearchConfig& config) {
    require(config.holdout > 0.0 && config.holdout < 1.0, "holdout fraction must lie in (0, 1)");
    require(target.rows() >= 2, "circuit-AD needs at least two target rows");
    const int K = sources.num_domains();
    const int Tstar = config.target_size > 0 ? config.target_size : target.num_vars();
    require(config.prefix_len >= 0 && config.prefix_len < Tstar, "prefix must leave the query inside T*");
    const auto cols = target_view_columns(target.num_vars(), Tstar);
    const Dataset view = select_columns(target, cols);
    const double fractions[] = {1.0 - config.holdout, config.holdout};
    const auto parts = split_dataset(view, fractions, config.split_seed);
    require(parts[0].rows() > 0 && parts[1].rows() > 0, "both halves of the split need rows");
    const StackedFamilies families(sources, parts[0]);

    std::vector<int> sizes;
    for (int d = 0; d < K; ++d) sizes.push_back(sources.domain_size(d));
    sizes.push_back(Tstar);
    const auto hyps = enumerate_structures(config, sizes);
    require(!hyps.empty(), "empty candidate stream");
    for (const auto& h : hyps) {
        require(h.oracle.num_domains() == K + 1, "hypothesis domain count differs from the data");
        require(h.diagrams.back().size() == Tstar, "hypothesis target size differs from T*");
    }

    std::vector<CandidateScore> scores(hyps.size());
    auto score = [&](std::size_t k) {
        const auto& h = hyps[k];
        CandidateScore& s = scores[k];
        s.label = h.label;
        s.partition = h.oracle.encoding();
        if (mixes_arity(h, config.prefix_len)) {
            s.valid = false;
            s.nll = kInf;
            return;
        }
        const auto res = circuit_tr(families, h.oracle, h.diagrams, config.prefix_len, config.transport);
        s.nll = nll_risk(res.predictor, parts[1]);
    };
    const int jobs = std::max(1, std::min<int>(config.jobs, static_cast<int>(hyps.size())));
    if (jobs == 1) {
        for (std::size_t k = 0; k < hyps.size(); ++k) score(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k; (k = next++) < hyps.size();) score(k);
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::size_t best = 0;
    for (std::size_t k = 1; k < hyps.size(); ++k) {
        if (scores[k].nll < scores[best].nll ||
            (scores[k].nll == scores[best].nll && hyps[k].precedes(hyps[best])))
            best = k;
    }
    require(scores[best].valid, "no candidate hypothesis is usable");

    SelectionResult out;
    out.predictor = circuit_tr(families, hyps[best].oracle, hyps[best].diagrams, config.prefix_len, config.transport).predictor;
    out.chosen = hyps[best];
    out.chosen_index = best;
    out.scores = std::move(scores);
    out.count = static_cast<double>(hyps.size());
    out.log_count = std::log(out.count);
    out.train_rows = parts[0].rows();
    out.test_rows = parts[1].rows();
    return out;
}

SelectionResult circuit_ad(const std::vector<Dataset>& sources, const Dataset& target, const SearchConfig& config) {
    if (sources.empty()) {
        // No sources: a FamilySource with zero domains.
        struct Empty final : FamilySource {
            int v;
            explicit Empty(int vocab) : v(vocab) {}
            int vocab() const override { return v; }
            int num_domains() const override { return 0; }
            int domain_size(int) const override { throw ContractViolation("no source domains"); }
            CountTable family(int, int, std::span<const int>) const override { throw ContractViolation("no source domains"); }
        } empty(target.vocab());
        return circuit_ad(empty, target, config);
    }
    std::vector<const Dataset*> ptrs;
    for (const auto& d : sources) ptrs.push_back(&d);
    return circuit_ad(DataFamilies(ptrs), target, config);
}

std::vector<StructureHypothesis> module_hypotheses(const StructureHypothesis& sources_truth, int prefix_len,
                                                   int max_parents) {
    const int K = sources_truth.oracle.target_domain();
    require(prefix_len >= 0, "prefix length must be nonnegative");
    std::vector<std::vector<int>> source_classes;
    std::map<int, std::size_t> class_arity;  // first-seen arity per source class
    for (int d = 0; d < K; ++d) {
        std::vector<int> c;
        for (int i = 0; i < sources_truth.oracle.domain_size(d); ++i) {
            const int id = sources_truth.oracle.class_of({i, d});
            c.push_back(id);
            class_arity.try_emplace(id, sources_truth.diagrams[static_cast<std::size_t>(d)].parents(i).size());
        }
        source_classes.push_back(std::move(c));
    }
    const int fresh = sources_truth.oracle.num_classes();
    std::vector<std::vector<int>> prefix_parents;
    std::vector<int> target_classes;
    for (int i = 0; i < prefix_len; ++i) {
        prefix_parents.push_back(recency_parents(i, max_parents));
        target_classes.push_back(fresh + 1 + i);
    }
    std::vector<StructureHypothesis> out;
    for (const auto& pa : parent_options(prefix_len, max_parents)) {
        std::vector<int> choices{fresh};
        for (const auto& [id, arity] : class_arity)
            if (arity == pa.size()) choices.push_back(id);
        for (int c : choices) {
            auto classes = source_classes;
            auto tc = target_classes;
            tc.push_back(c);
            classes.push_back(std::move(tc));
            auto diagrams = std::vector<CausalDiagram>(sources_truth.diagrams.begin(), sources_truth.diagrams.begin() + K);
            auto tp = prefix_parents;
            tp.push_back(pa);
            diagrams.emplace_back(std::move(tp));
            std::string label = "module:pa=" + nlohmann::json(pa).dump() + ",class=" + (c == fresh ? "new" : std::to_string(c));
            out.push_back({DiscrepancyOracle(std::move(classes)), std::move(diagrams), std::move(label)});
        }
    }
    return out;
}

nlohmann::json selection_json(const SelectionResult& r) {
    auto cands = nlohmann::json::array();
    for (const auto& s : r.scores) {
        nlohmann::json c{{"label", s.label}, {"partition", s.partition}, {"valid", s.valid}};
        c["heldout_nll"] = std::isfinite(s.nll) ? nlohmann::json(s.nll) : nlohmann::json(nullptr);
        cands.push_back(std::move(c));
    }
    return {{"chosen", r.chosen},
            {"chosen_index", r.chosen_index},
            {"hypotheses", r.count},
            {"log_hypotheses", r.log_count},
            {"train_rows", r.train_rows},
            {"test_rows", r.test_rows},
            {"candidates", cands}};
}

SimpleAdResult simple_ad(const std::vector<Dataset>& sources, const Dataset& target, std::uint64_t split_seed,
                         double alpha) {
    const int K = static_cast<int>(sources.size());
    require(K >= 1, "simple-AD needs at least one source");
    require(K < 20, "too many sources for subset enumeration");
    require(target.rows() >= 2, "simple-AD needs at least two target rows");
    const int T = target.num_vars();
    for (const auto& s : sources) require(s.num_vars() == T, "simple-AD datasets must share the (X, Y) layout");
    const double half[] = {0.5, 0.5};
    const auto parts = split_dataset(target, half, split_seed);
    std::vector<int> x(static_cast<std::size_t>(T - 1));
    std::iota(x.begin(), x.end(), 0);
    const RowSet test = project_rows(parts[1], T - 1, x);

    SimpleAdResult out;
    out.count = std::size_t{1} << K;
    double best_nll = kInf;
    for (std::size_t mask = 0; mask < out.count; ++mask) {
        const auto subset = subset_of(mask, K);
        std::vector<RowMapping> maps;
        for (int j : subset) maps.push_back({&sources[static_cast<std::size_t>(j)], T - 1, x});
        maps.push_back({&parts[0], T - 1, x});
        Cpt psi = fit_cpt(pool_rows(maps), target.vocab(), alpha);
        const double nll = nll_risk(psi, test);
        out.scores.emplace_back(subset, nll);
        if (nll < best_nll || (nll == best_nll && subset < out.pooled)) {
            best_nll = nll;
            out.pooled = subset;
            out.psi = std::move(psi);
        }
    }
    return out;
}

CircuitPredictor erm_pool(const std::vector<const Dataset*>& datasets, int prefix_len, double alpha) {
    require(!datasets.empty(), "need at least one dataset");
    std::vector<int> x(static_cast<std::size_t>(prefix_len));
    std::iota(x.begin(), x.end(), 0);
    std::vector<RowMapping> maps;
    for (const auto* d : datasets) {
        require(d->num_vars() > prefix_len, "dataset does not cover the prefix and query");
        maps.push_back({d, d->num_vars() - 1, x});
    }
    const int V = datasets.front()->vocab();
    Cpt cpt = fit_cpt(pool_rows(maps), V, alpha);
    return CircuitPredictor(V, prefix_len, {{prefix_len, x, std::move(cpt)}},
                            std::max(prefix_len, kDefaultFrontierWidth));
}

RegimeReport regime_report(double circuit_size, double n, double num_sources) {
    require(circuit_size >= 1 && n >= 1 && num_sources >= 1, "regime report needs L, n, K >= 1");
    const double threshold = std::cbrt(n / num_sources);
    return {circuit_size <= threshold, threshold};
}

}  // namespace ctlab
