#include "ctlab/transport.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace ctlab {

DataFamilies::DataFamilies(std::vector<const Dataset*> datasets) : data_(std::move(datasets)) {
    require(!data_.empty(), "need at least one dataset");
    for (const auto* d : data_) require(d != nullptr, "null dataset");
    vocab_ = data_.front()->vocab();
    for (const auto* d : data_) require(d->vocab() == vocab_, "datasets disagree on vocabulary");
}

int DataFamilies::domain_size(int d) const { return data_.at(static_cast<std::size_t>(d))->num_vars(); }

CountTable DataFamilies::family(int domain, int position, std::span<const int> parents) const {
    auto key = std::make_tuple(domain, position, std::vector<int>(parents.begin(), parents.end()));
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    CountTable t = count_rows(project_rows(dataset(domain), position, parents), vocab_);
    std::lock_guard lock(mu_);
    return cache_.emplace(std::move(key), std::move(t)).first->second;
}

ExactFamilies::ExactFamilies(std::vector<JointTable> joints, std::vector<double> weights)
    : joints_(std::move(joints)), weights_(std::move(weights)) {
    require(!joints_.empty(), "need at least one joint");
    if (weights_.empty()) weights_.assign(joints_.size(), 1.0);
    require(weights_.size() == joints_.size(), "one weight per joint");
}

CountTable ExactFamilies::family(int domain, int position, std::span<const int> parents) const {
    const JointTable& joint = joints_.at(static_cast<std::size_t>(domain));
    std::vector<int> vars(parents.begin(), parents.end());
    vars.push_back(position);
    CountTable t(static_cast<int>(parents.size()), joint.vocab());
    t.weights = joint.marginal(vars);
    for (double& w : t.weights) w *= weights_[static_cast<std::size_t>(domain)];
    return t;
}

ExactFamilies exact_families(const DomainCollection& domains) {
    std::vector<JointTable> joints;
    for (int d = 0; d <= domains.num_sources(); ++d) joints.push_back(exact_joint(domains.domain(d)));
    return ExactFamilies(std::move(joints));
}

Cpt simple_tr(const std::vector<Dataset>& sources, const Dataset& target, const DeltaSets& delta, double alpha) {
    require(delta.size() == sources.size(), "one discrepancy set per source");
    const int T = target.num_vars();
    require(T >= 1, "simple-TR needs a label column");
    std::vector<int> x(static_cast<std::size_t>(T - 1));
    for (int c = 0; c < T - 1; ++c) x[static_cast<std::size_t>(c)] = c;
    std::vector<RowMapping> maps;
    for (std::size_t j = 0; j < sources.size(); ++j) {
        require(sources[j].num_vars() == T, "simple-TR datasets must share the (X, Y) layout");
        if (!delta[j].count(T - 1)) maps.push_back({&sources[j], T - 1, x});
    }
    maps.push_back({&target, T - 1, x});
    return fit_cpt(pool_rows(maps), target.vocab(), alpha);
}

Cpt module_tr(const FamilySource& families, const DeltaSets& delta, const std::vector<ModuleScope>& scopes,
              double alpha) {
    const int K = families.num_domains() - 1;
    require(static_cast<int>(scopes.size()) == K + 1, "one module scope per domain");
    require(static_cast<int>(delta.size()) == K, "one discrepancy set per source");
    const ModuleScope& tgt = scopes.back();
    CountTable acc(static_cast<int>(tgt.parents.size()), families.vocab());
    for (int j = 0; j < K; ++j) {
        const ModuleScope& s = scopes[static_cast<std::size_t>(j)];
        if (delta[static_cast<std::size_t>(j)].count(s.label)) continue;
        if (s.parents.size() != tgt.parents.size())
            throw ContractViolation("module scopes disagree on arity for pooled source " + std::to_string(j));
        acc += families.family(j, s.label, s.parents);
    }
    acc += families.family(K, tgt.label, tgt.parents);
    return fit_cpt(acc, alpha);
}

Cpt module_tr(const std::vector<Dataset>& datasets, const DeltaSets& delta, const std::vector<ModuleScope>& scopes,
              double alpha) {
    std::vector<const Dataset*> ptrs;
    for (const auto& d : datasets) ptrs.push_back(&d);
    return module_tr(DataFamilies(ptrs), delta, scopes, alpha);
}

std::vector<Site> pooled_sites(int position, const DiscrepancyOracle& oracle,
                               const std::vector<CausalDiagram>& diagrams) {
    require(static_cast<int>(diagrams.size()) == oracle.num_domains(), "one diagram per domain");
    for (int d = 0; d < oracle.num_domains(); ++d)
        require(diagrams[static_cast<std::size_t>(d)].size() == oracle.domain_size(d),
                "diagram size differs from the oracle's domain size");
    const int target = oracle.target_domain();
    const Site self{position, target};
    const std::size_t arity = diagrams.back().parents(position).size();
    std::vector<Site> sites{self};
    for (const Site& s : oracle.matches(self)) {
        if (diagrams[static_cast<std::size_t>(s.domain)].parents(s.position).size() != arity)
            throw ContractViolation("discrepancy class of target position " + std::to_string(position) +
                                    " mixes parent arities");
        sites.push_back(s);
    }
    return sites;
}

RowSet pooled_data_for_position(int position, const std::vector<const Dataset*>& datasets,
                                const DiscrepancyOracle& oracle, const std::vector<CausalDiagram>& diagrams) {
    std::vector<RowMapping> maps;
    for (const Site& s : pooled_sites(position, oracle, diagrams)) {
        const Dataset* d = datasets.at(static_cast<std::size_t>(s.domain));
        require(d->num_vars() == diagrams[static_cast<std::size_t>(s.domain)].size(),
                "dataset width differs from its diagram");
        maps.push_back({d, s.position, diagrams[static_cast<std::size_t>(s.domain)].parents(s.position)});
    }
    RowSet rows = pool_rows(maps);
    rows.arity = static_cast<int>(diagrams.back().parents(position).size());
    return rows;
}

TransportResult circuit_tr(const FamilySource& families, const DiscrepancyOracle& oracle,
                           const std::vector<CausalDiagram>& diagrams, int prefix_len,
                           const TransportOptions& options) {
    require(families.num_domains() == oracle.num_domains(), "families and oracle disagree on domains");
    for (int d = 0; d < families.num_domains(); ++d)
        require(families.domain_size(d) == diagrams.at(static_cast<std::size_t>(d)).size(),
                "data width differs from the hypothesized diagram");
    const CausalDiagram& target = diagrams.back();
    const int T = target.size();
    require(prefix_len >= 0 && prefix_len < T, "prefix must leave at least the query position");
    const int K = oracle.target_domain();

    TransportResult result;
    std::vector<CircuitNode> nodes;
    for (int i = prefix_len; i < T; ++i) {
        PositionStatus st;
        st.position = i;
        st.class_id = oracle.class_of({i, K});
        st.sites = pooled_sites(i, oracle, diagrams);
        CountTable acc(static_cast<int>(target.parents(i).size()), families.vocab());
        for (const Site& s : st.sites) {
            acc += families.family(s.domain, s.position, diagrams[static_cast<std::size_t>(s.domain)].parents(s.position));
            st.transported = st.transported || s.domain != K;
        }
        st.weight = acc.total();
        st.uniform_fallback = st.weight <= 0.0;
        nodes.push_back({i, target.parents(i), fit_cpt(acc, options.alpha)});
        result.status.push_back(std::move(st));
    }
    result.predictor = CircuitPredictor(families.vocab(), prefix_len, std::move(nodes), options.max_width);
    return result;
}

nlohmann::json transport_manifest(const TransportResult& result) {
    auto positions = nlohmann::json::array();
    for (const auto& st : result.status) {
        auto sites = nlohmann::json::array();
        for (const Site& s : st.sites) sites.push_back({s.domain, s.position});
        positions.push_back({{"position", st.position},
                             {"class", st.class_id},
                             {"transported", st.transported},
                             {"rows", st.weight},
                             {"uniform_fallback", st.uniform_fallback},
                             {"sites", sites}});
    }
    return {{"prefix_length", result.predictor.prefix_length()},
            {"target_length", result.predictor.target_length()},
            {"frontier_width", result.predictor.frontier_width()},
            {"positions", positions}};
}

}  // namespace ctlab
