#include "ctlab/discrepancy.hpp"

#include <map>

namespace ctlab {

DiscrepancyOracle::DiscrepancyOracle(std::vector<std::vector<int>> classes) : classes_(std::move(classes)) {
    require(!classes_.empty(), "oracle needs at least one domain");
    std::map<int, int> relabel;
    for (auto& dom : classes_)
        for (int& c : dom) {
            auto [it, inserted] = relabel.emplace(c, static_cast<int>(relabel.size()));
            c = it->second;
        }
    num_classes_ = static_cast<int>(relabel.size());
}

int DiscrepancyOracle::class_of(Site s) const {
    require(s.domain >= 0 && s.domain < num_domains(), "site domain out of range");
    const auto& dom = classes_[static_cast<std::size_t>(s.domain)];
    require(s.position >= 0 && s.position < static_cast<int>(dom.size()), "site position out of range");
    return dom[static_cast<std::size_t>(s.position)];
}

std::vector<Site> DiscrepancyOracle::matches(Site s) const {
    const int c = class_of(s);
    std::vector<Site> out;
    for (int d = 0; d < num_domains(); ++d)
        for (int i = 0; i < domain_size(d); ++i) {
            Site other{i, d};
            if (other != s && classes_[static_cast<std::size_t>(d)][static_cast<std::size_t>(i)] == c)
                out.push_back(other);
        }
    return out;
}

std::vector<int> DiscrepancyOracle::encoding() const {
    std::vector<int> out;
    for (const auto& dom : classes_) out.insert(out.end(), dom.begin(), dom.end());
    return out;
}

namespace {

bool same_mechanism(const Scm& a, int i, const Scm& b, int k) {
    const Mechanism& ma = a.mechanism(i);
    const Mechanism& mb = b.mechanism(k);
    if (ma.index() != mb.index()) return false;
    if (const auto* oa = std::get_if<NoisyOperator>(&ma)) return *oa == std::get<NoisyOperator>(mb);
    const auto& ta = std::get<TableMechanism>(ma);
    const auto& tb = std::get<TableMechanism>(mb);
    if (!(ta == tb)) return false;
    if (ta.confounder_states > 1) {
        // The confounder is part of this mechanism's exogenous law.
        return a.confounder() && b.confounder() && a.confounder()->weights == b.confounder()->weights;
    }
    return true;
}

}  // namespace

DiscrepancyOracle induced_discrepancy_oracle(const DomainCollection& domains) {
    const int D = domains.num_sources() + 1;
    std::vector<Site> reps;  // one representative per class
    std::vector<std::vector<int>> classes(static_cast<std::size_t>(D));
    for (int d = 0; d < D; ++d) {
        const Scm& scm = domains.domain(d);
        for (int i = 0; i < scm.size(); ++i) {
            int label = -1;
            for (std::size_t c = 0; c < reps.size(); ++c) {
                if (same_mechanism(domains.domain(reps[c].domain), reps[c].position, scm, i)) {
                    label = static_cast<int>(c);
                    break;
                }
            }
            if (label < 0) {
                label = static_cast<int>(reps.size());
                reps.push_back({i, d});
            }
            classes[static_cast<std::size_t>(d)].push_back(label);
        }
    }
    return DiscrepancyOracle(std::move(classes));
}

DeltaSets coarse_delta_sets(const DomainCollection& domains) {
    const auto oracle = induced_discrepancy_oracle(domains);
    const int K = domains.num_sources();
    DeltaSets out(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j) {
        const int T = std::min(domains.sources[static_cast<std::size_t>(j)].size(), domains.target.size());
        for (int i = 0; i < T; ++i)
            if (oracle({i, j}, {i, K})) out[static_cast<std::size_t>(j)].insert(i);
        for (int i = T; i < std::max(domains.sources[static_cast<std::size_t>(j)].size(), domains.target.size()); ++i)
            out[static_cast<std::size_t>(j)].insert(i);
    }
    return out;
}

}  // namespace ctlab
