#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ctlab/circuit.hpp"
#include "ctlab/discrepancy.hpp"
#include "ctlab/joint.hpp"

namespace ctlab {

/// Weighted (parents, label) tables per (domain, position). Domains 0..K-1 are
/// sources and domain K is the target, matching DiscrepancyOracle.
class FamilySource {
public:
    virtual ~FamilySource() = default;
    virtual int vocab() const = 0;
    virtual int num_domains() const = 0;
    virtual int domain_size(int d) const = 0;
    virtual CountTable family(int domain, int position, std::span<const int> parents) const = 0;
};

/// Counts from datasets; tables are memoized so repeated hypotheses share work.
class DataFamilies final : public FamilySource {
public:
    /// `datasets[d]` for every domain; the target dataset may have zero rows.
    explicit DataFamilies(std::vector<const Dataset*> datasets);

    int vocab() const override { return vocab_; }
    int num_domains() const override { return static_cast<int>(data_.size()); }
    int domain_size(int d) const override;
    CountTable family(int domain, int position, std::span<const int> parents) const override;
    const Dataset& dataset(int d) const { return *data_.at(static_cast<std::size_t>(d)); }

private:
    std::vector<const Dataset*> data_;
    int vocab_;
    mutable std::mutex mu_;
    mutable std::map<std::tuple<int, int, std::vector<int>>, CountTable> cache_;
};

/// Exact masses P^d(pa, v_i) scaled by a per-domain weight (the exact limit of counts).
class ExactFamilies final : public FamilySource {
public:
    ExactFamilies(std::vector<JointTable> joints, std::vector<double> weights = {});

    int vocab() const override { return joints_.front().vocab(); }
    int num_domains() const override { return static_cast<int>(joints_.size()); }
    int domain_size(int d) const override { return joints_.at(static_cast<std::size_t>(d)).num_vars(); }
    CountTable family(int domain, int position, std::span<const int> parents) const override;

private:
    std::vector<JointTable> joints_;
    std::vector<double> weights_;
};

/// Joints of every domain in a collection, target last.
ExactFamilies exact_families(const DomainCollection& domains);

struct TransportOptions {
    double alpha = kDefaultAlpha;
    int max_width = kDefaultFrontierWidth;
};

// ---- simple-TR and Module-TR ----------------------------------------------

/// X -> Y with Y the last column and X every other column. Pools every source
/// j with Y not in delta[j] together with the target rows.
Cpt simple_tr(const std::vector<Dataset>& sources, const Dataset& target, const DeltaSets& delta,
              double alpha = kDefaultAlpha);

/// Label column and ordered parent columns of Y in one domain.
struct ModuleScope {
    int label = 0;
    std::vector<int> parents;
};

/// Pools (Y; Pa^j_Y) over sources whose label is not in delta[j], plus the
/// target; `scopes` has K+1 entries (target last).
Cpt module_tr(const FamilySource& families, const DeltaSets& delta, const std::vector<ModuleScope>& scopes,
              double alpha = kDefaultAlpha);
Cpt module_tr(const std::vector<Dataset>& datasets, const DeltaSets& delta, const std::vector<ModuleScope>& scopes,
              double alpha = kDefaultAlpha);

// ---- Circuit-TR -----------------------------------------------------------

/// Sites pooled for target position i: (i, *) first, then every site with
/// Delta = 0 relative to it. Errors when their parent arities disagree.
std::vector<Site> pooled_sites(int position, const DiscrepancyOracle& oracle,
                               const std::vector<CausalDiagram>& diagrams);

/// Literal pooled rows (V_{i'}; Pa^{j'}_{i'}) over the pooled sites; datasets target last.
RowSet pooled_data_for_position(int position, const std::vector<const Dataset*>& datasets,
                                const DiscrepancyOracle& oracle, const std::vector<CausalDiagram>& diagrams);

struct PositionStatus {
    int position = 0;
    int class_id = 0;
    std::vector<Site> sites;
    bool transported = false;  // some source site was pooled
    double weight = 0.0;       // total pooled rows (or mass)
    bool uniform_fallback = false;
};

struct TransportResult {
    CircuitPredictor predictor;
    std::vector<PositionStatus> status;
};

/// Fits one Cpt per target position M..T*-1 from pooled families and composes them.
TransportResult circuit_tr(const FamilySource& families, const DiscrepancyOracle& oracle,
                           const std::vector<CausalDiagram>& diagrams, int prefix_len,
                           const TransportOptions& options = {});

nlohmann::json transport_manifest(const TransportResult& result);

}  // namespace ctlab
