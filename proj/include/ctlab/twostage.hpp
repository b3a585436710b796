#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ctlab/circuit.hpp"
#include "ctlab/dataset.hpp"
#include "ctlab/transport.hpp"

namespace ctlab {

struct PretrainConfig {
    double lambda = 1e-3;
    int max_parents = 2;
    double alpha = kDefaultAlpha;
    double merge_tol = 0.0;
    std::uint64_t fold_seed = 0;
};

struct PretrainResult {
    std::vector<std::vector<int>> phi;                  // phi[j][i] in [0, d)
    std::vector<std::vector<std::vector<int>>> parents;  // A^j as ordered index lists
    std::vector<Cpt> psi;                                // one table per mechanism class
    int d = 0;
    double lambda = 0.0;
    double nll = 0.0;        // summed per-domain expected NLL estimate
    double objective = 0.0;  // nll + lambda (d + |A|)
    int edges() const;
};

/// Penalized-likelihood pretraining on source datasets. Per-node parent sets,
/// then agglomerative merging of same-arity classes. NLL terms are two-fold
/// cross-fitted estimates of the expected NLL.
PretrainResult pretrain_tabular(const std::vector<Dataset>& sources, const PretrainConfig& config = {});

/// Same search on exact masses (every domain of `masses` is a source); NLL terms are cross-entropies.
PretrainResult pretrain_exact(const FamilySource& masses, const PretrainConfig& config = {});

/// Penalized objective of a given (Phi, A) on exact masses with Psi refit per class.
double pretrain_objective(const FamilySource& masses, const std::vector<std::vector<int>>& phi,
                          const std::vector<std::vector<std::vector<int>>>& parents, double lambda, double alpha = 0.0);

struct ExhaustivePretrain {
    double objective = 0.0;
    std::vector<std::vector<int>> phi;
    std::vector<std::vector<std::vector<int>>> parents;
};

/// Global minimum of the exact-mass objective over all ordered parent tuples
/// (length <= max_parents) and all same-arity set partitions of the sites.
/// Class costs are enumerated, the partition by dynamic programming over
/// site subsets; at most 16 sites.
ExhaustivePretrain pretrain_exhaustive(const FamilySource& masses, int max_parents, double lambda);

struct FinetuneResult {
    std::vector<std::vector<int>> parents;  // A*
    std::vector<int> phi;                   // Phi*, -1 when no class fits the position
    std::vector<std::vector<int>> fallback_parents;
    std::vector<Cpt> fallbacks;  // mu*_i
    std::vector<double> s;       // transport indicators
};

/// Per position, the (class, ordered parents) whose frozen Psi has the lowest NLL on D*_ft.
void finetune_target_structure(const PretrainResult& pretrained, const Dataset& ft, FinetuneResult& out);

/// mu*_i on the `arity_cap` most recent predecessors.
void fit_target_only_fallbacks(const Dataset& tr, int vocab, int num_vars, FinetuneResult& out, int arity_cap = 2,
                               double alpha = kDefaultAlpha);

/// Held-out NLL of s Psi + (1 - s) mu* at position i.
double mixture_nll(const PretrainResult& pretrained, const FinetuneResult& ft, const Dataset& te, int position,
                   double s);

/// Ternary search per position to 1e-4; endpoints win ties, s = 1 first.
void learn_transport_indicators(const PretrainResult& pretrained, FinetuneResult& ft, const Dataset& te);

/// Mixture tables for positions M..T-1 composed by elimination.
CircuitPredictor assemble_final_predictor(const PretrainResult& pretrained, const FinetuneResult& ft, int prefix_len,
                                          int max_width = 8);

struct TwoStageConfig {
    PretrainConfig pretrain;
    int fallback_arity = 2;
    std::array<double, 3> split{1.0 / 3, 1.0 / 3, 1.0 / 3};
    std::uint64_t split_seed = 0;
    int max_width = 8;
};

struct TwoStageResult {
    PretrainResult pretrained;
    FinetuneResult finetuned;
    CircuitPredictor predictor;
};

/// Pretrain on sources, split the target (tr, ft, te), fine-tune and assemble.
TwoStageResult twostage(const std::vector<Dataset>& sources, const Dataset& target, int prefix_len,
                        const TwoStageConfig& config = {});

nlohmann::json pretrain_json(const PretrainResult& r);
nlohmann::json finetune_json(const FinetuneResult& r);

}  // namespace ctlab
