#pragma once

// Named SCMs plus synthetic fixtures used by tests and configs.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ctlab/scm.hpp"

namespace ctlab {

/// Shorthand for a noisy-operator SCM: ops[i] applies to parents[i].
Scm operator_scm(int vocab, std::vector<std::vector<int>> parents, std::vector<OpKind> ops, double noise_p,
                 std::vector<std::string> names = {});

/// X1, X2, X3 uniform over 10 tokens; Y = (first - second parent) mod 10 with
/// noise 0.1. Source parents (X1, X2), target parents (X3, X2).
DomainCollection build_example_2_1(double noise_p = 0.1);

/// 3|V|+2 variables; the query is the last node.
Scm build_gcd_chain(int vocab, double noise_p);
/// Single-mechanism sources over (X1, X2, Y): Y = max, min, subtract (and mod when requested).
std::vector<Scm> build_gcd_sources(int vocab, double noise_p, bool with_mod = false);
DomainCollection build_gcd_collection(int vocab, double noise_p);
/// Query value of the noise-free chain started at (a, b).
int gcd_chain_skeleton(int a, int b, int vocab);

/// The T=10 source/target pair of the experiments appendix (|V| = 10 by default).
DomainCollection build_fig_e_pair(int vocab = 10, double noise_p = 0.1);
inline constexpr int kFigEPrefix = 5;

/// Bow-graph triple M1, M2 (sources) and M* (target) over (X, Y) with U_XY shared.
DomainCollection build_bow_examples();
/// Bow triple with free Bernoulli parameters; U_Y and U_XY laws are shared.
DomainCollection build_bow_family(double ux1, double ux2, double ux_star, double uy, double uxy);

/// Binary X -> Y: sources have Y independent of X, target Y = X xor Bern(0.1).
DomainCollection build_example_a_1(int num_sources = 1);

/// T=4, |V|=3 single-source fixture whose target reuses the source operators
/// at shuffled positions; the query is V4 given (V1, V2).
DomainCollection build_t4_fixture(double noise_p = 0.1);
inline constexpr int kT4Prefix = 2;

/// T=4 fixture where the target shares V2, V3 mechanisms with the source and
/// V4 is novel (mult, absent from the source).
DomainCollection build_mixed_fixture(double noise_p = 0.05);

/// Random operator fixture: target with T <= max_T and |V| <= max_vocab, plus
/// `num_sources` sources that reuse a random subset of its mechanisms.
DomainCollection random_fixture(std::uint64_t seed, int max_T = 8, int max_vocab = 4, int num_sources = 2);

/// Fixture lookup for configs: ex2_1, gcd, fig_e, bow, ex_a1, t4, mixed.
DomainCollection fixture_by_name(const std::string& name, const nlohmann::json& params);
/// Default prefix length M of a named fixture (target size - 1 when the query
/// is the last node given everything else, except where a fixture fixes M).
int fixture_prefix(const std::string& name, const DomainCollection& domains);

/// {vocab_size, variables:[{id, parents, op, noise_p}], shared_exogenous?}
nlohmann::json scm_to_json(const Scm& scm);
Scm scm_from_json(const nlohmann::json& j);

}  // namespace ctlab
