#pragma once

// Partial transportability for the binary bow graph X <-> Y, X -> Y.
//
// Canonical encoding. Each domain k carries a distribution q^k over response
// types (a, r): a in {0, 1} is the value X takes (X has no observed parent),
// r indexes Y's response to x: 0 const-0, 1 const-1, 2 copy-X, 3 flip-X.
// Coordinate a * 4 + r. Sources come first, the target block is last.
//
// Links between source k and the target follow Delta_{k,*}:
//   {}      q* = q^k (mechanisms and exogenous law all shared)
//   {X}     Y-side shared: sum_a q^k(a, r) = sum_a q*(a, r)
//   {Y}     X-side shared: sum_r q^k(a, r) = sum_r q*(a, r)
//   {X, Y}  no link

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ctlab/discrepancy.hpp"
#include "ctlab/joint.hpp"

namespace ctlab {

inline constexpr int kTypesPerDomain = 8;

int response_y(int r, int x);

struct ResponseTypePolytope {
    int num_sources = 0;
    int dim = 0;                            // kTypesPerDomain * (num_sources + 1)
    std::vector<std::vector<double>> rows;  // equality rows after removing dependent ones
    std::vector<double> rhs;

    int target_offset() const { return kTypesPerDomain * num_sources; }
    /// Largest |row . q - rhs| over rows, and the most negative coordinate (as a positive number).
    double residual(const std::vector<double>& q) const;
    bool contains(const std::vector<double>& q, double tol = 1e-9) const;
};

/// Source joints are 2 x 2 tables with X at index 0 and Y at index 1.
/// Throws Infeasible when no nonnegative q satisfies the rows.
ResponseTypePolytope canonical_constraints(const std::vector<JointTable>& sources, const DeltaSets& delta);

/// Type distribution of X <- U_X xor U_XY, Y <- (X xor U_XY) op U_Y with
/// op = xor or or, by enumerating the 8 exogenous configurations.
std::vector<double> bow_type_distribution(double ux, double uy, double uxy, bool use_or);

/// P*(y | x) as a ratio of two linear forms on q.
double target_conditional(const ResponseTypePolytope& poly, const std::vector<double>& q, int y, int x);

/// Minimizes (maximize = false) or maximizes P*(y|x) by the Charnes-Cooper
/// linear program; returns nullopt if P*(x) = 0 on the whole polytope.
struct LpOptimum {
    double value = 0.0;
    std::vector<double> witness;
};
std::optional<LpOptimum> fractional_lp(const ResponseTypePolytope& poly, int y, int x, bool maximize);

/// Distinct vertices of the polytope, found by walking feasible bases.
std::vector<std::vector<double>> enumerate_vertices(const ResponseTypePolytope& poly);

struct BoundsResult {
    // Indexed [y][x].
    std::array<std::array<double, 2>, 2> l{};
    std::array<std::array<double, 2>, 2> u{};
    std::array<std::array<double, 2>, 2> l_vertex{};
    std::array<std::array<double, 2>, 2> u_vertex{};
    std::array<std::array<std::vector<double>, 2>, 2> witness_l;
    std::array<std::array<std::vector<double>, 2>, 2> witness_u;
    std::array<bool, 2> degenerate{};  // P*(x) = 0 everywhere; bounds reported as [0, 1]
    std::size_t num_vertices = 0;
    double method_gap = 0.0;  // largest |LP - vertex| over endpoints
};

BoundsResult partial_transport_bounds(const ResponseTypePolytope& poly);

/// Bounds of the bow graph collection from its exact source joints and coarse Delta sets.
BoundsResult bow_bounds(const DomainCollection& bow, ResponseTypePolytope* poly_out = nullptr);

struct ProbeReport {
    std::size_t samples = 0;
    double min = 1.0;
    double max = 0.0;
    std::size_t hits = 0;  // samples within `tol` of the probed value
};

/// Random feasible points: flat-Dirichlet mixtures of one to three random vertices.
ProbeReport probe_polytope(const ResponseTypePolytope& poly, const std::vector<std::vector<double>>& vertices, int y,
                           int x, double value, double tol, std::size_t samples, std::uint64_t seed, int jobs = 1);

double cross_entropy(double q, double mu);

struct CroPredictor {
    std::array<double, 2> mu1{};  // mu(Y=1 | x)
    double risk = 0.0;            // worst-case cross-entropy
};

/// Minimax mu(1|x) against P*(1|x) in [l_{1|x}, u_{1|x}]; `px_range` bounds P*(X=1).
CroPredictor cro_predictor(const BoundsResult& bounds, std::array<double, 2> px_range);

/// mu(1) minimizing max(CE(l, mu), CE(u, mu)), by bisection on the equalizer to 1e-8.
double cro_equalizer(double l, double u);

struct CurveRow {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string method;
    double risk = 0.0;
};

/// Target-only ERM, ERM clipped to the bounds, and CRO, scored by the true
/// target cross-entropy. Also emits a "bayes" row per (n, seed).
std::vector<CurveRow> erm_vs_cro_curve(const DomainCollection& bow, const std::vector<std::size_t>& n_grid,
                                       const std::vector<std::uint64_t>& seeds, double alpha = 0.1);

struct CurveSummary {
    std::size_t n = 0;
    std::string method;
    double mean = 0.0;
    double sd = 0.0;
};
std::vector<CurveSummary> summarize_curve(const std::vector<CurveRow>& rows);

nlohmann::json bounds_json(const BoundsResult& b);

}  // namespace ctlab
