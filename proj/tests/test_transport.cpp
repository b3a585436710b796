#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "ctlab/fixtures.hpp"
#include "ctlab/risk.hpp"
#include "ctlab/transport.hpp"

using namespace ctlab;

namespace {

std::vector<CausalDiagram> diagrams_of(const DomainCollection& c) {
    std::vector<CausalDiagram> out;
    for (int d = 0; d <= c.num_sources(); ++d) out.push_back(c.domain(d).diagram());
    return out;
}

CircuitPredictor wrap(const Cpt& cpt, int M, int position, std::vector<int> parents) {
    return CircuitPredictor(cpt.vocab(), M, {{position, std::move(parents), cpt}});
}

double max_abs_diff(const Cpt& a, const Cpt& b) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.table().size(); ++k) worst = std::max(worst, std::abs(a.table()[k] - b.table()[k]));
    return worst;
}

std::vector<int> digits(std::size_t idx, int len, int V) {
    std::vector<int> out(static_cast<std::size_t>(len));
    for (int i = len; i-- > 0;) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(idx % static_cast<std::size_t>(V));
        idx /= static_cast<std::size_t>(V);
    }
    return out;
}

}  // namespace

TEST_CASE("simple_tr with an empty pool is target-only ERM") {
    const auto a1 = build_example_a_1();
    const Dataset src = sample_dataset(a1.sources[0], 5000, 1, 0);
    const Dataset tgt = sample_dataset(a1.target, 40, 2);
    const DeltaSets honest = coarse_delta_sets(a1);
    REQUIRE(honest[0].count(1) == 1);
    const Cpt tr = simple_tr({src}, tgt, honest);
    const int x[] = {0};
    const Cpt only = fit_cpt(project_rows(tgt, 1, x), 2);
    CHECK(tr == only);
}

TEST_CASE("simple_tr pools a matching source") {
    const auto a1 = build_example_a_1();
    const DomainCollection same({a1.target}, a1.target);
    const auto joint = exact_joint(a1.target);
    const Dataset src = sample_dataset(a1.target, 100000, 3, 0);
    const Dataset tgt = sample_dataset(a1.target, 10, 4);
    const DeltaSets none{{}};
    const Cpt tr = simple_tr({src}, tgt, none);
    const int x[] = {0};
    const Cpt only = fit_cpt(project_rows(tgt, 1, x), 2);
    CHECK(true_risk(wrap(tr, 1, 1, {0}), joint).kl < true_risk(wrap(only, 1, 1, {0}), joint).kl);
}

TEST_CASE("module_tr in the exact limit recovers the subtraction table") {
    const auto ex = build_example_2_1();
    const auto fam = exact_families(ex);
    const std::vector<ModuleScope> scopes{{3, {0, 1}}, {3, {2, 1}}};
    const Cpt c = module_tr(fam, coarse_delta_sets(ex), scopes, 0.0);
    for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b) {
            const int x[] = {a, b};
            CHECK(c.prob((a - b + 10) % 10, x) == doctest::Approx(0.91).epsilon(1e-12));
        }
}

TEST_CASE("module_tr with an empty pool uses target rows only") {
    const auto ex = build_example_2_1();
    std::vector<Dataset> data{sample_dataset(ex.sources[0], 1000, 1, 0), sample_dataset(ex.target, 30, 2)};
    const DeltaSets all{{3}};
    const std::vector<ModuleScope> scopes{{3, {0, 1}}, {3, {2, 1}}};
    const int x[] = {2, 1};
    CHECK(module_tr(data, all, scopes) == fit_cpt(project_rows(data[1], 3, x), 10));

    const std::vector<ModuleScope> bad{{3, {0}}, {3, {2, 1}}};
    CHECK_THROWS_AS(module_tr(data, DeltaSets{{}}, bad), ContractViolation);
}

TEST_CASE("module_tr transport gain on example 2.1") {
    const auto ex = build_example_2_1();
    const auto joint = exact_joint(ex.target);
    const std::vector<ModuleScope> scopes{{3, {0, 1}}, {3, {2, 1}}};
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        std::vector<Dataset> data{sample_dataset(ex.sources[0], 50000, 100 + seed, 0), sample_dataset(ex.target, 50, 200 + seed)};
        const double kl_tr = true_risk(wrap(module_tr(data, coarse_delta_sets(ex), scopes), 3, 3, {2, 1}), joint).kl;
        const double kl_t = true_risk(wrap(module_tr(data, DeltaSets{{3}}, scopes), 3, 3, {2, 1}), joint).kl;
        // About 500 rows per parent row; the alpha = 0.1 estimator sits near 0.0113 in expectation.
        CHECK(kl_tr < 0.015);
        CHECK(kl_t > 0.1);
        CHECK(kl_tr < kl_t / 10);
    }
}

TEST_CASE("module_tr respects parent order") {
    const auto ex = build_example_2_1();
    std::vector<Dataset> data{sample_dataset(ex.sources[0], 3000, 1, 0), sample_dataset(ex.target, 100, 2)};
    const Cpt forward = module_tr(data, DeltaSets{{}}, {{3, {0, 1}}, {3, {2, 1}}});
    const Cpt swapped = module_tr(data, DeltaSets{{}}, {{3, {1, 0}}, {3, {1, 2}}});
    for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b)
            for (int y = 0; y < 10; ++y) {
                const int ab[] = {a, b};
                const int ba[] = {b, a};
                CHECK(forward.prob(y, ab) == doctest::Approx(swapped.prob(y, ba)).epsilon(1e-14));
            }
}

TEST_CASE("pooled_data_for_position") {
    const auto gcd = build_gcd_collection(6, 0.05);
    const auto oracle = induced_discrepancy_oracle(gcd);
    const auto diagrams = diagrams_of(gcd);
    std::vector<Dataset> data;
    for (int j = 0; j < 3; ++j) data.push_back(sample_dataset(gcd.sources[static_cast<std::size_t>(j)], 200, j, j));
    data.push_back(sample_dataset(gcd.target, 10, 9));
    std::vector<const Dataset*> ptrs;
    for (const auto& d : data) ptrs.push_back(&d);
    // Position 2 is a max node: source 1 rows plus every max row of the target (6 of them).
    const RowSet max_rows = pooled_data_for_position(2, ptrs, oracle, diagrams);
    CHECK(max_rows.size() == 200 + 6 * 10);
    const auto sites = pooled_sites(2, oracle, diagrams);
    CHECK(sites.front() == Site{2, 3});
    CHECK(std::count(sites.begin(), sites.end(), Site{2, 0}) == 1);

    // A target position with no match pools only itself.
    const DiscrepancyOracle lonely({{0, 1, 2}, {3, 4, 5}});
    const auto ex = build_example_2_1();
    const std::vector<CausalDiagram> d3{CausalDiagram({{}, {}, {0, 1}}), CausalDiagram({{}, {}, {0, 1}})};
    const Scm tiny = operator_scm(3, {{}, {}, {0, 1}}, {OpKind::Unif, OpKind::Unif, OpKind::Sum}, 0.1);
    const Dataset a = sample_dataset(tiny, 50, 1, 0), b = sample_dataset(tiny, 7, 2);
    CHECK(pooled_data_for_position(2, {&a, &b}, lonely, d3).size() == 7);

    const auto fe = build_fig_e_pair();
    const auto fo = induced_discrepancy_oracle(fe);
    for (int i = 1; i < 10; ++i) {
        bool has_source = false;
        for (const Site& s : pooled_sites(i, fo, diagrams_of(fe))) has_source = has_source || s.domain == 0;
        CHECK(has_source);
    }
}

TEST_CASE("circuit_tr in the exact limit equals the exact conditional") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto fx = random_fixture(seed);
        const auto fam = exact_families(fx);
        const auto oracle = induced_discrepancy_oracle(fx);
        const int T = fx.target.size();
        const int V = fx.target.vocab_size();
        const auto joint = exact_joint(fx.target);
        for (int M = 1; M < T; ++M) {
            const auto res = circuit_tr(fam, oracle, diagrams_of(fx), M, {0.0, 16});
            std::vector<int> given;
            for (int i = 0; i < M; ++i) given.push_back(i);
            const Cpt truth = exact_conditional(joint, T - 1, given);
            for (std::size_t p = 0; p < ipow(static_cast<std::size_t>(V), M); ++p) {
                const auto mu = res.predictor.predict(digits(p, M, V));
                for (int y = 0; y < V; ++y) REQUIRE(std::abs(mu[static_cast<std::size_t>(y)] - truth.prob(y, p)) < 1e-10);
            }
        }
    }
}

TEST_CASE("circuit_tr with T* = M + 1 coincides with module_tr") {
    const auto ex = build_example_2_1();
    std::vector<Dataset> data{sample_dataset(ex.sources[0], 2000, 1, 0), sample_dataset(ex.target, 60, 2)};
    const DataFamilies fam({&data[0], &data[1]});
    const auto res = circuit_tr(fam, induced_discrepancy_oracle(ex), diagrams_of(ex), 3);
    const Cpt m = module_tr(data, coarse_delta_sets(ex), {{3, {0, 1}}, {3, {2, 1}}});
    CHECK(res.predictor.nodes().size() == 1);
    CHECK(max_abs_diff(res.predictor.nodes()[0].cpt, m) == 0.0);
    CHECK(res.status[0].transported);
    CHECK(res.status[0].weight == 2060);
}

TEST_CASE("circuit_tr falls back to a flagged uniform table without target rows") {
    const auto t4 = build_t4_fixture();
    const DiscrepancyOracle none({{0, 1, 2, 3}, {4, 5, 6, 7}});
    const Dataset src = sample_dataset(t4.sources[0], 500, 1, 0);
    const Dataset empty(kTargetDomain, 4, 3, 0);
    const DataFamilies fam({&src, &empty});
    const auto res = circuit_tr(fam, none, diagrams_of(t4), 2);
    for (const auto& st : res.status) {
        CHECK_FALSE(st.transported);
        CHECK(st.uniform_fallback);
    }
    for (const auto& node : res.predictor.nodes()) {
        CHECK(node.cpt.flagged().size() == node.cpt.rows());
        for (double p : node.cpt.table()) CHECK(p == doctest::Approx(1.0 / 3));
    }
    const auto manifest = transport_manifest(res);
    CHECK(manifest.at("positions").size() == 2);
}

TEST_CASE("fig E transport excess shrinks with N at n = 0") {
    const auto fe = build_fig_e_pair();
    const auto oracle = induced_discrepancy_oracle(fe);
    const QueryTruth truth(fe.target, kFigEPrefix);
    double prev = 1e9;
    for (std::size_t N : {1000u, 10000u, 100000u}) {
        double mean = 0.0;
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            const Dataset src = sample_dataset(fe.sources[0], N, 1000 * seed + 1, 0);
            const Dataset empty(kTargetDomain, 10, 10, 0);
            const DataFamilies fam({&src, &empty});
            const auto res = circuit_tr(fam, oracle, diagrams_of(fe), kFigEPrefix);
            for (const auto& st : res.status) CHECK(st.transported);
            mean += truth.evaluate(res.predictor).excess / 3;
        }
        CHECK(mean < prev);
        prev = mean;
    }
}
