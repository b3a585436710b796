#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "ctlab/adaptation.hpp"
#include "ctlab/fixtures.hpp"
#include "ctlab/risk.hpp"

using namespace ctlab;

namespace {

// Bell numbers through Stirling numbers of the second kind.
double bell(int n) {
    std::vector<std::vector<double>> S(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
    S[0][0] = 1.0;
    for (int m = 1; m <= n; ++m)
        for (int k = 1; k <= m; ++k)
            S[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)] =
                k * S[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(k)] + S[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(k - 1)];
    double b = 0.0;
    for (int k = 0; k <= n; ++k) b += S[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)];
    return b;
}

// Ordered tuples of distinct elements of {0..i-1} with length <= m, counted by brute force over all sequences.
std::size_t count_tuples(int i, int m) {
    std::size_t total = 0;
    for (int len = 0; len <= m; ++len) {
        std::size_t seqs = 1;
        for (int k = 0; k < len; ++k) seqs *= static_cast<std::size_t>(i);
        for (std::size_t code = 0; code < seqs; ++code) {
            std::set<std::size_t> seen;
            std::size_t c = code;
            for (int k = 0; k < len; ++k) {
                seen.insert(c % static_cast<std::size_t>(i));
                c /= static_cast<std::size_t>(i);
            }
            if (static_cast<int>(seen.size()) == len) ++total;
        }
    }
    return total;
}

std::vector<int> digits(std::size_t idx, int len, int V) {
    std::vector<int> out(static_cast<std::size_t>(len));
    for (int i = len; i-- > 0;) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(idx % static_cast<std::size_t>(V));
        idx /= static_cast<std::size_t>(V);
    }
    return out;
}

std::vector<Dataset> source_data(const DomainCollection& c, std::size_t N, std::uint64_t seed) {
    std::vector<Dataset> out;
    for (int j = 0; j < c.num_sources(); ++j)
        out.push_back(sample_dataset(c.sources[static_cast<std::size_t>(j)], N, seed + static_cast<std::uint64_t>(j), j));
    return out;
}

}  // namespace

TEST_CASE("parent choices and diagram counts") {
    for (int i = 0; i < 7; ++i)
        for (int m = 0; m < 4; ++m) CHECK(parent_choices(i, m) == count_tuples(i, m));
    const int sizes[] = {3};
    SearchConfig cfg;
    cfg.max_parents = 1;
    const auto hyps = enumerate_structures(cfg, sizes);
    std::set<std::vector<int>> diagrams, partitions;
    for (const auto& h : hyps) {
        diagrams.insert(h.diagram_encoding());
        partitions.insert(h.oracle.encoding());
    }
    CHECK(diagrams.size() == 6);
    CHECK(partitions.size() == 5);
    CHECK(hyps.size() == 30);
}

TEST_CASE("K = 1, T = 2 enumeration") {
    const int sizes[] = {2, 2};
    SearchConfig cfg;
    const auto hyps = enumerate_structures(cfg, sizes);
    std::set<std::vector<int>> partitions;
    std::set<std::pair<std::vector<int>, std::vector<int>>> pairs;
    for (const auto& h : hyps) {
        partitions.insert(h.oracle.encoding());
        pairs.insert({h.oracle.encoding(), h.diagram_encoding()});
    }
    CHECK(partitions.size() == 15);
    CHECK(pairs.size() == hyps.size());
    const auto hc = hypothesis_count(cfg.max_parents, sizes);
    CHECK(hc.count == doctest::Approx(15.0 * 2 * 2));
    CHECK(hyps.size() == 60);
    CHECK(hc.excess_bound(1e12) < 1e-5);
}

TEST_CASE("Bell numbers from the hypothesis count") {
    for (int n = 1; n <= 14; ++n) {
        const std::vector<int> sizes(static_cast<std::size_t>(n), 1);
        CHECK(hypothesis_count(2, sizes).count == doctest::Approx(bell(n)).epsilon(1e-9));
    }
}

TEST_CASE("log count more than doubles when T* doubles") {
    for (int m : {1, 2}) {
        const int s3[] = {3, 3}, s6[] = {6, 6};
        CHECK(hypothesis_count(m, s6).log_count > 2 * hypothesis_count(m, s3).log_count);
    }
    const int s4[] = {4, 4};
    CHECK(hypothesis_count(2, s4).log_count > hypothesis_count(2, std::vector<int>{3, 3}).log_count);
}

TEST_CASE("guided mode and caps") {
    const auto t4 = build_t4_fixture();
    SearchConfig cfg;
    cfg.candidates = {true_structure(t4), true_structure(t4), true_structure(t4)};
    const int sizes[] = {4, 4};
    const auto hyps = enumerate_structures(cfg, sizes);
    CHECK(hyps.size() == 4);
    CHECK(hyps.back().label == "no-transport");
    cfg.candidates.clear();
    try {
        enumerate_structures(cfg, sizes);
        FAIL("expected BudgetExceeded");
    } catch (const BudgetExceeded& e) {
        CHECK(std::string(e.what()).find("partitions") != std::string::npos);
    }
}

TEST_CASE("no-transport alone equals target-only composed ERM") {
    const auto t4 = build_t4_fixture();
    const Dataset tgt = sample_dataset(t4.target, 120, 11);
    const int sizes[] = {4, 4};
    SearchConfig cfg;
    cfg.prefix_len = 2;
    cfg.split_seed = 5;
    cfg.candidates = {no_transport_hypothesis(sizes, 2)};
    const auto res = circuit_ad(source_data(t4, 500, 1), tgt, cfg);

    const double half[] = {0.5, 0.5};
    const auto parts = split_dataset(tgt, half, 5);
    std::vector<CircuitNode> nodes;
    for (int i = 2; i < 4; ++i) {
        const std::vector<int> pa{i - 2, i - 1};
        nodes.push_back({i, pa, fit_cpt(project_rows(parts[0], i, pa), 3)});
    }
    const CircuitPredictor oracle(3, 2, nodes);
    for (std::size_t p = 0; p < 9; ++p) {
        const auto a = res.predictor.predict(digits(p, 2, 3));
        const auto b = oracle.predict(digits(p, 2, 3));
        for (int y = 0; y < 3; ++y) CHECK(a[static_cast<std::size_t>(y)] == doctest::Approx(b[static_cast<std::size_t>(y)]).epsilon(1e-12));
    }
}

TEST_CASE("selection is the argmin and ignores stream order") {
    const auto t4 = build_t4_fixture();
    const auto truth = true_structure(t4);
    auto shuffled = truth;
    shuffled.label = "swapped";
    // Target position 3 joins the source position 2 class instead of position 1.
    auto classes = truth.oracle.classes();
    classes[1][3] = classes[0][3];
    shuffled.oracle = DiscrepancyOracle(classes);
    const int sizes[] = {4, 4};
    auto lonely = no_transport_hypothesis(sizes, 1);
    lonely.label = "recent-1";

    const auto src = source_data(t4, 3000, 3);
    const Dataset tgt = sample_dataset(t4.target, 60, 4);
    SearchConfig cfg;
    cfg.prefix_len = 2;
    cfg.candidates = {truth, shuffled, lonely};
    const auto a = circuit_ad(src, tgt, cfg);
    double lo = 1e300;
    for (const auto& s : a.scores) lo = std::min(lo, s.nll);
    CHECK(a.scores[a.chosen_index].nll == lo);
    const auto nt = std::find_if(a.scores.begin(), a.scores.end(), [](const CandidateScore& s) { return s.label == "no-transport"; });
    REQUIRE(nt != a.scores.end());
    CHECK(a.scores[a.chosen_index].nll <= nt->nll);

    cfg.candidates = {lonely, shuffled, truth};
    cfg.jobs = 3;
    const auto b = circuit_ad(src, tgt, cfg);
    CHECK(b.chosen.oracle.encoding() == a.chosen.oracle.encoding());
    CHECK(b.chosen.diagram_encoding() == a.chosen.diagram_encoding());

    // Duplicates tie exactly; the choice is still the same structure.
    cfg.candidates = {truth, truth};
    const auto c = circuit_ad(src, tgt, cfg);
    CHECK(c.scores[0].nll == c.scores[1].nll);
}

TEST_CASE("exhaustive search flags mixed-arity classes") {
    const auto a1 = build_example_a_1();
    const DomainCollection same({a1.target}, a1.target);
    SearchConfig cfg;
    cfg.prefix_len = 1;
    const auto res = circuit_ad(source_data(same, 400, 1), sample_dataset(a1.target, 40, 2), cfg);
    CHECK(res.count == 60);
    std::size_t invalid = 0;
    double lo = 1e300;
    for (const auto& s : res.scores) {
        if (!s.valid) ++invalid;
        else lo = std::min(lo, s.nll);
    }
    CHECK(invalid > 0);
    CHECK(res.scores[res.chosen_index].valid);
    CHECK(res.scores[res.chosen_index].nll == lo);
    const auto j = selection_json(res);
    CHECK(j.at("candidates").size() == 60);
}

TEST_CASE("simple_ad selections") {
    const auto a1 = build_example_a_1();
    int pooled = 0;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        const std::vector<Dataset> src{sample_dataset(a1.target, 5000, 10 + seed, 0)};
        const auto r = simple_ad(src, sample_dataset(a1.target, 40, 20 + seed), seed);
        CHECK(r.count == 2);
        pooled += r.pooled == std::vector<int>{0};
        const double none = r.scores[0].second;
        CHECK(r.scores[0].first.empty());
        for (const auto& [s, nll] : r.scores)
            if (s == r.pooled) CHECK(nll <= none);
    }
    CHECK(pooled >= 2);

    const std::vector<Dataset> indep{sample_dataset(a1.sources[0], 5000, 3, 0)};
    CHECK(simple_ad(indep, sample_dataset(a1.target, 500, 4), 0).pooled.empty());
    CHECK_THROWS_AS(simple_ad(indep, sample_dataset(a1.target, 1, 4), 0), ContractViolation);
}

TEST_CASE("circuit_ad with T* = 2 reproduces simple_ad") {
    const auto a1 = build_example_a_1();
    StructureHypothesis pool;
    pool.label = "pool";
    pool.oracle = DiscrepancyOracle({{0, 1}, {2, 1}});
    pool.diagrams = {CausalDiagram({{}, {0}}), CausalDiagram({{}, {0}})};
    for (const Scm* source : {&a1.target, &a1.sources[0]}) {
        for (std::uint64_t seed : {0u, 1u, 2u, 3u}) {
            const std::vector<Dataset> src{sample_dataset(*source, 2000, 30 + seed, 0)};
            const Dataset tgt = sample_dataset(a1.target, 60, 40 + seed);
            const auto s = simple_ad(src, tgt, seed);
            SearchConfig cfg;
            cfg.prefix_len = 1;
            cfg.split_seed = seed;
            cfg.max_parents = 1;
            cfg.candidates = {pool};
            const auto c = circuit_ad(src, tgt, cfg);
            CHECK((c.chosen.label == "pool") == (s.pooled == std::vector<int>{0}));
        }
    }
}

TEST_CASE("circuit_ad with exact-limit sources stays near circuit_tr on the truth") {
    const auto t4 = build_t4_fixture();
    const auto truth = true_structure(t4);
    const ExactFamilies sources({exact_joint(t4.sources[0])}, {1e5});
    const QueryTruth qt(t4.target, 2);
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        const Dataset tgt = sample_dataset(t4.target, 200, 50 + seed);
        SearchConfig cfg;
        cfg.prefix_len = 2;
        cfg.split_seed = seed;
        cfg.candidates = {truth};
        const auto ad = circuit_ad(sources, tgt, cfg);
        const double half[] = {0.5, 0.5};
        const auto parts = split_dataset(tgt, half, seed);
        const DataFamilies tfam({&parts[0]});
        struct Both final : FamilySource {
            const FamilySource* s;
            const FamilySource* t;
            int vocab() const override { return t->vocab(); }
            int num_domains() const override { return 2; }
            int domain_size(int d) const override { return d == 0 ? s->domain_size(0) : t->domain_size(0); }
            CountTable family(int d, int p, std::span<const int> pa) const override {
                return d == 0 ? s->family(0, p, pa) : t->family(0, p, pa);
            }
        } both;
        both.s = &sources;
        both.t = &tfam;
        const auto tr = circuit_tr(both, truth.oracle, truth.diagrams, 2);
        const double ex_ad = qt.evaluate(ad.predictor).excess;
        const double ex_tr = qt.evaluate(tr.predictor).excess;
        CHECK(ex_ad <= 2 * ex_tr + 1e-12);
    }
}

TEST_CASE("AD minus TR excess shrinks with n on the T = 4 fixture") {
    const auto t4 = build_t4_fixture();
    const auto truth = true_structure(t4);
    const QueryTruth qt(t4.target, 2);
    // Near miss: position 3 is learned from target rows alone.
    auto partial = truth;
    partial.label = "partial";
    auto classes = truth.oracle.classes();
    classes[1][3] = 99;
    partial.oracle = DiscrepancyOracle(classes);
    std::vector<double> gaps;
    for (std::size_t n : {50u, 200u, 800u}) {
        double gap = 0.0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto src = source_data(t4, 10000, 60 + seed);
            const Dataset tgt = sample_dataset(t4.target, n, 70 + seed);
            SearchConfig cfg;
            cfg.prefix_len = 2;
            cfg.split_seed = seed;
            cfg.candidates = {truth, partial};
            const auto ad = circuit_ad(src, tgt, cfg);
            const DataFamilies fam({&src[0], &tgt});
            const auto tr = circuit_tr(fam, truth.oracle, truth.diagrams, 2);
            gap += (qt.evaluate(ad.predictor).excess - qt.evaluate(tr.predictor).excess) / 5;
        }
        gaps.push_back(gap);
    }
    MESSAGE("gaps " << gaps[0] << " " << gaps[1] << " " << gaps[2]);
    CHECK(gaps[1] < gaps[0]);
    CHECK(gaps[2] < gaps[1]);
}

TEST_CASE("module hypotheses on the fig E pair") {
    const auto fe = build_fig_e_pair();
    const auto truth = true_structure(fe);
    const auto hyps = module_hypotheses(truth, kFigEPrefix, 2);
    // Distinct source operators per arity give the joinable classes.
    std::map<std::size_t, std::set<OpKind>> ops;
    for (int i = 0; i < fe.sources[0].size(); ++i)
        ops[fe.sources[0].parents(i).size()].insert(std::get<NoisyOperator>(fe.sources[0].mechanism(i)).kind);
    std::size_t expected = 0;
    for (int len = 0; len <= 2; ++len) {
        const std::size_t exact = count_tuples(kFigEPrefix, len) - (len > 0 ? count_tuples(kFigEPrefix, len - 1) : 0);
        expected += exact * (1 + ops[static_cast<std::size_t>(len)].size());
    }
    CHECK(hyps.size() == expected);
    for (const auto& h : hyps) {
        CHECK(h.diagrams.back().size() == kFigEPrefix + 1);
        CHECK(h.diagrams[0] == fe.sources[0].diagram());
    }
}

TEST_CASE("hypothesis json round trip") {
    const auto truth = true_structure(build_t4_fixture());
    const nlohmann::json j = truth;
    const auto back = j.get<StructureHypothesis>();
    CHECK(back.oracle.encoding() == truth.oracle.encoding());
    CHECK(back.diagram_encoding() == truth.diagram_encoding());
    CHECK(back.label == "true");
    CHECK_THROWS_AS(nlohmann::json({{"classes", 3}}).get<StructureHypothesis>(), ContractViolation);
    CHECK_THROWS_AS(nlohmann::json({{"classes", {{0, 1}}}, {"diagrams", {{{}}}}}).get<StructureHypothesis>(),
                    ContractViolation);
}

TEST_CASE("erm_pool is the pooled full-prefix table") {
    const auto t4 = build_t4_fixture();
    const Dataset a = sample_dataset(t4.sources[0], 300, 1, 0), b = sample_dataset(t4.target, 30, 2);
    const auto pred = erm_pool({&a, &b}, 2);
    const RowMapping maps[] = {{&a, 3, {0, 1}}, {&b, 3, {0, 1}}};
    const Cpt c = fit_cpt(pool_rows(maps), 3);
    for (std::size_t p = 0; p < 9; ++p) {
        const auto mu = pred.predict(digits(p, 2, 3));
        for (int y = 0; y < 3; ++y) CHECK(mu[static_cast<std::size_t>(y)] == doctest::Approx(c.prob(y, p)).epsilon(1e-14));
    }
}

TEST_CASE("regime report") {
    CHECK(regime_report(1, 5, 5).fast);
    CHECK(regime_report(1, 5, 5).threshold == doctest::Approx(1.0));
    CHECK(regime_report(3, 7, 7).threshold == doctest::Approx(1.0));
    CHECK_FALSE(regime_report(3, 7, 7).fast);
    const int V = 10;
    const double L_sub = 3.0 * V;
    const double L_mod = 3.0 * std::ceil(std::log2(V));
    const double n = L_mod * L_mod * L_mod;  // K = 1
    CHECK(regime_report(L_mod, n, 1).fast);
    CHECK_FALSE(regime_report(L_sub, n, 1).fast);
    CHECK_THROWS_AS(regime_report(0, 1, 1), ContractViolation);
}
