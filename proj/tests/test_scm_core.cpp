#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctlab/dataset.hpp"
#include "ctlab/discrepancy.hpp"
#include "ctlab/fixtures.hpp"
#include "ctlab/joint.hpp"

using namespace ctlab;

namespace {

// Subtraction-only Euclid with gcd(a, 0) = a and gcd(0, 0) = 0.
int euclid_by_subtraction(int a, int b) {
    while (a != 0 && b != 0) {
        if (a > b) a -= b;
        else b -= a;
    }
    return a + b;
}

double conditional(const JointTable& joint, int target, int tv, int given, int gv) {
    double num = 0.0, den = 0.0;
    std::vector<int> a(static_cast<std::size_t>(joint.num_vars()));
    for (std::size_t idx = 0; idx < joint.probs().size(); ++idx) {
        std::size_t rem = idx;
        for (int i = joint.num_vars(); i-- > 0;) {
            a[static_cast<std::size_t>(i)] = static_cast<int>(rem % static_cast<std::size_t>(joint.vocab()));
            rem /= static_cast<std::size_t>(joint.vocab());
        }
        if (a[static_cast<std::size_t>(given)] != gv) continue;
        den += joint.probs()[idx];
        if (a[static_cast<std::size_t>(target)] == tv) num += joint.probs()[idx];
    }
    return num / den;
}

// Bow-graph P(Y=1 | X=1) by summing over the 8 exogenous configurations.
double bow_enumeration(double ux, double uy, double uxy, bool use_or) {
    double joint_x1 = 0.0, joint_x1y1 = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const double w = (a ? ux : 1 - ux) * (b ? uy : 1 - uy) * (c ? uxy : 1 - uxy);
                const int x = a ^ c;
                const int y = use_or ? ((x ^ c) | b) : ((x ^ c) ^ b);
                if (x == 1) {
                    joint_x1 += w;
                    if (y == 1) joint_x1y1 += w;
                }
            }
    return joint_x1y1 / joint_x1;
}

}  // namespace

TEST_CASE("apply_operator skeletons and mod conventions") {
    const Vocabulary v10(10);
    const NoiseDraw keep{0.99, 0};
    const int seven[] = {7};
    const int nine[] = {9};
    CHECK(apply_operator({OpKind::Copy, 0.2}, seven, v10, keep) == 7);
    CHECK(apply_operator({OpKind::Plus1, 0.2}, nine, v10, keep) == 0);
    const int zero[] = {0};
    CHECK(apply_operator({OpKind::Minus1, 0.0}, zero, v10, keep) == 9);
    const int ab[] = {3, 0};
    CHECK(apply_operator({OpKind::Mod, 0.0}, ab, v10, keep) == 3);
    const int cd[] = {3, 5};
    CHECK(apply_operator({OpKind::Subtract, 0.0}, cd, v10, keep) == 8);
    CHECK(apply_operator({OpKind::Mult, 0.0}, cd, v10, keep) == 5);
    CHECK(apply_operator({OpKind::Subtract, 0.3}, cd, v10, {0.1, 4}) == 4);
    CHECK_THROWS_AS(apply_operator({OpKind::Sum, 0.0}, seven, v10, keep), ContractViolation);
    const int bad[] = {10};
    CHECK_THROWS_AS(apply_operator({OpKind::Copy, 0.0}, bad, v10, keep), ContractViolation);
    CHECK_THROWS_AS(NoisyOperator(OpKind::Copy, 1.5), ContractViolation);
}

TEST_CASE("operator noise law matches (1-p) + p/|V|") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Vocabulary v(5);
    for (OpKind k : {OpKind::Copy, OpKind::Plus1, OpKind::Minus1, OpKind::Times2, OpKind::Sum, OpKind::Min,
                     OpKind::Max, OpKind::Subtract, OpKind::Mult, OpKind::Mod}) {
        const NoisyOperator op(k, 0.3);
        int hits = 0;
        const int n = 100000;
        for (int t = 0; t < n; ++t) {
            const int args[] = {static_cast<int>(rng() % 5), static_cast<int>(rng() % 5)};
            const std::span<const int> a(args, static_cast<std::size_t>(op.arity()));
            const int out = apply_operator(op, a, v, {unif(rng), static_cast<int>(rng() % 5)});
            hits += out == skeleton(k, a, 5);
        }
        CHECK(std::abs(hits / double(n) - (0.7 + 0.3 / 5)) < 0.01);
    }
}

TEST_CASE("sample_dataset basics") {
    const Scm single = operator_scm(4, {{}}, {OpKind::Unif}, 0.0);
    CHECK(sample_dataset(single, 0, 1).rows() == 0);
    const Dataset d = sample_dataset(single, 40000, 3);
    std::vector<int> counts(4, 0);
    for (std::size_t r = 0; r < d.rows(); ++r) ++counts[d.at(r, 0)];
    for (int c : counts) CHECK(std::abs(c / 40000.0 - 0.25) < 0.01);

    const Dataset again = sample_dataset(single, 40000, 3);
    for (std::size_t r = 0; r < d.rows(); ++r) REQUIRE(d.at(r, 0) == again.at(r, 0));
}

TEST_CASE("example 2.1 source: Y equals X1 - X2 with probability 0.91") {
    const auto ex = build_example_2_1();
    const Dataset d = sample_dataset(ex.sources[0], 100000, 5, 0);
    int hits = 0;
    for (std::size_t r = 0; r < d.rows(); ++r) hits += d.at(r, 3) == (d.at(r, 0) - d.at(r, 1) + 10) % 10;
    CHECK(std::abs(hits / 100000.0 - 0.91) < 0.01);
    CHECK(ex.sources[0].parents(3) == std::vector<int>{0, 1});
    CHECK(ex.target.parents(3) == std::vector<int>{2, 1});
    const auto oracle = induced_discrepancy_oracle(ex);
    CHECK_FALSE(oracle({3, 0}, {3, 1}));

    const auto joint = exact_joint(ex.sources[0]);
    const int given[] = {0, 1};
    const Cpt c = exact_conditional(joint, 3, given);
    for (int a = 0; a < 10; ++a)
        for (int b = 0; b < 10; ++b) {
            const int x[] = {a, b};
            CHECK(c.prob((a - b + 10) % 10, x) == doctest::Approx(0.91).epsilon(1e-12));
        }
}

TEST_CASE("exact_joint on small chains and budget") {
    const Scm chain = operator_scm(3, {{}, {0}}, {OpKind::Unif, OpKind::Copy}, 0.0);
    const auto joint = exact_joint(chain);
    for (int a = 0; a < 3; ++a) CHECK(conditional(joint, 1, a, 0, a) == doctest::Approx(1.0));
    CHECK_FALSE(validate_positivity(joint).ok);
    CHECK_THROWS_AS(exact_joint(build_fig_e_pair().target, 1000), BudgetExceeded);

    const Scm noisy = operator_scm(3, {{}, {0}, {0, 1}}, {OpKind::Unif, OpKind::Plus1, OpKind::Sum}, 0.1);
    CHECK(validate_positivity(exact_joint(noisy), 1e-6).ok);
}

TEST_CASE("exact_conditional of an independent pair is the marginal") {
    const Scm pair = operator_scm(3, {{}, {}}, {OpKind::Unif, OpKind::Unif}, 0.0);
    const auto joint = exact_joint(pair);
    const int given[] = {0};
    const Cpt c = exact_conditional(joint, 1, given);
    for (double p : c.table()) CHECK(p == doctest::Approx(1.0 / 3));
    CHECK(c.flagged().empty());
}

TEST_CASE("bow graph anchors by exogenous enumeration") {
    const auto bow = build_bow_examples();
    const auto j1 = exact_joint(bow.sources[0]);
    const auto j2 = exact_joint(bow.sources[1]);
    const auto js = exact_joint(bow.target);
    CHECK(std::abs(conditional(j1, 1, 1, 0, 1) - 0.0475 / 0.77) < 1e-12);
    CHECK(std::abs(conditional(j1, 1, 1, 0, 1) - bow_enumeration(0.2, 0.05, 0.95, false)) < 1e-12);
    CHECK(std::abs(conditional(js, 1, 1, 0, 1) - 0.0475 / 0.14) < 1e-12);
    CHECK(std::abs(conditional(js, 1, 1, 0, 1) - 0.34) < 0.005);
    CHECK(std::abs(conditional(j1, 1, 1, 0, 1) - 0.06) < 0.005);
    CHECK(std::abs(conditional(j2, 1, 1, 0, 1) - bow_enumeration(0.9, 0.05, 0.95, true)) < 1e-12);

    const auto delta = coarse_delta_sets(bow);
    CHECK(delta[0] == std::set<int>{0});
    CHECK(delta[1] == std::set<int>{1});
}

TEST_CASE("gcd chain skeleton equals subtraction Euclid") {
    for (int V = 3; V <= 12; ++V)
        for (int a = 0; a < V; ++a)
            for (int b = 0; b < V; ++b) REQUIRE(gcd_chain_skeleton(a, b, V) == euclid_by_subtraction(a, b));
    CHECK(gcd_chain_skeleton(6, 4, 7) == 2);
    CHECK(gcd_chain_skeleton(5, 3, 6) == 1);
    CHECK(gcd_chain_skeleton(0, 0, 6) == 0);
    CHECK(build_gcd_chain(6, 0.05).size() == 20);
}

TEST_CASE("gcd chain exact conditional peaks at the gcd") {
    const Scm small = build_gcd_chain(3, 0.05);
    const auto joint = exact_joint(small);
    CHECK(validate_positivity(joint, 1e-30).ok);
    const int given[] = {0, 1};
    const Cpt c = exact_conditional(joint, small.size() - 1, given);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            const int x[] = {a, b};
            int best = 0;
            for (int y = 1; y < 3; ++y)
                if (c.prob(y, x) > c.prob(best, x)) best = y;
            CHECK(best == euclid_by_subtraction(a, b));
        }
}

TEST_CASE("gcd chain positivity at |V|=6") {
    // 6^20 cells are far over budget, so check the per-mechanism floor p/|V| instead;
    // every full assignment has mass at least (1/6)^2 * (0.05/6)^18 > 0.
    const Scm chain = build_gcd_chain(6, 0.05);
    for (int i = 0; i < chain.size(); ++i) {
        const std::size_t rows = ipow(6, static_cast<int>(chain.parents(i).size()));
        for (std::size_t r = 0; r < rows; ++r)
            for (double p : chain.kernel_row(i, r)) CHECK(p >= 0.05 / 6 - 1e-15);
    }
}

TEST_CASE("induced discrepancy oracle on the gcd collection") {
    const auto gcd = build_gcd_collection(6, 0.05);
    const auto oracle = induced_discrepancy_oracle(gcd);
    const int K = 3;
    for (int i = 2; i < gcd.target.size(); ++i) {
        const auto kind = std::get<NoisyOperator>(gcd.target.mechanism(i)).kind;
        CHECK(oracle({2, 0}, {i, K}) == (kind != OpKind::Max));
        CHECK(oracle({2, 1}, {i, K}) == (kind != OpKind::Min));
        if (kind == OpKind::Subtract) CHECK(oracle({2, 1}, {i, K}));
    }
    CHECK_FALSE(oracle({0, 0}, {0, K}));

    const DomainCollection same({gcd.target}, gcd.target);
    const auto o2 = induced_discrepancy_oracle(same);
    for (int i = 0; i < gcd.target.size(); ++i) CHECK_FALSE(o2({i, 0}, {i, 1}));
}

TEST_CASE("discrepancy oracle is an equivalence complement") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto fx = random_fixture(seed);
        const auto o = induced_discrepancy_oracle(fx);
        std::vector<Site> sites;
        for (int d = 0; d < o.num_domains(); ++d)
            for (int i = 0; i < o.domain_size(d); ++i) sites.push_back({i, d});
        for (const Site& a : sites) {
            CHECK_FALSE(o(a, a));
            for (const Site& b : sites) {
                CHECK(o(a, b) == o(b, a));
                for (const Site& c : sites)
                    if (!o(a, b) && !o(b, c)) CHECK_FALSE(o(a, c));
            }
        }
    }
    const DiscrepancyOracle o({{5, 7}, {7, 9}});
    CHECK(o.encoding() == std::vector<int>{0, 1, 1, 2});
}

TEST_CASE("fig E fixture structure") {
    const auto fe = build_fig_e_pair();
    CHECK(fe.sources[0].parents(9) == std::vector<int>{2, 3});
    CHECK(fe.target.parents(9) == std::vector<int>{6, 8});
    std::set<OpKind> src_kinds;
    for (int i = 0; i < 10; ++i) src_kinds.insert(std::get<NoisyOperator>(fe.sources[0].mechanism(i)).kind);
    for (int i = 0; i < 10; ++i)
        CHECK(src_kinds.count(std::get<NoisyOperator>(fe.target.mechanism(i)).kind) == 1);
}

TEST_CASE("ancestral sampling matches exact joints") {
    std::vector<Scm> scms;
    for (const auto& c : {build_example_2_1(), build_t4_fixture(), build_mixed_fixture(), build_bow_examples(),
                          build_gcd_collection(3, 0.1)}) {
        for (const auto& s : c.sources) scms.push_back(s);
        scms.push_back(c.target);
    }
    for (const Scm& s : scms) {
        if (std::pow(s.vocab_size(), s.size()) > 1e6) continue;
        const auto joint = exact_joint(s);
        const Dataset d = sample_dataset(s, 100000, 17);
        std::vector<double> freq(joint.probs().size(), 0.0);
        for (std::size_t r = 0; r < d.rows(); ++r) freq[row_index(d.row(r), s.vocab_size())] += 1.0 / 100000;
        double worst = 0.0;
        for (std::size_t k = 0; k < freq.size(); ++k) worst = std::max(worst, std::abs(freq[k] - joint.probs()[k]));
        CHECK(worst < 0.02);
    }
}

TEST_CASE("dataset csv and scm json round trips") {
    const auto ex = build_example_2_1();
    const Dataset d = sample_dataset(ex.target, 50, 9);
    std::stringstream ss;
    write_csv(ss, d);
    const Dataset back = read_csv(ss, 10);
    REQUIRE(back.rows() == d.rows());
    CHECK(back.seed() == d.seed());
    for (std::size_t r = 0; r < d.rows(); ++r)
        for (int c = 0; c < 4; ++c) CHECK(back.at(r, c) == d.at(r, c));

    const auto bow = build_bow_examples();
    for (const Scm& s : {ex.target, bow.target}) {
        const Scm again = scm_from_json(scm_to_json(s));
        CHECK(scm_to_json(again) == scm_to_json(s));
    }
    CHECK_THROWS_AS(scm_from_json(nlohmann::json::parse(R"({"vocab_size": 3, "variables": [{"id": "a", "op": "sum"}]})")),
                    ContractViolation);

    std::vector<Dataset> parts = split_dataset(d, std::vector<double>{0.5, 0.5}, 1);
    CHECK(parts[0].rows() + parts[1].rows() == 50);
}
