#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "ctlab/fixtures.hpp"
#include "ctlab/risk.hpp"

using namespace ctlab;

namespace {

int euclid_by_subtraction(int a, int b) {
    while (a != 0 && b != 0) {
        if (a > b) a -= b;
        else b -= a;
    }
    return a + b;
}

// Sums the full product over every assignment of the non-prefix positions.
std::vector<double> brute_force(const CircuitPredictor& c, std::span<const int> prefix) {
    const int V = c.vocab();
    const int M = c.prefix_length();
    const int T = c.target_length();
    std::vector<double> out(static_cast<std::size_t>(V), 0.0);
    std::vector<int> a(static_cast<std::size_t>(T));
    std::copy(prefix.begin(), prefix.end(), a.begin());
    const std::size_t total = ipow(static_cast<std::size_t>(V), T - M);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (int i = T; i-- > M;) {
            a[static_cast<std::size_t>(i)] = static_cast<int>(rem % static_cast<std::size_t>(V));
            rem /= static_cast<std::size_t>(V);
        }
        double w = 1.0;
        for (const auto& node : c.nodes()) {
            std::vector<int> pa;
            for (int p : node.parents) pa.push_back(a[static_cast<std::size_t>(p)]);
            w *= node.cpt.prob(a[static_cast<std::size_t>(node.position)], pa);
        }
        out[static_cast<std::size_t>(a.back())] += w;
    }
    return out;
}

Cpt random_cpt(int arity, int vocab, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(0.5, 1.0);
    std::vector<double> t;
    for (std::size_t r = 0; r < ipow(static_cast<std::size_t>(vocab), arity); ++r) {
        std::vector<double> row(static_cast<std::size_t>(vocab));
        double s = 0.0;
        for (double& p : row) s += (p = g(rng) + 1e-3);
        for (double p : row) t.push_back(p / s);
    }
    return Cpt(arity, vocab, std::move(t));
}

CircuitPredictor truth_circuit(const Scm& scm, int M) {
    std::vector<CircuitNode> nodes;
    for (int i = M; i < scm.size(); ++i) nodes.push_back({i, scm.parents(i), mechanism_cpt(scm, i)});
    return CircuitPredictor(scm.vocab_size(), M, std::move(nodes), 16);
}

std::vector<int> digits(std::size_t idx, int len, int V) {
    std::vector<int> out(static_cast<std::size_t>(len));
    for (int i = len; i-- > 0;) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(idx % static_cast<std::size_t>(V));
        idx /= static_cast<std::size_t>(V);
    }
    return out;
}

double entropy_u_y() { return -(0.91 * std::log(0.91) + 9 * 0.01 * std::log(0.01)); }

CircuitPredictor module_predictor(const Cpt& cpt, int M, int position, std::vector<int> parents) {
    return CircuitPredictor(cpt.vocab(), M, {{position, std::move(parents), cpt}});
}

}  // namespace

TEST_CASE("fit_cpt smoothing and flagged rows") {
    RowSet rows;
    rows.arity = 0;
    for (Token y : {0, 0, 0, 1}) rows.add({}, y);
    const Cpt c = fit_cpt(rows, 2, 1.0);
    CHECK(c.prob(0, std::size_t{0}) == doctest::Approx(4.0 / 6));

    RowSet empty;
    empty.arity = 1;
    const Cpt u = fit_cpt(empty, 3, 0.0);
    CHECK(u.flagged().size() == 3);
    for (double p : u.table()) CHECK(p == doctest::Approx(1.0 / 3));

    CountTable zero(1, 2);
    CHECK(fit_cpt(zero, 0.0).flagged().size() == 2);
}

TEST_CASE("fit_cpt with alpha 0 reproduces empirical frequencies") {
    const auto ex = build_example_2_1();
    const Dataset d = sample_dataset(ex.sources[0], 20000, 2, 0);
    const int x[] = {0, 1};
    const RowSet rows = project_rows(d, 3, x);
    const Cpt c = fit_cpt(rows, 10, 0.0);
    std::vector<double> cnt(1000, 0.0), tot(100, 0.0);
    for (std::size_t r = 0; r < d.rows(); ++r) {
        const std::size_t xi = d.at(r, 0) * 10u + d.at(r, 1);
        cnt[xi * 10 + d.at(r, 3)] += 1;
        tot[xi] += 1;
    }
    for (std::size_t xi = 0; xi < 100; ++xi)
        for (int y = 0; y < 10; ++y) CHECK(c.prob(y, xi) == doctest::Approx(cnt[xi * 10 + y] / tot[xi]).epsilon(1e-12));
}

TEST_CASE("fit_cpt on example 2.1 approaches the exact conditional") {
    const auto ex = build_example_2_1();
    const Dataset d = sample_dataset(ex.sources[0], 100000, 7, 0);
    const int x[] = {0, 1};
    const Cpt c = fit_cpt(project_rows(d, 3, x), 10, 0.1);
    const Cpt truth = exact_conditional(exact_joint(ex.sources[0]), 3, x);
    // Hoeffding per cell, union over all 1000 cells at delta = 1e-3, plus the smoothing shift.
    std::vector<double> tot(100, 0.0);
    for (std::size_t r = 0; r < d.rows(); ++r) tot[d.at(r, 0) * 10u + d.at(r, 1)] += 1;
    for (std::size_t xi = 0; xi < 100; ++xi) {
        const double bound = std::sqrt(std::log(2.0 * 1000 / 1e-3) / (2 * tot[xi])) + 0.1 * 10 / tot[xi];
        for (int y = 0; y < 10; ++y) CHECK(std::abs(c.prob(y, xi) - truth.prob(y, xi)) < bound);
    }
}

TEST_CASE("pool_rows concatenates and checks arity") {
    const auto ex = build_example_2_1();
    const Dataset s = sample_dataset(ex.sources[0], 300, 1, 0);
    const Dataset t = sample_dataset(ex.target, 20, 2);
    std::vector<RowMapping> one{{&s, 3, {0, 1, 2}}};
    const RowSet same = pool_rows(one);
    REQUIRE(same.size() == 300);
    for (std::size_t r = 0; r < 300; ++r) {
        CHECK(same.y(r) == s.at(r, 3));
        CHECK(same.x(r)[0] == s.at(r, 0));
    }
    std::vector<RowMapping> both{{&s, 3, {0, 1}}, {&t, 3, {2, 1}}};
    const RowSet pooled = pool_rows(both);
    CHECK(pooled.size() == 320);
    CHECK(pooled.x(300)[0] == t.at(0, 2));
    std::vector<RowMapping> bad{{&s, 3, {0}}, {&t, 3, {2, 1}}};
    CHECK_THROWS_AS(pool_rows(bad), ContractViolation);
}

TEST_CASE("variable elimination equals brute-force enumeration") {
    std::mt19937_64 rng(99);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Scm s = random_fixture(seed).target;
        const int T = s.size();
        const int V = s.vocab_size();
        for (int M = 0; M < T; ++M) {
            std::vector<CircuitNode> exact, noisy;
            for (int i = M; i < T; ++i) {
                exact.push_back({i, s.parents(i), mechanism_cpt(s, i)});
                noisy.push_back({i, s.parents(i), random_cpt(static_cast<int>(s.parents(i).size()), V, rng)});
            }
            for (auto* nodes : {&exact, &noisy}) {
                const CircuitPredictor c(V, M, *nodes, 16);
                for (std::size_t p = 0; p < ipow(static_cast<std::size_t>(V), M); ++p) {
                    const auto prefix = digits(p, M, V);
                    const auto ve = variable_eliminate(c, prefix);
                    const auto bf = brute_force(c, prefix);
                    double sum = 0.0;
                    for (int y = 0; y < V; ++y) {
                        REQUIRE(std::abs(ve[static_cast<std::size_t>(y)] - bf[static_cast<std::size_t>(y)]) < 1e-10);
                        sum += ve[static_cast<std::size_t>(y)];
                    }
                    REQUIRE(std::abs(sum - 1.0) < 1e-9);
                }
            }
        }
    }
}

TEST_CASE("copy chain without noise gives a point mass") {
    const Scm chain = operator_scm(5, {{}, {0}, {1}, {2}}, {OpKind::Unif, OpKind::Copy, OpKind::Copy, OpKind::Copy}, 0.0);
    const auto c = truth_circuit(chain, 1);
    const int prefix[] = {3};
    const auto mu = c.predict(prefix);
    CHECK(mu[3] == doctest::Approx(1.0));
}

TEST_CASE("gcd chain with exact cpts peaks at the gcd") {
    const auto c7 = truth_circuit(build_gcd_chain(7, 0.02), 2);
    const int p64[] = {6, 4};
    const auto mu = c7.predict(p64);
    CHECK(std::max_element(mu.begin(), mu.end()) - mu.begin() == 2);

    const auto c6 = truth_circuit(build_gcd_chain(6, 0.02), 2);
    for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) {
            const int p[] = {a, b};
            const auto m = c6.predict(p);
            CHECK(std::max_element(m.begin(), m.end()) - m.begin() == euclid_by_subtraction(a, b));
        }

    const auto c3 = truth_circuit(build_gcd_chain(3, 0.05), 2);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            const int p[] = {a, b};
            const auto ve = c3.predict(p);
            const auto bf = brute_force(c3, p);
            for (int y = 0; y < 3; ++y) CHECK(std::abs(ve[static_cast<std::size_t>(y)] - bf[static_cast<std::size_t>(y)]) < 1e-10);
        }
}

TEST_CASE("frontier width budget") {
    std::vector<CircuitNode> nodes;
    std::vector<int> all;
    for (int i = 0; i < 7; ++i) {
        nodes.push_back({i, {}, Cpt::uniform(0, 2)});
        all.push_back(i);
    }
    nodes.push_back({7, all, Cpt::uniform(7, 2)});
    CHECK_THROWS_AS(CircuitPredictor(2, 0, nodes), BudgetExceeded);
    CHECK(CircuitPredictor(2, 0, nodes, 8).frontier_width() == 8);
}

TEST_CASE("nll_risk examples") {
    const Scm det = operator_scm(4, {{}, {0}}, {OpKind::Unif, OpKind::Copy}, 0.0);
    const Dataset d = sample_dataset(det, 500, 4);
    const auto perfect = truth_circuit(det, 1);
    CHECK(nll_risk(perfect, d) == doctest::Approx(0.0));

    const auto ex = build_example_2_1();
    const Dataset t = sample_dataset(ex.target, 200, 3);
    const auto uniform = module_predictor(Cpt::uniform(2, 10), 3, 3, {2, 1});
    CHECK(nll_risk(uniform, t) == doctest::Approx(std::log(10.0)));

    const auto truth = module_predictor(mechanism_cpt(ex.target, 3), 3, 3, {2, 1});
    const auto joint = exact_joint(ex.target);
    const RiskReport r = true_risk(truth, joint);
    CHECK(r.nll == doctest::Approx(entropy_u_y()).epsilon(1e-12));
    CHECK(std::abs(r.excess) < 1e-12);
    const RiskReport ru = true_risk(uniform, joint);
    CHECK(ru.kl == doctest::Approx(std::log(10.0) - entropy_u_y()).epsilon(1e-12));
}

TEST_CASE("excess equals kl and is nonnegative") {
    std::mt19937_64 rng(5);
    for (const auto& fx : {build_t4_fixture(), build_mixed_fixture(), build_example_2_1(), build_gcd_collection(3, 0.1)}) {
        const Scm& s = fx.target;
        const auto joint = exact_joint(s);
        for (int M = 1; M < s.size(); ++M) {
            std::vector<CircuitNode> nodes;
            for (int i = M; i < s.size(); ++i)
                nodes.push_back({i, s.parents(i), random_cpt(static_cast<int>(s.parents(i).size()), s.vocab_size(), rng)});
            const CircuitPredictor c(s.vocab_size(), M, nodes, 16);
            const RiskReport r = true_risk(c, joint);
            CHECK(r.excess >= -1e-9);
            CHECK(std::abs(r.excess - r.kl) < 1e-9);
            // The elimination-based evaluator agrees with the dense joint.
            const RiskReport q = QueryTruth(s, M).evaluate(c);
            CHECK(std::abs(q.nll - r.nll) < 1e-9);
            CHECK(std::abs(q.kl - r.kl) < 1e-9);
            CHECK(std::abs(q.bayes_nll - r.bayes_nll) < 1e-9);
        }
    }
}

TEST_CASE("Monte Carlo fallback brackets the exact risk") {
    const auto fx = build_t4_fixture();
    const auto c = module_predictor(Cpt::uniform(1, 3), 3, 3, {1});
    const RiskReport exact = QueryTruth(fx.target, 3).evaluate(c);
    const RiskReport mc = QueryTruth(fx.target, 3, -1, 1, 100000, 3).evaluate(c);
    CHECK(mc.mc_stderr > 0.0);
    CHECK(std::abs(mc.kl - exact.kl) < 5 * mc.mc_stderr + 1e-12);
}

TEST_CASE("example 2.1 ERM kl decreases with N") {
    const auto ex = build_example_2_1();
    const auto joint = exact_joint(ex.sources[0]);
    double prev = 1e9;
    for (std::size_t N : {1000u, 10000u, 100000u}) {
        const Dataset d = sample_dataset(ex.sources[0], N, 21, 0);
        const int x[] = {0, 1};
        const auto c = module_predictor(fit_cpt(project_rows(d, 3, x), 10), 3, 3, {0, 1});
        const double kl = true_risk(c, joint).kl;
        CHECK(kl < prev);
        prev = kl;
    }
}

TEST_CASE("cpt json round trip") {
    std::mt19937_64 rng(1);
    const Cpt c = random_cpt(2, 3, rng);
    nlohmann::json j = c;
    const Cpt back = j.get<Cpt>();
    for (std::size_t k = 0; k < c.table().size(); ++k) CHECK(back.table()[k] == doctest::Approx(c.table()[k]));
    CHECK(j.at("rows").size() == 9);
}
