#include "ctlab/fixtures.hpp"

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

namespace ctlab {

using nlohmann::json;

Scm operator_scm(int vocab, std::vector<std::vector<int>> parents, std::vector<OpKind> ops, double noise_p,
                 std::vector<std::string> names) {
    require(parents.size() == ops.size(), "one operator per variable");
    std::vector<Mechanism> mechs;
    for (OpKind k : ops) mechs.emplace_back(NoisyOperator(k, noise_p));
    return Scm(Vocabulary(vocab), CausalDiagram(std::move(parents)), std::move(mechs), std::nullopt,
               std::move(names));
}

DomainCollection build_example_2_1(double noise_p) {
    using enum OpKind;
    const std::vector<std::string> names{"X1", "X2", "X3", "Y"};
    Scm src = operator_scm(10, {{}, {}, {}, {0, 1}}, {Unif, Unif, Unif, Subtract}, noise_p, names);
    Scm tgt = operator_scm(10, {{}, {}, {}, {2, 1}}, {Unif, Unif, Unif, Subtract}, noise_p, names);
    return DomainCollection({std::move(src)}, std::move(tgt));
}

Scm build_gcd_chain(int vocab, double noise_p) {
    using enum OpKind;
    require(vocab >= 3, "gcd chain needs |V| >= 3");
    std::vector<std::vector<int>> parents{{}, {}};
    std::vector<OpKind> ops{Unif, Unif};
    // 0-based: step i reads positions (3i-2, 3i-3) and writes 3i-1, 3i, 3i+1.
    for (int i = 1; i <= vocab; ++i) {
        const int a = 3 * i - 2;
        const int b = 3 * i - 3;
        parents.push_back({a, b});
        ops.push_back(Max);
        parents.push_back({a, b});
        ops.push_back(Min);
        parents.push_back({3 * i - 1, 3 * i});
        ops.push_back(Subtract);
    }
    return operator_scm(vocab, std::move(parents), std::move(ops), noise_p);
}

std::vector<Scm> build_gcd_sources(int vocab, double noise_p, bool with_mod) {
    using enum OpKind;
    const std::vector<std::string> names{"X1", "X2", "Y"};
    std::vector<Scm> out;
    std::vector<OpKind> kinds{Max, Min, Subtract};
    if (with_mod) kinds.push_back(Mod);
    for (OpKind k : kinds) out.push_back(operator_scm(vocab, {{}, {}, {0, 1}}, {Unif, Unif, k}, noise_p, names));
    return out;
}

DomainCollection build_gcd_collection(int vocab, double noise_p) {
    return DomainCollection(build_gcd_sources(vocab, noise_p), build_gcd_chain(vocab, noise_p));
}

int gcd_chain_skeleton(int a, int b, int vocab) {
    const Scm chain = build_gcd_chain(vocab, 0.0);
    std::vector<int> v{a, b};
    for (int i = 2; i < chain.size(); ++i) {
        std::vector<int> args;
        for (int p : chain.parents(i)) args.push_back(v[static_cast<std::size_t>(p)]);
        v.push_back(skeleton(std::get<NoisyOperator>(chain.mechanism(i)).kind, args, vocab));
    }
    return v.back();
}

DomainCollection build_fig_e_pair(int vocab, double noise_p) {
    using enum OpKind;
    Scm src = operator_scm(vocab,
                           {{}, {0}, {0, 1}, {0, 1}, {0, 3}, {0, 4}, {0, 4}, {3, 4}, {3, 5}, {2, 3}},
                           {Unif, Times2, Min, Sum, Min, Subtract, Min, Sum, Min, Sum}, noise_p);
    Scm tgt = operator_scm(vocab,
                           {{}, {0}, {0, 1}, {1, 2}, {0, 3}, {0, 4}, {3, 4}, {1, 5}, {3, 6}, {6, 8}},
                           {Unif, Times2, Subtract, Sum, Subtract, Sum, Subtract, Sum, Sum, Min}, noise_p);
    return DomainCollection({std::move(src)}, std::move(tgt));
}

namespace {

// X <- U_X xor U_XY with U_X ~ Bern(ux); conf state c is the value of U_XY.
TableMechanism bow_x(double ux) {
    return {0, 2, {1.0 - ux, ux, ux, 1.0 - ux}};
}

// Y from z = X xor U_XY: xor-noise gives P(Y=1|z) = z ? 1-uy : uy; or-noise gives z ? 1 : uy.
TableMechanism bow_y(double uy, bool use_or) {
    std::vector<double> probs;
    for (int c = 0; c < 2; ++c)
        for (int x = 0; x < 2; ++x) {
            const int z = x ^ c;
            const double p1 = use_or ? (z ? 1.0 : uy) : (z ? 1.0 - uy : uy);
            probs.push_back(1.0 - p1);
            probs.push_back(p1);
        }
    return {1, 2, std::move(probs)};
}

Scm bow_scm(double ux, double uy, double uxy, bool use_or) {
    return Scm(Vocabulary(2), CausalDiagram({{}, {0}}), {bow_x(ux), bow_y(uy, use_or)},
               SharedExogenous{"U_XY", {1.0 - uxy, uxy}}, {"X", "Y"});
}

}  // namespace

DomainCollection build_bow_family(double ux1, double ux2, double ux_star, double uy, double uxy) {
    return DomainCollection({bow_scm(ux1, uy, uxy, false), bow_scm(ux2, uy, uxy, true)},
                            bow_scm(ux_star, uy, uxy, false));
}

DomainCollection build_bow_examples() { return build_bow_family(0.2, 0.9, 0.9, 0.05, 0.95); }

DomainCollection build_example_a_1(int num_sources) {
    require(num_sources >= 1, "need at least one source");
    const std::vector<std::string> names{"X", "Y"};
    auto make = [&](std::vector<double> y_table) {
        std::vector<Mechanism> mechs{NoisyOperator(OpKind::Unif, 1.0), TableMechanism{1, 1, std::move(y_table)}};
        return Scm(Vocabulary(2), CausalDiagram({{}, {0}}), std::move(mechs), std::nullopt, names);
    };
    std::vector<Scm> sources;
    for (int k = 0; k < num_sources; ++k) sources.push_back(make({0.5, 0.5, 0.5, 0.5}));
    return DomainCollection(std::move(sources), make({0.9, 0.1, 0.1, 0.9}));
}

DomainCollection build_t4_fixture(double noise_p) {
    using enum OpKind;
    Scm src = operator_scm(3, {{}, {0}, {0, 1}, {2}}, {Unif, Plus1, Sum, Minus1}, noise_p);
    Scm tgt = operator_scm(3, {{}, {0}, {1, 0}, {2}}, {Unif, Minus1, Sum, Plus1}, noise_p);
    return DomainCollection({std::move(src)}, std::move(tgt));
}

DomainCollection build_mixed_fixture(double noise_p) {
    using enum OpKind;
    Scm src = operator_scm(5, {{}, {0}, {0, 1}, {2}}, {Unif, Plus1, Sum, Copy}, noise_p);
    Scm tgt = operator_scm(5, {{}, {0}, {0, 1}, {1, 2}}, {Unif, Plus1, Sum, Mult}, noise_p);
    return DomainCollection({std::move(src)}, std::move(tgt));
}

namespace {

const std::vector<OpKind>& kinds_of_arity(int arity) {
    using enum OpKind;
    static const std::vector<OpKind> a0{Unif};
    static const std::vector<OpKind> a1{Copy, Plus1, Minus1, Times2};
    static const std::vector<OpKind> a2{Sum, Min, Max, Subtract, Mult, Mod};
    return arity == 0 ? a0 : arity == 1 ? a1 : a2;
}

template <typename Rng>
int pick(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

template <typename Rng>
std::vector<int> pick_parents(Rng& rng, int i, int arity) {
    std::vector<int> pool(static_cast<std::size_t>(i));
    for (int k = 0; k < i; ++k) pool[static_cast<std::size_t>(k)] = k;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(static_cast<std::size_t>(arity));
    return pool;
}

}  // namespace

DomainCollection random_fixture(std::uint64_t seed, int max_T, int max_vocab, int num_sources) {
    require(max_T >= 3 && max_vocab >= 2 && num_sources >= 1, "random fixture bounds too small");
    std::mt19937_64 rng(seed);
    const int T = pick(rng, 3, max_T);
    const int V = pick(rng, 2, max_vocab);
    const double levels[] = {0.05, 0.1, 0.2, 0.3};

    auto random_mechanism = [&](int i) {
        const int arity = i == 0 ? 0 : pick(rng, 0, std::min(i, 2));
        const auto& kinds = kinds_of_arity(arity);
        const OpKind k = kinds[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(kinds.size()) - 1))];
        return NoisyOperator(k, levels[pick(rng, 0, 3)]);
    };

    std::vector<std::vector<int>> parents;
    std::vector<Mechanism> mechs;
    std::vector<NoisyOperator> pool;
    for (int i = 0; i < T; ++i) {
        NoisyOperator op = random_mechanism(i);
        parents.push_back(pick_parents(rng, i, op.arity()));
        mechs.emplace_back(op);
        pool.push_back(op);
    }
    Scm target(Vocabulary(V), CausalDiagram(parents), mechs);

    std::vector<Scm> sources;
    for (int k = 0; k < num_sources; ++k) {
        const int Tk = pick(rng, 2, max_T);
        std::vector<std::vector<int>> pk;
        std::vector<Mechanism> mk;
        for (int i = 0; i < Tk; ++i) {
            NoisyOperator op;
            const NoisyOperator& reuse = pool[static_cast<std::size_t>(pick(rng, 0, T - 1))];
            if (pick(rng, 0, 9) < 6 && reuse.arity() <= i) op = reuse;
            else op = random_mechanism(i);
            pk.push_back(pick_parents(rng, i, op.arity()));
            mk.emplace_back(op);
        }
        sources.emplace_back(Vocabulary(V), CausalDiagram(pk), mk);
    }
    return DomainCollection(std::move(sources), std::move(target));
}

DomainCollection fixture_by_name(const std::string& name, const json& params) {
    const double p = params.value("noise_p", -1.0);
    if (name == "ex2_1") return build_example_2_1(p < 0 ? 0.1 : p);
    if (name == "gcd") return build_gcd_collection(params.value("vocab", 6), p < 0 ? 0.05 : p);
    if (name == "fig_e") return build_fig_e_pair(params.value("vocab", 10), p < 0 ? 0.1 : p);
    if (name == "bow") return build_bow_examples();
    if (name == "ex_a1") return build_example_a_1(params.value("sources", 1));
    if (name == "t4") return build_t4_fixture(p < 0 ? 0.1 : p);
    if (name == "mixed") return build_mixed_fixture(p < 0 ? 0.05 : p);
    if (name == "random") return random_fixture(params.value("fixture_seed", std::uint64_t{0}));
    throw ContractViolation("unknown fixture: " + name);
}

int fixture_prefix(const std::string& name, const DomainCollection& domains) {
    if (name == "gcd" || name == "t4") return 2;
    if (name == "fig_e") return kFigEPrefix;
    if (name == "mixed") return 1;
    return domains.target.size() - 1;
}

json scm_to_json(const Scm& scm) {
    json vars = json::array();
    for (int i = 0; i < scm.size(); ++i) {
        json v{{"id", scm.name(i)}};
        json parents = json::array();
        for (int p : scm.parents(i)) parents.push_back(scm.name(p));
        v["parents"] = parents;
        if (const auto* op = std::get_if<NoisyOperator>(&scm.mechanism(i))) {
            v["op"] = std::string(to_string(op->kind));
            v["noise_p"] = op->noise_p;
        } else {
            const auto& t = std::get<TableMechanism>(scm.mechanism(i));
            v["op"] = "table";
            v["confounder_states"] = t.confounder_states;
            v["probs"] = t.probs;
        }
        vars.push_back(v);
    }
    json j{{"vocab_size", scm.vocab_size()}, {"variables", vars}};
    if (scm.confounder())
        j["shared_exogenous"] = {{"name", scm.confounder()->name}, {"weights", scm.confounder()->weights}};
    return j;
}

Scm scm_from_json(const json& j) {
    try {
        const int vocab = j.at("vocab_size").get<int>();
        std::vector<std::string> names;
        for (const auto& v : j.at("variables")) names.push_back(v.at("id").get<std::string>());
        auto index = [&](const json& ref) {
            if (ref.is_number_integer()) return ref.get<int>();
            const auto it = std::find(names.begin(), names.end(), ref.get<std::string>());
            require(it != names.end(), "unknown parent id " + ref.dump());
            return static_cast<int>(it - names.begin());
        };
        std::vector<std::vector<int>> parents;
        std::vector<Mechanism> mechs;
        for (const auto& v : j.at("variables")) {
            std::vector<int> pa;
            for (const auto& ref : v.value("parents", json::array())) pa.push_back(index(ref));
            const std::string op = v.at("op").get<std::string>();
            if (op == "table") {
                mechs.emplace_back(TableMechanism{static_cast<int>(pa.size()), v.value("confounder_states", 1),
                                                  v.at("probs").get<std::vector<double>>()});
            } else {
                NoisyOperator nop(op_kind_from_string(op), v.value("noise_p", 0.0));
                require(nop.arity() == static_cast<int>(pa.size()), "operator arity does not match parents of " +
                                                                        v.at("id").get<std::string>());
                mechs.emplace_back(nop);
            }
            parents.push_back(std::move(pa));
        }
        std::optional<SharedExogenous> conf;
        if (j.contains("shared_exogenous"))
            conf = SharedExogenous{j["shared_exogenous"].value("name", std::string("U")),
                                   j["shared_exogenous"].at("weights").get<std::vector<double>>()};
        return Scm(Vocabulary(vocab), CausalDiagram(std::move(parents)), std::move(mechs), std::move(conf),
                   std::move(names));
    } catch (const json::exception& e) {
        throw ContractViolation(std::string("malformed scm json: ") + e.what());
    }
}

}  // namespace ctlab
