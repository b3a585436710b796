#include "ctlab/twostage.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ctlab/error.hpp"
#include "ctlab/risk.hpp"

namespace ctlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Member {
    int domain = 0;
    int position = 0;
    std::vector<int> parents;
};

// Expected-NLL estimates of pooled classes. Each fold fits on one family
// source and evaluates on another; a single fold with fit == eval gives the
// exact cross-entropy.
class Scorer {
public:
    struct Fold {
        const FamilySource* fit;
        const FamilySource* eval;
    };

    Scorer(std::vector<Fold> folds, int num_domains, double alpha) : folds_(std::move(folds)), alpha_(alpha) {
        norm_.assign(static_cast<std::size_t>(num_domains), 0.0);
        for (int d = 0; d < num_domains; ++d)
            for (std::size_t f = 0; f < folds_.size(); ++f)
                norm_[static_cast<std::size_t>(d)] += table(f, true, d, 0, {}).total();
        for (double n : norm_) require(n > 0.0, "a source domain has no rows");
    }

    double score(const std::vector<Member>& members) {
        double total = 0.0;
        for (std::size_t f = 0; f < folds_.size(); ++f) {
            CountTable pooled = table(f, false, members[0].domain, members[0].position, members[0].parents);
            for (std::size_t m = 1; m < members.size(); ++m)
                pooled += table(f, false, members[m].domain, members[m].position, members[m].parents);
            const Cpt cpt = fit_cpt(pooled, alpha_);
            for (const Member& m : members) {
                const CountTable& ev = table(f, true, m.domain, m.position, m.parents);
                double part = 0.0;
                for (std::size_t k = 0; k < ev.weights.size(); ++k) {
                    if (ev.weights[k] <= 0.0) continue;
                    const double p = cpt.table()[k];
                    if (p <= 0.0) return kInf;
                    part -= ev.weights[k] * std::log(p);
                }
                total += part / norm_[static_cast<std::size_t>(m.domain)];
            }
        }
        return total;
    }

private:
    const CountTable& table(std::size_t fold, bool eval, int d, int pos, const std::vector<int>& pa) {
        auto key = std::make_tuple(fold, eval, d, pos, pa);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        const FamilySource* src = eval ? folds_[fold].eval : folds_[fold].fit;
        return cache_.emplace(std::move(key), src->family(d, pos, pa)).first->second;
    }

    std::vector<Fold> folds_;
    double alpha_;
    std::vector<double> norm_;
    std::map<std::tuple<std::size_t, bool, int, int, std::vector<int>>, CountTable> cache_;
};

// Sorted subsets of {0..i-1} with size <= m, by size then lexicographically.
std::vector<std::vector<int>> subsets(int i, int m) {
    std::vector<std::vector<int>> out{{}};
    std::vector<std::vector<int>> frontier{{}};
    for (int len = 1; len <= std::min(i, m); ++len) {
        std::vector<std::vector<int>> next;
        for (const auto& t : frontier)
            for (int p = t.empty() ? 0 : t.back() + 1; p < i; ++p) {
                auto u = t;
                u.push_back(p);
                next.push_back(std::move(u));
            }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

// Ordered tuples of distinct positions < i with exactly `len` entries.
std::vector<std::vector<int>> tuples(int i, int len) {
    std::vector<std::vector<int>> frontier{{}};
    for (int k = 0; k < len; ++k) {
        std::vector<std::vector<int>> next;
        for (const auto& t : frontier)
            for (int p = 0; p < i; ++p)
                if (std::find(t.begin(), t.end(), p) == t.end()) {
                    auto u = t;
                    u.push_back(p);
                    next.push_back(std::move(u));
                }
        frontier = std::move(next);
    }
    return frontier;
}

struct Cluster {
    std::vector<Member> members;
    double score = 0.0;
};

PretrainResult run_pretrain(Scorer& scorer, const FamilySource& full, const std::vector<int>& sizes,
                            const PretrainConfig& cfg) {
    require(cfg.lambda >= 0.0 && cfg.max_parents >= 0, "lambda and max_parents must be nonnegative");
    const int K = static_cast<int>(sizes.size());

    // Phase 1: parent set per (i, j).
    std::vector<Cluster> clusters;
    for (int j = 0; j < K; ++j)
        for (int i = 0; i < sizes[static_cast<std::size_t>(j)]; ++i) {
            Cluster best;
            double best_val = kInf;
            for (auto& pa : subsets(i, cfg.max_parents)) {
                std::vector<Member> one{{j, i, pa}};
                const double s = scorer.score(one);
                const double val = s + cfg.lambda * static_cast<double>(pa.size());
                if (val < best_val) {
                    best_val = val;
                    best = {std::move(one), s};
                }
            }
            clusters.push_back(std::move(best));
        }

    // Phase 2: best-first merging of same-arity classes; the incoming class may
    // reorder its parents to align with the receiving one.
    while (true) {
        double best_delta = kInf;
        std::size_t ba = 0, bb = 0;
        Cluster merged;
        for (std::size_t a = 0; a < clusters.size(); ++a)
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                const std::size_t arity = clusters[a].members[0].parents.size();
                if (clusters[b].members[0].parents.size() != arity) continue;
                std::vector<int> perm(arity);
                std::iota(perm.begin(), perm.end(), 0);
                do {
                    Cluster c{clusters[a].members, 0.0};
                    for (const Member& m : clusters[b].members) {
                        Member p = m;
                        for (std::size_t k = 0; k < arity; ++k) p.parents[k] = m.parents[static_cast<std::size_t>(perm[k])];
                        c.members.push_back(std::move(p));
                    }
                    c.score = scorer.score(c.members);
                    const double delta = c.score - clusters[a].score - clusters[b].score - cfg.lambda;
                    if (delta < best_delta) {
                        best_delta = delta;
                        ba = a;
                        bb = b;
                        merged = std::move(c);
                    }
                } while (std::next_permutation(perm.begin(), perm.end()));
            }
        if (!(best_delta <= cfg.merge_tol)) break;
        clusters[ba] = std::move(merged);
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    }

    PretrainResult out;
    out.lambda = cfg.lambda;
    out.phi.resize(static_cast<std::size_t>(K));
    out.parents.resize(static_cast<std::size_t>(K));
    for (int j = 0; j < K; ++j) {
        out.phi[static_cast<std::size_t>(j)].assign(static_cast<std::size_t>(sizes[static_cast<std::size_t>(j)]), -1);
        out.parents[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(sizes[static_cast<std::size_t>(j)]));
    }
    // Class ids by first appearance over (domain, position).
    std::vector<std::pair<Site, std::size_t>> order;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        Site first{clusters[c].members[0].position, clusters[c].members[0].domain};
        for (const Member& m : clusters[c].members) first = std::min(first, Site{m.position, m.domain}, [](Site x, Site y) {
            return std::tie(x.domain, x.position) < std::tie(y.domain, y.position);
        });
        order.emplace_back(first, c);
    }
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
        return std::tie(x.first.domain, x.first.position) < std::tie(y.first.domain, y.first.position);
    });
    for (std::size_t id = 0; id < order.size(); ++id) {
        const Cluster& c = clusters[order[id].second];
        CountTable pooled = full.family(c.members[0].domain, c.members[0].position, c.members[0].parents);
        for (std::size_t m = 1; m < c.members.size(); ++m)
            pooled += full.family(c.members[m].domain, c.members[m].position, c.members[m].parents);
        out.psi.push_back(fit_cpt(pooled, cfg.alpha));
        for (const Member& m : c.members) {
            out.phi[static_cast<std::size_t>(m.domain)][static_cast<std::size_t>(m.position)] = static_cast<int>(id);
            out.parents[static_cast<std::size_t>(m.domain)][static_cast<std::size_t>(m.position)] = m.parents;
        }
        out.nll += c.score;
    }
    out.d = static_cast<int>(clusters.size());
    out.objective = out.nll + cfg.lambda * (out.d + out.edges());
    return out;
}

std::vector<int> recency(int i, int cap) {
    std::vector<int> pa;
    for (int p = std::max(0, i - cap); p < i; ++p) pa.push_back(p);
    return pa;
}

}  // namespace

int PretrainResult::edges() const {
    int e = 0;
    for (const auto& dom : parents)
        for (const auto& pa : dom) e += static_cast<int>(pa.size());
    return e;
}

PretrainResult pretrain_tabular(const std::vector<Dataset>& sources, const PretrainConfig& config) {
    require(!sources.empty(), "pretraining needs at least one source");
    std::vector<Dataset> a, b;
    std::vector<int> sizes;
    const double half[] = {0.5, 0.5};
    for (std::size_t j = 0; j < sources.size(); ++j) {
        require(sources[j].rows() >= 2, "each source needs at least two rows");
        auto parts = split_dataset(sources[j], half, config.fold_seed + j);
        a.push_back(std::move(parts[0]));
        b.push_back(std::move(parts[1]));
        sizes.push_back(sources[j].num_vars());
    }
    auto ptrs = [](const std::vector<Dataset>& v) {
        std::vector<const Dataset*> p;
        for (const auto& d : v) p.push_back(&d);
        return p;
    };
    const DataFamilies fa(ptrs(a)), fb(ptrs(b)), full(ptrs(sources));
    Scorer scorer({{&fa, &fb}, {&fb, &fa}}, static_cast<int>(sources.size()), config.alpha);
    return run_pretrain(scorer, full, sizes, config);
}

PretrainResult pretrain_exact(const FamilySource& masses, const PretrainConfig& config) {
    std::vector<int> sizes;
    for (int d = 0; d < masses.num_domains(); ++d) sizes.push_back(masses.domain_size(d));
    Scorer scorer({{&masses, &masses}}, masses.num_domains(), config.alpha);
    return run_pretrain(scorer, masses, sizes, config);
}

double pretrain_objective(const FamilySource& masses, const std::vector<std::vector<int>>& phi,
                          const std::vector<std::vector<std::vector<int>>>& parents, double lambda, double alpha) {
    Scorer scorer({{&masses, &masses}}, masses.num_domains(), alpha);
    std::map<int, std::vector<Member>> classes;
    int edges = 0;
    for (std::size_t j = 0; j < phi.size(); ++j)
        for (std::size_t i = 0; i < phi[j].size(); ++i) {
            classes[phi[j][i]].push_back({static_cast<int>(j), static_cast<int>(i), parents[j][i]});
            edges += static_cast<int>(parents[j][i].size());
        }
    double total = lambda * static_cast<double>(static_cast<int>(classes.size()) + edges);
    for (const auto& [id, members] : classes) {
        for (const Member& m : members)
            require(m.parents.size() == members[0].parents.size(), "class mixes parent arities");
        total += scorer.score(members);
    }
    return total;
}

ExhaustivePretrain pretrain_exhaustive(const FamilySource& masses, int max_parents, double lambda) {
    Scorer scorer({{&masses, &masses}}, masses.num_domains(), 0.0);
    std::vector<std::pair<int, int>> sites;
    for (int d = 0; d < masses.num_domains(); ++d)
        for (int i = 0; i < masses.domain_size(d); ++i) sites.emplace_back(d, i);
    const int S = static_cast<int>(sites.size());
    require(S <= 16, "exhaustive pretraining is limited to 16 sites");
    const std::size_t full = (std::size_t{1} << S) - 1;

    // Best single-class cost of every site subset.
    std::vector<double> cost(full + 1, kInf);
    std::vector<std::vector<Member>> best_members(full + 1);
    for (std::size_t mask = 1; mask <= full; ++mask) {
        std::vector<int> idx;
        for (int s = 0; s < S; ++s)
            if (mask >> s & 1) idx.push_back(s);
        for (int a = 0; a <= max_parents; ++a) {
            std::vector<std::vector<std::vector<int>>> choices;
            bool possible = true;
            for (int s : idx) {
                choices.push_back(tuples(sites[static_cast<std::size_t>(s)].second, a));
                if (choices.back().empty()) possible = false;
            }
            if (!possible) continue;
            std::vector<std::size_t> pick(idx.size(), 0);
            std::vector<Member> members(idx.size());
            while (true) {
                for (std::size_t k = 0; k < idx.size(); ++k)
                    members[k] = {sites[static_cast<std::size_t>(idx[k])].first, sites[static_cast<std::size_t>(idx[k])].second,
                                  choices[k][pick[k]]};
                const double c = scorer.score(members) + lambda * (1.0 + a * static_cast<double>(idx.size()));
                if (c < cost[mask]) {
                    cost[mask] = c;
                    best_members[mask] = members;
                }
                std::size_t k = 0;
                for (; k < idx.size(); ++k) {
                    if (++pick[k] < choices[k].size()) break;
                    pick[k] = 0;
                }
                if (k == idx.size()) break;
            }
        }
    }
    // Partition DP: the block holding the lowest remaining site is chosen first.
    std::vector<double> f(full + 1, kInf);
    std::vector<std::size_t> block(full + 1, 0);
    f[0] = 0.0;
    for (std::size_t mask = 1; mask <= full; ++mask) {
        const std::size_t low = mask & (~mask + 1);
        const std::size_t rest = mask ^ low;
        for (std::size_t sub = rest;; sub = (sub - 1) & rest) {
            const std::size_t b = sub | low;
            const double v = cost[b] + f[mask ^ b];
            if (v < f[mask]) {
                f[mask] = v;
                block[mask] = b;
            }
            if (sub == 0) break;
        }
    }
    ExhaustivePretrain out;
    out.objective = f[full];
    for (int d = 0; d < masses.num_domains(); ++d) {
        out.phi.emplace_back(static_cast<std::size_t>(masses.domain_size(d)), -1);
        out.parents.emplace_back(static_cast<std::size_t>(masses.domain_size(d)));
    }
    int cls = 0;
    for (std::size_t mask = full; mask != 0; mask ^= block[mask], ++cls)
        for (const Member& m : best_members[block[mask]]) {
            out.phi[static_cast<std::size_t>(m.domain)][static_cast<std::size_t>(m.position)] = cls;
            out.parents[static_cast<std::size_t>(m.domain)][static_cast<std::size_t>(m.position)] = m.parents;
        }
    return out;
}

void finetune_target_structure(const PretrainResult& pre, const Dataset& ft, FinetuneResult& out) {
    require(ft.rows() > 0, "fine-tuning needs target rows");
    const int T = ft.num_vars();
    out.parents.assign(static_cast<std::size_t>(T), {});
    out.phi.assign(static_cast<std::size_t>(T), -1);
    for (int i = 0; i < T; ++i) {
        double best = kInf;
        for (int c = 0; c < pre.d; ++c) {
            const Cpt& psi = pre.psi[static_cast<std::size_t>(c)];
            require(psi.vocab() == ft.vocab(), "pretrained vocabulary differs from the target");
            if (psi.arity() > i) continue;
            for (const auto& pa : tuples(i, psi.arity())) {
                const double nll = nll_risk(psi, project_rows(ft, i, pa));
                if (nll < best) {
                    best = nll;
                    out.phi[static_cast<std::size_t>(i)] = c;
                    out.parents[static_cast<std::size_t>(i)] = pa;
                }
            }
        }
    }
}

void fit_target_only_fallbacks(const Dataset& tr, int vocab, int num_vars, FinetuneResult& out, int arity_cap,
                               double alpha) {
    require(arity_cap >= 0, "fallback arity cap must be nonnegative");
    require(tr.rows() == 0 || (tr.vocab() == vocab && tr.num_vars() == num_vars), "fallback data layout mismatch");
    out.fallback_parents.clear();
    out.fallbacks.clear();
    for (int i = 0; i < num_vars; ++i) {
        auto pa = recency(i, arity_cap);
        if (tr.rows() == 0) out.fallbacks.push_back(Cpt::uniform(static_cast<int>(pa.size()), vocab, true));
        else out.fallbacks.push_back(fit_cpt(project_rows(tr, i, pa), vocab, alpha));
        out.fallback_parents.push_back(std::move(pa));
    }
}

double mixture_nll(const PretrainResult& pre, const FinetuneResult& ft, const Dataset& te, int i, double s) {
    require(te.rows() > 0, "held-out rows are empty");
    const std::size_t k = static_cast<std::size_t>(i);
    const int c = ft.phi.at(k);
    const Cpt& mu = ft.fallbacks.at(k);
    std::vector<int> x;
    double total = 0.0;
    for (std::size_t r = 0; r < te.rows(); ++r) {
        const int y = te.at(r, i);
        x.clear();
        for (int p : ft.fallback_parents[k]) x.push_back(te.at(r, p));
        double q = (1.0 - s) * mu.prob(y, x);
        if (c >= 0 && s > 0.0) {
            x.clear();
            for (int p : ft.parents[k]) x.push_back(te.at(r, p));
            q += s * pre.psi[static_cast<std::size_t>(c)].prob(y, x);
        }
        total -= q > 0.0 ? std::log(q) : -kInf;
    }
    return total / static_cast<double>(te.rows());
}

void learn_transport_indicators(const PretrainResult& pre, FinetuneResult& ft, const Dataset& te) {
    const int T = static_cast<int>(ft.phi.size());
    require(static_cast<int>(ft.fallbacks.size()) == T, "fallbacks must be fitted first");
    ft.s.assign(static_cast<std::size_t>(T), 0.0);
    for (int i = 0; i < T; ++i) {
        if (ft.phi[static_cast<std::size_t>(i)] < 0) continue;
        auto f = [&](double s) { return mixture_nll(pre, ft, te, i, s); };
        double lo = 0.0, hi = 1.0;
        while (hi - lo > 1e-4) {
            const double m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
            if (f(m1) < f(m2)) hi = m2;
            else lo = m1;
        }
        double s = 0.5 * (lo + hi), best = f(s);
        if (const double f0 = f(0.0); f0 < best) {
            s = 0.0;
            best = f0;
        }
        if (f(1.0) <= best) s = 1.0;
        ft.s[static_cast<std::size_t>(i)] = s;
    }
}

CircuitPredictor assemble_final_predictor(const PretrainResult& pre, const FinetuneResult& ft, int prefix_len,
                                          int max_width) {
    const int T = static_cast<int>(ft.phi.size());
    require(static_cast<int>(ft.s.size()) == T && static_cast<int>(ft.fallbacks.size()) == T,
            "fine-tuning is incomplete");
    require(prefix_len >= 0 && prefix_len < T, "prefix must leave the query");
    const int V = ft.fallbacks.front().vocab();
    std::vector<CircuitNode> nodes;
    for (int i = prefix_len; i < T; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        const double s = ft.phi[k] < 0 ? 0.0 : ft.s[k];
        if (s >= 1.0) {
            nodes.push_back({i, ft.parents[k], pre.psi[static_cast<std::size_t>(ft.phi[k])]});
            continue;
        }
        if (s <= 0.0) {
            nodes.push_back({i, ft.fallback_parents[k], ft.fallbacks[k]});
            continue;
        }
        std::vector<int> scope = ft.parents[k];
        for (int p : ft.fallback_parents[k])
            if (std::find(scope.begin(), scope.end(), p) == scope.end()) scope.push_back(p);
        auto slot = [&](int p) { return static_cast<std::size_t>(std::find(scope.begin(), scope.end(), p) - scope.begin()); };
        const Cpt& psi = pre.psi[static_cast<std::size_t>(ft.phi[k])];
        const Cpt& mu = ft.fallbacks[k];
        const std::size_t rows = ipow(static_cast<std::size_t>(V), static_cast<int>(scope.size()));
        std::vector<double> table;
        table.reserve(rows * static_cast<std::size_t>(V));
        std::vector<int> vals(scope.size()), xa, xb;
        for (std::size_t r = 0; r < rows; ++r) {
            std::size_t rem = r;
            for (std::size_t q = scope.size(); q-- > 0;) {
                vals[q] = static_cast<int>(rem % static_cast<std::size_t>(V));
                rem /= static_cast<std::size_t>(V);
            }
            xa.clear();
            xb.clear();
            for (int p : ft.parents[k]) xa.push_back(vals[slot(p)]);
            for (int p : ft.fallback_parents[k]) xb.push_back(vals[slot(p)]);
            for (int y = 0; y < V; ++y) table.push_back(s * psi.prob(y, xa) + (1.0 - s) * mu.prob(y, xb));
        }
        nodes.push_back({i, scope, Cpt(static_cast<int>(scope.size()), V, std::move(table))});
    }
    return CircuitPredictor(V, prefix_len, std::move(nodes), max_width);
}

TwoStageResult twostage(const std::vector<Dataset>& sources, const Dataset& target, int prefix_len,
                        const TwoStageConfig& config) {
    for (double f : config.split) require(f > 0.0, "split fractions must be positive");
    const double total = config.split[0] + config.split[1] + config.split[2];
    const double fractions[] = {config.split[0] / total, config.split[1] / total, config.split[2] / total};
    const auto parts = split_dataset(target, fractions, config.split_seed);
    TwoStageResult out;
    out.pretrained = pretrain_tabular(sources, config.pretrain);
    finetune_target_structure(out.pretrained, parts[1], out.finetuned);
    fit_target_only_fallbacks(parts[0], target.vocab(), target.num_vars(), out.finetuned, config.fallback_arity,
                              config.pretrain.alpha);
    learn_transport_indicators(out.pretrained, out.finetuned, parts[2]);
    out.predictor = assemble_final_predictor(out.pretrained, out.finetuned, prefix_len, config.max_width);
    return out;
}

nlohmann::json pretrain_json(const PretrainResult& r) {
    auto psi = nlohmann::json::object();
    for (std::size_t c = 0; c < r.psi.size(); ++c) psi["mechanism_" + std::to_string(c)] = r.psi[c];
    return {{"phi", r.phi}, {"parents", r.parents}, {"d", r.d}, {"lambda", r.lambda},
            {"nll", r.nll}, {"objective", r.objective}, {"psi", psi}};
}

nlohmann::json finetune_json(const FinetuneResult& r) {
    return {{"parents", r.parents}, {"phi", r.phi}, {"fallback_parents", r.fallback_parents}, {"s", r.s}};
}

}  // namespace ctlab
