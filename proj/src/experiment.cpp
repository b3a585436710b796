#include "ctlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include "ctlab/adaptation.hpp"
#include "ctlab/bounds.hpp"
#include "ctlab/fixtures.hpp"
#include "ctlab/joint.hpp"
#include "ctlab/risk.hpp"
#include "ctlab/transport.hpp"
#include "ctlab/twostage.hpp"

namespace ctlab {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<std::string> kResultColumns{"experiment", "fixture", "method", "K", "T",      "vocab", "N",
                                              "n",          "seed",    "nll",    "excess", "kl",  "extra"};

namespace {

const std::set<std::string> kAlgorithms{"simple-tr", "simple-ad", "module-tr", "circuit-tr",
                                        "circuit-ad", "twostage",  "pretrain",  "bounds"};

template <class T>
std::vector<T> grid(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing field: ") + key);
    const json& v = j.at(key);
    std::vector<T> out;
    if (!v.is_array()) throw ConfigError(std::string(key) + " must be an array");
    for (const auto& e : v) {
        if (e.is_number_unsigned() || (e.is_number_integer() && e.get<long long>() >= 0)) out.push_back(e.get<T>());
        else if (e.is_number_float() && e.get<double>() >= 0 && std::floor(e.get<double>()) == e.get<double>())
            out.push_back(static_cast<T>(e.get<double>()));
        else throw ConfigError(std::string(key) + " entries must be non-negative integers");
    }
    if (out.empty()) throw ConfigError(std::string(key) + " must not be empty");
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<CausalDiagram> diagrams_of(const DomainCollection& c) {
    std::vector<CausalDiagram> out;
    for (int d = 0; d <= c.num_sources(); ++d) out.push_back(c.domain(d).diagram());
    return out;
}

std::vector<int> digits(std::size_t idx, int len, int V) {
    std::vector<int> out(static_cast<std::size_t>(len));
    for (int i = len; i-- > 0;) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(idx % static_cast<std::size_t>(V));
        idx /= static_cast<std::size_t>(V);
    }
    return out;
}

struct Cell {
    std::size_t N = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

struct CellContext {
    const ExperimentConfig& config;
    const DomainCollection& domains;
    int prefix = 0;
    double alpha = kDefaultAlpha;
};

struct CellData {
    std::vector<Dataset> sources;
    Dataset target;
    json seeds;
};

CellData draw(const DomainCollection& dom, const Cell& c) {
    CellData d;
    json src = json::array();
    for (int j = 0; j < dom.num_sources(); ++j) {
        const std::uint64_t s = derive_seed(c.seed, static_cast<std::uint64_t>(j) + 1);
        d.sources.push_back(sample_dataset(dom.sources[static_cast<std::size_t>(j)], c.N, s, j));
        src.push_back(s);
    }
    const std::uint64_t t = derive_seed(c.seed, 0);
    d.target = c.n > 0 ? sample_dataset(dom.target, c.n, t)
                       : Dataset(kTargetDomain, dom.target.size(), dom.target.vocab_size(), t);
    d.seeds = {{"N", c.N}, {"n", c.n}, {"seed", c.seed}, {"source_seeds", src}, {"target_seed", t}};
    return d;
}

void set_risk(ResultRow& row, const RiskReport& r) {
    row.nll = r.nll;
    row.excess = r.excess;
    row.kl = r.kl;
}

std::vector<int> iota_vec(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

void run_simple_tr(const CellContext& cx, const CellData& data, ResultRow& row, json& detail) {
    const int T = cx.domains.target.size();
    const QueryTruth truth(cx.domains.target, T - 1);
    auto wrap = [&](const Cpt& c) { return CircuitPredictor(c.vocab(), T - 1, {{T - 1, iota_vec(T - 1), c}}); };
    const DeltaSets delta = coarse_delta_sets(cx.domains);
    const Cpt tr = simple_tr(data.sources, data.target, delta, cx.alpha);
    set_risk(row, truth.evaluate(wrap(tr)));
    const DeltaSets none(delta.size(), std::set<int>{T - 1});
    row.extra["target_only_kl"] = truth.evaluate(wrap(simple_tr(data.sources, data.target, none, cx.alpha))).kl;
    detail["delta"] = delta;
}

void run_simple_ad(const CellContext& cx, const CellData& data, const Cell& c, ResultRow& row, json& detail) {
    const int T = cx.domains.target.size();
    const QueryTruth truth(cx.domains.target, T - 1);
    const auto res = simple_ad(data.sources, data.target, derive_seed(c.seed, 101), cx.alpha);
    set_risk(row, truth.evaluate(CircuitPredictor(res.psi.vocab(), T - 1, {{T - 1, iota_vec(T - 1), res.psi}})));
    row.extra["pooled"] = res.pooled;
    json scores = json::array();
    for (const auto& [subset, nll] : res.scores) scores.push_back({{"subset", subset}, {"nll", nll}});
    detail["scores"] = scores;
}

void run_module_tr(const CellContext& cx, const CellData& data, ResultRow& row, json& detail) {
    std::vector<ModuleScope> scopes;
    for (int d = 0; d <= cx.domains.num_sources(); ++d) {
        const Scm& s = cx.domains.domain(d);
        scopes.push_back({s.size() - 1, s.parents(s.size() - 1)});
    }
    std::vector<Dataset> all = data.sources;
    all.push_back(data.target);
    const int q = cx.domains.target.size() - 1;
    for (int p : scopes.back().parents)
        if (p >= cx.prefix) throw ConfigError("module-tr needs the target query parents inside the prefix");
    const QueryTruth truth(cx.domains.target, cx.prefix);
    auto wrap = [&](const Cpt& c) { return CircuitPredictor(c.vocab(), cx.prefix, {{q, scopes.back().parents, c}}); };
    const DeltaSets delta = coarse_delta_sets(cx.domains);
    set_risk(row, truth.evaluate(wrap(module_tr(all, delta, scopes, cx.alpha))));
    const DeltaSets none(delta.size(), std::set<int>{q});
    row.extra["target_only_kl"] = truth.evaluate(wrap(module_tr(all, none, scopes, cx.alpha))).kl;
    detail["delta"] = delta;
}

void run_circuit_tr(const CellContext& cx, const CellData& data, ResultRow& row, json& detail) {
    const auto oracle = induced_discrepancy_oracle(cx.domains);
    const auto diagrams = diagrams_of(cx.domains);
    const auto& p = cx.config.params;
    TransportOptions opt{cx.alpha, p.value("max_width", kDefaultFrontierWidth)};
    if (p.value("exact", false)) {
        // Exact-limit tables at every prefix against the exact conditional.
        opt.alpha = 0.0;
        const auto fam = exact_families(cx.domains);
        const auto joint = exact_joint(cx.domains.target);
        const int T = cx.domains.target.size();
        const int V = cx.domains.target.vocab_size();
        double worst = 0.0;
        for (int M = 1; M < T; ++M) {
            const auto res = circuit_tr(fam, oracle, diagrams, M, opt);
            const Cpt truth = exact_conditional(joint, T - 1, iota_vec(M));
            for (std::size_t r = 0; r < ipow(static_cast<std::size_t>(V), M); ++r) {
                const auto mu = res.predictor.predict(digits(r, M, V));
                for (int y = 0; y < V; ++y) worst = std::max(worst, std::abs(mu[static_cast<std::size_t>(y)] - truth.prob(y, r)));
            }
            if (M == cx.prefix) set_risk(row, true_risk(res.predictor, joint));
        }
        row.extra["max_abs_error"] = worst;
        row.extra["prefixes"] = T - 1;
        return;
    }
    std::vector<const Dataset*> ptrs;
    for (const auto& d : data.sources) ptrs.push_back(&d);
    ptrs.push_back(&data.target);
    const DataFamilies fam(ptrs);
    const auto res = circuit_tr(fam, oracle, diagrams, cx.prefix, opt);
    const QueryTruth truth(cx.domains.target, cx.prefix);
    set_risk(row, truth.evaluate(res.predictor));
    const json manifest = transport_manifest(res);
    json status = json::array();
    for (const auto& st : res.status) status.push_back({{"position", st.position}, {"transported", st.transported}});
    row.extra["positions"] = status;
    detail["transport"] = manifest;
    if (cx.config.fixture == "gcd") {
        const int V = cx.domains.target.vocab_size();
        int match = 0;
        for (int a = 0; a < V; ++a)
            for (int b = 0; b < V; ++b) {
                const int pre[] = {a, b};
                const auto mu = res.predictor.predict(pre);
                const int arg = static_cast<int>(std::max_element(mu.begin(), mu.end()) - mu.begin());
                match += arg == gcd_chain_skeleton(a, b, V);
            }
        row.extra["argmax_match"] = match;
        row.extra["prefixes"] = V * V;
    }
}

SearchConfig search_config(const CellContext& cx, const Cell& c) {
    SearchConfig sc;
    sc.prefix_len = cx.prefix;
    sc.split_seed = derive_seed(c.seed, 103);
    sc.max_parents = cx.config.params.value("max_parents", 2);
    sc.holdout = cx.config.params.value("holdout", 0.5);
    sc.transport.alpha = cx.alpha;
    return sc;
}

void run_circuit_ad(const CellContext& cx, const CellData& data, const Cell& c, ResultRow& row, json& detail) {
    SearchConfig sc = search_config(cx, c);
    const auto truth_h = true_structure(cx.domains);
    const std::string mode = cx.config.params.value("mode", "guided");
    if (mode == "module") {
        sc.candidates = module_hypotheses(truth_h, cx.prefix, sc.max_parents);
        sc.target_size = cx.prefix + 1;
    } else if (mode == "guided") {
        sc.target_size = cx.config.params.value("target_size", 0);
        sc.candidates = {truth_h};
    } else {
        throw ConfigError("circuit-ad mode must be guided or module");
    }
    const auto res = circuit_ad(data.sources, data.target, sc);
    const QueryTruth truth(cx.domains.target, cx.prefix);
    set_risk(row, truth.evaluate(res.predictor));
    row.extra["chosen"] = res.chosen.label;
    row.extra["chosen_nll"] = res.scores[res.chosen_index].nll;
    for (const auto& s : res.scores)
        if (s.label == "no-transport") row.extra["no_transport_nll"] = s.nll;
    row.extra["hypotheses"] = res.scores.size();
    std::vector<const Dataset*> ptrs;
    for (const auto& d : data.sources) ptrs.push_back(&d);
    ptrs.push_back(&data.target);
    row.extra["erm_pool_excess"] = truth.evaluate(erm_pool(ptrs, cx.prefix, cx.alpha)).excess;
    detail["selection"] = selection_json(res);
}

void run_twostage(const CellContext& cx, const CellData& data, const Cell& c, ResultRow& row, json& detail) {
    TwoStageConfig tc;
    tc.pretrain.lambda = cx.config.params.value("lambda", 1e-3);
    tc.pretrain.alpha = cx.alpha;
    tc.split_seed = derive_seed(c.seed, 107);
    const auto ts = twostage(data.sources, data.target, cx.prefix, tc);
    const QueryTruth truth(cx.domains.target, cx.prefix);
    set_risk(row, truth.evaluate(ts.predictor));
    row.extra["s"] = ts.finetuned.s;
    row.extra["phi"] = ts.finetuned.phi;
    if (cx.config.params.value("compare_ad", false)) {
        SearchConfig sc = search_config(cx, c);
        sc.candidates = {true_structure(cx.domains)};
        row.extra["ad_excess"] = truth.evaluate(circuit_ad(data.sources, data.target, sc).predictor).excess;
    }
    detail["pretrained"] = pretrain_json(ts.pretrained);
    detail["finetuned"] = finetune_json(ts.finetuned);
}

void run_pretrain(const CellContext& cx, const CellData& data, ResultRow& row, json& detail) {
    PretrainConfig pc;
    pc.lambda = cx.config.params.value("lambda", 1e-3);
    pc.alpha = cx.alpha;
    const auto r = pretrain_tabular(data.sources, pc);
    row.nll = r.nll;
    bool match = true;
    for (int j = 0; j < cx.domains.num_sources(); ++j) {
        const Scm& s = cx.domains.sources[static_cast<std::size_t>(j)];
        for (int i = 0; i < s.size(); ++i) {
            auto got = r.parents[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
            auto want = s.parents(i);
            std::sort(got.begin(), got.end());
            std::sort(want.begin(), want.end());
            match = match && got == want;
        }
    }
    row.extra["parents_match"] = match;
    row.extra["objective"] = r.objective;
    row.extra["classes"] = r.d;
    const int max_T = cx.config.params.value("exhaustive_max_T", 0);
    if (max_T > 0) {
        json subs = json::array();
        PretrainConfig exact = pc;
        exact.alpha = 0.0;
        for (int T = 2; T <= max_T; ++T) {
            std::vector<JointTable> joints;
            for (const auto& s : cx.domains.sources) joints.push_back(exact_joint(prefix_scm(s, T)));
            const ExactFamilies fam(std::move(joints));
            const double two_phase = pretrain_exact(fam, exact).objective;
            const double exhaustive = pretrain_exhaustive(fam, exact.max_parents, exact.lambda).objective;
            subs.push_back({{"T", T}, {"two_phase", two_phase}, {"exhaustive", exhaustive}});
        }
        row.extra["sub_fixtures"] = subs;
    }
    detail["pretrained"] = pretrain_json(r);
}

void run_bounds(const ExperimentConfig& config, const DomainCollection& dom, ExperimentOutput& out) {
    ResponseTypePolytope poly;
    const auto b = bow_bounds(dom, &poly);
    json report = bounds_json(b);
    // Anchors by exogenous enumeration of the two named conditionals.
    auto cond11 = [](const std::vector<double>& q) {
        double x1 = 0.0, x1y1 = 0.0;
        for (int r = 0; r < 4; ++r) {
            x1 += q[static_cast<std::size_t>(4 + r)];
            if (response_y(r, 1) == 1) x1y1 += q[static_cast<std::size_t>(4 + r)];
        }
        return x1y1 / x1;
    };
    if (config.fixture == "bow") {
        report["anchors"] = {{"p1_y1_given_x1", cond11(bow_type_distribution(0.2, 0.05, 0.95, false))},
                             {"pstar_y1_given_x1", cond11(bow_type_distribution(0.9, 0.05, 0.95, false))}};
        const auto truth = [&] {
            auto q = bow_type_distribution(0.2, 0.05, 0.95, false);
            for (const auto& part : {bow_type_distribution(0.9, 0.05, 0.95, true), bow_type_distribution(0.9, 0.05, 0.95, false)})
                q.insert(q.end(), part.begin(), part.end());
            return q;
        }();
        report["true_types_feasible"] = poly.contains(truth);
    }
    const std::size_t probes = config.params.value("probe_samples", std::size_t{0});
    if (probes > 0) {
        const auto vertices = enumerate_vertices(poly);
        const double value = config.params.value("probe_value", 0.0475 / 0.77);
        const auto pr = probe_polytope(poly, vertices, 1, 1, value, config.params.value("probe_tol", 1e-3), probes,
                                       config.seeds.front(), 1);
        report["probe"] = {{"value", value}, {"samples", pr.samples}, {"min", pr.min}, {"max", pr.max}, {"hits", pr.hits}};
    }
    const auto cro = cro_predictor(b, {0.0, 1.0});
    report["cro"] = {{"mu1", cro.mu1}, {"risk_any_px", cro.risk}};
    out.bounds = report;

    const auto rows = erm_vs_cro_curve(dom, config.n, config.seeds, config.params.value("alpha", kDefaultAlpha));
    std::map<std::pair<std::size_t, std::uint64_t>, double> bayes;
    for (const auto& r : rows)
        if (r.method == "bayes") bayes[{r.n, r.seed}] = r.risk;
    std::ostringstream curve;
    curve << "n,seed,method,risk\r\n";
    for (const auto& r : rows) {
        curve << r.n << ',' << r.seed << ',' << r.method << ',' << fmt_double(r.risk) << "\r\n";
        ResultRow row;
        row.experiment = config.experiment;
        row.fixture = config.fixture;
        row.method = r.method;
        row.K = dom.num_sources();
        row.T = dom.target.size();
        row.vocab = dom.target.vocab_size();
        row.N = config.N.front();
        row.n = r.n;
        row.seed = r.seed;
        row.nll = r.risk;
        row.excess = r.risk - bayes.at({r.n, r.seed});
        row.kl = row.excess;
        out.rows.push_back(std::move(row));
        out.details.push_back({{"n", r.n}, {"seed", r.seed}, {"method", r.method}});
    }
    out.curve_csv = curve.str();
    for (std::size_t n : config.n)
        for (std::uint64_t s : config.seeds) out.run_seeds.push_back({{"n", n}, {"seed", s}, {"target_seed", s}});
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::uint32_t w[2];
    seq.generate(w, w + 2);
    return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

ExperimentConfig parse_config(const json& j, const fs::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    c.raw = j;
    try {
        c.experiment = j.value("experiment", std::string("experiment"));
        c.algorithm = j.at("algorithm").get<std::string>();
        c.fixture = j.value("fixture", std::string());
        if (j.contains("fixture_params")) c.fixture_params = j.at("fixture_params");
        if (j.contains("params")) c.params = j.at("params");
        c.out = j.value("out", std::string());
        if (j.contains("scm_files")) {
            const json& f = j.at("scm_files");
            for (const auto& s : f.at("sources")) c.source_files.push_back((base_dir / s.get<std::string>()).string());
            c.target_file = (base_dir / f.at("target").get<std::string>()).string();
            if (c.fixture.empty()) c.fixture = "files";
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config field: ") + e.what());
    }
    if (!kAlgorithms.count(c.algorithm)) throw ConfigError("unknown algorithm: " + c.algorithm);
    if (c.fixture.empty()) throw ConfigError("config needs a fixture or scm_files");
    if (!c.fixture_params.is_object() || !c.params.is_object()) throw ConfigError("params must be objects");
    c.N = grid<std::size_t>(j, "N");
    c.n = grid<std::size_t>(j, "n");
    c.seeds = grid<std::uint64_t>(j, "seeds");
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size())
        throw ConfigError("seeds must be distinct");
    if (c.algorithm == "bounds" && c.fixture != "bow") throw ConfigError("bounds needs the bow fixture");
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(j, path.parent_path());
}

DomainCollection config_domains(const ExperimentConfig& config) {
    if (config.fixture != "files") {
        try {
            return fixture_by_name(config.fixture, config.fixture_params);
        } catch (const ContractViolation& e) {
            throw ConfigError(e.what());
        }
    }
    auto load = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw ConfigError("cannot open SCM file " + p);
        try {
            return scm_from_json(json::parse(in));
        } catch (const json::exception& e) {
            throw ConfigError("bad SCM file " + p + ": " + e.what());
        }
    };
    std::vector<Scm> sources;
    for (const auto& f : config.source_files) sources.push_back(load(f));
    if (sources.empty()) throw ConfigError("scm_files needs at least one source");
    return DomainCollection(std::move(sources), load(config.target_file));
}

ExperimentOutput run_experiment(const ExperimentConfig& config, int jobs) {
    const auto start = std::chrono::steady_clock::now();
    const DomainCollection dom = config_domains(config);
    ExperimentOutput out;
    if (config.algorithm == "bounds") {
        run_bounds(config, dom, out);
    } else {
        CellContext cx{config, dom, 0, config.params.value("alpha", kDefaultAlpha)};
        cx.prefix = config.params.value("prefix_len", config.fixture == "files" ? dom.target.size() - 1
                                                                                 : fixture_prefix(config.fixture, dom));
        std::vector<Cell> cells;
        for (std::size_t N : config.N)
            for (std::size_t n : config.n)
                for (std::uint64_t s : config.seeds) cells.push_back({N, n, s});
        out.rows.resize(cells.size());
        out.details.resize(cells.size());
        out.run_seeds.resize(cells.size());
        std::vector<std::exception_ptr> errors(cells.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (std::size_t k = next++; k < cells.size(); k = next++) {
                try {
                    const Cell& c = cells[k];
                    // A random fixture is drawn per run seed.
                    const DomainCollection local =
                        config.fixture == "random" ? random_fixture(c.seed, config.fixture_params.value("max_T", 8),
                                                                    config.fixture_params.value("max_vocab", 4))
                                                   : dom;
                    const CellContext here{config, local, config.fixture == "random" ? local.target.size() - 1 : cx.prefix,
                                           cx.alpha};
                    CellData data = draw(local, c);
                    ResultRow row;
                    row.experiment = config.experiment;
                    row.fixture = config.fixture;
                    row.method = config.algorithm;
                    row.K = local.num_sources();
                    row.T = local.target.size();
                    row.vocab = local.target.vocab_size();
                    row.N = c.N;
                    row.n = c.n;
                    row.seed = c.seed;
                    json detail = json::object();
                    const std::string& a = config.algorithm;
                    if (a == "simple-tr") run_simple_tr(here, data, row, detail);
                    else if (a == "simple-ad") run_simple_ad(here, data, c, row, detail);
                    else if (a == "module-tr") run_module_tr(here, data, row, detail);
                    else if (a == "circuit-tr") run_circuit_tr(here, data, row, detail);
                    else if (a == "circuit-ad") run_circuit_ad(here, data, c, row, detail);
                    else if (a == "twostage") run_twostage(here, data, c, row, detail);
                    else run_pretrain(here, data, row, detail);
                    detail["row"] = {{"method", row.method}, {"N", c.N}, {"n", c.n}, {"seed", c.seed}};
                    out.rows[k] = std::move(row);
                    out.details[k] = std::move(detail);
                    out.run_seeds[k] = data.seeds;
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        };
        const int nthreads = std::max(1, std::min(jobs, static_cast<int>(cells.size())));
        if (nthreads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    for (std::size_t k = 0; k < kResultColumns.size(); ++k) os << (k ? "," : "") << kResultColumns[k];
    os << "\r\n";
    auto opt = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
    for (const auto& r : rows) {
        os << csv_field(r.experiment) << ',' << csv_field(r.fixture) << ',' << csv_field(r.method) << ',' << r.K << ','
           << r.T << ',' << r.vocab << ',' << r.N << ',' << r.n << ',' << r.seed << ',' << opt(r.nll) << ','
           << opt(r.excess) << ',' << opt(r.kl) << ',' << csv_field(r.extra.dump()) << "\r\n";
    }
    return os.str();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

json run_manifest(const ExperimentConfig& config, const ExperimentOutput& output) {
    json inputs = json::array();
    if (config.fixture == "files") {
        std::vector<std::string> files = config.source_files;
        files.push_back(config.target_file);
        for (const auto& f : files) {
            std::ifstream in(f, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            inputs.push_back({{"path", f}, {"sha256", sha256_hex(ss.str())}});
        }
    } else if (config.fixture != "random") {
        const auto dom = config_domains(config);
        for (int d = 0; d <= dom.num_sources(); ++d)
            inputs.push_back({{"domain", d}, {"sha256", sha256_hex(scm_to_json(dom.domain(d)).dump())}});
    }
    return {{"tool_version", kToolVersion},
            {"experiment", config.experiment},
            {"algorithm", config.algorithm},
            {"fixture", config.fixture},
            {"config_sha256", sha256_hex(config.raw.dump())},
            {"inputs", inputs},
            {"runs", output.run_seeds},
            {"rows", output.rows.size()},
            {"results_sha256", sha256_hex(results_csv(output.rows))},
            {"wall_clock_seconds", output.wall_seconds}};
}

void write_outputs(const fs::path& dir, const ExperimentConfig& config, const ExperimentOutput& output) {
    fs::create_directories(dir / "runs");
    auto put = [](const fs::path& p, const std::string& s) {
        std::ofstream f(p, std::ios::binary);
        f << s;
        if (!f) throw std::runtime_error("cannot write " + p.string());
    };
    put(dir / "results.csv", results_csv(output.rows));
    put(dir / "manifest.json", run_manifest(config, output).dump(2) + "\n");
    for (std::size_t k = 0; k < output.details.size(); ++k) {
        const auto& r = output.rows[k];
        const std::string name = r.method + "_N" + std::to_string(r.N) + "_n" + std::to_string(r.n) + "_s" +
                                 std::to_string(r.seed) + ".json";
        put(dir / "runs" / name, output.details[k].dump(2) + "\n");
    }
    if (config.algorithm == "bounds") {
        put(dir / "bounds.json", output.bounds.dump(2) + "\n");
        put(dir / "curve.csv", output.curve_csv);
    }
}

std::vector<std::vector<std::string>> read_csv_records(std::istream& is) {
    std::vector<std::vector<std::string>> out;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, any = false;
    char c;
    while (is.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (is.peek() == '"') {
                    field += '"';
                    is.get();
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            rec.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            continue;
        } else if (c == '\n') {
            rec.push_back(std::move(field));
            field.clear();
            out.push_back(std::move(rec));
            rec.clear();
            any = false;
        } else {
            field += c;
        }
    }
    if (any) {
        rec.push_back(std::move(field));
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<std::string> write_report(const fs::path& dir) {
    std::ifstream in(dir / "results.csv", std::ios::binary);
    if (!in) throw ConfigError("no results.csv in " + dir.string());
    const auto records = read_csv_records(in);
    if (records.empty()) throw ConfigError("results.csv is empty");
    std::map<std::string, std::size_t> col;
    for (std::size_t k = 0; k < records[0].size(); ++k) col[records[0][k]] = k;
    for (const auto& name : kResultColumns)
        if (!col.count(name)) throw ConfigError("results.csv lacks column " + name);

    struct Acc {
        std::vector<double> nll, excess, kl;
    };
    std::map<std::tuple<std::string, std::size_t, std::size_t>, Acc> groups;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() != records[0].size()) throw ConfigError("ragged row " + std::to_string(r));
        Acc& a = groups[{rec[col["method"]], std::stoull(rec[col["N"]]), std::stoull(rec[col["n"]])}];
        auto add = [&](const char* name, std::vector<double>& v) {
            const std::string& s = rec[col[name]];
            if (!s.empty()) v.push_back(std::stod(s));
        };
        add("nll", a.nll);
        add("excess", a.excess);
        add("kl", a.kl);
    }
    auto stats = [](const std::vector<double>& v) {
        if (v.empty()) return std::string(",");
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        if (v.size() < 2) return fmt_double(m) + ",";
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        return fmt_double(m) + "," + fmt_double(std::sqrt(s / static_cast<double>(v.size() - 1)));
    };
    const std::string header = "N,n,count,nll_mean,nll_sd,excess_mean,excess_sd,kl_mean,kl_sd\r\n";
    std::ostringstream summary;
    summary << "method," << header;
    std::map<std::string, std::ostringstream> curves;
    for (const auto& [key, a] : groups) {
        const auto& [method, N, n] = key;
        const std::size_t count = std::max({a.nll.size(), a.excess.size(), a.kl.size()});
        const std::string line = std::to_string(N) + "," + std::to_string(n) + "," + std::to_string(count) + "," +
                                 stats(a.nll) + "," + stats(a.excess) + "," + stats(a.kl) + "\r\n";
        summary << csv_field(method) << ',' << line;
        auto& c = curves[method];
        if (c.tellp() == 0) c << header;
        c << line;
    }
    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& s) {
        std::ofstream f(dir / name, std::ios::binary);
        f << s;
        written.push_back(name);
    };
    put("summary.csv", summary.str());
    for (const auto& [method, s] : curves) put("curve_" + method + ".csv", s.str());
    return written;
}

}  // namespace ctlab
