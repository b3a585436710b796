#include "ctlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <thread>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ctlab/dataset.hpp"
#include "ctlab/error.hpp"

namespace ctlab {

namespace {

constexpr double kEps = 1e-11;
constexpr std::size_t kMaxBases = 2'000'000;

using Row = std::vector<double>;

struct LpSolution {
    bool feasible = false;
    double value = 0.0;
    std::vector<double> x;
};

// Dense tableau simplex for min c.x s.t. A x = b, x >= 0; Bland's rule.
class Tableau {
public:
    Tableau(const std::vector<Row>& A, const Row& b) : m_(A.size()), n_(A.empty() ? 0 : A[0].size()) {
        t_.assign(m_ + 1, Row(n_ + m_ + 1, 0.0));
        basis_.resize(m_);
        for (std::size_t i = 0; i < m_; ++i) {
            const double sgn = b[i] < 0 ? -1.0 : 1.0;
            for (std::size_t j = 0; j < n_; ++j) t_[i][j] = sgn * A[i][j];
            t_[i][n_ + i] = 1.0;
            t_[i].back() = sgn * b[i];
            basis_[i] = n_ + i;
        }
    }

    bool phase_one() {
        Row cost(n_ + m_, 0.0);
        for (std::size_t i = 0; i < m_; ++i) cost[n_ + i] = 1.0;
        set_cost(cost);
        run(n_ + m_);
        if (-t_[m_].back() > 1e-9) return false;
        // Pivot zero-level artificials out; rows with no real column are redundant.
        for (std::size_t i = 0; i < m_; ++i) {
            if (basis_[i] < n_) continue;
            for (std::size_t j = 0; j < n_; ++j)
                if (std::abs(t_[i][j]) > 1e-9) {
                    pivot(i, j);
                    break;
                }
        }
        return true;
    }

    LpSolution phase_two(const Row& c) {
        Row cost(n_ + m_, 0.0);
        std::copy(c.begin(), c.end(), cost.begin());
        set_cost(cost);
        run(n_);
        LpSolution s;
        s.feasible = true;
        s.x.assign(n_, 0.0);
        for (std::size_t i = 0; i < m_; ++i)
            if (basis_[i] < n_) s.x[basis_[i]] = t_[i].back();
        s.value = 0.0;
        for (std::size_t j = 0; j < n_; ++j) s.value += c[j] * s.x[j];
        return s;
    }

private:
    void set_cost(const Row& cost) {
        auto& z = t_[m_];
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t j = 0; j < cost.size(); ++j) z[j] = cost[j];
        for (std::size_t i = 0; i < m_; ++i) {
            const double cb = cost[basis_[i]];
            if (cb == 0.0) continue;
            for (std::size_t j = 0; j < z.size(); ++j) z[j] -= cb * t_[i][j];
        }
    }

    // Columns >= `limit` never enter.
    void run(std::size_t limit) {
        while (true) {
            std::size_t enter = limit;
            for (std::size_t j = 0; j < limit; ++j)
                if (t_[m_][j] < -kEps) {
                    enter = j;
                    break;
                }
            if (enter == limit) return;
            std::size_t leave = m_;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < m_; ++i) {
                if (t_[i][enter] <= 1e-12) continue;
                const double ratio = t_[i].back() / t_[i][enter];
                if (ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && basis_[i] < basis_[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
            if (leave == m_) throw ContractViolation("unbounded linear program");
            pivot(leave, enter);
        }
    }

    void pivot(std::size_t r, std::size_t c) {
        const double p = t_[r][c];
        for (double& v : t_[r]) v /= p;
        for (std::size_t i = 0; i <= m_; ++i) {
            if (i == r) continue;
            const double f = t_[i][c];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < t_[i].size(); ++j) t_[i][j] -= f * t_[r][j];
        }
        basis_[r] = c;
    }

    std::size_t m_, n_;
    std::vector<Row> t_;
    std::vector<std::size_t> basis_;
};

LpSolution simplex_min(const std::vector<Row>& A, const Row& b, const Row& c) {
    Tableau t(A, b);
    if (!t.phase_one()) return {};
    return t.phase_two(c);
}

Row numerator(const ResponseTypePolytope& poly, int y, int x) {
    Row c(static_cast<std::size_t>(poly.dim), 0.0);
    for (int r = 0; r < 4; ++r)
        if (response_y(r, x) == y) c[static_cast<std::size_t>(poly.target_offset() + x * 4 + r)] = 1.0;
    return c;
}

Row denominator(const ResponseTypePolytope& poly, int x) {
    Row d(static_cast<std::size_t>(poly.dim), 0.0);
    for (int r = 0; r < 4; ++r) d[static_cast<std::size_t>(poly.target_offset() + x * 4 + r)] = 1.0;
    return d;
}

double dot(const Row& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Eigen::MatrixXd to_matrix(const std::vector<Row>& rows, int cols) {
    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < cols; ++j) M(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    return M;
}

}  // namespace

int response_y(int r, int x) {
    switch (r) {
    case 0: return 0;
    case 1: return 1;
    case 2: return x;
    default: return 1 - x;
    }
}

double ResponseTypePolytope::residual(const std::vector<double>& q) const {
    double worst = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) worst = std::max(worst, std::abs(dot(rows[i], q) - rhs[i]));
    for (double v : q) worst = std::max(worst, -v);
    return worst;
}

bool ResponseTypePolytope::contains(const std::vector<double>& q, double tol) const {
    return static_cast<int>(q.size()) == dim && residual(q) <= tol;
}

ResponseTypePolytope canonical_constraints(const std::vector<JointTable>& sources, const DeltaSets& delta) {
    require(!sources.empty() && delta.size() == sources.size(), "one Delta set per source");
    for (const auto& j : sources) require(j.vocab() == 2 && j.num_vars() == 2, "bounds need binary X, Y joints");
    for (const auto& d : delta)
        for (int v : d) require(v == 0 || v == 1, "Delta sets index X = 0, Y = 1");

    const int K = static_cast<int>(sources.size());
    const int n = kTypesPerDomain * (K + 1);
    const int tgt = kTypesPerDomain * K;
    std::vector<Row> rows;
    Row rhs;
    auto fresh = [&] { return Row(static_cast<std::size_t>(n), 0.0); };

    for (int k = 0; k < K; ++k) {
        const int off = kTypesPerDomain * k;
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) {
                Row r = fresh();
                for (int t = 0; t < 4; ++t)
                    if (response_y(t, x) == y) r[static_cast<std::size_t>(off + x * 4 + t)] = 1.0;
                const int a[] = {x, y};
                rows.push_back(std::move(r));
                rhs.push_back(sources[static_cast<std::size_t>(k)].prob(a));
            }
        const bool dx = delta[static_cast<std::size_t>(k)].count(0) > 0;
        const bool dy = delta[static_cast<std::size_t>(k)].count(1) > 0;
        if (!dx && !dy) {
            for (int c = 0; c < kTypesPerDomain; ++c) {
                Row r = fresh();
                r[static_cast<std::size_t>(off + c)] = 1.0;
                r[static_cast<std::size_t>(tgt + c)] = -1.0;
                rows.push_back(std::move(r));
                rhs.push_back(0.0);
            }
        } else if (!dy) {
            for (int t = 0; t < 4; ++t) {
                Row r = fresh();
                for (int a = 0; a < 2; ++a) {
                    r[static_cast<std::size_t>(off + a * 4 + t)] = 1.0;
                    r[static_cast<std::size_t>(tgt + a * 4 + t)] = -1.0;
                }
                rows.push_back(std::move(r));
                rhs.push_back(0.0);
            }
        } else if (!dx) {
            for (int a = 0; a < 2; ++a) {
                Row r = fresh();
                for (int t = 0; t < 4; ++t) {
                    r[static_cast<std::size_t>(off + a * 4 + t)] = 1.0;
                    r[static_cast<std::size_t>(tgt + a * 4 + t)] = -1.0;
                }
                rows.push_back(std::move(r));
                rhs.push_back(0.0);
            }
        }
    }
    Row total = fresh();
    for (int c = 0; c < kTypesPerDomain; ++c) total[static_cast<std::size_t>(tgt + c)] = 1.0;
    rows.push_back(std::move(total));
    rhs.push_back(1.0);

    // Keep a maximal independent subset; dependent rows must agree on the rhs.
    ResponseTypePolytope poly;
    poly.num_sources = K;
    poly.dim = n;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (poly.rows.empty()) {
            poly.rows.push_back(rows[i]);
            poly.rhs.push_back(rhs[i]);
            continue;
        }
        const Eigen::MatrixXd M = to_matrix(poly.rows, n);
        Eigen::VectorXd r(n);
        for (int j = 0; j < n; ++j) r(j) = rows[i][static_cast<std::size_t>(j)];
        const Eigen::VectorXd coef = M.transpose().completeOrthogonalDecomposition().solve(r);
        if ((M.transpose() * coef - r).norm() > 1e-9) {
            poly.rows.push_back(rows[i]);
            poly.rhs.push_back(rhs[i]);
            continue;
        }
        double implied = 0.0;
        for (std::size_t k = 0; k < poly.rhs.size(); ++k) implied += coef(static_cast<Eigen::Index>(k)) * poly.rhs[k];
        if (std::abs(implied - rhs[i]) > 1e-9)
            throw Infeasible("response-type constraints are inconsistent: row " + std::to_string(i) + " requires " +
                             std::to_string(rhs[i]) + " but the others imply " + std::to_string(implied));
    }
    if (!simplex_min(poly.rows, poly.rhs, Row(static_cast<std::size_t>(n), 0.0)).feasible)
        throw Infeasible("no nonnegative response-type distribution matches the source joints under the given Delta sets");
    return poly;
}

std::vector<double> bow_type_distribution(double ux, double uy, double uxy, bool use_or) {
    std::vector<double> q(kTypesPerDomain, 0.0);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
                const double w = (a ? ux : 1 - ux) * (b ? uy : 1 - uy) * (c ? uxy : 1 - uxy);
                const int x = a ^ c;
                int ys[2];
                for (int xx = 0; xx < 2; ++xx) ys[xx] = use_or ? ((xx ^ c) | b) : ((xx ^ c) ^ b);
                int r = 0;
                for (; r < 4; ++r)
                    if (response_y(r, 0) == ys[0] && response_y(r, 1) == ys[1]) break;
                q[static_cast<std::size_t>(x * 4 + r)] += w;
            }
    return q;
}

double target_conditional(const ResponseTypePolytope& poly, const std::vector<double>& q, int y, int x) {
    const double den = dot(denominator(poly, x), q);
    require(den > 0, "P*(x) is zero at this point");
    return dot(numerator(poly, y, x), q) / den;
}

std::optional<LpOptimum> fractional_lp(const ResponseTypePolytope& poly, int y, int x, bool maximize) {
    // Charnes-Cooper: z = t q with d.z = 1, A z - b t = 0.
    const std::size_t n = static_cast<std::size_t>(poly.dim);
    std::vector<Row> A;
    Row b;
    for (std::size_t i = 0; i < poly.rows.size(); ++i) {
        Row r(poly.rows[i]);
        r.push_back(-poly.rhs[i]);
        A.push_back(std::move(r));
        b.push_back(0.0);
    }
    Row d = denominator(poly, x);
    d.push_back(0.0);
    A.push_back(std::move(d));
    b.push_back(1.0);
    Row c = numerator(poly, y, x);
    if (maximize)
        for (double& v : c) v = -v;
    c.push_back(0.0);
    const auto sol = simplex_min(A, b, c);
    if (!sol.feasible) return std::nullopt;
    const double t = sol.x[n];
    require(t > 0, "Charnes-Cooper scale vanished");
    LpOptimum out;
    out.witness.assign(sol.x.begin(), sol.x.begin() + static_cast<std::ptrdiff_t>(n));
    for (double& v : out.witness) v = std::max(0.0, v / t);
    out.value = target_conditional(poly, out.witness, y, x);
    return out;
}

std::vector<std::vector<double>> enumerate_vertices(const ResponseTypePolytope& poly) {
    const int m = static_cast<int>(poly.rows.size());
    const int n = poly.dim;
    const Eigen::MatrixXd A = to_matrix(poly.rows, n);
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) b(i) = poly.rhs[static_cast<std::size_t>(i)];

    const auto start = simplex_min(poly.rows, poly.rhs, Row(static_cast<std::size_t>(n), 0.0));
    if (!start.feasible) throw Infeasible("empty polytope");
    // Support of the starting vertex, extended to a basis.
    std::vector<int> basis;
    auto rank_of = [&](const std::vector<int>& cols) {
        Eigen::MatrixXd B(m, static_cast<Eigen::Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) B.col(static_cast<Eigen::Index>(k)) = A.col(cols[k]);
        return static_cast<int>(Eigen::FullPivLU<Eigen::MatrixXd>(B).rank());
    };
    for (int j = 0; j < n; ++j)
        if (start.x[static_cast<std::size_t>(j)] > 1e-12) basis.push_back(j);
    for (int j = 0; j < n && static_cast<int>(basis.size()) < m; ++j) {
        if (std::find(basis.begin(), basis.end(), j) != basis.end()) continue;
        basis.push_back(j);
        if (rank_of(basis) < static_cast<int>(basis.size())) basis.pop_back();
    }
    require(static_cast<int>(basis.size()) == m, "could not complete a basis");
    std::sort(basis.begin(), basis.end());

    std::set<std::vector<int>> seen{basis};
    std::deque<std::vector<int>> queue{basis};
    std::map<std::vector<long long>, std::vector<double>> vertices;
    while (!queue.empty()) {
        const std::vector<int> B = std::move(queue.front());
        queue.pop_front();
        Eigen::MatrixXd AB(m, m);
        for (int k = 0; k < m; ++k) AB.col(k) = A.col(B[static_cast<std::size_t>(k)]);
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(AB);
        const Eigen::VectorXd xb = lu.solve(b);
        const Eigen::MatrixXd T = lu.solve(A);

        std::vector<double> v(static_cast<std::size_t>(n), 0.0);
        std::vector<long long> key(static_cast<std::size_t>(n));
        for (int k = 0; k < m; ++k) v[static_cast<std::size_t>(B[static_cast<std::size_t>(k)])] = std::max(0.0, xb(k));
        for (int j = 0; j < n; ++j) key[static_cast<std::size_t>(j)] = std::llround(v[static_cast<std::size_t>(j)] * 1e9);
        vertices.emplace(std::move(key), std::move(v));

        for (int j = 0; j < n; ++j) {
            if (std::binary_search(B.begin(), B.end(), j)) continue;
            for (int i = 0; i < m; ++i) {
                const double tij = T(i, j);
                if (std::abs(tij) < 1e-9) continue;
                const double theta = xb(i) / tij;
                if (theta < -1e-10) continue;
                bool ok = true;
                for (int k = 0; k < m && ok; ++k)
                    if (k != i && xb(k) - theta * T(k, j) < -1e-10) ok = false;
                if (!ok) continue;
                std::vector<int> next = B;
                next[static_cast<std::size_t>(i)] = j;
                std::sort(next.begin(), next.end());
                if (seen.insert(next).second) {
                    if (seen.size() > kMaxBases)
                        throw BudgetExceeded("vertex enumeration visited more than " + std::to_string(kMaxBases) +
                                             " feasible bases");
                    queue.push_back(std::move(next));
                }
            }
        }
    }
    std::vector<std::vector<double>> out;
    out.reserve(vertices.size());
    for (auto& [k, v] : vertices) out.push_back(std::move(v));
    return out;
}

BoundsResult partial_transport_bounds(const ResponseTypePolytope& poly) {
    BoundsResult res;
    const auto vertices = enumerate_vertices(poly);
    res.num_vertices = vertices.size();
    for (int x = 0; x < 2; ++x) {
        const Row d = denominator(poly, x);
        Row neg(d);
        for (double& v : neg) v = -v;
        const auto dmax = simplex_min(poly.rows, poly.rhs, neg);
        if (-dmax.value <= 1e-12) {
            res.degenerate[static_cast<std::size_t>(x)] = true;
            for (int y = 0; y < 2; ++y) {
                res.l[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = 0.0;
                res.u[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = 1.0;
                res.l_vertex[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = 0.0;
                res.u_vertex[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = 1.0;
            }
            continue;
        }
        for (int y = 0; y < 2; ++y) {
            const auto sy = static_cast<std::size_t>(y);
            const auto sx = static_cast<std::size_t>(x);
            const auto lo = fractional_lp(poly, y, x, false);
            const auto hi = fractional_lp(poly, y, x, true);
            require(lo && hi, "fractional program infeasible despite positive P*(x)");
            res.l[sy][sx] = lo->value;
            res.u[sy][sx] = hi->value;
            res.witness_l[sy][sx] = lo->witness;
            res.witness_u[sy][sx] = hi->witness;
            double vmin = 1.0, vmax = 0.0;
            const Row c = numerator(poly, y, x);
            for (const auto& v : vertices) {
                const double den = dot(d, v);
                if (den <= 1e-12) continue;
                const double r = dot(c, v) / den;
                vmin = std::min(vmin, r);
                vmax = std::max(vmax, r);
            }
            res.l_vertex[sy][sx] = vmin;
            res.u_vertex[sy][sx] = vmax;
            res.method_gap = std::max({res.method_gap, std::abs(vmin - lo->value), std::abs(vmax - hi->value)});
        }
    }
    return res;
}

BoundsResult bow_bounds(const DomainCollection& bow, ResponseTypePolytope* poly_out) {
    std::vector<JointTable> joints;
    for (const auto& s : bow.sources) joints.push_back(exact_joint(s));
    auto poly = canonical_constraints(joints, coarse_delta_sets(bow));
    auto res = partial_transport_bounds(poly);
    if (poly_out) *poly_out = std::move(poly);
    return res;
}

ProbeReport probe_polytope(const ResponseTypePolytope& poly, const std::vector<std::vector<double>>& vertices, int y,
                           int x, double value, double tol, std::size_t samples, std::uint64_t seed, int jobs) {
    require(!vertices.empty(), "no vertices to probe");
    constexpr std::size_t kChunks = 64;
    std::vector<ProbeReport> parts(kChunks);
    const Row c = numerator(poly, y, x);
    const Row d = denominator(poly, x);
    auto work = [&](std::size_t chunk) {
        ProbeReport& p = parts[chunk];
        std::mt19937_64 rng(seed * kChunks + chunk);
        std::uniform_int_distribution<std::size_t> pick(0, vertices.size() - 1);
        std::exponential_distribution<double> expo(1.0);
        const std::size_t lo = samples * chunk / kChunks, hi = samples * (chunk + 1) / kChunks;
        std::vector<double> q(static_cast<std::size_t>(poly.dim));
        for (std::size_t s = lo; s < hi; ++s) {
            // Mixture of up to three vertices with flat Dirichlet weights.
            const int k = 1 + static_cast<int>(rng() % 3);
            std::fill(q.begin(), q.end(), 0.0);
            double wsum = 0.0;
            for (int t = 0; t < k; ++t) {
                const double w = expo(rng);
                const auto& v = vertices[pick(rng)];
                for (std::size_t j = 0; j < q.size(); ++j) q[j] += w * v[j];
                wsum += w;
            }
            const double den = dot(d, q);
            if (den <= 1e-12 * wsum) continue;
            const double r = dot(c, q) / den;
            ++p.samples;
            p.min = std::min(p.min, r);
            p.max = std::max(p.max, r);
            if (std::abs(r - value) <= tol) ++p.hits;
        }
    };
    const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(kChunks)));
    if (nthreads == 1) {
        for (std::size_t ch = 0; ch < kChunks; ++ch) work(ch);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t ch = static_cast<std::size_t>(t); ch < kChunks; ch += static_cast<std::size_t>(nthreads))
                    work(ch);
            });
        for (auto& th : pool) th.join();
    }
    ProbeReport out;
    for (const auto& p : parts) {
        out.samples += p.samples;
        out.hits += p.hits;
        out.min = std::min(out.min, p.min);
        out.max = std::max(out.max, p.max);
    }
    return out;
}

double cross_entropy(double q, double mu) {
    auto term = [](double a, double b) {
        if (a <= 0) return 0.0;
        if (b <= 0) return std::numeric_limits<double>::infinity();
        return -a * std::log(b);
    };
    return term(q, mu) + term(1 - q, 1 - mu);
}

double cro_equalizer(double l, double u) {
    require(0 <= l && l <= u && u <= 1, "need 0 <= l <= u <= 1");
    if (u - l < 1e-15) return l;
    auto g = [&](double mu) { return cross_entropy(u, mu) - cross_entropy(l, mu); };
    if (g(l) <= 0) return l;
    if (g(u) >= 0) return u;
    double a = l, b = u;
    while (b - a > 1e-8) {
        const double mid = 0.5 * (a + b);
        (g(mid) > 0 ? a : b) = mid;
    }
    return 0.5 * (a + b);
}

CroPredictor cro_predictor(const BoundsResult& bounds, std::array<double, 2> px_range) {
    require(0 <= px_range[0] && px_range[0] <= px_range[1] && px_range[1] <= 1, "bad P*(X=1) range");
    CroPredictor p;
    std::array<double, 2> worst{};
    for (int x = 0; x < 2; ++x) {
        const double l = bounds.l[1][static_cast<std::size_t>(x)];
        const double u = bounds.u[1][static_cast<std::size_t>(x)];
        const double mu = cro_equalizer(l, u);
        p.mu1[static_cast<std::size_t>(x)] = mu;
        worst[static_cast<std::size_t>(x)] = std::max(cross_entropy(l, mu), cross_entropy(u, mu));
    }
    p.risk = 0.0;
    for (double px : px_range) p.risk = std::max(p.risk, (1 - px) * worst[0] + px * worst[1]);
    return p;
}

std::vector<CurveRow> erm_vs_cro_curve(const DomainCollection& bow, const std::vector<std::size_t>& n_grid,
                                       const std::vector<std::uint64_t>& seeds, double alpha) {
    ResponseTypePolytope poly;
    const auto b = bow_bounds(bow, &poly);
    // Range of P*(X=1) over the polytope.
    Row d1(static_cast<std::size_t>(poly.dim), 0.0);
    for (int r = 0; r < 4; ++r) d1[static_cast<std::size_t>(poly.target_offset() + 4 + r)] = 1.0;
    Row neg(d1);
    for (double& v : neg) v = -v;
    const double px_lo = simplex_min(poly.rows, poly.rhs, d1).value;
    const double px_hi = -simplex_min(poly.rows, poly.rhs, neg).value;
    const auto cro = cro_predictor(b, {std::clamp(px_lo, 0.0, 1.0), std::clamp(px_hi, 0.0, 1.0)});

    const auto joint = exact_joint(bow.target);
    std::array<double, 2> px{}, p1{};
    for (int x = 0; x < 2; ++x) {
        const int a0[] = {x, 0}, a1[] = {x, 1};
        px[static_cast<std::size_t>(x)] = joint.prob(a0) + joint.prob(a1);
        p1[static_cast<std::size_t>(x)] = joint.prob(a1) / px[static_cast<std::size_t>(x)];
    }
    auto risk = [&](const std::array<double, 2>& mu) {
        return px[0] * cross_entropy(p1[0], mu[0]) + px[1] * cross_entropy(p1[1], mu[1]);
    };

    std::vector<CurveRow> out;
    for (std::size_t n : n_grid)
        for (std::uint64_t seed : seeds) {
            const Dataset data = sample_dataset(bow.target, n, seed);
            std::array<std::array<double, 2>, 2> counts{};
            for (std::size_t r = 0; r < data.rows(); ++r)
                counts[static_cast<std::size_t>(data.at(r, 0))][static_cast<std::size_t>(data.at(r, 1))] += 1.0;
            std::array<double, 2> erm{}, clipped{};
            for (std::size_t x = 0; x < 2; ++x) {
                erm[x] = (counts[x][1] + alpha) / (counts[x][0] + counts[x][1] + 2 * alpha);
                clipped[x] = std::clamp(erm[x], b.l[1][x], b.u[1][x]);
            }
            out.push_back({n, seed, "erm", risk(erm)});
            out.push_back({n, seed, "constrained_erm", risk(clipped)});
            out.push_back({n, seed, "cro", risk(cro.mu1)});
            out.push_back({n, seed, "bayes", risk(p1)});
        }
    return out;
}

std::vector<CurveSummary> summarize_curve(const std::vector<CurveRow>& rows) {
    std::map<std::pair<std::size_t, std::string>, std::vector<double>> groups;
    for (const auto& r : rows) groups[{r.n, r.method}].push_back(r.risk);
    std::vector<CurveSummary> out;
    for (const auto& [key, v] : groups) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        out.push_back({key.first, key.second, mean, sd});
    }
    return out;
}

nlohmann::json bounds_json(const BoundsResult& b) {
    nlohmann::json entries = nlohmann::json::array();
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y) {
            const auto sx = static_cast<std::size_t>(x), sy = static_cast<std::size_t>(y);
            entries.push_back({{"x", x},
                               {"y", y},
                               {"l", b.l[sy][sx]},
                               {"u", b.u[sy][sx]},
                               {"l_vertex", b.l_vertex[sy][sx]},
                               {"u_vertex", b.u_vertex[sy][sx]},
                               {"degenerate", b.degenerate[sx]},
                               {"witness_q", {{"lower", b.witness_l[sy][sx]}, {"upper", b.witness_u[sy][sx]}}}});
        }
    return {{"bounds", entries}, {"num_vertices", b.num_vertices}, {"method_gap", b.method_gap}};
}

}  // namespace ctlab
