#include "semrag/leiden.hpp"

#include "semrag/error.hpp"
#include "semrag/hash.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <unordered_map>

namespace semrag {

namespace {

constexpr double kEps = 1e-12;

class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next() {
        const auto out = splitmix64(state_);
        state_ += 0x9e3779b97f4a7c15ULL;
        return out;
    }
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
    std::uint64_t state_;
};

void shuffle_indices(std::vector<int>& order, DetRng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
}

/// Working graph: non-loop adjacency stored both ways, self-loops separate.
struct Graph {
    int n = 0;
    std::vector<std::vector<std::pair<int, double>>> adj;
    std::vector<double> self_w;   // self-loop weight; contributes 2w to strength
    std::vector<double> strength; // k_i
    double two_m = 0.0;           // total strength

    static Graph build(int n, const std::vector<WeightedEdge>& edges) {
        Graph g;
        g.n = n;
        g.adj.resize(static_cast<std::size_t>(n));
        g.self_w.assign(static_cast<std::size_t>(n), 0.0);
        std::map<std::pair<int, int>, double> merged;
        for (const auto& e : edges) {
            if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
                throw Error("edge endpoint out of range");
            }
            if (e.u == e.v) {
                g.self_w[static_cast<std::size_t>(e.u)] += e.w;
            } else {
                merged[{std::min(e.u, e.v), std::max(e.u, e.v)}] += e.w;
            }
        }
        for (const auto& [key, w] : merged) {
            g.adj[static_cast<std::size_t>(key.first)].emplace_back(key.second, w);
            g.adj[static_cast<std::size_t>(key.second)].emplace_back(key.first, w);
        }
        g.strength.assign(static_cast<std::size_t>(n), 0.0);
        for (int u = 0; u < n; ++u) {
            double k = 2.0 * g.self_w[static_cast<std::size_t>(u)];
            for (const auto& [v, w] : g.adj[static_cast<std::size_t>(u)]) k += w;
            g.strength[static_cast<std::size_t>(u)] = k;
            g.two_m += k;
        }
        return g;
    }
};

std::vector<int> canonicalize(const std::vector<int>& membership) {
    std::unordered_map<int, int> remap;
    std::vector<int> out(membership.size());
    int next = 0;
    for (std::size_t i = 0; i < membership.size(); ++i) {
        auto [it, inserted] = remap.try_emplace(membership[i], next);
        if (inserted) ++next;
        out[i] = it->second;
    }
    return out;
}

/// Queue-based local move; starts from singletons, moves nodes greedily to
/// the strictly best neighboring (or fresh) community.
std::vector<int> local_move(const Graph& g, DetRng& rng) {
    const int n = g.n;
    std::vector<int> comm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) comm[static_cast<std::size_t>(i)] = i;
    std::vector<double> tot(g.strength);
    std::set<int> empty_ids;

    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    shuffle_indices(order, rng);

    std::deque<int> queue(order.begin(), order.end());
    std::vector<char> queued(static_cast<std::size_t>(n), 1);
    const double two_m = g.two_m;

    while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        queued[static_cast<std::size_t>(u)] = 0;
        const int a = comm[static_cast<std::size_t>(u)];
        const double k_u = g.strength[static_cast<std::size_t>(u)];

        std::map<int, double> link; // community -> weight from u
        for (const auto& [v, w] : g.adj[static_cast<std::size_t>(u)]) {
            link[comm[static_cast<std::size_t>(v)]] += w;
        }
        const double k_ua = link.count(a) ? link[a] : 0.0;
        // Gain currently contributed by u's membership in a.
        const double base =
            2.0 * k_ua / two_m - 2.0 * k_u * (tot[static_cast<std::size_t>(a)] - k_u) / (two_m * two_m);

        double best_delta = 0.0;
        int best_comm = a;
        for (const auto& [c, k_uc] : link) {
            if (c == a) continue;
            const double gain =
                2.0 * k_uc / two_m - 2.0 * k_u * tot[static_cast<std::size_t>(c)] / (two_m * two_m);
            const double delta = gain - base;
            if (delta > best_delta + kEps) {
                best_delta = delta;
                best_comm = c;
            }
        }
        if (-base > best_delta + kEps) {
            // Leaving for an empty community beats every occupied option.
            int fresh;
            if (!empty_ids.empty()) {
                fresh = *empty_ids.begin();
                empty_ids.erase(empty_ids.begin());
            } else {
                fresh = static_cast<int>(tot.size());
                tot.push_back(0.0);
            }
            best_comm = fresh;
        }
        if (best_comm == a) continue;

        tot[static_cast<std::size_t>(a)] -= k_u;
        tot[static_cast<std::size_t>(best_comm)] += k_u;
        comm[static_cast<std::size_t>(u)] = best_comm;
        if (tot[static_cast<std::size_t>(a)] <= kEps) {
            tot[static_cast<std::size_t>(a)] = 0.0;
            empty_ids.insert(a);
        }
        for (const auto& [v, w] : g.adj[static_cast<std::size_t>(u)]) {
            if (comm[static_cast<std::size_t>(v)] != best_comm && !queued[static_cast<std::size_t>(v)]) {
                queue.push_back(v);
                queued[static_cast<std::size_t>(v)] = 1;
            }
        }
    }
    return comm;
}

/// Deterministic refinement: within each local-move community, nodes start as
/// singletons and each still-singleton node (index order) merges into the
/// neighboring refined community with the best positive gain, lowest id on
/// ties. Output is a partition at least as fine as `comm`.
std::vector<int> refine(const Graph& g, const std::vector<int>& comm) {
    const int n = g.n;
    std::vector<int> refined(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) refined[static_cast<std::size_t>(i)] = i;
    std::vector<double> tot(g.strength);
    std::vector<int> size(static_cast<std::size_t>(n), 1);
    const double two_m = g.two_m;

    for (int u = 0; u < n; ++u) {
        if (size[static_cast<std::size_t>(refined[static_cast<std::size_t>(u)])] != 1) continue;
        const double k_u = g.strength[static_cast<std::size_t>(u)];
        std::map<int, double> link;
        for (const auto& [v, w] : g.adj[static_cast<std::size_t>(u)]) {
            if (comm[static_cast<std::size_t>(v)] != comm[static_cast<std::size_t>(u)]) continue;
            const int d = refined[static_cast<std::size_t>(v)];
            if (d == refined[static_cast<std::size_t>(u)]) continue;
            link[d] += w;
        }
        double best_delta = 0.0;
        int best_comm = refined[static_cast<std::size_t>(u)];
        for (const auto& [d, k_ud] : link) {
            // Removal from the own singleton costs nothing.
            const double delta =
                2.0 * k_ud / two_m - 2.0 * k_u * tot[static_cast<std::size_t>(d)] / (two_m * two_m);
            if (delta > best_delta + kEps) {
                best_delta = delta;
                best_comm = d;
            }
        }
        if (best_comm == refined[static_cast<std::size_t>(u)]) continue;
        tot[static_cast<std::size_t>(refined[static_cast<std::size_t>(u)])] -= k_u;
        tot[static_cast<std::size_t>(best_comm)] += k_u;
        size[static_cast<std::size_t>(refined[static_cast<std::size_t>(u)])] -= 1;
        size[static_cast<std::size_t>(best_comm)] += 1;
        refined[static_cast<std::size_t>(u)] = best_comm;
    }
    return refined;
}

/// Collapses each community of `membership` (canonical ids) to one node.
Graph aggregate(const Graph& g, const std::vector<int>& membership, int k) {
    std::vector<WeightedEdge> edges;
    std::map<std::pair<int, int>, double> merged;
    for (int u = 0; u < g.n; ++u) {
        const int cu = membership[static_cast<std::size_t>(u)];
        if (g.self_w[static_cast<std::size_t>(u)] != 0.0) {
            merged[{cu, cu}] += g.self_w[static_cast<std::size_t>(u)];
        }
        for (const auto& [v, w] : g.adj[static_cast<std::size_t>(u)]) {
            if (v < u) continue; // count each undirected edge once
            const int cv = membership[static_cast<std::size_t>(v)];
            merged[{std::min(cu, cv), std::max(cu, cv)}] += w;
        }
    }
    edges.reserve(merged.size());
    for (const auto& [key, w] : merged) edges.push_back({key.first, key.second, w});
    return Graph::build(k, edges);
}

int community_count(const std::vector<int>& canonical) {
    int k = 0;
    for (int c : canonical) k = std::max(k, c + 1);
    return k;
}

} // namespace

double modularity(int n, const std::vector<WeightedEdge>& edges,
                  const std::vector<int>& membership, double resolution) {
    if (static_cast<int>(membership.size()) != n) {
        throw Error("modularity: membership size does not match node count");
    }
    const Graph g = Graph::build(n, edges);
    if (g.two_m == 0.0) return 0.0;
    std::unordered_map<int, double> sum_in;  // intra-community strength
    std::unordered_map<int, double> sum_tot; // community strength
    for (int u = 0; u < n; ++u) {
        const int c = membership[static_cast<std::size_t>(u)];
        sum_tot[c] += g.strength[static_cast<std::size_t>(u)];
        sum_in[c] += 2.0 * g.self_w[static_cast<std::size_t>(u)];
        for (const auto& [v, w] : g.adj[static_cast<std::size_t>(u)]) {
            if (membership[static_cast<std::size_t>(v)] == c) sum_in[c] += w;
        }
    }
    double q = 0.0;
    for (const auto& [c, tot] : sum_tot) {
        const double in = sum_in.count(c) ? sum_in[c] : 0.0;
        q += in / g.two_m - resolution * (tot / g.two_m) * (tot / g.two_m);
    }
    return q;
}

std::vector<std::vector<int>> leiden_levels(int n, const std::vector<WeightedEdge>& edges,
                                            int max_levels, std::uint64_t seed,
                                            double resolution) {
    if (n < 0) throw Error("leiden: negative node count");
    if (max_levels < 1) throw Error("leiden: max_levels must be >= 1");
    if (resolution != 1.0) {
        // The gain formulas below bake in resolution 1.0; reject silently
        // wrong results rather than produce them.
        throw Error("leiden: only resolution 1.0 is supported");
    }
    if (n == 0) return {};

    Graph g = Graph::build(n, edges);
    std::vector<int> proj(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) proj[static_cast<std::size_t>(i)] = i;

    std::vector<std::vector<int>> levels;
    if (g.two_m == 0.0) {
        levels.push_back(canonicalize(proj));
        return levels;
    }

    DetRng rng(splitmix64(seed ^ 0x5eedc0de5eedc0deULL));
    auto project = [&](const std::vector<int>& memb) {
        std::vector<int> out(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            out[static_cast<std::size_t>(i)] = memb[static_cast<std::size_t>(proj[static_cast<std::size_t>(i)])];
        }
        return canonicalize(out);
    };

    // Records one level and collapses the working graph by memb. Returns
    // false when memb is all singletons, i.e. aggregation would not shrink
    // the graph and a further pass would repeat this state.
    auto record_and_aggregate = [&](const std::vector<int>& memb,
                                    const std::vector<int>& projected) {
        levels.push_back(projected);
        const int k = community_count(memb);
        if (k == g.n) return false;
        Graph next = aggregate(g, memb, k);
        for (int i = 0; i < n; ++i) {
            proj[static_cast<std::size_t>(i)] =
                memb[static_cast<std::size_t>(proj[static_cast<std::size_t>(i)])];
        }
        g = std::move(next);
        return true;
    };

    while (static_cast<int>(levels.size()) < max_levels) {
        const auto partition = canonicalize(local_move(g, rng));
        const auto refined = canonicalize(refine(g, partition));
        const auto proj_refined = project(refined);
        const auto proj_partition = project(partition);

        // The refined partition is the finer of the two, so it is recorded
        // first; aggregating by the recorded partition makes every later
        // level a grouping of this one, which yields child-in-parent nesting.
        if (levels.empty() || proj_refined != levels.back()) {
            if (record_and_aggregate(refined, proj_refined)) continue;
            // Refinement kept everything singleton; the local-move partition
            // may still hold one genuinely coarser level.
            if (static_cast<int>(levels.size()) < max_levels &&
                proj_partition != levels.back()) {
                record_and_aggregate(partition, proj_partition);
            }
            break;
        }
        if (proj_partition != levels.back()) {
            if (record_and_aggregate(partition, proj_partition)) continue;
            break;
        }
        break;
    }
    return levels;
}

} // namespace semrag
