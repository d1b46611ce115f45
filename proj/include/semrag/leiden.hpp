#pragma once

#include <cstdint>
#include <vector>

namespace semrag {

/// Undirected weighted edge. u == v is a self-loop (arises only in aggregated
/// graphs); parallel edges are summed.
struct WeightedEdge {
    int u = 0;
    int v = 0;
    double w = 1.0;
};

/// Newman modularity with resolution gamma. Self-loop weight w contributes 2w
/// to its node's strength (adjacency-matrix convention A_ii = 2w).
/// A graph with no edge weight returns 0.
double modularity(int n, const std::vector<WeightedEdge>& edges,
                  const std::vector<int>& membership, double resolution = 1.0);

/// Hierarchical Leiden community detection over modularity.
///
/// Returns up to max_levels membership vectors over the original n nodes.
/// levels[0] is the finest partition; each later level is strictly coarser
/// and every community at level l is contained in one community at level l+1.
/// Community ids are canonical: 0..K-1 in order of first appearance by node
/// index. The seed fixes the node visit order of the local-move phase; all
/// other steps are deterministic. A graph with no edge weight yields a single
/// all-singletons level; n == 0 yields no levels.
std::vector<std::vector<int>> leiden_levels(int n, const std::vector<WeightedEdge>& edges,
                                            int max_levels, std::uint64_t seed,
                                            double resolution = 1.0);

} // namespace semrag
