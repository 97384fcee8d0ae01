#pragma once

// Brute-force optimal transport between two uniform 1-D samples. Used as the
// oracle for the sorted-matching W1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace cng::testing {

// Equal sizes: minimum over every bijection of the mean matched distance.
inline double exhaustive_assignment_w1(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[perm[i]]);
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

// Any sizes: the transportation LP with supply m at each a_i and demand n at
// each b_j (uniform masses scaled to integers), solved exactly by successive
// shortest augmenting paths on the residual network.
inline double transport_w1(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size(), m = b.size();
  const std::size_t source = n + m, sink = n + m + 1, nodes = n + m + 2;
  struct Edge {
    std::size_t to;
    long cap;
    double cost;
  };
  std::vector<Edge> edges;
  std::vector<std::vector<std::size_t>> adj(nodes);
  auto add = [&](std::size_t u, std::size_t v, long cap, double cost) {
    adj[u].push_back(edges.size());
    edges.push_back({v, cap, cost});
    adj[v].push_back(edges.size());
    edges.push_back({u, 0, -cost});
  };
  for (std::size_t i = 0; i < n; ++i) add(source, i, static_cast<long>(m), 0.0);
  for (std::size_t j = 0; j < m; ++j) add(n + j, sink, static_cast<long>(n), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) add(i, n + j, static_cast<long>(n * m), std::abs(a[i] - b[j]));

  double total = 0.0;
  long flow = 0;
  const long need = static_cast<long>(n * m);
  while (flow < need) {
    // Bellman-Ford: residual costs may be negative.
    std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> via(nodes, edges.size());
    dist[source] = 0.0;
    for (std::size_t round = 0; round < nodes; ++round) {
      bool changed = false;
      for (std::size_t u = 0; u < nodes; ++u) {
        if (!std::isfinite(dist[u])) continue;
        for (std::size_t e : adj[u]) {
          if (edges[e].cap > 0 && dist[u] + edges[e].cost < dist[edges[e].to] - 1e-15) {
            dist[edges[e].to] = dist[u] + edges[e].cost;
            via[edges[e].to] = e;
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    long push = need - flow;
    for (std::size_t v = sink; v != source; v = edges[via[v] ^ 1].to) push = std::min(push, edges[via[v]].cap);
    for (std::size_t v = sink; v != source; v = edges[via[v] ^ 1].to) {
      edges[via[v]].cap -= push;
      edges[via[v] ^ 1].cap += push;
    }
    total += static_cast<double>(push) * dist[sink];
    flow += push;
  }
  return total / static_cast<double>(n * m);
}

}  // namespace cng::testing
