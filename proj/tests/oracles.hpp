#pragma once

// Independent reference implementations used only by the tests.

#include "telemplan/netgraph.hpp"
#include "telemplan/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

using telemplan::NodeId;
using telemplan::Topology;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Floyd-Warshall over the whole topology (1-based, index 0 unused).
inline std::vector<std::vector<double>> floyd_warshall(const Topology &topo) {
	const int n = topo.node_count();
	std::vector<std::vector<double>> d(n + 1, std::vector<double>(n + 1, kInf));
	for (int v = 1; v <= n; ++v) {
		d[v][v] = 0.0;
	}
	for (const auto &e : topo.edges()) {
		d[e.u][e.v] = std::min(d[e.u][e.v], e.latency_us);
		d[e.v][e.u] = std::min(d[e.v][e.u], e.latency_us);
	}
	for (int k = 1; k <= n; ++k) {
		for (int i = 1; i <= n; ++i) {
			for (int j = 1; j <= n; ++j) {
				d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
			}
		}
	}
	return d;
}

/// Connectivity of `nodes` using `edges` (pairs), ignoring `removed`.
inline bool connected(const std::vector<NodeId> &nodes, const std::vector<std::pair<NodeId, NodeId>> &edges, NodeId removed = -1) {
	std::set<NodeId> left;
	for (NodeId v : nodes) {
		if (v != removed) {
			left.insert(v);
		}
	}
	if (left.size() <= 1) {
		return true;
	}
	std::set<NodeId> seen{*left.begin()};
	std::vector<NodeId> stack{*left.begin()};
	while (!stack.empty()) {
		NodeId v = stack.back();
		stack.pop_back();
		for (auto [a, b] : edges) {
			if (a == removed || b == removed) {
				continue;
			}
			NodeId w = a == v ? b : (b == v ? a : -1);
			if (w >= 0 && left.count(w) && seen.insert(w).second) {
				stack.push_back(w);
			}
		}
	}
	return seen.size() == left.size();
}

inline std::vector<std::pair<NodeId, NodeId>> edge_pairs(const telemplan::Subnetwork &s, const Topology &topo) {
	std::vector<std::pair<NodeId, NodeId>> out;
	for (std::size_t e : s.edges) {
		out.emplace_back(topo.edges()[e].u, topo.edges()[e].v);
	}
	return out;
}

/// Nodes whose removal disconnects the rest.
inline std::vector<NodeId> removal_articulation(const std::vector<NodeId> &nodes, const std::vector<std::pair<NodeId, NodeId>> &edges) {
	std::vector<NodeId> out;
	for (NodeId v : nodes) {
		if (!connected(nodes, edges, v)) {
			out.push_back(v);
		}
	}
	return out;
}

/// Connected and no single node removal disconnects it.
inline bool biconnected_by_removal(const std::vector<NodeId> &nodes, const std::vector<std::pair<NodeId, NodeId>> &edges) {
	return connected(nodes, edges) && removal_articulation(nodes, edges).empty();
}

/// Minimum spanning tree weight of the complete graph on `k` vertices with
/// weights w[i][j], by trying every (k-1)-edge subset.
inline double exhaustive_mst(const std::vector<std::vector<double>> &w) {
	const int k = static_cast<int>(w.size());
	if (k <= 1) {
		return 0.0;
	}
	std::vector<std::pair<int, int>> all;
	for (int i = 0; i < k; ++i) {
		for (int j = i + 1; j < k; ++j) {
			all.emplace_back(i, j);
		}
	}
	const int m = static_cast<int>(all.size());
	double best = kInf;
	std::vector<int> pick(k - 1);
	std::function<void(int, int)> rec = [&](int from, int depth) {
		if (depth == k - 1) {
			std::vector<int> parent(k);
			std::iota(parent.begin(), parent.end(), 0);
			std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
			double total = 0.0;
			for (int idx : pick) {
				auto [a, b] = all[idx];
				int ra = find(a), rb = find(b);
				if (ra == rb) {
					return;
				}
				parent[ra] = rb;
				total += w[a][b];
			}
			best = std::min(best, total);
			return;
		}
		for (int e = from; e < m; ++e) {
			pick[depth] = e;
			rec(e + 1, depth + 1);
		}
	};
	rec(0, 0);
	return best;
}

/// Fewest walks covering `targets` with every walk's latency <= t_max, where a
/// walk through a group costs its cheapest visiting order under `dist`.
/// Tries every set partition of the targets and every order inside a block.
inline int min_walk_cover(const std::vector<std::vector<double>> &dist, const std::vector<NodeId> &targets, double t_max) {
	const int m = static_cast<int>(targets.size());
	auto block_ok = [&](std::vector<NodeId> block) {
		std::sort(block.begin(), block.end());
		do {
			double total = 0.0;
			for (std::size_t i = 1; i < block.size(); ++i) {
				total += dist[block[i - 1]][block[i]];
			}
			if (total <= t_max + 1e-9) {
				return true;
			}
		} while (std::next_permutation(block.begin(), block.end()));
		return false;
	};
	int best = m + 1;
	std::vector<int> label(m, 0);
	std::function<void(int, int)> rec = [&](int i, int blocks) {
		if (blocks >= best) {
			return;
		}
		if (i == m) {
			for (int b = 0; b < blocks; ++b) {
				std::vector<NodeId> block;
				for (int j = 0; j < m; ++j) {
					if (label[j] == b) {
						block.push_back(targets[j]);
					}
				}
				if (!block_ok(block)) {
					return;
				}
			}
			best = blocks;
			return;
		}
		for (int b = 0; b <= blocks; ++b) {
			label[i] = b;
			rec(i + 1, std::max(blocks, b + 1));
		}
	};
	rec(0, 0);
	return best;
}

} // namespace oracle
