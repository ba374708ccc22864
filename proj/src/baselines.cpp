#include "telemplan/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>

namespace telemplan {

BaselineMethod parse_baseline(std::string_view name) {
	if (name == "dfs") {
		return BaselineMethod::dfs;
	}
	if (name == "euler") {
		return BaselineMethod::euler;
	}
	if (name == "netview") {
		return BaselineMethod::netview;
	}
	if (name == "sa") {
		return BaselineMethod::sa;
	}
	throw PlannerError("unknown baseline '" + std::string(name) + "' (expected dfs, euler, netview or sa)");
}

std::string to_string(BaselineMethod method) {
	switch (method) {
	case BaselineMethod::dfs:
		return "dfs";
	case BaselineMethod::euler:
		return "euler";
	case BaselineMethod::netview:
		return "netview";
	case BaselineMethod::sa:
		return "sa";
	}
	return "unknown";
}

ProbePlan dfs_plan(const Topology &topo) {
	if (topo.node_count() == 0) {
		return {};
	}
	std::vector<char> seen(static_cast<std::size_t>(topo.node_count() + 1), 0);
	std::vector<std::vector<NodeId>> walks;
	std::vector<NodeId> cur{1};
	std::function<void(NodeId)> visit = [&](NodeId v) {
		seen[static_cast<std::size_t>(v)] = 1;
		for (const auto &nb : topo.neighbors(v)) {
			if (seen[static_cast<std::size_t>(nb.node)]) {
				continue;
			}
			if (cur.back() != v) {
				walks.push_back(std::move(cur));
				cur = {v};
			}
			cur.push_back(nb.node);
			visit(nb.node);
		}
	};
	for (NodeId root = 1; root <= topo.node_count(); ++root) {
		if (seen[static_cast<std::size_t>(root)]) {
			continue;
		}
		if (root != 1) {
			walks.push_back(std::move(cur));
			cur = {root};
		}
		visit(root);
	}
	walks.push_back(std::move(cur));
	return make_plan(topo, walks);
}

ProbePlan euler_plan(const Topology &topo) {
	const int n = topo.node_count();
	if (n == 0) {
		return {};
	}
	if (topo.edge_count() == 0) {
		std::vector<std::vector<NodeId>> singles;
		for (NodeId v = 1; v <= n; ++v) {
			singles.push_back({v});
		}
		return make_plan(topo, singles);
	}
	struct MultiEdge {
		NodeId u, v;
		bool real;
	};
	std::vector<MultiEdge> edges;
	for (const auto &e : topo.edges()) {
		edges.push_back({e.u, e.v, true});
	}
	auto dist = all_pairs_distances(topo);
	std::vector<NodeId> odd;
	for (NodeId v = 1; v <= n; ++v) {
		if (topo.degree(v) % 2 == 1) {
			odd.push_back(v);
		}
	}
	std::vector<char> paired(odd.size(), 0);
	for (std::size_t i = 0; i < odd.size(); ++i) {
		if (paired[i]) {
			continue;
		}
		std::size_t best = odd.size();
		for (std::size_t j = i + 1; j < odd.size(); ++j) {
			if (!paired[j] && (best == odd.size() || dist[static_cast<std::size_t>(odd[i])][static_cast<std::size_t>(odd[j])] <
			                                           dist[static_cast<std::size_t>(odd[i])][static_cast<std::size_t>(odd[best])])) {
				best = j;
			}
		}
		paired[i] = paired[best] = 1;
		edges.push_back({odd[i], odd[best], false});
	}
	std::vector<std::vector<std::size_t>> incident(static_cast<std::size_t>(n + 1));
	for (std::size_t i = 0; i < edges.size(); ++i) {
		incident[static_cast<std::size_t>(edges[i].u)].push_back(i);
		incident[static_cast<std::size_t>(edges[i].v)].push_back(i);
	}
	auto other = [&](std::size_t e, NodeId v) { return edges[e].u == v ? edges[e].v : edges[e].u; };
	for (NodeId v = 1; v <= n; ++v) {
		auto &list = incident[static_cast<std::size_t>(v)];
		std::sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
			return std::pair(other(a, v), a) < std::pair(other(b, v), b);
		});
	}

	// Hierholzer; the circuit is recorded as the sequence of traversed edges.
	std::vector<char> used(edges.size(), 0);
	std::vector<std::size_t> next(static_cast<std::size_t>(n + 1), 0);
	NodeId start = odd.empty() ? edges.front().u : odd.front();
	std::vector<std::pair<NodeId, std::ptrdiff_t>> stack{{start, -1}};
	std::vector<std::pair<NodeId, std::ptrdiff_t>> circuit;
	while (!stack.empty()) {
		NodeId v = stack.back().first;
		auto &ptr = next[static_cast<std::size_t>(v)];
		auto &list = incident[static_cast<std::size_t>(v)];
		while (ptr < list.size() && used[list[ptr]]) {
			++ptr;
		}
		if (ptr == list.size()) {
			circuit.push_back(stack.back());
			stack.pop_back();
			continue;
		}
		std::size_t e = list[ptr];
		used[e] = 1;
		stack.push_back({other(e, v), static_cast<std::ptrdiff_t>(e)});
	}
	std::reverse(circuit.begin(), circuit.end());
	// circuit[i].second is the edge used to reach circuit[i].first.

	std::vector<std::vector<NodeId>> walks;
	if (odd.empty()) {
		std::vector<NodeId> w;
		for (const auto &[v, e] : circuit) {
			w.push_back(v);
		}
		walks.push_back(std::move(w));
		return make_plan(topo, walks);
	}
	std::size_t first_virtual = 1;
	while (edges[static_cast<std::size_t>(circuit[first_virtual].second)].real) {
		++first_virtual;
	}
	const std::size_t len = circuit.size() - 1; // edges in the closed circuit
	std::vector<NodeId> w{circuit[first_virtual].first};
	for (std::size_t k = 1; k <= len; ++k) {
		std::size_t i = (first_virtual - 1 + k) % len + 1;
		const auto &[v, e] = circuit[i];
		if (edges[static_cast<std::size_t>(e)].real) {
			w.push_back(v);
		} else {
			if (w.size() > 1) {
				walks.push_back(std::move(w));
			}
			w = {v};
		}
	}
	if (w.size() > 1) {
		walks.push_back(std::move(w));
	}
	return make_plan(topo, walks);
}

namespace {

/// Walk through `targets` in order along shortest subnetwork paths.
std::vector<NodeId> join_targets(const PlanningInstance &inst, const std::vector<NodeId> &targets) {
	std::vector<NodeId> walk{targets.front()};
	for (std::size_t i = 1; i < targets.size(); ++i) {
		Path p = shortest_path(inst.sub_topo, targets[i - 1], targets[i]);
		walk.insert(walk.end(), p.nodes.begin() + 1, p.nodes.end());
	}
	return walk;
}

double dist(const PlanningInstance &inst, NodeId a, NodeId b) {
	return inst.dist[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
}

} // namespace

ProbePlan netview_plan(const PlanningInstance &inst, const PlannerConfig &cfg) {
	std::set<NodeId> uncovered(inst.terminals().begin(), inst.terminals().end());
	std::vector<std::vector<NodeId>> walks;
	while (!uncovered.empty()) {
		NodeId cur = *uncovered.begin();
		uncovered.erase(cur);
		std::vector<NodeId> walk{cur};
		double lat = 0.0;
		while (true) {
			NodeId best = 0;
			for (NodeId t : uncovered) {
				double d = dist(inst, cur, t);
				if (lat + d <= cfg.t_max && (best == 0 || d < dist(inst, cur, best))) {
					best = t;
				}
			}
			if (best == 0) {
				break;
			}
			Path p = shortest_path(inst.sub_topo, cur, best);
			for (std::size_t i = 1; i < p.nodes.size(); ++i) {
				walk.push_back(p.nodes[i]);
				uncovered.erase(p.nodes[i]);
			}
			lat += p.total_latency;
			cur = best;
		}
		walks.push_back(std::move(walk));
	}
	return make_plan(inst.sub_topo, walks);
}

ProbePlan annealing_plan(const PlanningInstance &inst, const PlannerConfig &cfg, const AnnealingConfig &sa) {
	if (sa.iterations < 0 || !(sa.start_temperature > 0.0) || !(sa.cooling > 0.0 && sa.cooling < 1.0)) {
		throw PlannerError("annealing config: iterations >= 0, temperature > 0 and cooling in (0, 1) required");
	}
	using Groups = std::vector<std::vector<NodeId>>;
	const auto &targets = inst.terminals();
	const double penalty = cfg.lambda_for(inst.topo.node_count()) / cfg.a;
	const double shaping_scale = 0.5 / (static_cast<double>(targets.size()) * cfg.t_max + 1.0);
	auto energy = [&](const Groups &g) {
		double total = 0.0;
		bool over = false;
		for (const auto &seq : g) {
			double t = 0.0;
			for (std::size_t i = 1; i < seq.size(); ++i) {
				t += dist(inst, seq[i - 1], seq[i]);
			}
			over = over || t > cfg.t_max;
			total += t;
		}
		return static_cast<double>(g.size()) + (over ? penalty : 0.0) + shaping_scale * total;
	};

	Groups cur;
	for (NodeId t : targets) {
		cur.push_back({t});
	}
	double e_cur = energy(cur);
	Groups best = cur;
	double e_best = e_cur;
	std::mt19937_64 rng(sa.seed);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	auto pick = [&](std::size_t n) { return static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)); };
	double temperature = sa.start_temperature;

	for (int it = 0; it < sa.iterations; ++it) {
		Groups next = cur;
		switch (pick(4)) {
		case 0: { // split
			std::size_t g = pick(next.size());
			if (next[g].size() < 2) {
				continue;
			}
			std::size_t cut = 1 + pick(next[g].size() - 1);
			std::vector<NodeId> tail(next[g].begin() + static_cast<std::ptrdiff_t>(cut), next[g].end());
			next[g].resize(cut);
			next.push_back(std::move(tail));
			break;
		}
		case 1: { // merge
			if (next.size() < 2) {
				continue;
			}
			std::size_t a = pick(next.size());
			std::size_t b = pick(next.size() - 1);
			b += b >= a ? 1 : 0;
			if (unit(rng) < 0.5) {
				std::reverse(next[b].begin(), next[b].end());
			}
			next[a].insert(next[a].end(), next[b].begin(), next[b].end());
			next.erase(next.begin() + static_cast<std::ptrdiff_t>(b));
			break;
		}
		case 2: { // relocate
			std::size_t a = pick(next.size());
			std::size_t i = pick(next[a].size());
			NodeId v = next[a][i];
			next[a].erase(next[a].begin() + static_cast<std::ptrdiff_t>(i));
			if (next[a].empty()) {
				next.erase(next.begin() + static_cast<std::ptrdiff_t>(a));
			}
			if (next.empty()) {
				continue;
			}
			std::size_t b = pick(next.size());
			std::size_t pos = pick(next[b].size() + 1);
			next[b].insert(next[b].begin() + static_cast<std::ptrdiff_t>(pos), v);
			break;
		}
		default: { // 2-opt
			std::size_t g = pick(next.size());
			if (next[g].size() < 2) {
				continue;
			}
			std::size_t i = pick(next[g].size());
			std::size_t j = pick(next[g].size());
			if (i == j) {
				continue;
			}
			if (i > j) {
				std::swap(i, j);
			}
			std::reverse(next[g].begin() + static_cast<std::ptrdiff_t>(i), next[g].begin() + static_cast<std::ptrdiff_t>(j) + 1);
			break;
		}
		}
		double e_next = energy(next);
		if (e_next <= e_cur || unit(rng) < std::exp((e_cur - e_next) / temperature)) {
			cur = std::move(next);
			e_cur = e_next;
			if (e_cur < e_best) {
				best = cur;
				e_best = e_cur;
			}
		}
		temperature *= sa.cooling;
		if (temperature < 1e-4 * sa.start_temperature) {
			temperature = sa.start_temperature;
		}
	}
	std::vector<std::vector<NodeId>> walks;
	for (const auto &seq : best) {
		walks.push_back(join_targets(inst, seq));
	}
	return make_plan(inst.sub_topo, walks);
}

ProbePlan baseline_plan(BaselineMethod method, const PlanningInstance &inst, const PlannerConfig &cfg, const AnnealingConfig &sa) {
	switch (method) {
	case BaselineMethod::dfs:
		return dfs_plan(inst.topo);
	case BaselineMethod::euler:
		return euler_plan(inst.topo);
	case BaselineMethod::netview:
		return netview_plan(inst, cfg);
	case BaselineMethod::sa:
		return annealing_plan(inst, cfg, sa);
	}
	throw PlannerError("unknown baseline");
}

} // namespace telemplan
