#include "telemplan/pruning.hpp"

#include "telemplan/textio.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace telemplan {

double MetricClosure::distance(NodeId a, NodeId b) const {
	if (a == b) {
		return 0.0;
	}
	return weight.at({std::min(a, b), std::max(a, b)});
}

const Path &MetricClosure::path(NodeId a, NodeId b) const {
	return witness.at({std::min(a, b), std::max(a, b)});
}

bool Subnetwork::has_node(NodeId v) const {
	return std::binary_search(nodes.begin(), nodes.end(), v);
}

bool Subnetwork::has_edge(std::size_t e) const {
	return std::binary_search(edges.begin(), edges.end(), e);
}

namespace {

std::vector<NodeId> sorted_unique(std::vector<NodeId> v) {
	std::sort(v.begin(), v.end());
	v.erase(std::unique(v.begin(), v.end()), v.end());
	return v;
}

void check_terminals(const Topology &topo, const std::vector<NodeId> &terminals) {
	if (terminals.empty()) {
		throw PruningError("high-load switch set is empty");
	}
	for (NodeId v : terminals) {
		if (!topo.contains(v)) {
			throw PruningError("high-load switch " + std::to_string(v) + " is not in the topology");
		}
	}
}

/// Adds a path's nodes and edges to the subnetwork, keeping both sorted.
void add_path(Subnetwork &s, const Topology &topo, const std::vector<NodeId> &path) {
	std::set<NodeId> nodes(s.nodes.begin(), s.nodes.end());
	std::set<std::size_t> edges(s.edges.begin(), s.edges.end());
	for (std::size_t i = 0; i < path.size(); ++i) {
		nodes.insert(path[i]);
		if (i + 1 < path.size()) {
			auto e = topo.edge_index(path[i], path[i + 1]);
			if (!e) {
				throw PruningError("path uses a link that is not in the topology");
			}
			edges.insert(*e);
		}
	}
	s.nodes.assign(nodes.begin(), nodes.end());
	s.edges.assign(edges.begin(), edges.end());
}

/// Adjacency of the subnetwork, indexed by base node id.
std::vector<std::vector<Neighbor>> local_adjacency(const Subnetwork &s, const Topology &topo) {
	std::vector<std::vector<Neighbor>> adj(static_cast<std::size_t>(topo.node_count() + 1));
	for (std::size_t e : s.edges) {
		const Edge &ed = topo.edges().at(e);
		adj[static_cast<std::size_t>(ed.u)].push_back({ed.v, ed.latency_us, e});
		adj[static_cast<std::size_t>(ed.v)].push_back({ed.u, ed.latency_us, e});
	}
	for (auto &list : adj) {
		std::sort(list.begin(), list.end(), [](const Neighbor &a, const Neighbor &b) { return a.node < b.node; });
	}
	return adj;
}

bool connected_without(const Subnetwork &s, const std::vector<std::vector<Neighbor>> &adj, NodeId removed) {
	std::vector<NodeId> keep;
	for (NodeId v : s.nodes) {
		if (v != removed) {
			keep.push_back(v);
		}
	}
	if (keep.empty()) {
		return true;
	}
	std::vector<char> seen(adj.size(), 0);
	std::vector<NodeId> stack{keep.front()};
	seen[static_cast<std::size_t>(keep.front())] = 1;
	std::size_t reached = 1;
	while (!stack.empty()) {
		NodeId v = stack.back();
		stack.pop_back();
		for (const auto &nb : adj[static_cast<std::size_t>(v)]) {
			if (nb.node != removed && !seen[static_cast<std::size_t>(nb.node)]) {
				seen[static_cast<std::size_t>(nb.node)] = 1;
				++reached;
				stack.push_back(nb.node);
			}
		}
	}
	return reached == keep.size();
}

struct DfsTree {
	NodeId root = 0;
	std::vector<int> disc;
	std::vector<int> low;
	std::vector<NodeId> parent;
	std::vector<std::vector<NodeId>> children;
	std::vector<std::size_t> tree_edges;
	std::vector<NodeId> articulation; // ascending
};

DfsTree depth_first(const Subnetwork &s, const Topology &topo) {
	if (s.nodes.empty()) {
		throw PruningError("subnetwork is empty");
	}
	auto adj = local_adjacency(s, topo);
	const auto size = adj.size();
	DfsTree t;
	t.root = s.nodes.front();
	t.disc.assign(size, -1);
	t.low.assign(size, -1);
	t.parent.assign(size, 0);
	t.children.assign(size, {});
	int clock = 0;
	std::vector<char> is_cut(size, 0);

	std::function<void(NodeId)> visit = [&](NodeId v) {
		auto vi = static_cast<std::size_t>(v);
		t.disc[vi] = t.low[vi] = clock++;
		for (const auto &nb : adj[vi]) {
			auto wi = static_cast<std::size_t>(nb.node);
			if (t.disc[wi] < 0) {
				t.parent[wi] = v;
				t.children[vi].push_back(nb.node);
				t.tree_edges.push_back(nb.edge);
				visit(nb.node);
				t.low[vi] = std::min(t.low[vi], t.low[wi]);
				if (v != t.root && t.low[wi] >= t.disc[vi]) {
					is_cut[vi] = 1;
				}
			} else if (nb.node != t.parent[vi]) {
				t.low[vi] = std::min(t.low[vi], t.disc[wi]);
			}
		}
	};
	visit(t.root);
	for (NodeId v : s.nodes) {
		if (t.disc[static_cast<std::size_t>(v)] < 0) {
			throw PruningError("subnetwork is not connected");
		}
	}
	if (t.children[static_cast<std::size_t>(t.root)].size() >= 2) {
		is_cut[static_cast<std::size_t>(t.root)] = 1;
	}
	for (NodeId v : s.nodes) {
		if (is_cut[static_cast<std::size_t>(v)]) {
			t.articulation.push_back(v);
		}
	}
	std::sort(t.tree_edges.begin(), t.tree_edges.end());
	return t;
}

void collect_subtree(const DfsTree &t, NodeId v, std::vector<NodeId> &out) {
	out.push_back(v);
	for (NodeId c : t.children[static_cast<std::size_t>(v)]) {
		collect_subtree(t, c, out);
	}
}

bool path_less(const Path &a, const Path &b) {
	if (a.total_latency != b.total_latency) {
		return a.total_latency < b.total_latency;
	}
	return a.nodes < b.nodes;
}

/// Shortest bypass from any source to any target under the constraints.
std::optional<Path> best_bypass(const Topology &topo, const std::vector<NodeId> &sources, const std::vector<NodeId> &targets,
                                const PathConstraints &constraints) {
	std::optional<Path> best;
	for (NodeId s : sources) {
		for (NodeId a : targets) {
			auto p = shortest_path(topo, s, a, constraints);
			if (p && (!best || path_less(*p, *best))) {
				best = std::move(p);
			}
		}
	}
	return best;
}

/// (sources, targets) pairs whose separation by `v` a bypass must repair.
std::vector<std::pair<std::vector<NodeId>, std::vector<NodeId>>> separations(const DfsTree &t, NodeId v) {
	std::vector<std::pair<std::vector<NodeId>, std::vector<NodeId>>> out;
	const auto &kids = t.children[static_cast<std::size_t>(v)];
	if (v == t.root) {
		for (std::size_t i = 0; i < kids.size(); ++i) {
			std::vector<NodeId> mine;
			collect_subtree(t, kids[i], mine);
			std::vector<NodeId> others;
			for (std::size_t j = 0; j < kids.size(); ++j) {
				if (j != i) {
					collect_subtree(t, kids[j], others);
				}
			}
			out.emplace_back(sorted_unique(std::move(mine)), sorted_unique(std::move(others)));
		}
		return out;
	}
	std::vector<NodeId> ancestors;
	for (NodeId a = t.parent[static_cast<std::size_t>(v)];; a = t.parent[static_cast<std::size_t>(a)]) {
		ancestors.push_back(a);
		if (a == t.root) {
			break;
		}
	}
	ancestors = sorted_unique(std::move(ancestors));
	for (NodeId c : kids) {
		if (t.low[static_cast<std::size_t>(c)] >= t.disc[static_cast<std::size_t>(v)]) {
			std::vector<NodeId> mine;
			collect_subtree(t, c, mine);
			out.emplace_back(sorted_unique(std::move(mine)), ancestors);
		}
	}
	return out;
}

Subnetwork shortest_cycle_through(const Topology &topo, NodeId t) {
	Subnetwork s;
	s.nodes = {t};
	s.terminals = {t};
	std::optional<Path> best;
	for (const auto &nb : topo.neighbors(t)) {
		PathConstraints c;
		c.forbidden_edges = {nb.edge};
		auto back = shortest_path(topo, nb.node, t, c);
		if (!back) {
			continue;
		}
		Path cycle;
		cycle.nodes.push_back(t);
		cycle.nodes.insert(cycle.nodes.end(), back->nodes.begin(), back->nodes.end());
		cycle.total_latency = nb.latency_us + back->total_latency;
		if (!best || path_less(cycle, *best)) {
			best = std::move(cycle);
		}
	}
	if (!best) {
		s.diagnostics.push_back({"augmentation-impossible", "no cycle through switch " + std::to_string(topo.external_id(t))});
		return s;
	}
	add_path(s, topo, best->nodes);
	return s;
}

} // namespace

MetricClosure metric_closure(const Topology &topo, const std::vector<NodeId> &terminals) {
	check_terminals(topo, terminals);
	MetricClosure mc;
	mc.terminals = sorted_unique(terminals);
	for (std::size_t i = 0; i < mc.terminals.size(); ++i) {
		for (std::size_t j = i + 1; j < mc.terminals.size(); ++j) {
			NodeId a = mc.terminals[i];
			NodeId b = mc.terminals[j];
			Path p = shortest_path(topo, a, b);
			mc.weight[{a, b}] = p.total_latency;
			mc.witness[{a, b}] = std::move(p);
		}
	}
	return mc;
}

std::vector<TreeEdge> kruskal_mst(const MetricClosure &closure) {
	if (closure.terminals.empty()) {
		throw PruningError("spanning tree needs at least 1 terminal");
	}
	std::vector<TreeEdge> candidates;
	for (const auto &[key, w] : closure.weight) {
		candidates.push_back({key.first, key.second, w});
	}
	std::sort(candidates.begin(), candidates.end(), [](const TreeEdge &x, const TreeEdge &y) {
		if (x.weight != y.weight) {
			return x.weight < y.weight;
		}
		return std::pair(x.a, x.b) < std::pair(y.a, y.b);
	});
	std::map<NodeId, NodeId> parent;
	for (NodeId v : closure.terminals) {
		parent[v] = v;
	}
	std::function<NodeId(NodeId)> find = [&](NodeId v) {
		while (parent[v] != v) {
			parent[v] = parent[parent[v]];
			v = parent[v];
		}
		return v;
	};
	std::vector<TreeEdge> tree;
	for (const auto &e : candidates) {
		NodeId ra = find(e.a);
		NodeId rb = find(e.b);
		if (ra != rb) {
			parent[ra] = rb;
			tree.push_back(e);
			if (tree.size() + 1 == closure.terminals.size()) {
				break;
			}
		}
	}
	if (tree.size() + 1 != closure.terminals.size()) {
		throw PruningError("terminals are not mutually reachable");
	}
	return tree;
}

Subnetwork expand_tree(const std::vector<TreeEdge> &tree, const MetricClosure &closure, const Topology &topo) {
	Subnetwork s;
	s.terminals = closure.terminals;
	s.nodes = closure.terminals;
	for (const auto &e : tree) {
		add_path(s, topo, closure.path(e.a, e.b).nodes);
	}
	return s;
}

std::vector<NodeId> articulation_points(const Subnetwork &subnet, const Topology &topo) {
	return depth_first(subnet, topo).articulation;
}

Subnetwork biconnect(const Subnetwork &subnet, const Topology &topo) {
	Subnetwork s = subnet;
	const std::size_t max_rounds = topo.edge_count() + 1;
	for (std::size_t round = 0; round <= max_rounds; ++round) {
		DfsTree t = depth_first(s, topo);
		if (t.articulation.empty()) {
			return s;
		}
		std::optional<Path> primary;
		std::optional<Path> fallback;
		std::vector<NodeId> stuck;
		for (NodeId v : t.articulation) {
			bool repairable = false;
			for (const auto &[sources, targets] : separations(t, v)) {
				PathConstraints strict;
				strict.forbidden_nodes = {v};
				strict.forbidden_edges = t.tree_edges;
				if (auto p = best_bypass(topo, sources, targets, strict)) {
					repairable = true;
					if (!primary || path_less(*p, *primary)) {
						primary = std::move(p);
					}
					continue;
				}
				PathConstraints loose;
				loose.forbidden_nodes = {v};
				if (auto p = best_bypass(topo, sources, targets, loose)) {
					repairable = true;
					if (!fallback || path_less(*p, *fallback)) {
						fallback = std::move(p);
					}
				}
			}
			if (!repairable) {
				stuck.push_back(v);
			}
		}
		const std::optional<Path> &chosen = primary ? primary : fallback;
		if (!chosen) {
			std::string detail;
			for (NodeId v : stuck) {
				detail += (detail.empty() ? "" : ",") + std::to_string(topo.external_id(v));
			}
			s.diagnostics.push_back({"augmentation-impossible", "cut switches " + detail});
			return s;
		}
		add_path(s, topo, chosen->nodes);
	}
	throw PruningError("biconnection did not converge");
}

Subnetwork prune(const Topology &topo, const std::vector<NodeId> &terminals) {
	check_terminals(topo, terminals);
	auto unique = sorted_unique(terminals);
	if (unique.size() == 1) {
		return shortest_cycle_through(topo, unique.front());
	}
	MetricClosure mc = metric_closure(topo, unique);
	return biconnect(expand_tree(kruskal_mst(mc), mc, topo), topo);
}

Subnetwork naive_subnetwork(const Topology &topo, const std::vector<NodeId> &terminals) {
	check_terminals(topo, terminals);
	auto unique = sorted_unique(terminals);
	if (unique.size() == 1) {
		return shortest_cycle_through(topo, unique.front());
	}
	MetricClosure mc = metric_closure(topo, unique);
	Subnetwork s;
	s.terminals = mc.terminals;
	s.nodes = mc.terminals;
	for (const auto &[key, p] : mc.witness) {
		add_path(s, topo, p.nodes);
	}
	return biconnect(s, topo);
}

bool is_biconnected(const Subnetwork &subnet, const Topology &topo) {
	auto adj = local_adjacency(subnet, topo);
	if (!connected_without(subnet, adj, 0)) {
		return false;
	}
	if (subnet.nodes.size() < 3) {
		return true;
	}
	for (NodeId v : subnet.nodes) {
		if (!connected_without(subnet, adj, v)) {
			return false;
		}
	}
	return true;
}

Topology as_topology(const Subnetwork &subnet, const Topology &topo) {
	return edge_subgraph(topo, subnet.edges);
}

std::string write_subnetwork(const Subnetwork &subnet, const Topology &topo) {
	std::ostringstream out;
	out << "nodes " << subnet.nodes.size() << "\n";
	for (NodeId v : subnet.nodes) {
		out << "cap " << topo.external_id(v) << " " << textio::format_double(topo.capacity(v)) << "\n";
	}
	for (std::size_t e : subnet.edges) {
		const Edge &ed = topo.edges().at(e);
		out << "edge " << topo.external_id(ed.u) << " " << topo.external_id(ed.v) << " " << textio::format_double(ed.latency_us) << "\n";
	}
	out << "terminals";
	for (NodeId v : subnet.terminals) {
		out << " " << topo.external_id(v);
	}
	out << "\n";
	for (const auto &d : subnet.diagnostics) {
		out << "diagnostic " << d.code << " " << d.detail << "\n";
	}
	return out.str();
}

Subnetwork read_subnetwork(std::string_view text, const Topology &topo) {
	Subnetwork s;
	std::size_t declared = 0;
	bool have_nodes = false;
	bool have_terminals = false;
	int line_no = 0;
	auto node_of = [&](std::string_view tok) {
		auto v = topo.internal_id(textio::parse_int(tok));
		if (!v) {
			throw PruningError("line " + std::to_string(line_no) + ": switch " + std::string(tok) + " is not in the topology");
		}
		return *v;
	};
	for (auto line : textio::split(text, '\n')) {
		++line_no;
		auto tok = textio::tokenize(line);
		if (tok.empty()) {
			continue;
		}
		try {
			if (tok[0] == "nodes" && tok.size() == 2) {
				declared = static_cast<std::size_t>(textio::parse_int(tok[1]));
				have_nodes = true;
			} else if (tok[0] == "cap" && tok.size() == 3) {
				s.nodes.push_back(node_of(tok[1]));
			} else if (tok[0] == "edge" && tok.size() == 4) {
				NodeId u = node_of(tok[1]);
				NodeId v = node_of(tok[2]);
				auto e = topo.edge_index(u, v);
				if (!e) {
					throw PruningError("line " + std::to_string(line_no) + ": link is not in the topology");
				}
				if (!nearly_equal(topo.edges()[*e].latency_us, textio::parse_double(tok[3]))) {
					throw PruningError("line " + std::to_string(line_no) + ": latency differs from the topology");
				}
				s.edges.push_back(*e);
				s.nodes.push_back(u);
				s.nodes.push_back(v);
			} else if (tok[0] == "diagnostic" && tok.size() >= 2) {
				auto rest = line.substr(static_cast<std::size_t>(tok[1].data() + tok[1].size() - line.data()));
				s.diagnostics.push_back({std::string(tok[1]), std::string(textio::trim(rest))});
			} else if (tok[0] == "terminals") {
				for (std::size_t i = 1; i < tok.size(); ++i) {
					s.terminals.push_back(node_of(tok[i]));
				}
				have_terminals = true;
			} else {
				throw PruningError("line " + std::to_string(line_no) + ": unrecognized record '" + std::string(line) + "'");
			}
		} catch (const std::invalid_argument &e) {
			throw PruningError("line " + std::to_string(line_no) + ": " + e.what());
		}
	}
	if (!have_nodes || !have_terminals) {
		throw PruningError("subnetwork file needs 'nodes' and 'terminals' records");
	}
	s.nodes = sorted_unique(std::move(s.nodes));
	std::sort(s.edges.begin(), s.edges.end());
	s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
	s.terminals = sorted_unique(std::move(s.terminals));
	if (s.nodes.size() != declared) {
		throw PruningError("subnetwork declares " + std::to_string(declared) + " nodes but lists " + std::to_string(s.nodes.size()));
	}
	for (NodeId v : s.terminals) {
		if (!s.has_node(v)) {
			throw PruningError("terminal " + std::to_string(topo.external_id(v)) + " is not in the subnetwork");
		}
	}
	return s;
}

} // namespace telemplan
