#include "telemplan/netgraph.hpp"

#include "telemplan/textio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>

namespace telemplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ParseError {
	std::size_t line;
	std::string message;
};

[[noreturn]] void parse_fail(std::size_t line, const std::string &msg) {
	throw TopologyError("topology parse error at line " + std::to_string(line) + ": " + msg,
	                    {Diagnostic{"parse-error", std::to_string(line)}});
}

} // namespace

bool nearly_equal(double a, double b) {
	if (a == b) {
		return true;
	}
	double scale = std::max({1.0, std::abs(a), std::abs(b)});
	return std::abs(a - b) <= 1e-9 * scale;
}

Topology Topology::from_parts(std::vector<double> capacity, std::vector<Edge> edges,
                              std::vector<std::int64_t> external_ids) {
	Topology t;
	const int n = static_cast<int>(capacity.size());
	if (external_ids.empty()) {
		external_ids.resize(capacity.size());
		std::iota(external_ids.begin(), external_ids.end(), std::int64_t{1});
	}
	if (external_ids.size() != capacity.size()) {
		throw TopologyError("external id map size does not match node count");
	}
	for (auto &e : edges) {
		if (e.u < 1 || e.u > n || e.v < 1 || e.v > n) {
			throw TopologyError("edge endpoint out of range", {Diagnostic{"unknown-node", std::to_string(e.u) + "-" + std::to_string(e.v)}});
		}
		if (e.u == e.v) {
			throw TopologyError("self loop on node " + std::to_string(e.u), {Diagnostic{"self-loop", std::to_string(e.u)}});
		}
		if (e.u > e.v) {
			std::swap(e.u, e.v);
		}
	}
	std::stable_sort(edges.begin(), edges.end(), [](const Edge &a, const Edge &b) {
		return a.u != b.u ? a.u < b.u : a.v < b.v;
	});
	t.capacity_ = std::move(capacity);
	t.edges_ = std::move(edges);
	t.external_ids_ = std::move(external_ids);

	std::vector<std::vector<Neighbor>> lists(static_cast<std::size_t>(n) + 1);
	for (std::size_t i = 0; i < t.edges_.size(); ++i) {
		const Edge &e = t.edges_[i];
		lists[static_cast<std::size_t>(e.u)].push_back({e.v, e.latency_us, i});
		lists[static_cast<std::size_t>(e.v)].push_back({e.u, e.latency_us, i});
	}
	t.adj_offset_.assign(static_cast<std::size_t>(n) + 2, 0);
	for (int v = 1; v <= n; ++v) {
		auto &l = lists[static_cast<std::size_t>(v)];
		std::stable_sort(l.begin(), l.end(), [](const Neighbor &a, const Neighbor &b) { return a.node < b.node; });
		t.adj_offset_[static_cast<std::size_t>(v) + 1] = t.adj_offset_[static_cast<std::size_t>(v)] + l.size();
		t.adj_.insert(t.adj_.end(), l.begin(), l.end());
	}
	return t;
}

std::span<const Neighbor> Topology::neighbors(NodeId v) const {
	if (!contains(v)) {
		return {};
	}
	auto b = adj_offset_[static_cast<std::size_t>(v)];
	auto e = adj_offset_[static_cast<std::size_t>(v) + 1];
	return std::span<const Neighbor>(adj_.data() + b, e - b);
}

std::optional<NodeId> Topology::internal_id(std::int64_t external) const {
	for (std::size_t i = 0; i < external_ids_.size(); ++i) {
		if (external_ids_[i] == external) {
			return static_cast<NodeId>(i + 1);
		}
	}
	return std::nullopt;
}

std::optional<std::size_t> Topology::edge_index(NodeId a, NodeId b) const {
	for (const auto &nb : neighbors(a)) {
		if (nb.node == b) {
			return nb.edge;
		}
	}
	return std::nullopt;
}

std::optional<double> Topology::latency(NodeId a, NodeId b) const {
	auto idx = edge_index(a, b);
	if (!idx) {
		return std::nullopt;
	}
	return edges_[*idx].latency_us;
}

Topology load_topology(std::string_view text) {
	std::optional<std::int64_t> declared;
	std::size_t declared_line = 0;
	std::map<std::int64_t, double> caps;
	struct RawEdge {
		std::int64_t a, b;
		double latency;
		std::size_t line;
	};
	std::vector<RawEdge> raw_edges;

	std::size_t line_no = 0;
	for (auto line : textio::split(text, '\n')) {
		++line_no;
		auto tok = textio::tokenize(line);
		if (tok.empty()) {
			continue;
		}
		try {
			if (tok[0] == "nodes") {
				if (tok.size() != 2) {
					parse_fail(line_no, "expected 'nodes <n>'");
				}
				if (declared) {
					parse_fail(line_no, "duplicate 'nodes' header");
				}
				declared = textio::parse_int(tok[1]);
				declared_line = line_no;
				if (*declared < 1) {
					parse_fail(line_no, "node count must be positive");
				}
			} else if (tok[0] == "cap") {
				if (tok.size() != 3) {
					parse_fail(line_no, "expected 'cap <id> <capacity>'");
				}
				if (!declared) {
					parse_fail(line_no, "'cap' before 'nodes' header");
				}
				auto id = textio::parse_int(tok[1]);
				if (caps.count(id)) {
					parse_fail(line_no, "duplicate capacity for node " + std::string(tok[1]));
				}
				caps[id] = textio::parse_double(tok[2]);
			} else if (tok[0] == "edge") {
				if (tok.size() != 4) {
					parse_fail(line_no, "expected 'edge <u> <v> <latency_us>'");
				}
				if (!declared) {
					parse_fail(line_no, "'edge' before 'nodes' header");
				}
				raw_edges.push_back({textio::parse_int(tok[1]), textio::parse_int(tok[2]), textio::parse_double(tok[3]), line_no});
			} else {
				parse_fail(line_no, "unknown directive '" + std::string(tok[0]) + "'");
			}
		} catch (const std::invalid_argument &e) {
			parse_fail(line_no, e.what());
		}
	}
	if (!declared) {
		throw TopologyError("topology parse error: missing 'nodes' header", {Diagnostic{"parse-error", "0"}});
	}
	if (static_cast<std::int64_t>(caps.size()) != *declared) {
		parse_fail(declared_line, "declared " + std::to_string(*declared) + " nodes but found " + std::to_string(caps.size()) + " 'cap' lines");
	}

	std::vector<std::int64_t> external;
	std::vector<double> capacity;
	for (const auto &[id, cap] : caps) {
		external.push_back(id);
		capacity.push_back(cap);
	}
	auto to_internal = [&](std::int64_t ext, std::size_t line) -> NodeId {
		auto it = std::lower_bound(external.begin(), external.end(), ext);
		if (it == external.end() || *it != ext) {
			parse_fail(line, "edge references unknown node " + std::to_string(ext));
		}
		return static_cast<NodeId>(it - external.begin()) + 1;
	};

	std::vector<Edge> edges;
	for (const auto &re : raw_edges) {
		NodeId a = to_internal(re.a, re.line);
		NodeId b = to_internal(re.b, re.line);
		if (a == b) {
			parse_fail(re.line, "self loop on node " + std::to_string(re.a));
		}
		edges.push_back({a, b, re.latency});
	}
	Topology topo = Topology::from_parts(std::move(capacity), std::move(edges), std::move(external));
	auto diags = validate(topo);
	if (!diags.empty()) {
		std::string msg = "invalid topology:";
		for (const auto &d : diags) {
			msg += " " + d.to_string();
		}
		throw TopologyError(msg, std::move(diags));
	}
	return topo;
}

std::string write_topology(const Topology &topo) {
	std::ostringstream out;
	out << "nodes " << topo.node_count() << "\n";
	for (NodeId v = 1; v <= topo.node_count(); ++v) {
		out << "cap " << topo.external_id(v) << " " << textio::format_double(topo.capacity(v)) << "\n";
	}
	for (const auto &e : topo.edges()) {
		out << "edge " << topo.external_id(e.u) << " " << topo.external_id(e.v) << " " << textio::format_double(e.latency_us) << "\n";
	}
	return out.str();
}

bool is_connected(const Topology &topo) {
	const int n = topo.node_count();
	if (n <= 1) {
		return true;
	}
	std::vector<char> seen(static_cast<std::size_t>(n) + 1, 0);
	std::vector<NodeId> stack{1};
	seen[1] = 1;
	int count = 1;
	while (!stack.empty()) {
		NodeId v = stack.back();
		stack.pop_back();
		for (const auto &nb : topo.neighbors(v)) {
			if (!seen[static_cast<std::size_t>(nb.node)]) {
				seen[static_cast<std::size_t>(nb.node)] = 1;
				++count;
				stack.push_back(nb.node);
			}
		}
	}
	return count == n;
}

std::vector<Diagnostic> validate(const Topology &topo) {
	std::vector<Diagnostic> out;
	const auto &edges = topo.edges();
	for (std::size_t i = 0; i < edges.size(); ++i) {
		const auto &e = edges[i];
		std::string name = std::to_string(topo.external_id(e.u)) + "-" + std::to_string(topo.external_id(e.v));
		if (i > 0 && edges[i - 1].u == e.u && edges[i - 1].v == e.v) {
			out.push_back({"duplicate-edge", name});
		}
		if (!std::isfinite(e.latency_us)) {
			out.push_back({"non-finite-latency", name});
		} else if (e.latency_us <= 0.0) {
			out.push_back({"non-positive-latency", name});
		}
	}
	for (NodeId v = 1; v <= topo.node_count(); ++v) {
		double c = topo.capacity(v);
		if (!(c > 0.0) || !std::isfinite(c)) {
			out.push_back({"non-positive-capacity", std::to_string(topo.external_id(v))});
		}
	}
	if (topo.node_count() == 0) {
		out.push_back({"empty", ""});
	} else if (!is_connected(topo)) {
		out.push_back({"disconnected", ""});
	}
	return out;
}

namespace {

struct Mask {
	std::vector<char> node_ok;
	std::vector<char> edge_ok;
};

Mask build_mask(const Topology &topo, const PathConstraints &c) {
	Mask m;
	const auto n = static_cast<std::size_t>(topo.node_count());
	if (c.allowed_nodes.empty()) {
		m.node_ok.assign(n + 1, 1);
	} else {
		m.node_ok.assign(n + 1, 0);
		for (NodeId v : c.allowed_nodes) {
			if (topo.contains(v)) {
				m.node_ok[static_cast<std::size_t>(v)] = 1;
			}
		}
	}
	m.node_ok[0] = 0;
	for (NodeId v : c.forbidden_nodes) {
		if (topo.contains(v)) {
			m.node_ok[static_cast<std::size_t>(v)] = 0;
		}
	}
	m.edge_ok.assign(topo.edge_count(), 1);
	for (auto e : c.forbidden_edges) {
		if (e < m.edge_ok.size()) {
			m.edge_ok[e] = 0;
		}
	}
	return m;
}

std::vector<double> dijkstra(const Topology &topo, NodeId src, const Mask &mask) {
	std::vector<double> dist(static_cast<std::size_t>(topo.node_count()) + 1, kInf);
	if (!topo.contains(src) || !mask.node_ok[static_cast<std::size_t>(src)]) {
		return dist;
	}
	using Item = std::pair<double, NodeId>;
	std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
	dist[static_cast<std::size_t>(src)] = 0.0;
	pq.push({0.0, src});
	while (!pq.empty()) {
		auto [d, v] = pq.top();
		pq.pop();
		if (d > dist[static_cast<std::size_t>(v)]) {
			continue;
		}
		for (const auto &nb : topo.neighbors(v)) {
			if (!mask.edge_ok[nb.edge] || !mask.node_ok[static_cast<std::size_t>(nb.node)]) {
				continue;
			}
			double nd = d + nb.latency_us;
			if (nd < dist[static_cast<std::size_t>(nb.node)]) {
				dist[static_cast<std::size_t>(nb.node)] = nd;
				pq.push({nd, nb.node});
			}
		}
	}
	return dist;
}

std::optional<Path> lexicographic_shortest(const Topology &topo, NodeId src, NodeId dst, const Mask &mask) {
	if (!topo.contains(src) || !topo.contains(dst)) {
		throw std::out_of_range("shortest_path: node not in topology");
	}
	if (!mask.node_ok[static_cast<std::size_t>(src)] || !mask.node_ok[static_cast<std::size_t>(dst)]) {
		return std::nullopt;
	}
	if (src == dst) {
		return Path{{src}, 0.0};
	}
	auto from_src = dijkstra(topo, src, mask);
	double total = from_src[static_cast<std::size_t>(dst)];
	if (!std::isfinite(total)) {
		return std::nullopt;
	}
	auto to_dst = dijkstra(topo, dst, mask);

	Path p;
	p.nodes.push_back(src);
	NodeId cur = src;
	double acc = 0.0;
	while (cur != dst) {
		NodeId next = 0;
		double step = 0.0;
		for (const auto &nb : topo.neighbors(cur)) {
			if (!mask.edge_ok[nb.edge] || !mask.node_ok[static_cast<std::size_t>(nb.node)]) {
				continue;
			}
			double ds = from_src[static_cast<std::size_t>(nb.node)];
			double dd = to_dst[static_cast<std::size_t>(nb.node)];
			if (nearly_equal(from_src[static_cast<std::size_t>(cur)] + nb.latency_us, ds) && nearly_equal(ds + dd, total)) {
				next = nb.node;
				step = nb.latency_us;
				break; // neighbors are sorted by id
			}
		}
		if (next == 0) {
			throw std::logic_error("shortest_path: failed to trace a shortest route");
		}
		acc += step;
		p.nodes.push_back(next);
		cur = next;
	}
	p.total_latency = acc;
	return p;
}

} // namespace

Path shortest_path(const Topology &topo, NodeId src, NodeId dst) {
	auto p = lexicographic_shortest(topo, src, dst, build_mask(topo, {}));
	if (!p) {
		throw std::runtime_error("shortest_path: " + std::to_string(dst) + " unreachable from " + std::to_string(src));
	}
	return *p;
}

std::optional<Path> shortest_path(const Topology &topo, NodeId src, NodeId dst, const PathConstraints &constraints) {
	return lexicographic_shortest(topo, src, dst, build_mask(topo, constraints));
}

std::vector<double> distances_from(const Topology &topo, NodeId src, const PathConstraints &constraints) {
	return dijkstra(topo, src, build_mask(topo, constraints));
}

std::vector<std::vector<double>> all_pairs_distances(const Topology &topo) {
	std::vector<std::vector<double>> out(static_cast<std::size_t>(topo.node_count()) + 1);
	Mask m = build_mask(topo, {});
	for (NodeId v = 1; v <= topo.node_count(); ++v) {
		out[static_cast<std::size_t>(v)] = dijkstra(topo, v, m);
	}
	return out;
}

double path_latency(const Topology &topo, std::span<const NodeId> nodes) {
	double total = 0.0;
	for (std::size_t i = 1; i < nodes.size(); ++i) {
		auto lat = topo.latency(nodes[i - 1], nodes[i]);
		if (!lat) {
			throw std::invalid_argument("path_latency: " + std::to_string(nodes[i - 1]) + "-" + std::to_string(nodes[i]) + " is not a link");
		}
		total += *lat;
	}
	return total;
}

Topology edge_subgraph(const Topology &base, std::span<const std::size_t> edge_indices) {
	std::vector<Edge> edges;
	edges.reserve(edge_indices.size());
	for (auto i : edge_indices) {
		edges.push_back(base.edges().at(i));
	}
	return Topology::from_parts(base.capacities(), std::move(edges), base.external_ids());
}

Topology random_topology(const RandomTopologyConfig &cfg, std::uint64_t seed) {
	if (cfg.nodes < 1) {
		throw std::invalid_argument("random_topology: nodes must be >= 1");
	}
	if (cfg.latency_min_us < 1 || cfg.latency_max_us < cfg.latency_min_us) {
		throw std::invalid_argument("random_topology: invalid latency range");
	}
	std::mt19937_64 rng(seed);
	const int n = cfg.nodes;
	std::uniform_int_distribution<int> lat(cfg.latency_min_us, cfg.latency_max_us);
	std::set<std::pair<int, int>> present;
	std::vector<Edge> edges;

	std::vector<int> order(static_cast<std::size_t>(n));
	std::iota(order.begin(), order.end(), 1);
	std::shuffle(order.begin(), order.end(), rng);
	for (int i = 1; i < n; ++i) {
		std::uniform_int_distribution<int> pick(0, i - 1);
		int a = order[static_cast<std::size_t>(i)];
		int b = order[static_cast<std::size_t>(pick(rng))];
		auto key = std::minmax(a, b);
		present.insert({key.first, key.second});
		edges.push_back({key.first, key.second, static_cast<double>(lat(rng))});
	}
	const long max_edges = static_cast<long>(n) * (n - 1) / 2;
	long target = std::lround(cfg.mean_degree * n / 2.0);
	target = std::min(target, max_edges);
	std::uniform_int_distribution<int> node(1, n);
	while (static_cast<long>(edges.size()) < target) {
		int a = node(rng);
		int b = node(rng);
		if (a == b) {
			continue;
		}
		auto key = std::minmax(a, b);
		if (!present.insert({key.first, key.second}).second) {
			continue;
		}
		edges.push_back({key.first, key.second, static_cast<double>(lat(rng))});
	}
	std::vector<int> degree(static_cast<std::size_t>(n) + 1, 0);
	for (const auto &e : edges) {
		++degree[static_cast<std::size_t>(e.u)];
		++degree[static_cast<std::size_t>(e.v)];
	}
	std::vector<double> capacity(static_cast<std::size_t>(n));
	for (int v = 1; v <= n; ++v) {
		capacity[static_cast<std::size_t>(v - 1)] = cfg.capacity_per_link * std::max(1, degree[static_cast<std::size_t>(v)]);
	}
	return Topology::from_parts(std::move(capacity), std::move(edges));
}

} // namespace telemplan
