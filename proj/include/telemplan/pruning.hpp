#pragma once

#include "telemplan/netgraph.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace telemplan {

class PruningError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Complete graph over the terminals, weighted by base-topology distance,
/// with the realizing path kept for every pair (a < b).
struct MetricClosure {
	std::vector<NodeId> terminals; // ascending
	std::map<std::pair<NodeId, NodeId>, double> weight;
	std::map<std::pair<NodeId, NodeId>, Path> witness;

	double distance(NodeId a, NodeId b) const;
	const Path &path(NodeId a, NodeId b) const;
};

struct TreeEdge {
	NodeId a = 0;
	NodeId b = 0;
	double weight = 0.0;

	bool operator==(const TreeEdge &) const = default;
};

/// Subgraph of a base topology. Node ids are those of the base topology;
/// `edges` index into base.edges().
struct Subnetwork {
	std::vector<NodeId> nodes;      // ascending
	std::vector<std::size_t> edges; // ascending
	std::vector<NodeId> terminals;  // ascending
	std::vector<Diagnostic> diagnostics;

	bool has_node(NodeId v) const;
	bool has_edge(std::size_t e) const;
	bool operator==(const Subnetwork &other) const {
		return nodes == other.nodes && edges == other.edges && terminals == other.terminals;
	}
};

MetricClosure metric_closure(const Topology &topo, const std::vector<NodeId> &terminals);

/// Minimum spanning tree of the closure. Equal weights are ordered by the
/// sorted endpoint pair.
std::vector<TreeEdge> kruskal_mst(const MetricClosure &closure);

/// Union of the witness paths of the tree edges.
Subnetwork expand_tree(const std::vector<TreeEdge> &tree, const MetricClosure &closure, const Topology &topo);

/// Cut vertices found with a depth-first search rooted at the lowest node:
/// the root qualifies with two or more tree children, any other vertex when
/// some child subtree has no back edge above it.
std::vector<NodeId> articulation_points(const Subnetwork &subnet, const Topology &topo);

/// Adds base-topology paths around articulation points until none remain.
/// When no bypass exists, the partially repaired subnetwork is returned with
/// an `augmentation-impossible` diagnostic.
Subnetwork biconnect(const Subnetwork &subnet, const Topology &topo);

/// Covering, biconnected subnetwork for the given high-load switches.
Subnetwork prune(const Topology &topo, const std::vector<NodeId> &terminals);

/// Reference scheme: union of shortest paths between every terminal pair,
/// made biconnected in the same way.
Subnetwork naive_subnetwork(const Topology &topo, const std::vector<NodeId> &terminals);

/// True when the subnetwork is connected and no single node removal
/// disconnects it. Checked by brute force.
bool is_biconnected(const Subnetwork &subnet, const Topology &topo);

/// Restricts the base topology to the subnetwork's edges (same numbering).
Topology as_topology(const Subnetwork &subnet, const Topology &topo);

/// Edge-list text in the topology format plus a `terminals` line.
std::string write_subnetwork(const Subnetwork &subnet, const Topology &topo);
Subnetwork read_subnetwork(std::string_view text, const Topology &topo);

} // namespace telemplan
