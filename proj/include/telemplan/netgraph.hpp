#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace telemplan {

/// Switch index, contiguous 1..n inside a Topology. 0 is reserved (the planner's
/// "open a new path" token).
using NodeId = int;

/// Canonical undirected link; always u < v.
struct Edge {
	NodeId u = 0;
	NodeId v = 0;
	double latency_us = 0.0;

	bool operator==(const Edge &) const = default;
};

struct Neighbor {
	NodeId node = 0;
	double latency_us = 0.0;
	std::size_t edge = 0; // index into Topology::edges()
};

struct Diagnostic {
	std::string code;
	std::string detail;

	std::string to_string() const {
		return detail.empty() ? code : code + "(" + detail + ")";
	}
	bool operator==(const Diagnostic &) const = default;
};

class TopologyError : public std::runtime_error {
public:
	TopologyError(const std::string &msg, std::vector<Diagnostic> diags = {})
	    : std::runtime_error(msg), diagnostics_(std::move(diags)) {
	}
	const std::vector<Diagnostic> &diagnostics() const {
		return diagnostics_;
	}

private:
	std::vector<Diagnostic> diagnostics_;
};

/// Undirected switch graph with per-link latency and per-switch capacity.
///
/// Immutable once built. Edges are stored in canonical order (sorted by
/// (u, v)); the same order defines link columns in traffic data. A Topology
/// may be built from unchecked parts, in which case `validate` reports what
/// is wrong with it; `load_topology` rejects anything invalid.
class Topology {
public:
	Topology() = default;

	/// `capacity[i]` belongs to node i+1. Edge endpoints are canonicalized.
	/// Throws TopologyError only for structurally unusable input (endpoint out
	/// of range, self loop); everything else is left to `validate`.
	static Topology from_parts(std::vector<double> capacity, std::vector<Edge> edges,
	                           std::vector<std::int64_t> external_ids = {});

	int node_count() const {
		return static_cast<int>(capacity_.size());
	}
	std::size_t edge_count() const {
		return edges_.size();
	}
	const std::vector<Edge> &edges() const {
		return edges_;
	}
	std::span<const Neighbor> neighbors(NodeId v) const;
	int degree(NodeId v) const {
		return static_cast<int>(neighbors(v).size());
	}
	bool contains(NodeId v) const {
		return v >= 1 && v <= node_count();
	}
	double capacity(NodeId v) const {
		return capacity_.at(static_cast<std::size_t>(v - 1));
	}
	const std::vector<double> &capacities() const {
		return capacity_;
	}
	std::int64_t external_id(NodeId v) const {
		return external_ids_.at(static_cast<std::size_t>(v - 1));
	}
	const std::vector<std::int64_t> &external_ids() const {
		return external_ids_;
	}
	std::optional<NodeId> internal_id(std::int64_t external) const;

	std::optional<std::size_t> edge_index(NodeId a, NodeId b) const;
	std::optional<double> latency(NodeId a, NodeId b) const;

	bool operator==(const Topology &other) const {
		return capacity_ == other.capacity_ && edges_ == other.edges_ && external_ids_ == other.external_ids_;
	}

private:
	std::vector<double> capacity_;
	std::vector<Edge> edges_;
	std::vector<std::int64_t> external_ids_;
	std::vector<std::size_t> adj_offset_;
	std::vector<Neighbor> adj_;
};

struct Path {
	std::vector<NodeId> nodes;
	double total_latency = 0.0;

	bool operator==(const Path &) const = default;
};

/// Restrictions for constrained shortest-path searches.
struct PathConstraints {
	std::vector<NodeId> forbidden_nodes;
	std::vector<std::size_t> forbidden_edges;
	/// When non-empty, only these nodes may be used (endpoints included).
	std::vector<NodeId> allowed_nodes;
};

/// Parses the line-oriented edge-list format. Throws TopologyError.
Topology load_topology(std::string_view text);

/// Writes the edge-list format using the original (external) ids.
std::string write_topology(const Topology &topo);

/// One diagnostic per violated invariant; empty iff the topology is valid.
std::vector<Diagnostic> validate(const Topology &topo);

bool is_connected(const Topology &topo);

/// Minimum-latency path. Among equal-latency paths, the lexicographically
/// smallest node sequence is returned.
Path shortest_path(const Topology &topo, NodeId src, NodeId dst);

/// Constrained variant; nullopt when dst is unreachable under the constraints.
std::optional<Path> shortest_path(const Topology &topo, NodeId src, NodeId dst, const PathConstraints &constraints);

/// Single-source distances (index 0 unused, +inf for unreachable).
std::vector<double> distances_from(const Topology &topo, NodeId src, const PathConstraints &constraints = {});

/// Dense all-pairs distance table, row/column 0 unused.
std::vector<std::vector<double>> all_pairs_distances(const Topology &topo);

double path_latency(const Topology &topo, std::span<const NodeId> nodes);

/// Subgraph induced by the given edges of `base`; node ids are kept (nodes
/// not touched by any edge but listed in `nodes` remain as isolated nodes).
/// The result has the same node numbering as `base`.
Topology edge_subgraph(const Topology &base, std::span<const std::size_t> edge_indices);

bool nearly_equal(double a, double b);

struct RandomTopologyConfig {
	int nodes = 20;
	double mean_degree = 3.0;
	int latency_min_us = 1;
	int latency_max_us = 10;
	/// Capacity = capacity_per_link * degree.
	double capacity_per_link = 100.0;
};

/// Connected random topology: a random spanning tree plus uniformly chosen
/// extra links until the mean degree is reached. Latencies are whole
/// microseconds so path sums stay exact.
Topology random_topology(const RandomTopologyConfig &cfg, std::uint64_t seed);

} // namespace telemplan
