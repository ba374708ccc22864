#pragma once

#include "telemplan/netgraph.hpp"
#include "telemplan/pruning.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace telemplan {

class PlannerError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Probe paths over a subnetwork. A path is a walk: consecutive nodes are
/// linked, and transit nodes may repeat.
struct ProbePlan {
	std::vector<Path> paths;
	std::vector<NodeId> covered; // ascending union of path nodes

	int K() const {
		return static_cast<int>(paths.size());
	}
	bool operator==(const ProbePlan &) const = default;
};

struct PlannerConfig {
	double a = 1.0;            // overhead per probe path
	double lambda = 0.0;       // 0 selects 1e4 * a * n
	double t_max = 30.0;       // latency budget, microseconds
	bool allow_transit = true; // revisit covered nodes when nothing else is reachable

	int embed = 32;
	int hidden = 64;
	double actor_lr = 1e-3;
	double critic_lr = 1e-3;
	int instances = 2000;
	int batch = 64;
	int epochs = 20;
	std::uint64_t seed = 7;

	double lambda_for(int node_count) const;
};

void check_planner_config(const PlannerConfig &cfg);

/// A subnetwork prepared for planning: the base topology, the subnetwork,
/// and shortest distances inside the subnetwork.
struct PlanningInstance {
	Topology topo;
	Subnetwork subnet;
	Topology sub_topo;                     // subnet edges only, base numbering
	std::vector<NodeId> actions;           // 0 followed by the subnet nodes, ascending
	std::vector<std::vector<double>> dist; // inside the subnet, base numbering

	static PlanningInstance make(Topology topo, Subnetwork subnet);
	/// Planning over the whole topology with the given targets.
	static PlanningInstance whole(Topology topo, std::vector<NodeId> terminals);

	const std::vector<NodeId> &terminals() const {
		return subnet.terminals;
	}
	int action_count() const {
		return static_cast<int>(actions.size());
	}
	/// Row of `v` in `actions`, or -1.
	int row_of(NodeId v) const;
};

/// One planner input per action: the new-path token first, then every subnet
/// node with its subnet neighbors and link latencies.
struct EncodedInput {
	NodeId node = 0;
	std::vector<std::pair<NodeId, double>> neighbors;
};

struct InstanceEncoding {
	std::vector<EncodedInput> inputs;
	Eigen::MatrixXd static_features; // inputs x kStaticFeatures
};

constexpr int kStaticFeatures = 13;
constexpr int kDynamicFeatures = 13;
constexpr int kFeatures = kStaticFeatures + kDynamicFeatures;

InstanceEncoding encode_instance(const PlanningInstance &inst, const PlannerConfig &cfg);

struct EpisodeState {
	NodeId current = 0;             // 0 while a new path is being opened
	std::vector<NodeId> uncovered;  // ascending, subset of the terminals
	ProbePlan partial;              // closed paths
	std::vector<NodeId> current_path;
	double current_path_latency = 0.0;
	std::vector<char> visited;      // indexed by base node id
	int steps = 0;

	bool terminal() const {
		return uncovered.empty();
	}
};

EpisodeState initial_state(const PlanningInstance &inst);

/// Feasibility over the full action space 0..n of the base topology.
std::vector<char> feasible_mask(const EpisodeState &state, const PlanningInstance &inst, const PlannerConfig &cfg);

/// The same mask restricted to `inst.actions` rows.
std::vector<char> row_mask(const std::vector<char> &full_mask, const PlanningInstance &inst);

/// Applies an unmasked action. Throws PlannerError for a masked action.
EpisodeState step(const EpisodeState &state, NodeId action, const PlanningInstance &inst, const PlannerConfig &cfg);

/// Closed paths plus the open one.
ProbePlan finish_plan(const EpisodeState &state);

/// Per-node input features for the current state (rows follow inst.actions).
Eigen::MatrixXd state_features(const PlanningInstance &inst, const InstanceEncoding &enc, const EpisodeState &state,
                               const std::vector<char> &rows_mask, const PlannerConfig &cfg);

/// T = max over paths of the summed link latencies. An empty plan gives 0 and
/// an `empty-plan` diagnostic.
double plan_latency(const ProbePlan &plan, std::vector<Diagnostic> *diagnostics = nullptr);
double control_overhead(const ProbePlan &plan, double a);

struct PlanScore {
	int K = 0;
	double C = 0.0;
	double T = 0.0;
	bool flag = false;   // T > T_max
	double reward = 0.0; // C + lambda * flag, minimized
	double coverage = 0.0;
};

PlanScore score_plan(const ProbePlan &plan, const std::vector<NodeId> &terminals, const PlannerConfig &cfg, int node_count);
double reward(const ProbePlan &plan, const PlannerConfig &cfg, int node_count);

/// Builds a plan from node walks, computing latencies and coverage.
ProbePlan make_plan(const Topology &topo, const std::vector<std::vector<NodeId>> &walks);

/// Structural problems: unknown links, uncovered targets, stale totals.
std::vector<Diagnostic> check_plan(const ProbePlan &plan, const Topology &topo, const std::vector<NodeId> &terminals);

struct PlanFile {
	ProbePlan plan;
	std::map<std::string, std::string> meta;
};

/// One path per line (external ids); `#` lines carry key/value metadata.
std::string write_plan(const ProbePlan &plan, const Topology &topo, const std::map<std::string, std::string> &meta);
PlanFile read_plan(std::string_view text, const Topology &topo);

/// Minimum number of paths over all ways to split the targets into ordered
/// groups whose shortest connecting walk fits the budget. Exponential in the
/// number of targets (at most 16).
int optimal_path_count(const PlanningInstance &inst, double t_max);

/// Random planning instances: random targets on either a fixed topology or a
/// fresh random topology per instance.
struct InstanceGenerator {
	RandomTopologyConfig topology;
	std::optional<Topology> fixed_topology;
	int min_terminals = 2;
	int max_terminals = 6;
	int max_subnet_nodes = 0; // 0: no limit
	bool prune = true;        // false plans over the whole topology

	PlanningInstance sample(std::uint64_t seed) const;
	std::vector<PlanningInstance> batch(int count, std::uint64_t seed) const;
};

} // namespace telemplan
