#pragma once

#include "telemplan/planner.hpp"

#include <cstdint>
#include <string>

namespace telemplan {

enum class BaselineMethod { dfs, euler, netview, sa };

BaselineMethod parse_baseline(std::string_view name);
std::string to_string(BaselineMethod method);

struct AnnealingConfig {
	int iterations = 20000;
	double start_temperature = 1.0;
	double cooling = 0.995;
	std::uint64_t seed = 7;
};

/// Depth-first path cover of the whole topology: one path per branch of the
/// search tree, each starting where it leaves the previous branch.
ProbePlan dfs_plan(const Topology &topo);

/// Trails of an Euler circuit of the whole topology after odd-degree nodes are
/// paired with virtual links; the circuit is cut at the virtual links.
ProbePlan euler_plan(const Topology &topo);

/// Greedy shortest-path routing through the targets inside the instance's
/// subnetwork, opening a new path when the budget would be exceeded.
ProbePlan netview_plan(const PlanningInstance &inst, const PlannerConfig &cfg);

/// Simulated annealing over ordered target groups joined by shortest paths,
/// minimizing the planner reward.
ProbePlan annealing_plan(const PlanningInstance &inst, const PlannerConfig &cfg, const AnnealingConfig &sa);

ProbePlan baseline_plan(BaselineMethod method, const PlanningInstance &inst, const PlannerConfig &cfg, const AnnealingConfig &sa = {});

} // namespace telemplan
