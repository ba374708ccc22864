#pragma once

#include "telemplan/baselines.hpp"
#include "telemplan/highload.hpp"
#include "telemplan/netgraph.hpp"
#include "telemplan/planner.hpp"
#include "telemplan/policy.hpp"
#include "telemplan/predictor.hpp"
#include "telemplan/pruning.hpp"
#include "telemplan/traffic.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace telemplan {

inline constexpr const char *kVersion = "0.1.0";

/// Failure of one pipeline stage, with the artifacts written so far.
class StageError : public std::runtime_error {
public:
	StageError(std::string stage, const std::string &message, std::vector<std::string> artifacts = {});
	const std::string &stage() const {
		return stage_;
	}
	const std::vector<std::string> &artifacts() const {
		return artifacts_;
	}

private:
	std::string stage_;
	std::vector<std::string> artifacts_;
};

enum class PredictorKind { learned, no_model, ewma, oracle };

PredictorKind parse_predictor_kind(std::string_view name);
std::string to_string(PredictorKind kind);

struct PipelineConfig {
	std::uint64_t seed = 7;
	std::string out_dir = "run";

	std::string topology_file; // empty: generate
	RandomTopologyConfig topology;

	std::string traffic_file; // empty: generate
	int slots = 2000;
	TrafficProfile traffic;

	PredictorKind predictor = PredictorKind::learned;
	int in_len = 12;
	int horizon = 4;
	double split = 0.8;
	PredictorConfig model;
	TrainConfig train = [] {
		TrainConfig t;
		t.max_horizon = 0; // 0: follow the forecast horizon
		return t;
	}();
	std::string model_file; // non-empty: load instead of training
	double ewma_decay = 0.5;

	double theta = 0.8;
	ThresholdMode mode = ThresholdMode::capacity;

	std::string subnet_file; // non-empty: load instead of pruning
	PlannerConfig planner;
	int min_terminals = 2;
	int max_terminals = 6;
	std::string policy_file; // non-empty: load instead of training

	std::vector<BaselineMethod> baselines{BaselineMethod::dfs, BaselineMethod::euler, BaselineMethod::netview, BaselineMethod::sa};
	AnnealingConfig annealing;
	bool ablation = true;
	int ablation_epochs = 10;
};

/// Reads the JSON configuration; missing keys keep their defaults and unknown
/// keys are rejected. Every stochastic stage draws its seed from `seed`.
PipelineConfig parse_pipeline_config(std::string_view json_text);
std::string dump_pipeline_config(const PipelineConfig &cfg);

struct PredictorReport {
	std::string kind;
	std::size_t test_windows = 0;
	std::vector<double> mae_per_step;
	std::vector<double> mse_per_step;
	double mae = 0.0;
	double mse = 0.0;
	std::vector<double> baseline_mae_per_step; // no-model forecast
	double baseline_mae = 0.0;
	double train_seconds = 0.0;
};

struct IdentificationReport {
	double theta = 0.0;
	std::string mode;
	ClassificationMetrics metrics;
	ClassificationMetrics baseline_metrics; // no-model forecast
	std::vector<std::int64_t> planned_switches; // external ids used for planning
};

struct SubnetworkReport {
	int topology_nodes = 0;
	int topology_edges = 0;
	int nodes = 0;
	int edges = 0;
	int naive_edges = 0;
	bool biconnected = false;
	std::vector<std::string> diagnostics;
};

struct PlannerReport {
	std::string name;
	std::string scope; // "subnetwork" or "topology"
	int K = 0;
	double C = 0.0;
	double T = 0.0;
	bool feasible = true;
	double reward = 0.0;
	double coverage = 0.0;
	double plan_seconds = 0.0;
	double train_seconds = 0.0;
};

struct AblationReport {
	bool ran = false;
	int epochs = 0;
	std::vector<PolicyEpochRecord> pruned_trace;
	std::vector<PolicyEpochRecord> full_trace;
	double full_reference_reward = 0.0; // full-topology reward at the last epoch
	int pruned_epochs_to_match = 0;     // 0 when never reached
	double pruned_seconds_to_match = 0.0;
	double full_seconds = 0.0;
};

struct Provenance {
	std::string config_hash;
	std::uint64_t seed = 0;
	std::string version;
};

struct RunReport {
	PredictorReport predictor;
	IdentificationReport identification;
	SubnetworkReport subnetwork;
	std::vector<PlannerReport> planners;
	AblationReport ablation;
	Provenance provenance;
	std::vector<std::string> diagnostics;
	std::vector<std::string> artifacts;
};

/// Compares training traces: when (and after how much wall time) the pruned
/// run first reaches the full-topology run's final mean reward.
AblationReport summarize_ablation(std::vector<PolicyEpochRecord> pruned, std::vector<PolicyEpochRecord> full);

/// Trains one policy on full-topology instances and one on the matching
/// pruned instances, `epochs` epochs each, and summarizes the traces.
AblationReport run_ablation(const std::vector<PlanningInstance> &pruned, const std::vector<PlanningInstance> &full,
                            const PlannerConfig &cfg, int epochs);

/// Runs every stage and writes the artifacts plus report.json to cfg.out_dir.
RunReport run_pipeline(const PipelineConfig &cfg);

std::string report_to_json(const RunReport &report);
RunReport report_from_json(std::string_view text);
/// The report with every wall-time field removed, for determinism checks.
std::string report_without_timing(const RunReport &report);

struct ComparisonRow {
	std::string name;
	std::string scope;
	int K = 0;
	double T = 0.0;
	double C = 0.0;
	bool feasible = true;
};

/// Planners ordered by K, then T, then name.
std::vector<ComparisonRow> compare_planners(const RunReport &report);
std::string comparison_csv(const std::vector<ComparisonRow> &rows);

// Stage helpers shared by the pipeline and the command-line tool.

enum class SeedSlot : std::uint64_t { topology = 0, traffic, predictor_init, predictor_train, instances, policy_init, policy_train, annealing };

/// Seed of one stochastic stage, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, SeedSlot slot);

Topology stage_topology(const PipelineConfig &cfg);
TrafficSeries stage_traffic(const PipelineConfig &cfg, const Topology &topo);
/// Predictor training settings with the stage seed applied and a zero
/// max_horizon resolved to the smallest allowed value covering the horizon.
TrainConfig predictor_train_config(const PipelineConfig &cfg);
InstanceGenerator planner_generator(const PipelineConfig &cfg, const Topology &topo, bool prune);

} // namespace telemplan
