#pragma once

#include "telemplan/netgraph.hpp"

#include <Eigen/Dense>

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace telemplan {

class HighLoadError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

enum class ThresholdMode { capacity, max_observed };

ThresholdMode parse_threshold_mode(std::string_view name);
std::string to_string(ThresholdMode mode);

struct HighLoadSet {
	std::vector<NodeId> switches;          // ascending
	std::map<NodeId, double> loads;
	std::map<NodeId, double> threshold_used;

	bool contains(NodeId v) const;
};

/// Per-switch load: sum of traffic over incident links. `link_traffic` has
/// one entry per edge, in canonical edge order.
std::map<NodeId, double> switch_load(const Topology &topo, const Eigen::VectorXd &link_traffic);

/// Load for a horizon x links forecast: per switch, the maximum over slots of
/// the per-slot load.
std::map<NodeId, double> horizon_switch_load(const Topology &topo, const Eigen::MatrixXd &forecast);

/// v is high-load iff loads[v] >= threshold. Capacity mode: theta * capacity(v);
/// max-observed mode: theta * max over all loads.
HighLoadSet identify_highload(const std::map<NodeId, double> &loads, const Topology &topo, double theta, ThresholdMode mode);

struct ClassificationMetrics {
	double precision = 0.0;
	double recall = 0.0;
	double f1 = 0.0;
	std::size_t true_positives = 0;
	std::size_t false_positives = 0;
	std::size_t false_negatives = 0;
	/// Set when a denominator was zero. The affected score is 0, except that two
	/// empty sets agree perfectly and score 1.
	bool degenerate = false;
};

ClassificationMetrics classification_metrics(const HighLoadSet &predicted, const HighLoadSet &actual);

/// Micro-averaged scores from summed counts.
ClassificationMetrics combine_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// One `switch <id> <load> <threshold> <0|1>` line per switch (external ids).
std::string write_highload(const HighLoadSet &set, const Topology &topo);
HighLoadSet read_highload(std::string_view text, const Topology &topo);

} // namespace telemplan
