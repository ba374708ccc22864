#include "telemplan/highload.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "telemplan/textio.hpp"

namespace telemplan {

ThresholdMode parse_threshold_mode(std::string_view name) {
	if (name == "capacity") {
		return ThresholdMode::capacity;
	}
	if (name == "max-observed" || name == "max_observed") {
		return ThresholdMode::max_observed;
	}
	throw HighLoadError("unknown threshold mode '" + std::string(name) + "' (expected capacity or max-observed)");
}

std::string to_string(ThresholdMode mode) {
	return mode == ThresholdMode::capacity ? "capacity" : "max-observed";
}

bool HighLoadSet::contains(NodeId v) const {
	return std::binary_search(switches.begin(), switches.end(), v);
}

std::map<NodeId, double> switch_load(const Topology &topo, const Eigen::VectorXd &link_traffic) {
	if (link_traffic.size() != static_cast<Eigen::Index>(topo.edge_count())) {
		throw HighLoadError("switch_load: expected " + std::to_string(topo.edge_count()) + " link values, got " +
		                    std::to_string(link_traffic.size()));
	}
	std::map<NodeId, double> load;
	for (NodeId v = 1; v <= topo.node_count(); ++v) {
		load[v] = 0.0;
	}
	const auto &edges = topo.edges();
	for (std::size_t i = 0; i < edges.size(); ++i) {
		double x = link_traffic(static_cast<Eigen::Index>(i));
		if (!std::isfinite(x)) {
			throw HighLoadError("switch_load: missing or non-finite value for link " + std::to_string(topo.external_id(edges[i].u)) + "-" +
			                    std::to_string(topo.external_id(edges[i].v)));
		}
		load[edges[i].u] += x;
		load[edges[i].v] += x;
	}
	return load;
}

std::map<NodeId, double> horizon_switch_load(const Topology &topo, const Eigen::MatrixXd &forecast) {
	if (forecast.rows() < 1) {
		throw HighLoadError("horizon_switch_load: empty forecast");
	}
	std::map<NodeId, double> worst = switch_load(topo, forecast.row(0).transpose());
	for (Eigen::Index s = 1; s < forecast.rows(); ++s) {
		for (auto [v, x] : switch_load(topo, forecast.row(s).transpose())) {
			worst[v] = std::max(worst[v], x);
		}
	}
	return worst;
}

HighLoadSet identify_highload(const std::map<NodeId, double> &loads, const Topology &topo, double theta, ThresholdMode mode) {
	if (!(theta > 0.0 && theta <= 1.0)) {
		throw HighLoadError("identify_highload: theta must lie in (0, 1]");
	}
	double peak = 0.0;
	for (auto [v, x] : loads) {
		peak = std::max(peak, x);
	}
	HighLoadSet out;
	out.loads = loads;
	for (auto [v, x] : loads) {
		if (!topo.contains(v)) {
			throw HighLoadError("identify_highload: switch " + std::to_string(v) + " is not in the topology");
		}
		double threshold = mode == ThresholdMode::capacity ? theta * topo.capacity(v) : theta * peak;
		out.threshold_used[v] = threshold;
		if (x >= threshold) {
			out.switches.push_back(v);
		}
	}
	return out;
}

ClassificationMetrics combine_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
	ClassificationMetrics m;
	m.true_positives = tp;
	m.false_positives = fp;
	m.false_negatives = fn;
	if (tp + fp + fn == 0) {
		m.precision = m.recall = m.f1 = 1.0;
		m.degenerate = true;
		return m;
	}
	if (tp + fp == 0 || tp + fn == 0) {
		m.degenerate = true;
	}
	m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
	m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
	m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
	return m;
}

ClassificationMetrics classification_metrics(const HighLoadSet &predicted, const HighLoadSet &actual) {
	std::size_t tp = 0;
	for (NodeId v : predicted.switches) {
		tp += actual.contains(v) ? 1 : 0;
	}
	return combine_counts(tp, predicted.switches.size() - tp, actual.switches.size() - tp);
}

std::string write_highload(const HighLoadSet &set, const Topology &topo) {
	std::ostringstream out;
	for (auto [v, x] : set.loads) {
		auto t = set.threshold_used.find(v);
		out << "switch " << topo.external_id(v) << " " << textio::format_double(x) << " "
		    << textio::format_double(t == set.threshold_used.end() ? 0.0 : t->second) << " " << (set.contains(v) ? 1 : 0) << "\n";
	}
	return out.str();
}

HighLoadSet read_highload(std::string_view text, const Topology &topo) {
	HighLoadSet set;
	int line_no = 0;
	for (auto line : textio::split(text, '\n')) {
		++line_no;
		auto tok = textio::tokenize(line);
		if (tok.empty()) {
			continue;
		}
		if (tok.size() != 5 || tok[0] != "switch") {
			throw HighLoadError("line " + std::to_string(line_no) + ": expected 'switch <id> <load> <threshold> <0|1>'");
		}
		try {
			auto v = topo.internal_id(textio::parse_int(tok[1]));
			if (!v) {
				throw HighLoadError("line " + std::to_string(line_no) + ": unknown switch " + std::string(tok[1]));
			}
			set.loads[*v] = textio::parse_double(tok[2]);
			set.threshold_used[*v] = textio::parse_double(tok[3]);
			if (tok[4] == "1") {
				set.switches.push_back(*v);
			} else if (tok[4] != "0") {
				throw HighLoadError("line " + std::to_string(line_no) + ": high-load flag must be 0 or 1");
			}
		} catch (const std::invalid_argument &e) {
			throw HighLoadError("line " + std::to_string(line_no) + ": " + e.what());
		}
	}
	std::sort(set.switches.begin(), set.switches.end());
	return set;
}

} // namespace telemplan
