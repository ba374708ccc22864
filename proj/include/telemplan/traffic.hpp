#pragma once

#include "telemplan/netgraph.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace telemplan {

/// Per-link traffic volume over discrete slots. Columns follow the canonical
/// edge order of the topology the series was built for.
struct TrafficSeries {
	std::vector<Edge> links;
	Eigen::MatrixXd values; // slots x links, all entries >= 0

	int slots() const {
		return static_cast<int>(values.rows());
	}
	int link_count() const {
		return static_cast<int>(values.cols());
	}
};

class TrafficError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Parametric generator standing in for packet-level simulation.
///
/// Each link carries base * (1 + amplitude * sin(2 pi t / period + phase)),
/// plus AR(1) noise scaled by the base level, plus flow bursts. Bursts arrive
/// as a Poisson process, pick a random endpoint pair, draw a Pareto volume,
/// and add that volume to every link on the shortest route for a geometric
/// number of slots.
struct TrafficProfile {
	double base_min = 50.0;
	double base_max = 90.0;
	double diurnal_amplitude = 0.25; // fraction of the link base level
	double period_slots = 96.0;
	double phase_jitter = 0.6; // radians, per-link phase offset range
	double ar_coefficient = 0.8;
	double noise_std = 0.06; // fraction of the link base level
	double burst_rate = 0.3; // expected bursts per slot
	double burst_shape = 1.5;
	double burst_scale = 12.0;
	double burst_cap = 240.0; // truncation of the Pareto tail; <= 0 disables
	double burst_mean_duration = 4.0; // slots
};

struct BurstEvent {
	int start_slot = 0;
	int duration = 0;
	NodeId src = 0;
	NodeId dst = 0;
	double volume = 0.0;
	std::vector<NodeId> route;
};

struct GeneratedTraffic {
	TrafficSeries series;
	std::vector<BurstEvent> events;
};

/// Throws TrafficError for invalid profile parameters.
void check_profile(const TrafficProfile &profile);

GeneratedTraffic generate_traffic(const Topology &topo, const TrafficProfile &profile, int slots, std::uint64_t seed);

/// CSV: header `slot,u-v,...` (external node ids), one row per slot.
std::string export_csv(const TrafficSeries &series, const Topology &topo);
TrafficSeries ingest_csv(std::string_view text, const Topology &topo);

/// Per-link affine map raw -> (raw - mean) / scale.
struct Normalization {
	Eigen::VectorXd mean;
	Eigen::VectorXd scale;

	Eigen::MatrixXd apply(const Eigen::MatrixXd &raw) const;
	Eigen::MatrixXd invert(const Eigen::MatrixXd &normalized) const;
	/// Restricted to a subset of link columns.
	Eigen::MatrixXd invert_columns(const Eigen::MatrixXd &normalized, const std::vector<int> &columns) const;
};

/// Fits per-link z-scores on the given rows; zero-variance divisors become 1.
Normalization fit_normalization(const Eigen::MatrixXd &raw);

/// Sliding windows over a normalized series. Windows share the underlying
/// matrix; a sample is identified by the slot where its input starts.
class WindowedDataset {
public:
	WindowedDataset() = default;
	WindowedDataset(std::shared_ptr<const Eigen::MatrixXd> normalized, std::shared_ptr<const Eigen::MatrixXd> raw,
	                Normalization norm, int in_len, int out_len, std::vector<int> starts);

	std::size_t size() const {
		return starts_.size();
	}
	bool empty() const {
		return starts_.empty();
	}
	int in_len() const {
		return in_len_;
	}
	int out_len() const {
		return out_len_;
	}
	int link_count() const {
		return normalized_ ? static_cast<int>(normalized_->cols()) : 0;
	}
	const std::vector<int> &starts() const {
		return starts_;
	}
	const Normalization &normalization() const {
		return norm_;
	}

	/// in_len x links, normalized.
	Eigen::MatrixXd input(std::size_t i) const;
	/// out_len x links, normalized.
	Eigen::MatrixXd target(std::size_t i) const;
	/// out_len x links, raw units.
	Eigen::MatrixXd raw_target(std::size_t i) const;
	/// in_len x links, raw units.
	Eigen::MatrixXd raw_input(std::size_t i) const;

	/// First slot of the target of window i.
	int target_slot(std::size_t i) const {
		return starts_.at(i) + in_len_;
	}

private:
	std::shared_ptr<const Eigen::MatrixXd> normalized_;
	std::shared_ptr<const Eigen::MatrixXd> raw_;
	Normalization norm_;
	int in_len_ = 0;
	int out_len_ = 0;
	std::vector<int> starts_;
};

struct DatasetSplit {
	WindowedDataset train;
	WindowedDataset test;
	/// First target slot of the test set; every train window ends before it.
	int boundary_slot = 0;
};

/// Chronological split. The last ceil((1 - split) * W) windows form the test
/// set; train windows are those whose targets end before the first test
/// target. Normalization is fitted on the train slots [0, boundary).
DatasetSplit prepare_dataset(const TrafficSeries &series, int in_len, int out_len, double split);

} // namespace telemplan
