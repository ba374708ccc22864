#pragma once

#include "telemplan/autodiff.hpp"
#include "telemplan/netgraph.hpp"
#include "telemplan/traffic.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace telemplan {

class PredictorError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

struct PredictorConfig {
	int d_embed = 16;
	int topk = 0; // 0 selects min(4, n - 1)
	double alpha = 3.0;
	double beta = 0.05;
	int channels = 8;
	int skip_channels = 8;
	int kernel = 3;
	int dilation1 = 1;
	int dilation2 = 2;
};

/// Trainable state of the graph-temporal forecaster.
///
/// The learned adjacency comes from node embeddings (E1, E2) and linear maps
/// (Theta1, Theta2). The temporal core is two gated causal convolution
/// blocks, each followed by one-hop propagation over the learned graph, with
/// residual connections; a skip branch sees the whole input window. A
/// per-link head reads the representations of the link's two endpoints plus
/// the link's own history.
struct PredictorParams {
	int nodes = 0;
	int links = 0;
	int in_len = 0;
	int horizon = 0;
	PredictorConfig cfg;
	std::vector<std::pair<int, int>> endpoints; // 0-based node indices per link

	ad::Parameter E1, E2, Theta1, Theta2;
	ad::Parameter start_w, start_b;
	ad::Parameter filter1_w, filter1_b, gate1_w, gate1_b;
	ad::Parameter filter2_w, filter2_b, gate2_w, gate2_b;
	ad::Parameter skip_w, skip_b;
	ad::Parameter head_u, head_v, head_lag, head_b;

	static PredictorParams init(const Topology &topo, int in_len, int horizon, const PredictorConfig &cfg, std::uint64_t seed);

	int topk() const;
	/// Trailing slots the convolution stack reads.
	int receptive_field() const;
	std::vector<ad::Parameter *> tensors();
	std::vector<const ad::Parameter *> tensors() const;
	bool finite() const;
};

struct LearnedGraph {
	Eigen::MatrixXd dense; // before top-k sparsification
	Eigen::MatrixXd adjacency;
};

/// A = ReLU(tanh(alpha (M1 M2^T - M2 M1^T))) with M1 = tanh(alpha E1 Theta1),
/// M2 = tanh(alpha E2 Theta2), then each row keeps its top-k entries.
Eigen::MatrixXd graph_learn_layer(const PredictorParams &params);
LearnedGraph learn_graph(const PredictorParams &params);

/// Keeps the k largest entries of every row (ties: lower column first).
Eigen::MatrixXd topk_rows(const Eigen::MatrixXd &dense, int k);

/// Recomputes only the rows/columns of `affected` nodes (0-based) and
/// re-sparsifies the rows whose candidates changed.
LearnedGraph apply_topology_delta(const PredictorParams &params, const LearnedGraph &graph, const std::vector<int> &affected);

struct Forecast {
	int horizon = 0;
	Eigen::MatrixXd values; // horizon x links
	bool denormalized = false;
};

/// Normalized forecast for a normalized input window (in_len x links).
Forecast forward(const PredictorParams &params, const Eigen::MatrixXd &window);

/// Stepwise learning-rate schedule: constant for epochs 1-10, x0.95 per epoch
/// through epoch 20, then x0.9 per epoch.
struct LrSchedule {
	enum class Kind { stepped, constant };
	Kind kind = Kind::stepped;
	double base = 1e-3;

	double rate(int epoch) const; // epochs are 1-based
};

struct TrainConfig {
	LrSchedule lr;
	int batch = 32;
	int step_size = 40;
	int split_groups = 1;
	int max_horizon = 1;
	int epochs = 20;
	std::uint64_t seed = 7;
	/// Evaluate full-horizon train MAE every epoch (the loss trace).
	bool track_train_mae = true;
};

struct IterationRecord {
	int epoch = 0;
	int iteration = 0;
	int r = 0;
	double loss = 0.0;
};

struct EpochRecord {
	int epoch = 0; // 0 is the untrained model
	double lr = 0.0;
	double mean_iteration_loss = 0.0;
	double train_mae = 0.0; // normalized units, full horizon
};

struct TrainResult {
	PredictorParams params;
	std::vector<EpochRecord> epochs;
	std::vector<IterationRecord> iterations;
};

void check_train_config(const TrainConfig &cfg, int nodes);

/// Mini-batch training with node-group splitting and horizon curriculum.
TrainResult train(PredictorParams params, const WindowedDataset &data, const TrainConfig &cfg);

/// One gradient-descent step on 0.5 * mean((y_real - forward(window))^2).
PredictorParams feedback_update(PredictorParams params, const Eigen::MatrixXd &window, const Eigen::MatrixXd &y_real, double lr);

/// Loss used by training for one group (0-based nodes) and first r horizon
/// steps. Exposed for gradient checking; accumulates gradients when
/// `backprop` is set.
double training_loss(PredictorParams &params, const WindowedDataset &data, const std::vector<std::size_t> &samples,
                     const std::vector<int> &group, int r, bool backprop);

struct ForecastMetrics {
	std::vector<double> mae_per_step;
	std::vector<double> mse_per_step;
	double mae = 0.0;
	double mse = 0.0;
	std::size_t samples = 0;
};

/// MAE and MSE of denormalized forecasts against raw targets.
ForecastMetrics evaluate(const PredictorParams &params, const WindowedDataset &test);

/// Same metrics from precomputed denormalized forecasts (one per window).
ForecastMetrics forecast_metrics(const std::vector<Eigen::MatrixXd> &predicted, const std::vector<Eigen::MatrixXd> &actual);

enum class BaselineKind { no_model, ewma };

/// `history` is slots x links in raw units (oldest first).
Forecast baseline_predict(BaselineKind kind, const Eigen::MatrixXd &history, int horizon, double decay = 0.5);

ForecastMetrics evaluate_baseline(BaselineKind kind, const WindowedDataset &test, double decay = 0.5);

/// Denormalized forecast for a raw input window.
Forecast predict_raw(const PredictorParams &params, const Normalization &norm, const Eigen::MatrixXd &raw_window);

std::string save_checkpoint(const PredictorParams &params, const Normalization &norm);
std::pair<PredictorParams, Normalization> load_checkpoint(std::string_view text);

std::string iterations_csv(const std::vector<IterationRecord> &records);
std::string epochs_csv(const std::vector<EpochRecord> &records);

} // namespace telemplan
