#include "telemplan/predictor.hpp"

#include "telemplan/textio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace telemplan {

using ad::Matrix;
using ad::Parameter;
using ad::Var;

namespace {

Matrix uniform(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols, double bound) {
	std::uniform_real_distribution<double> d(-bound, bound);
	Matrix m(rows, cols);
	for (Eigen::Index i = 0; i < m.size(); ++i) {
		m.data()[i] = d(rng);
	}
	return m;
}

Matrix gaussian(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols) {
	std::normal_distribution<double> d(0.0, 1.0);
	Matrix m(rows, cols);
	for (Eigen::Index i = 0; i < m.size(); ++i) {
		m.data()[i] = d(rng);
	}
	return m;
}

/// Everything about a node subset that does not depend on parameters.
struct GroupPlan {
	std::vector<int> nodes;       // 0-based, ascending
	std::vector<int> links;       // links with both endpoints in the group
	Matrix node_select;           // g x n
	Matrix incidence;             // m x g: node feature = sum of incident links
	Matrix head_u;                // l x g
	Matrix head_v;                // l x g
	Matrix link_select;           // m x l
};

GroupPlan make_group(const PredictorParams &p, std::vector<int> nodes) {
	std::sort(nodes.begin(), nodes.end());
	GroupPlan g;
	g.nodes = std::move(nodes);
	const auto gs = static_cast<Eigen::Index>(g.nodes.size());
	std::vector<int> position(static_cast<std::size_t>(p.nodes), -1);
	for (Eigen::Index i = 0; i < gs; ++i) {
		position[static_cast<std::size_t>(g.nodes[static_cast<std::size_t>(i)])] = static_cast<int>(i);
	}
	g.node_select = Matrix::Zero(gs, p.nodes);
	for (Eigen::Index i = 0; i < gs; ++i) {
		g.node_select(i, g.nodes[static_cast<std::size_t>(i)]) = 1.0;
	}
	g.incidence = Matrix::Zero(p.links, gs);
	for (int l = 0; l < p.links; ++l) {
		auto [u, v] = p.endpoints[static_cast<std::size_t>(l)];
		int pu = position[static_cast<std::size_t>(u)];
		int pv = position[static_cast<std::size_t>(v)];
		if (pu >= 0) {
			g.incidence(l, pu) = 1.0;
		}
		if (pv >= 0) {
			g.incidence(l, pv) = 1.0;
		}
		if (pu >= 0 && pv >= 0) {
			g.links.push_back(l);
		}
	}
	const auto ls = static_cast<Eigen::Index>(g.links.size());
	g.head_u = Matrix::Zero(ls, gs);
	g.head_v = Matrix::Zero(ls, gs);
	g.link_select = Matrix::Zero(p.links, ls);
	for (Eigen::Index j = 0; j < ls; ++j) {
		int l = g.links[static_cast<std::size_t>(j)];
		auto [u, v] = p.endpoints[static_cast<std::size_t>(l)];
		g.head_u(j, position[static_cast<std::size_t>(u)]) = 1.0;
		g.head_v(j, position[static_cast<std::size_t>(v)]) = 1.0;
		g.link_select(l, j) = 1.0;
	}
	return g;
}

GroupPlan full_group(const PredictorParams &p) {
	std::vector<int> all(static_cast<std::size_t>(p.nodes));
	std::iota(all.begin(), all.end(), 0);
	return make_group(p, std::move(all));
}

struct Bound {
	Var E1, E2, Theta1, Theta2;
	Var start_w, start_b;
	Var filter1_w, filter1_b, gate1_w, gate1_b;
	Var filter2_w, filter2_b, gate2_w, gate2_b;
	Var skip_w, skip_b;
	Var head_u, head_v, head_lag, head_b;
};

Bound bind(ad::Tape &t, PredictorParams &p) {
	return Bound{t.param(p.E1),        t.param(p.E2),        t.param(p.Theta1),    t.param(p.Theta2),   t.param(p.start_w),
	             t.param(p.start_b),   t.param(p.filter1_w), t.param(p.filter1_b), t.param(p.gate1_w),  t.param(p.gate1_b),
	             t.param(p.filter2_w), t.param(p.filter2_b), t.param(p.gate2_w),   t.param(p.gate2_b),  t.param(p.skip_w),
	             t.param(p.skip_b),    t.param(p.head_u),    t.param(p.head_v),    t.param(p.head_lag), t.param(p.head_b)};
}

/// Row-normalized (A + I) for the group's learned adjacency.
Var propagation_matrix(ad::Tape &t, const PredictorParams &p, const Bound &b, const GroupPlan &g) {
	const double alpha = p.cfg.alpha;
	Var sel = t.constant(g.node_select);
	Var m1 = ad::tanh(ad::scale(ad::matmul(ad::matmul(sel, b.E1), b.Theta1), alpha));
	Var m2 = ad::tanh(ad::scale(ad::matmul(ad::matmul(sel, b.E2), b.Theta2), alpha));
	Var diff = ad::sub(ad::matmul(m1, ad::transpose(m2)), ad::matmul(m2, ad::transpose(m1)));
	Var dense = ad::relu(ad::tanh(ad::scale(diff, alpha)));
	const int gs = static_cast<int>(g.nodes.size());
	const int k = std::min(p.topk(), gs - 1);
	Matrix keep = (topk_rows(dense.value(), k).array() != 0.0).cast<double>().matrix();
	Var adj = ad::mul_const(dense, keep);
	Var with_self = ad::add(adj, t.constant(Matrix::Identity(gs, gs)));
	return ad::row_normalize(with_self);
}

Var gated_block(const PredictorParams &p, const Var &in, Eigen::Index positions_in, Eigen::Index group_size, int dilation,
                const Var &fw, const Var &fb, const Var &gw, const Var &gb, const Var &prop) {
	const int k = p.cfg.kernel;
	const Eigen::Index out_pos = positions_in - static_cast<Eigen::Index>(k - 1) * dilation;
	std::vector<Var> taps;
	taps.reserve(static_cast<std::size_t>(k));
	for (int j = 0; j < k; ++j) {
		taps.push_back(ad::slice_rows(in, static_cast<Eigen::Index>(j) * dilation * group_size, out_pos * group_size));
	}
	Var cat = taps.size() == 1 ? taps.front() : ad::concat_cols(taps);
	Var filter = ad::tanh(ad::add_row(ad::matmul(cat, fw), fb));
	Var gate = ad::sigmoid(ad::add_row(ad::matmul(cat, gw), gb));
	Var z = ad::mul(filter, gate);
	const double beta = p.cfg.beta;
	Var mixed = ad::add(ad::scale(z, beta), ad::scale(ad::block_left_mul(prop, z, out_pos), 1.0 - beta));
	Var residual = ad::slice_rows(in, static_cast<Eigen::Index>(k - 1) * dilation * group_size, out_pos * group_size);
	return ad::add(mixed, residual);
}

/// Normalized forecast (horizon x group-links) for one window.
Var model_output(ad::Tape &t, const PredictorParams &p, const Bound &b, const GroupPlan &g, const Var &prop, const Matrix &window) {
	const auto gs = static_cast<Eigen::Index>(g.nodes.size());
	const Eigen::Index field = p.receptive_field();
	Matrix node_series = window * g.incidence; // L x g

	Matrix stacked(field * gs, 1);
	for (Eigen::Index s = 0; s < field; ++s) {
		stacked.middleRows(s * gs, gs) = node_series.row(p.in_len - field + s).transpose();
	}
	Var h0 = ad::add_row(ad::matmul(t.constant(std::move(stacked)), b.start_w), b.start_b);
	Var h1 = gated_block(p, h0, field, gs, p.cfg.dilation1, b.filter1_w, b.filter1_b, b.gate1_w, b.gate1_b, prop);
	const Eigen::Index p1 = field - static_cast<Eigen::Index>(p.cfg.kernel - 1) * p.cfg.dilation1;
	Var h2 = gated_block(p, h1, p1, gs, p.cfg.dilation2, b.filter2_w, b.filter2_b, b.gate2_w, b.gate2_b, prop);

	Var skip = ad::add_row(ad::matmul(t.constant(node_series.transpose()), b.skip_w), b.skip_b);
	Var rep = ad::concat_cols({skip, h2});
	Var fu = ad::matmul(t.constant(g.head_u), rep);
	Var fv = ad::matmul(t.constant(g.head_v), rep);
	Matrix link_hist = (window * g.link_select).transpose(); // l x L
	Var out = ad::add(ad::add(ad::matmul(fu, b.head_u), ad::matmul(fv, b.head_v)), ad::matmul(t.constant(std::move(link_hist)), b.head_lag));
	out = ad::add_row(out, b.head_b);
	return ad::transpose(out);
}

Matrix forward_group(const PredictorParams &params, const GroupPlan &g, const Matrix &window) {
	PredictorParams &p = const_cast<PredictorParams &>(params); // binding only reads values without backward
	ad::Tape t;
	Bound b = bind(t, p);
	Var prop = propagation_matrix(t, p, b, g);
	return model_output(t, p, b, g, prop, window).value();
}

void check_window(const PredictorParams &p, const Matrix &window) {
	if (window.rows() != p.in_len || window.cols() != p.links) {
		throw PredictorError("input window is " + std::to_string(window.rows()) + "x" + std::to_string(window.cols()) + ", expected " +
		                     std::to_string(p.in_len) + "x" + std::to_string(p.links));
	}
}

} // namespace

PredictorParams PredictorParams::init(const Topology &topo, int in_len, int horizon, const PredictorConfig &cfg, std::uint64_t seed) {
	PredictorParams p;
	p.nodes = topo.node_count();
	p.links = static_cast<int>(topo.edge_count());
	p.in_len = in_len;
	p.horizon = horizon;
	p.cfg = cfg;
	if (p.nodes < 2) {
		throw PredictorError("predictor needs at least 2 nodes");
	}
	if (cfg.topk == 0) {
		p.cfg.topk = std::min(4, p.nodes - 1);
	}
	if (p.cfg.topk < 1 || p.cfg.topk > p.nodes - 1) {
		throw PredictorError("topk must lie in [1, n-1]");
	}
	if (cfg.kernel < 1 || cfg.dilation1 < 1 || cfg.dilation2 < 1 || cfg.channels < 1 || cfg.skip_channels < 1 || cfg.d_embed < 1) {
		throw PredictorError("invalid predictor dimensions");
	}
	if (horizon < 1) {
		throw PredictorError("horizon must be >= 1");
	}
	if (p.receptive_field() > in_len) {
		throw PredictorError("input window shorter than the convolution receptive field");
	}
	for (const auto &e : topo.edges()) {
		p.endpoints.emplace_back(e.u - 1, e.v - 1);
	}

	std::mt19937_64 rng(seed);
	const int d = p.cfg.d_embed;
	const int c = p.cfg.channels;
	const int k = p.cfg.kernel;
	const int feat = p.cfg.skip_channels + c;
	p.E1 = Parameter("E1", gaussian(rng, p.nodes, d));
	p.E2 = Parameter("E2", gaussian(rng, p.nodes, d));
	p.Theta1 = Parameter("Theta1", uniform(rng, d, d, 1.0 / std::sqrt(d)));
	p.Theta2 = Parameter("Theta2", uniform(rng, d, d, 1.0 / std::sqrt(d)));
	p.start_w = Parameter("start_w", uniform(rng, 1, c, 1.0));
	p.start_b = Parameter("start_b", Matrix::Zero(1, c));
	const double conv_bound = 1.0 / std::sqrt(static_cast<double>(k * c));
	p.filter1_w = Parameter("filter1_w", uniform(rng, k * c, c, conv_bound));
	p.filter1_b = Parameter("filter1_b", Matrix::Zero(1, c));
	p.gate1_w = Parameter("gate1_w", uniform(rng, k * c, c, conv_bound));
	p.gate1_b = Parameter("gate1_b", Matrix::Zero(1, c));
	p.filter2_w = Parameter("filter2_w", uniform(rng, k * c, c, conv_bound));
	p.filter2_b = Parameter("filter2_b", Matrix::Zero(1, c));
	p.gate2_w = Parameter("gate2_w", uniform(rng, k * c, c, conv_bound));
	p.gate2_b = Parameter("gate2_b", Matrix::Zero(1, c));
	p.skip_w = Parameter("skip_w", uniform(rng, in_len, p.cfg.skip_channels, 1.0 / std::sqrt(in_len)));
	p.skip_b = Parameter("skip_b", Matrix::Zero(1, p.cfg.skip_channels));
	p.head_u = Parameter("head_u", uniform(rng, feat, horizon, 0.1 / std::sqrt(feat)));
	p.head_v = Parameter("head_v", uniform(rng, feat, horizon, 0.1 / std::sqrt(feat)));
	Matrix lag = Matrix::Zero(in_len, horizon);
	lag.row(in_len - 1).setOnes();
	p.head_lag = Parameter("head_lag", std::move(lag));
	p.head_b = Parameter("head_b", Matrix::Zero(1, horizon));
	return p;
}

int PredictorParams::topk() const {
	return cfg.topk;
}

int PredictorParams::receptive_field() const {
	return 1 + (cfg.kernel - 1) * (cfg.dilation1 + cfg.dilation2);
}

std::vector<Parameter *> PredictorParams::tensors() {
	return {&E1,        &E2,        &Theta1,    &Theta2,  &start_w, &start_b, &filter1_w, &filter1_b, &gate1_w, &gate1_b,
	        &filter2_w, &filter2_b, &gate2_w,   &gate2_b, &skip_w,  &skip_b,  &head_u,    &head_v,    &head_lag, &head_b};
}

std::vector<const Parameter *> PredictorParams::tensors() const {
	auto mut = const_cast<PredictorParams *>(this)->tensors();
	return {mut.begin(), mut.end()};
}

bool PredictorParams::finite() const {
	for (const auto *t : tensors()) {
		if (!t->value.allFinite()) {
			return false;
		}
	}
	return std::isfinite(cfg.alpha) && std::isfinite(cfg.beta);
}

Eigen::MatrixXd topk_rows(const Eigen::MatrixXd &dense, int k) {
	Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dense.rows(), dense.cols());
	if (k <= 0) {
		return out;
	}
	std::vector<Eigen::Index> idx(static_cast<std::size_t>(dense.cols()));
	for (Eigen::Index i = 0; i < dense.rows(); ++i) {
		std::iota(idx.begin(), idx.end(), Eigen::Index{0});
		auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
		std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
			double va = dense(i, a);
			double vb = dense(i, b);
			return va != vb ? va > vb : a < b;
		});
		for (std::size_t j = 0; j < keep; ++j) {
			out(i, idx[j]) = dense(i, idx[j]);
		}
	}
	return out;
}

namespace {

Eigen::MatrixXd embed_map(const Matrix &e, const Matrix &theta, double alpha) {
	return (alpha * (e * theta)).array().tanh().matrix();
}

} // namespace

LearnedGraph learn_graph(const PredictorParams &p) {
	const double alpha = p.cfg.alpha;
	Matrix m1 = embed_map(p.E1.value, p.Theta1.value, alpha);
	Matrix m2 = embed_map(p.E2.value, p.Theta2.value, alpha);
	Matrix arg = m1 * m2.transpose() - m2 * m1.transpose();
	LearnedGraph g;
	g.dense = (alpha * arg).array().tanh().max(0.0).matrix();
	g.adjacency = topk_rows(g.dense, p.topk());
	return g;
}

Eigen::MatrixXd graph_learn_layer(const PredictorParams &params) {
	return learn_graph(params).adjacency;
}

LearnedGraph apply_topology_delta(const PredictorParams &p, const LearnedGraph &graph, const std::vector<int> &affected) {
	LearnedGraph out = graph;
	if (affected.empty()) {
		return out;
	}
	const double alpha = p.cfg.alpha;
	std::vector<char> hit(static_cast<std::size_t>(p.nodes), 0);
	for (int v : affected) {
		if (v < 0 || v >= p.nodes) {
			throw PredictorError("apply_topology_delta: node index out of range");
		}
		hit[static_cast<std::size_t>(v)] = 1;
	}
	// Only the embedding rows of affected nodes are recomputed.
	Matrix m1(p.nodes, p.cfg.d_embed);
	Matrix m2(p.nodes, p.cfg.d_embed);
	for (int v = 0; v < p.nodes; ++v) {
		m1.row(v) = (alpha * (p.E1.value.row(v) * p.Theta1.value)).array().tanh().matrix();
		m2.row(v) = (alpha * (p.E2.value.row(v) * p.Theta2.value)).array().tanh().matrix();
	}
	auto entry = [&](int i, int j) {
		double arg = m1.row(i).dot(m2.row(j)) - m2.row(i).dot(m1.row(j));
		return std::max(0.0, std::tanh(alpha * arg));
	};
	for (int v : affected) {
		for (int j = 0; j < p.nodes; ++j) {
			out.dense(v, j) = entry(v, j);
			out.dense(j, v) = entry(j, v);
		}
	}
	out.adjacency = topk_rows(out.dense, p.topk());
	return out;
}

Forecast forward(const PredictorParams &params, const Eigen::MatrixXd &window) {
	check_window(params, window);
	Forecast f;
	f.horizon = params.horizon;
	f.values = forward_group(params, full_group(params), window);
	f.denormalized = false;
	return f;
}

double LrSchedule::rate(int epoch) const {
	if (kind == Kind::constant) {
		return base;
	}
	if (epoch <= 10) {
		return base;
	}
	if (epoch <= 20) {
		return base * std::pow(0.95, epoch - 10);
	}
	const double at20 = base * std::pow(0.95, 10);
	return at20 * std::pow(0.9, epoch - 20);
}

void check_train_config(const TrainConfig &cfg, int nodes) {
	if (cfg.batch < 1 || cfg.step_size < 1 || cfg.epochs < 1) {
		throw PredictorError("train config: batch, step size and epochs must be >= 1");
	}
	if (cfg.split_groups < 1 || cfg.split_groups > nodes) {
		throw PredictorError("train config: split groups must lie in [1, n]");
	}
	if (cfg.max_horizon != 1 && cfg.max_horizon != 4 && cfg.max_horizon != 8 && cfg.max_horizon != 16) {
		throw PredictorError("train config: max horizon must be one of 1, 4, 8, 16");
	}
	if (!(cfg.lr.base >= 0.0)) {
		throw PredictorError("train config: negative learning rate");
	}
}

double training_loss(PredictorParams &params, const WindowedDataset &data, const std::vector<std::size_t> &samples,
                     const std::vector<int> &group, int r, bool backprop) {
	GroupPlan g = make_group(params, group);
	if (g.links.empty() || samples.empty()) {
		return 0.0;
	}
	r = std::clamp(r, 1, params.horizon);
	ad::Tape t;
	Bound b = bind(t, params);
	Var prop = propagation_matrix(t, params, b, g);
	std::vector<Var> losses;
	losses.reserve(samples.size());
	for (auto s : samples) {
		Var out = model_output(t, params, b, g, prop, data.input(s));
		Matrix target = data.target(s).topRows(r) * g.link_select;
		Var err = ad::sub(ad::slice_rows(out, 0, r), t.constant(std::move(target)));
		losses.push_back(ad::mean(ad::abs(err)));
	}
	Var total = ad::scale(ad::sum(ad::concat_rows(losses)), 1.0 / static_cast<double>(losses.size()));
	if (backprop) {
		t.backward(total);
	}
	return total.item();
}

namespace {

double full_mae(const PredictorParams &params, const WindowedDataset &data) {
	if (data.empty()) {
		return 0.0;
	}
	GroupPlan g = full_group(params);
	double acc = 0.0;
	for (std::size_t i = 0; i < data.size(); ++i) {
		Matrix out = forward_group(params, g, data.input(i));
		acc += (out - data.target(i)).cwiseAbs().mean();
	}
	return acc / static_cast<double>(data.size());
}

} // namespace

TrainResult train(PredictorParams params, const WindowedDataset &data, const TrainConfig &cfg) {
	check_train_config(cfg, params.nodes);
	if (data.empty()) {
		throw PredictorError("train: dataset is empty");
	}
	if (data.in_len() != params.in_len || data.link_count() != params.links) {
		throw PredictorError("train: dataset shape does not match the model");
	}
	if (data.out_len() < params.horizon) {
		throw PredictorError("train: dataset horizon shorter than the model horizon");
	}
	const int max_h = std::min(cfg.max_horizon, params.horizon);

	TrainResult result;
	std::mt19937_64 rng(cfg.seed);
	auto tensors = params.tensors();
	ad::Adam opt(tensors);

	EpochRecord initial;
	initial.train_mae = cfg.track_train_mae ? full_mae(params, data) : 0.0;
	result.epochs.push_back(initial);

	std::vector<std::size_t> order(data.size());
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::vector<int> nodes(static_cast<std::size_t>(params.nodes));
	std::iota(nodes.begin(), nodes.end(), 0);

	int iter = 1;
	int r = 1;
	for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
		const double lr = cfg.lr.rate(epoch);
		std::shuffle(order.begin(), order.end(), rng);
		double epoch_loss = 0.0;
		int epoch_iters = 0;
		for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
			std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
			                               order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + static_cast<std::size_t>(cfg.batch))));
			std::shuffle(nodes.begin(), nodes.end(), rng);
			if (iter % cfg.step_size == 0 && r < max_h) {
				++r;
			}
			double iter_loss = 0.0;
			int used = 0;
			for (int gi = 0; gi < cfg.split_groups; ++gi) {
				std::vector<int> group;
				for (std::size_t j = static_cast<std::size_t>(gi); j < nodes.size(); j += static_cast<std::size_t>(cfg.split_groups)) {
					group.push_back(nodes[j]);
				}
				opt.zero_grad();
				double loss = training_loss(params, data, batch, group, r, true);
				if (!std::isfinite(loss)) {
					throw PredictorError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
					                     std::to_string(iter));
				}
				if (make_group(params, group).links.empty()) {
					continue;
				}
				opt.step(lr);
				if (!params.finite()) {
					throw PredictorError("training diverged: non-finite parameters at epoch " + std::to_string(epoch) + ", iteration " +
					                     std::to_string(iter));
				}
				iter_loss += loss;
				++used;
			}
			iter_loss = used > 0 ? iter_loss / used : 0.0;
			result.iterations.push_back({epoch, iter, r, iter_loss});
			epoch_loss += iter_loss;
			++epoch_iters;
			++iter;
		}
		EpochRecord rec;
		rec.epoch = epoch;
		rec.lr = lr;
		rec.mean_iteration_loss = epoch_iters > 0 ? epoch_loss / epoch_iters : 0.0;
		rec.train_mae = cfg.track_train_mae ? full_mae(params, data) : rec.mean_iteration_loss;
		result.epochs.push_back(rec);
	}
	result.params = std::move(params);
	return result;
}

PredictorParams feedback_update(PredictorParams params, const Eigen::MatrixXd &window, const Eigen::MatrixXd &y_real, double lr) {
	check_window(params, window);
	if (y_real.rows() != params.horizon || y_real.cols() != params.links) {
		throw PredictorError("feedback_update: observed values have the wrong shape");
	}
	GroupPlan g = full_group(params);
	auto tensors = params.tensors();
	for (auto *t : tensors) {
		t->zero_grad();
	}
	ad::Tape t;
	Bound b = bind(t, params);
	Var prop = propagation_matrix(t, params, b, g);
	Var out = model_output(t, params, b, g, prop, window);
	Var err = ad::sub(t.constant(y_real), out);
	Var loss = ad::scale(ad::mean(ad::square(err)), 0.5);
	t.backward(loss);
	ad::sgd_step(tensors, lr);
	if (!params.finite()) {
		throw PredictorError("feedback_update produced non-finite parameters");
	}
	return params;
}

ForecastMetrics forecast_metrics(const std::vector<Eigen::MatrixXd> &predicted, const std::vector<Eigen::MatrixXd> &actual) {
	if (predicted.size() != actual.size() || predicted.empty()) {
		throw PredictorError("forecast_metrics: need matching, non-empty forecast lists");
	}
	const Eigen::Index h = actual.front().rows();
	ForecastMetrics m;
	m.samples = actual.size();
	m.mae_per_step.assign(static_cast<std::size_t>(h), 0.0);
	m.mse_per_step.assign(static_cast<std::size_t>(h), 0.0);
	double count = 0.0;
	for (std::size_t i = 0; i < actual.size(); ++i) {
		if (predicted[i].rows() != h || predicted[i].cols() != actual[i].cols() || actual[i].rows() != h) {
			throw PredictorError("forecast_metrics: shape mismatch");
		}
		Eigen::MatrixXd diff = predicted[i] - actual[i];
		for (Eigen::Index s = 0; s < h; ++s) {
			m.mae_per_step[static_cast<std::size_t>(s)] += diff.row(s).cwiseAbs().sum();
			m.mse_per_step[static_cast<std::size_t>(s)] += diff.row(s).squaredNorm();
		}
		count += static_cast<double>(diff.cols());
	}
	double mae = 0.0;
	double mse = 0.0;
	for (Eigen::Index s = 0; s < h; ++s) {
		auto i = static_cast<std::size_t>(s);
		mae += m.mae_per_step[i];
		mse += m.mse_per_step[i];
		m.mae_per_step[i] /= count;
		m.mse_per_step[i] /= count;
	}
	m.mae = mae / (count * static_cast<double>(h));
	m.mse = mse / (count * static_cast<double>(h));
	return m;
}

ForecastMetrics evaluate(const PredictorParams &params, const WindowedDataset &test) {
	if (test.empty()) {
		throw PredictorError("evaluate: test set is empty");
	}
	if (test.out_len() < params.horizon) {
		throw PredictorError("evaluate: test horizon shorter than the model horizon");
	}
	GroupPlan g = full_group(params);
	std::vector<Eigen::MatrixXd> pred;
	std::vector<Eigen::MatrixXd> actual;
	for (std::size_t i = 0; i < test.size(); ++i) {
		pred.push_back(test.normalization().invert(forward_group(params, g, test.input(i))));
		actual.push_back(test.raw_target(i).topRows(params.horizon));
	}
	return forecast_metrics(pred, actual);
}

Forecast baseline_predict(BaselineKind kind, const Eigen::MatrixXd &history, int horizon, double decay) {
	if (history.rows() < 1) {
		throw PredictorError("baseline_predict: empty history");
	}
	if (horizon < 1) {
		throw PredictorError("baseline_predict: horizon must be >= 1");
	}
	Eigen::RowVectorXd level;
	if (kind == BaselineKind::no_model) {
		level = history.bottomRows(1);
	} else {
		if (!(decay > 0.0 && decay <= 1.0)) {
			throw PredictorError("baseline_predict: ewma decay must lie in (0, 1]");
		}
		level = history.row(0);
		for (Eigen::Index t = 1; t < history.rows(); ++t) {
			level = decay * history.row(t) + (1.0 - decay) * level;
		}
	}
	Forecast f;
	f.horizon = horizon;
	f.values = level.replicate(horizon, 1);
	f.denormalized = true;
	return f;
}

ForecastMetrics evaluate_baseline(BaselineKind kind, const WindowedDataset &test, double decay) {
	if (test.empty()) {
		throw PredictorError("evaluate_baseline: test set is empty");
	}
	std::vector<Eigen::MatrixXd> pred;
	std::vector<Eigen::MatrixXd> actual;
	for (std::size_t i = 0; i < test.size(); ++i) {
		pred.push_back(baseline_predict(kind, test.raw_input(i), test.out_len(), decay).values);
		actual.push_back(test.raw_target(i));
	}
	return forecast_metrics(pred, actual);
}

Forecast predict_raw(const PredictorParams &params, const Normalization &norm, const Eigen::MatrixXd &raw_window) {
	Forecast f = forward(params, norm.apply(raw_window));
	f.values = norm.invert(f.values);
	f.denormalized = true;
	return f;
}

namespace {

constexpr std::string_view kCheckpointTag = "telemplan-predictor";
constexpr int kCheckpointVersion = 1;

void write_row(std::ostringstream &out, const std::string &key, const Eigen::VectorXd &v) {
	out << key << " " << v.size();
	for (Eigen::Index i = 0; i < v.size(); ++i) {
		out << " " << textio::format_double(v(i));
	}
	out << "\n";
}

} // namespace

std::string save_checkpoint(const PredictorParams &p, const Normalization &norm) {
	std::ostringstream out;
	out << kCheckpointTag << " " << kCheckpointVersion << "\n";
	out << "dims " << p.nodes << " " << p.links << " " << p.in_len << " " << p.horizon << "\n";
	out << "config " << p.cfg.d_embed << " " << p.cfg.topk << " " << textio::format_double(p.cfg.alpha) << " "
	    << textio::format_double(p.cfg.beta) << " " << p.cfg.channels << " " << p.cfg.skip_channels << " " << p.cfg.kernel << " "
	    << p.cfg.dilation1 << " " << p.cfg.dilation2 << "\n";
	out << "endpoints";
	for (auto [u, v] : p.endpoints) {
		out << " " << u << " " << v;
	}
	out << "\n";
	write_row(out, "norm_mean", norm.mean);
	write_row(out, "norm_scale", norm.scale);
	for (const auto *t : p.tensors()) {
		out << "tensor " << t->name << " " << t->value.rows() << " " << t->value.cols();
		for (Eigen::Index i = 0; i < t->value.size(); ++i) {
			out << " " << textio::format_double(t->value.data()[i]);
		}
		out << "\n";
	}
	out << "end\n";
	return out.str();
}

std::pair<PredictorParams, Normalization> load_checkpoint(std::string_view text) {
	auto lines = textio::split(text, '\n');
	std::size_t li = 0;
	auto next = [&]() {
		while (li < lines.size()) {
			auto tok = textio::tokenize(lines[li++]);
			if (!tok.empty()) {
				return tok;
			}
		}
		throw PredictorError("checkpoint: unexpected end of input");
	};
	auto expect = [](const std::vector<std::string_view> &tok, std::string_view key, std::size_t min_size) {
		if (tok.empty() || tok[0] != key || tok.size() < min_size) {
			throw PredictorError("checkpoint: expected '" + std::string(key) + "' record");
		}
	};
	try {
		auto tok = next();
		expect(tok, kCheckpointTag, 2);
		if (textio::parse_int(tok[1]) != kCheckpointVersion) {
			throw PredictorError("checkpoint: unsupported version " + std::string(tok[1]));
		}
		PredictorParams p;
		tok = next();
		expect(tok, "dims", 5);
		p.nodes = static_cast<int>(textio::parse_int(tok[1]));
		p.links = static_cast<int>(textio::parse_int(tok[2]));
		p.in_len = static_cast<int>(textio::parse_int(tok[3]));
		p.horizon = static_cast<int>(textio::parse_int(tok[4]));
		tok = next();
		expect(tok, "config", 10);
		p.cfg.d_embed = static_cast<int>(textio::parse_int(tok[1]));
		p.cfg.topk = static_cast<int>(textio::parse_int(tok[2]));
		p.cfg.alpha = textio::parse_double(tok[3]);
		p.cfg.beta = textio::parse_double(tok[4]);
		p.cfg.channels = static_cast<int>(textio::parse_int(tok[5]));
		p.cfg.skip_channels = static_cast<int>(textio::parse_int(tok[6]));
		p.cfg.kernel = static_cast<int>(textio::parse_int(tok[7]));
		p.cfg.dilation1 = static_cast<int>(textio::parse_int(tok[8]));
		p.cfg.dilation2 = static_cast<int>(textio::parse_int(tok[9]));
		tok = next();
		expect(tok, "endpoints", 1);
		if (tok.size() != 1 + 2 * static_cast<std::size_t>(p.links)) {
			throw PredictorError("checkpoint: endpoint count mismatch");
		}
		for (int l = 0; l < p.links; ++l) {
			p.endpoints.emplace_back(static_cast<int>(textio::parse_int(tok[1 + 2 * static_cast<std::size_t>(l)])),
			                         static_cast<int>(textio::parse_int(tok[2 + 2 * static_cast<std::size_t>(l)])));
		}
		Normalization norm;
		for (auto *dest : {&norm.mean, &norm.scale}) {
			tok = next();
			expect(tok, dest == &norm.mean ? "norm_mean" : "norm_scale", 2);
			auto count = static_cast<std::size_t>(textio::parse_int(tok[1]));
			if (tok.size() != count + 2) {
				throw PredictorError("checkpoint: normalization length mismatch");
			}
			dest->resize(static_cast<Eigen::Index>(count));
			for (std::size_t i = 0; i < count; ++i) {
				(*dest)(static_cast<Eigen::Index>(i)) = textio::parse_double(tok[2 + i]);
			}
		}
		for (auto *t : p.tensors()) {
			tok = next();
			expect(tok, "tensor", 4);
			t->name = std::string(tok[1]);
			auto rows = static_cast<Eigen::Index>(textio::parse_int(tok[2]));
			auto cols = static_cast<Eigen::Index>(textio::parse_int(tok[3]));
			if (tok.size() != static_cast<std::size_t>(rows * cols) + 4) {
				throw PredictorError("checkpoint: tensor '" + t->name + "' has the wrong number of values");
			}
			t->value.resize(rows, cols);
			for (Eigen::Index i = 0; i < rows * cols; ++i) {
				t->value.data()[i] = textio::parse_double(tok[4 + static_cast<std::size_t>(i)]);
			}
			t->zero_grad();
		}
		tok = next();
		expect(tok, "end", 1);
		return {std::move(p), std::move(norm)};
	} catch (const std::invalid_argument &e) {
		throw PredictorError(std::string("checkpoint: ") + e.what());
	}
}

std::string iterations_csv(const std::vector<IterationRecord> &records) {
	std::ostringstream out;
	out << "epoch,iteration,r,loss\n";
	for (const auto &r : records) {
		out << r.epoch << "," << r.iteration << "," << r.r << "," << textio::format_double(r.loss) << "\n";
	}
	return out.str();
}

std::string epochs_csv(const std::vector<EpochRecord> &records) {
	std::ostringstream out;
	out << "epoch,lr,mean_iteration_loss,train_mae\n";
	for (const auto &r : records) {
		out << r.epoch << "," << textio::format_double(r.lr) << "," << textio::format_double(r.mean_iteration_loss) << ","
		    << textio::format_double(r.train_mae) << "\n";
	}
	return out.str();
}

} // namespace telemplan
