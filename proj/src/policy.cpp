#include "telemplan/policy.hpp"

#include "telemplan/textio.hpp"

#include <algorithm>
#include <chrono>
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

double fan_in(Eigen::Index n) {
	return 1.0 / std::sqrt(static_cast<double>(n));
}

struct Bound {
	Var embed_w, embed_b;
	Var wz, uz, bz, wr, ur, br, wn, un, bn;
	Var att_wx, att_wh, att_v, out_wx, out_wc, out_v;
};

Bound bind_actor(ad::Tape &t, PolicyParams &p) {
	return Bound{t.param(p.embed_w), t.param(p.embed_b), t.param(p.gru_wz), t.param(p.gru_uz), t.param(p.gru_bz), t.param(p.gru_wr),
	             t.param(p.gru_ur),  t.param(p.gru_br),  t.param(p.gru_wn), t.param(p.gru_un), t.param(p.gru_bn), t.param(p.att_wx),
	             t.param(p.att_wh),  t.param(p.att_v),   t.param(p.out_wx), t.param(p.out_wc), t.param(p.out_v)};
}

Var embed(ad::Tape &t, const Bound &b, const Matrix &x) {
	return ad::add_row(ad::matmul(t.constant(x), b.embed_w), b.embed_b);
}

Var action_scores(const Bound &b, const Var &xb, const Var &h) {
	Var align = ad::matmul(ad::tanh(ad::add_row(ad::matmul(xb, b.att_wx), ad::matmul(h, b.att_wh))), b.att_v);
	Var weights = ad::masked_softmax(align, std::vector<char>(static_cast<std::size_t>(xb.rows()), 1));
	Var context = ad::matmul(ad::transpose(weights), xb);
	return ad::matmul(ad::tanh(ad::add_row(ad::matmul(xb, b.out_wx), ad::matmul(context, b.out_wc))), b.out_v);
}

Var gru(ad::Tape &t, const Bound &b, const Var &h, const Var &x) {
	Var z = ad::sigmoid(ad::add(ad::add(ad::matmul(x, b.wz), ad::matmul(h, b.uz)), b.bz));
	Var r = ad::sigmoid(ad::add(ad::add(ad::matmul(x, b.wr), ad::matmul(h, b.ur)), b.br));
	Var n = ad::tanh(ad::add(ad::add(ad::matmul(x, b.wn), ad::matmul(ad::mul(r, h), b.un)), b.bn));
	Var keep = ad::sub(t.constant(Matrix::Ones(1, z.cols())), z);
	return ad::add(ad::mul(keep, n), ad::mul(z, h));
}

Var critic(ad::Tape &t, PolicyParams &p, const Matrix &x) {
	Var xb = ad::add_row(ad::matmul(t.constant(x), t.param(p.critic_embed_w)), t.param(p.critic_embed_b));
	Var mean = ad::matmul(t.constant(Matrix::Constant(1, x.rows(), 1.0 / static_cast<double>(x.rows()))), xb);
	Var hid = ad::relu(ad::add(ad::matmul(mean, t.param(p.critic_w1)), t.param(p.critic_b1)));
	return ad::add(ad::matmul(hid, t.param(p.critic_w2)), t.param(p.critic_b2));
}

enum class Mode { greedy, sample, fixed };

struct Episode {
	Rollout rollout;
	Var log_prob;
	Matrix initial_features;
};

Episode run_episode(ad::Tape &t, PolicyParams &params, const PlanningInstance &inst, const PlannerConfig &cfg, Mode mode,
                    std::mt19937_64 *rng, const std::vector<NodeId> *fixed) {
	check_planner_config(cfg);
	if (params.features != kFeatures) {
		throw PlannerError("policy expects " + std::to_string(params.features) + " input features, planner provides " +
		                   std::to_string(kFeatures));
	}
	Episode ep;
	Bound b = bind_actor(t, params);
	InstanceEncoding enc = encode_instance(inst, cfg);
	EpisodeState state = initial_state(inst);
	Var h = t.constant(Matrix::Zero(1, params.hidden));
	std::vector<Var> terms;
	double masked_sum = 0.0;
	int steps = 0;
	const std::size_t limit = 64 * (inst.actions.size() + 1) * (inst.actions.size() + 1);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	while (!state.terminal()) {
		if (static_cast<std::size_t>(steps) > limit) {
			throw PlannerError("decoding did not terminate");
		}
		auto full = feasible_mask(state, inst, cfg);
		auto rows = row_mask(full, inst);
		if (std::none_of(rows.begin(), rows.end(), [](char c) { return c != 0; })) {
			throw PlannerError("dead end: targets remain but every action is masked");
		}
		masked_sum += static_cast<double>(std::count(full.begin(), full.end(), 0)) / static_cast<double>(full.size());
		Matrix x = state_features(inst, enc, state, rows, cfg);
		if (steps == 0) {
			ep.initial_features = x;
		}
		Var xb = embed(t, b, x);
		Var scores = action_scores(b, xb, h);
		Var probs = ad::masked_softmax(scores, rows);
		const Eigen::VectorXd p = probs.value().col(0);

		int row = -1;
		if (mode == Mode::fixed) {
			if (static_cast<std::size_t>(steps) >= fixed->size()) {
				throw PlannerError("action sequence ends before the episode does");
			}
			row = inst.row_of((*fixed)[static_cast<std::size_t>(steps)]);
			if (row < 0 || !rows[static_cast<std::size_t>(row)]) {
				throw PlannerError("action sequence contains a masked action");
			}
		} else if (mode == Mode::greedy) {
			for (int r = 0; r < static_cast<int>(p.size()); ++r) {
				if (rows[static_cast<std::size_t>(r)] && (row < 0 || p(r) > p(row))) {
					row = r;
				}
			}
		} else {
			double u = unit(*rng);
			double acc = 0.0;
			for (int r = 0; r < static_cast<int>(p.size()); ++r) {
				if (!rows[static_cast<std::size_t>(r)]) {
					continue;
				}
				row = r;
				acc += p(r);
				if (u < acc) {
					break;
				}
			}
		}
		ep.rollout.min_chosen_prob = std::min(ep.rollout.min_chosen_prob, p(row));
		terms.push_back(ad::masked_log_softmax_at(scores, rows, row));
		h = gru(t, b, h, ad::slice_rows(xb, row, 1));
		NodeId action = inst.actions[static_cast<std::size_t>(row)];
		ep.rollout.actions.push_back(action);
		state = step(state, action, inst, cfg);
		++steps;
	}
	if (mode == Mode::fixed && static_cast<std::size_t>(steps) != fixed->size()) {
		throw PlannerError("action sequence continues past the end of the episode");
	}
	ep.rollout.plan = finish_plan(state);
	ep.rollout.masked_fraction = steps > 0 ? masked_sum / steps : 0.0;
	ep.rollout.score = score_plan(ep.rollout.plan, inst.terminals(), cfg, inst.topo.node_count());
	ep.log_prob = terms.empty() ? t.constant(Matrix::Zero(1, 1)) : ad::sum(ad::concat_rows(terms));
	ep.rollout.log_prob = ep.log_prob.item();
	if (ep.initial_features.size() == 0) {
		ep.initial_features = state_features(inst, enc, state, std::vector<char>(inst.actions.size(), 0), cfg);
	}
	return ep;
}

} // namespace

PolicyParams PolicyParams::init(int embed, int hidden, std::uint64_t seed, int features) {
	if (embed < 1 || hidden < 1 || features < 1) {
		throw PlannerError("policy dimensions must be >= 1");
	}
	std::mt19937_64 rng(seed);
	PolicyParams p;
	p.features = features;
	p.embed = embed;
	p.hidden = hidden;
	const double fe = fan_in(features);
	const double fx = fan_in(embed);
	const double fh = fan_in(hidden);
	p.embed_w = Parameter("embed_w", uniform(rng, features, embed, fe));
	p.embed_b = Parameter("embed_b", Matrix::Zero(1, embed));
	p.gru_wz = Parameter("gru_wz", uniform(rng, embed, hidden, fx));
	p.gru_uz = Parameter("gru_uz", uniform(rng, hidden, hidden, fh));
	p.gru_bz = Parameter("gru_bz", Matrix::Zero(1, hidden));
	p.gru_wr = Parameter("gru_wr", uniform(rng, embed, hidden, fx));
	p.gru_ur = Parameter("gru_ur", uniform(rng, hidden, hidden, fh));
	p.gru_br = Parameter("gru_br", Matrix::Zero(1, hidden));
	p.gru_wn = Parameter("gru_wn", uniform(rng, embed, hidden, fx));
	p.gru_un = Parameter("gru_un", uniform(rng, hidden, hidden, fh));
	p.gru_bn = Parameter("gru_bn", Matrix::Zero(1, hidden));
	p.att_wx = Parameter("att_wx", uniform(rng, embed, hidden, fan_in(embed + hidden)));
	p.att_wh = Parameter("att_wh", uniform(rng, hidden, hidden, fan_in(embed + hidden)));
	p.att_v = Parameter("att_v", uniform(rng, hidden, 1, fh));
	p.out_wx = Parameter("out_wx", uniform(rng, embed, hidden, fan_in(2 * embed)));
	p.out_wc = Parameter("out_wc", uniform(rng, embed, hidden, fan_in(2 * embed)));
	p.out_v = Parameter("out_v", uniform(rng, hidden, 1, fh));
	p.critic_embed_w = Parameter("critic_embed_w", uniform(rng, features, embed, fe));
	p.critic_embed_b = Parameter("critic_embed_b", Matrix::Zero(1, embed));
	p.critic_w1 = Parameter("critic_w1", uniform(rng, embed, hidden, fx));
	p.critic_b1 = Parameter("critic_b1", Matrix::Zero(1, hidden));
	p.critic_w2 = Parameter("critic_w2", uniform(rng, hidden, 1, fh));
	p.critic_b2 = Parameter("critic_b2", Matrix::Zero(1, 1));
	return p;
}

std::vector<Parameter *> PolicyParams::actor_tensors() {
	return {&embed_w, &embed_b, &gru_wz, &gru_uz, &gru_bz, &gru_wr, &gru_ur, &gru_br, &gru_wn,
	        &gru_un,  &gru_bn,  &att_wx, &att_wh, &att_v,  &out_wx, &out_wc, &out_v};
}

std::vector<Parameter *> PolicyParams::critic_tensors() {
	return {&critic_embed_w, &critic_embed_b, &critic_w1, &critic_b1, &critic_w2, &critic_b2};
}

std::vector<Parameter *> PolicyParams::tensors() {
	auto all = actor_tensors();
	auto c = critic_tensors();
	all.insert(all.end(), c.begin(), c.end());
	return all;
}

bool PolicyParams::finite() const {
	return ad::all_finite(const_cast<PolicyParams *>(this)->tensors());
}

Eigen::VectorXd policy_forward(const PolicyParams &params, const Eigen::MatrixXd &features, const Eigen::RowVectorXd &h,
                               const std::vector<char> &mask) {
	if (features.cols() != params.features || h.size() != params.hidden || mask.size() != static_cast<std::size_t>(features.rows())) {
		throw PlannerError("policy_forward: input shapes do not match the policy");
	}
	if (std::none_of(mask.begin(), mask.end(), [](char c) { return c != 0; })) {
		throw PlannerError("policy_forward: every action is masked");
	}
	ad::Tape t;
	Bound b = bind_actor(t, const_cast<PolicyParams &>(params));
	Var xb = embed(t, b, features);
	return ad::masked_softmax(action_scores(b, xb, t.constant(h)), mask).value().col(0);
}

Eigen::RowVectorXd decoder_step(const PolicyParams &params, const Eigen::MatrixXd &features, const Eigen::RowVectorXd &h, int row) {
	if (row < 0 || row >= features.rows()) {
		throw PlannerError("decoder_step: row out of range");
	}
	ad::Tape t;
	Bound b = bind_actor(t, const_cast<PolicyParams &>(params));
	Var xb = embed(t, b, features);
	return gru(t, b, t.constant(h), ad::slice_rows(xb, row, 1)).value();
}

double critic_value(const PolicyParams &params, const Eigen::MatrixXd &features) {
	ad::Tape t;
	return critic(t, const_cast<PolicyParams &>(params), features).item();
}

Rollout decode_greedy(const PolicyParams &params, const PlanningInstance &inst, const PlannerConfig &cfg) {
	ad::Tape t;
	return run_episode(t, const_cast<PolicyParams &>(params), inst, cfg, Mode::greedy, nullptr, nullptr).rollout;
}

Rollout decode_sample(const PolicyParams &params, const PlanningInstance &inst, const PlannerConfig &cfg, std::uint64_t seed) {
	ad::Tape t;
	std::mt19937_64 rng(seed);
	return run_episode(t, const_cast<PolicyParams &>(params), inst, cfg, Mode::sample, &rng, nullptr).rollout;
}

double sequence_log_prob(PolicyParams &params, const PlanningInstance &inst, const PlannerConfig &cfg, const std::vector<NodeId> &actions,
                         bool backprop) {
	ad::Tape t;
	Episode ep = run_episode(t, params, inst, cfg, Mode::fixed, nullptr, &actions);
	if (backprop) {
		t.backward(ep.log_prob);
	}
	return ep.rollout.log_prob;
}

PolicyTrainResult train_policy(PolicyParams params, const std::vector<PlanningInstance> &instances, const PlannerConfig &cfg,
                               const std::function<void(const PolicyEpochRecord &)> &progress) {
	check_planner_config(cfg);
	if (instances.empty()) {
		throw PlannerError("train_policy: no training instances");
	}
	PolicyTrainResult result;
	std::mt19937_64 rng(cfg.seed);
	ad::Adam actor(params.actor_tensors());
	ad::Adam value(params.critic_tensors());
	std::vector<std::size_t> order(instances.size());
	std::iota(order.begin(), order.end(), std::size_t{0});
	const auto start = std::chrono::steady_clock::now();

	for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
		std::shuffle(order.begin(), order.end(), rng);
		double reward_sum = 0.0;
		double critic_sum = 0.0;
		double paths_sum = 0.0;
		int violations = 0;
		for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch)) {
			const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
			const double scale = 1.0 / static_cast<double>(end - begin);
			actor.zero_grad();
			value.zero_grad();
			for (std::size_t i = begin; i < end; ++i) {
				const PlanningInstance &inst = instances[order[i]];
				std::mt19937_64 episode_rng(rng());
				ad::Tape t;
				Episode ep = run_episode(t, params, inst, cfg, Mode::sample, &episode_rng, nullptr);
				const double r = ep.rollout.score.reward;
				ad::Tape tc;
				Var v = critic(tc, params, ep.initial_features);
				const double advantage = r - v.item();
				if (!std::isfinite(advantage) || !std::isfinite(ep.rollout.log_prob)) {
					throw PlannerError("policy training diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
				}
				t.backward(ep.log_prob, Matrix::Constant(1, 1, advantage * scale));
				tc.backward(v, Matrix::Constant(1, 1, -2.0 * advantage * scale));
				reward_sum += r;
				critic_sum += advantage * advantage;
				paths_sum += ep.rollout.score.K;
				violations += ep.rollout.score.flag ? 1 : 0;
			}
			actor.step(cfg.actor_lr);
			value.step(cfg.critic_lr);
			if (!params.finite()) {
				throw PlannerError("policy training diverged at epoch " + std::to_string(epoch) + ": non-finite parameters");
			}
		}
		const double count = static_cast<double>(instances.size());
		PolicyEpochRecord rec;
		rec.epoch = epoch;
		rec.mean_reward = reward_sum / count;
		rec.violation_rate = violations / count;
		rec.mean_paths = paths_sum / count;
		rec.critic_loss = critic_sum / count;
		rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
		result.trace.push_back(rec);
		if (progress) {
			progress(rec);
		}
	}
	result.params = std::move(params);
	return result;
}

namespace {

constexpr std::string_view kPolicyTag = "telemplan-policy";
constexpr int kPolicyVersion = 1;

} // namespace

std::string save_policy(const PolicyParams &params) {
	std::ostringstream out;
	out << kPolicyTag << " " << kPolicyVersion << "\n";
	out << "dims " << params.features << " " << params.embed << " " << params.hidden << "\n";
	for (const auto *t : const_cast<PolicyParams &>(params).tensors()) {
		out << "tensor " << t->name << " " << t->value.rows() << " " << t->value.cols();
		for (Eigen::Index i = 0; i < t->value.size(); ++i) {
			out << " " << textio::format_double(t->value.data()[i]);
		}
		out << "\n";
	}
	out << "end\n";
	return out.str();
}

PolicyParams load_policy(std::string_view text) {
	std::vector<std::vector<std::string_view>> records;
	for (auto line : textio::split(text, '\n')) {
		auto tok = textio::tokenize(line);
		if (!tok.empty()) {
			records.push_back(std::move(tok));
		}
	}
	try {
		if (records.size() < 2 || records[0].size() != 2 || records[0][0] != kPolicyTag) {
			throw PlannerError("policy file: missing header");
		}
		if (textio::parse_int(records[0][1]) != kPolicyVersion) {
			throw PlannerError("policy file: unsupported version");
		}
		if (records[1].size() != 4 || records[1][0] != "dims") {
			throw PlannerError("policy file: missing dims record");
		}
		PolicyParams p = PolicyParams::init(static_cast<int>(textio::parse_int(records[1][2])), static_cast<int>(textio::parse_int(records[1][3])),
		                                    0, static_cast<int>(textio::parse_int(records[1][1])));
		auto tensors = p.tensors();
		if (records.size() != tensors.size() + 3 || records.back().size() != 1 || records.back()[0] != "end") {
			throw PlannerError("policy file: wrong number of tensors");
		}
		for (std::size_t i = 0; i < tensors.size(); ++i) {
			const auto &tok = records[i + 2];
			auto *t = tensors[i];
			if (tok.size() < 4 || tok[0] != "tensor" || tok[1] != t->name) {
				throw PlannerError("policy file: expected tensor " + t->name);
			}
			auto rows = textio::parse_int(tok[2]);
			auto cols = textio::parse_int(tok[3]);
			if (rows != t->value.rows() || cols != t->value.cols() || tok.size() != static_cast<std::size_t>(rows * cols) + 4) {
				throw PlannerError("policy file: tensor " + t->name + " has the wrong shape");
			}
			for (Eigen::Index k = 0; k < t->value.size(); ++k) {
				t->value.data()[k] = textio::parse_double(tok[4 + static_cast<std::size_t>(k)]);
			}
		}
		return p;
	} catch (const std::invalid_argument &e) {
		throw PlannerError(std::string("policy file: ") + e.what());
	}
}

std::string policy_trace_csv(const std::vector<PolicyEpochRecord> &trace) {
	std::ostringstream out;
	out << "epoch,mean_reward,violation_rate,mean_paths,critic_loss,seconds\n";
	for (const auto &r : trace) {
		out << r.epoch << "," << textio::format_double(r.mean_reward) << "," << textio::format_double(r.violation_rate) << ","
		    << textio::format_double(r.mean_paths) << "," << textio::format_double(r.critic_loss) << "," << textio::format_double(r.seconds)
		    << "\n";
	}
	return out.str();
}

} // namespace telemplan
