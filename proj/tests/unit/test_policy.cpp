#include "doctest.h"

#include "telemplan/policy.hpp"

#include <cmath>
#include <random>

using namespace telemplan;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c) {
	std::uniform_real_distribution<double> d(-1.0, 1.0);
	MatrixXd m(r, c);
	for (Eigen::Index i = 0; i < m.size(); ++i) {
		m.data()[i] = d(rng);
	}
	return m;
}

void randomize(PolicyParams &p, std::uint64_t seed) {
	std::mt19937_64 rng(seed);
	for (auto *t : p.tensors()) {
		t->value = random_matrix(rng, t->value.rows(), t->value.cols()) * 0.5;
	}
}

// Scalar-loop transcription of one decoding step.
VectorXd forward_oracle(const PolicyParams &p, const MatrixXd &x, const RowVectorXd &h, const std::vector<char> &mask) {
	const auto n = x.rows();
	MatrixXd xb(n, p.embed);
	for (Eigen::Index i = 0; i < n; ++i) {
		for (int e = 0; e < p.embed; ++e) {
			double s = p.embed_b.value(0, e);
			for (Eigen::Index f = 0; f < x.cols(); ++f) {
				s += x(i, f) * p.embed_w.value(f, e);
			}
			xb(i, e) = s;
		}
	}
	std::vector<double> align(static_cast<std::size_t>(n));
	for (Eigen::Index i = 0; i < n; ++i) {
		double u = 0.0;
		for (int k = 0; k < p.hidden; ++k) {
			double pre = 0.0;
			for (int e = 0; e < p.embed; ++e) {
				pre += xb(i, e) * p.att_wx.value(e, k);
			}
			for (int j = 0; j < p.hidden; ++j) {
				pre += h(j) * p.att_wh.value(j, k);
			}
			u += std::tanh(pre) * p.att_v.value(k, 0);
		}
		align[static_cast<std::size_t>(i)] = u;
	}
	double amax = *std::max_element(align.begin(), align.end());
	double z = 0.0;
	for (double u : align) {
		z += std::exp(u - amax);
	}
	std::vector<double> ctx(static_cast<std::size_t>(p.embed), 0.0);
	for (Eigen::Index i = 0; i < n; ++i) {
		double a = std::exp(align[static_cast<std::size_t>(i)] - amax) / z;
		for (int e = 0; e < p.embed; ++e) {
			ctx[static_cast<std::size_t>(e)] += a * xb(i, e);
		}
	}
	std::vector<double> score(static_cast<std::size_t>(n));
	for (Eigen::Index i = 0; i < n; ++i) {
		double s = 0.0;
		for (int k = 0; k < p.hidden; ++k) {
			double pre = 0.0;
			for (int e = 0; e < p.embed; ++e) {
				pre += xb(i, e) * p.out_wx.value(e, k) + ctx[static_cast<std::size_t>(e)] * p.out_wc.value(e, k);
			}
			s += std::tanh(pre) * p.out_v.value(k, 0);
		}
		score[static_cast<std::size_t>(i)] = s;
	}
	double total = 0.0;
	for (Eigen::Index i = 0; i < n; ++i) {
		if (mask[static_cast<std::size_t>(i)]) {
			total += std::exp(score[static_cast<std::size_t>(i)]);
		}
	}
	VectorXd out = VectorXd::Zero(n);
	for (Eigen::Index i = 0; i < n; ++i) {
		if (mask[static_cast<std::size_t>(i)]) {
			out(i) = std::exp(score[static_cast<std::size_t>(i)]) / total;
		}
	}
	return out;
}

double sigmoid(double x) {
	return 1.0 / (1.0 + std::exp(-x));
}

RowVectorXd gru_oracle(const PolicyParams &p, const MatrixXd &x, const RowVectorXd &h, int row) {
	RowVectorXd xb = x.row(row) * p.embed_w.value + p.embed_b.value;
	RowVectorXd out(p.hidden);
	for (int k = 0; k < p.hidden; ++k) {
		double zk = p.gru_bz.value(0, k);
		for (int e = 0; e < p.embed; ++e) {
			zk += xb(e) * p.gru_wz.value(e, k);
		}
		for (int j = 0; j < p.hidden; ++j) {
			zk += h(j) * p.gru_uz.value(j, k);
		}
		zk = sigmoid(zk);
		double nk = p.gru_bn.value(0, k);
		for (int e = 0; e < p.embed; ++e) {
			nk += xb(e) * p.gru_wn.value(e, k);
		}
		for (int j = 0; j < p.hidden; ++j) {
			double rj = p.gru_br.value(0, j);
			for (int e = 0; e < p.embed; ++e) {
				rj += xb(e) * p.gru_wr.value(e, j);
			}
			for (int i = 0; i < p.hidden; ++i) {
				rj += h(i) * p.gru_ur.value(i, j);
			}
			nk += sigmoid(rj) * h(j) * p.gru_un.value(j, k);
		}
		nk = std::tanh(nk);
		out(k) = (1.0 - zk) * nk + zk * h(k);
	}
	return out;
}

Topology relabel(const Topology &t, const std::vector<NodeId> &perm) {
	std::vector<double> caps(static_cast<std::size_t>(t.node_count()));
	for (int v = 1; v <= t.node_count(); ++v) {
		caps[static_cast<std::size_t>(perm[static_cast<std::size_t>(v)] - 1)] = t.capacity(v);
	}
	std::vector<Edge> edges;
	for (const auto &e : t.edges()) {
		edges.push_back({perm[static_cast<std::size_t>(e.u)], perm[static_cast<std::size_t>(e.v)], e.latency_us});
	}
	return Topology::from_parts(caps, edges);
}

} // namespace

TEST_CASE("policy_forward matches a scalar transcription") {
	auto p = PolicyParams::init(3, 4, 1);
	randomize(p, 2);
	std::mt19937_64 rng(5);
	MatrixXd x = random_matrix(rng, 3, kFeatures);
	RowVectorXd h = random_matrix(rng, 1, 4);
	for (const std::vector<char> &mask : {std::vector<char>{1, 1, 1}, std::vector<char>{1, 0, 1}}) {
		VectorXd got = policy_forward(p, x, h, mask);
		VectorXd expect = forward_oracle(p, x, h, mask);
		CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
		CHECK(got.sum() == doctest::Approx(1.0).epsilon(1e-12));
	}
	CHECK(policy_forward(p, x, h, {1, 0, 1})(1) == 0.0);
	VectorXd only = policy_forward(p, x, h, {0, 1, 0});
	CHECK(only(1) == 1.0);
	CHECK_THROWS_AS(policy_forward(p, x, h, {0, 0, 0}), PlannerError);

	RowVectorXd next = decoder_step(p, x, h, 2);
	CHECK((next - gru_oracle(p, x, h, 2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zeroed output vector gives a uniform distribution over unmasked actions") {
	auto p = PolicyParams::init(8, 8, 3);
	p.out_v.value.setZero();
	std::mt19937_64 rng(1);
	MatrixXd x = random_matrix(rng, 5, kFeatures);
	VectorXd probs = policy_forward(p, x, RowVectorXd::Zero(8), {1, 1, 0, 1, 0});
	CHECK(probs(0) == doctest::Approx(1.0 / 3.0));
	CHECK(probs(1) == doctest::Approx(1.0 / 3.0));
	CHECK(probs(2) == 0.0);
	CHECK(probs(3) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("permuting input rows permutes the output distribution") {
	auto p = PolicyParams::init(6, 6, 4);
	randomize(p, 9);
	std::mt19937_64 rng(2);
	MatrixXd x = random_matrix(rng, 5, kFeatures);
	RowVectorXd h = random_matrix(rng, 1, 6);
	std::vector<char> mask{1, 0, 1, 1, 1};
	std::vector<int> perm{3, 0, 4, 1, 2};
	MatrixXd xp(5, kFeatures);
	std::vector<char> mp(5);
	for (int i = 0; i < 5; ++i) {
		xp.row(i) = x.row(perm[i]);
		mp[static_cast<std::size_t>(i)] = mask[static_cast<std::size_t>(perm[i])];
	}
	VectorXd a = policy_forward(p, x, h, mask);
	VectorXd b = policy_forward(p, xp, h, mp);
	for (int i = 0; i < 5; ++i) {
		CHECK(b(i) == doctest::Approx(a(perm[i])).epsilon(1e-12));
	}
}

TEST_CASE("relabeling the nodes gives the relabeled greedy plan") {
	auto p = PolicyParams::init(16, 16, 3);
	for (std::uint64_t seed = 1; seed <= 8; ++seed) {
		RandomTopologyConfig rc;
		rc.nodes = 9;
		Topology t = random_topology(rc, seed);
		std::vector<NodeId> perm{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
		std::mt19937_64 rng(seed);
		std::shuffle(perm.begin() + 1, perm.end(), rng);
		std::vector<NodeId> targets{2, 4, 7, 9};
		std::vector<NodeId> moved;
		for (NodeId v : targets) {
			moved.push_back(perm[static_cast<std::size_t>(v)]);
		}
		PlannerConfig cfg;
		cfg.t_max = 20;
		auto a = decode_greedy(p, PlanningInstance::whole(t, targets), cfg);
		auto b = decode_greedy(p, PlanningInstance::whole(relabel(t, perm), moved), cfg);
		REQUIRE(a.actions.size() == b.actions.size());
		for (std::size_t i = 0; i < a.actions.size(); ++i) {
			CHECK(perm[static_cast<std::size_t>(a.actions[i])] == b.actions[i]);
		}
		CHECK(a.log_prob == doctest::Approx(b.log_prob).epsilon(1e-9));
	}
}

TEST_CASE("greedy decoding on small instances") {
	auto p = PolicyParams::init(16, 16, 7);
	PlannerConfig cfg;
	cfg.t_max = 100;
	Topology line = Topology::from_parts({1, 1, 1}, {{1, 2, 1}, {2, 3, 1}});
	auto r = decode_greedy(p, PlanningInstance::whole(line, {1, 3}), cfg);
	CHECK(r.plan.K() == 1);
	CHECK(r.score.coverage == 1.0);
	CHECK((r.plan.paths[0].nodes == std::vector<NodeId>{1, 2, 3} || r.plan.paths[0].nodes == std::vector<NodeId>{3, 2, 1}));

	Topology tri = Topology::from_parts({1, 1, 1}, {{1, 2, 1}, {2, 3, 1}, {1, 3, 1}});
	CHECK(decode_greedy(p, PlanningInstance::whole(tri, {1, 2, 3}), cfg).plan.K() == 1);

	PlannerConfig tight = cfg;
	tight.t_max = 0.5;
	auto split = decode_greedy(p, PlanningInstance::whole(tri, {1, 2, 3}), tight);
	CHECK(split.plan.K() == 3);
	CHECK_FALSE(split.score.flag);
}

TEST_CASE("scaling a leaves the greedy plan unchanged") {
	auto p = PolicyParams::init(16, 16, 2);
	Topology t = random_topology({12, 3.0, 1, 10, 100.0}, 3);
	auto inst = PlanningInstance::whole(t, {1, 5, 9, 12});
	PlannerConfig cfg;
	cfg.t_max = 15;
	auto a = decode_greedy(p, inst, cfg);
	cfg.a = 4.0;
	auto b = decode_greedy(p, inst, cfg);
	CHECK(a.plan == b.plan);
	CHECK(b.score.C == doctest::Approx(4.0 * a.score.C));
}

TEST_CASE("sequence_log_prob gradient matches central differences") {
	auto p = PolicyParams::init(4, 5, 11);
	randomize(p, 12);
	Topology t = random_topology({6, 3.0, 1, 10, 100.0}, 4);
	auto inst = PlanningInstance::whole(t, {1, 4, 6});
	PlannerConfig cfg;
	cfg.t_max = 12;
	auto rollout = decode_sample(p, inst, cfg, 3);
	REQUIRE(rollout.actions.size() >= 3);
	CHECK(sequence_log_prob(p, inst, cfg, rollout.actions, false) == doctest::Approx(rollout.log_prob).epsilon(1e-12));

	for (auto *t : p.tensors()) {
		t->zero_grad();
	}
	sequence_log_prob(p, inst, cfg, rollout.actions, true);
	const double h = 1e-6;
	double worst = 0.0;
	for (auto *tensor : p.actor_tensors()) {
		for (Eigen::Index i = 0; i < tensor->value.size(); ++i) {
			double keep = tensor->value.data()[i];
			tensor->value.data()[i] = keep + h;
			double up = sequence_log_prob(p, inst, cfg, rollout.actions, false);
			tensor->value.data()[i] = keep - h;
			double down = sequence_log_prob(p, inst, cfg, rollout.actions, false);
			tensor->value.data()[i] = keep;
			double numeric = (up - down) / (2 * h);
			double analytic = tensor->grad.data()[i];
			worst = std::max(worst, std::abs(numeric - analytic) / std::max(1e-3, std::abs(numeric) + std::abs(analytic)));
		}
	}
	CHECK(worst < 1e-4);

	std::vector<NodeId> bad = rollout.actions;
	bad.push_back(1);
	CHECK_THROWS_AS(sequence_log_prob(p, inst, cfg, bad, false), PlannerError);
}

TEST_CASE("a single-action environment is decoded with certainty") {
	Subnetwork s;
	s.nodes = {2};
	s.terminals = {2};
	auto inst = PlanningInstance::make(Topology::from_parts({1, 1}, {{1, 2, 1}}), s);
	PlannerConfig cfg;
	cfg.epochs = 2;
	cfg.batch = 4;
	auto trained = train_policy(PolicyParams::init(8, 8, 1), {inst, inst, inst, inst}, cfg);
	auto r = decode_greedy(trained.params, inst, cfg);
	CHECK(r.min_chosen_prob >= 0.99);
	CHECK(r.plan.K() == 1);
	CHECK(trained.trace.size() == 2);
}

TEST_CASE("training finds one-path plans on 4-node cycles") {
	Topology square = Topology::from_parts({1, 1, 1, 1}, {{1, 2, 1}, {2, 3, 1}, {3, 4, 1}, {1, 4, 1}});
	InstanceGenerator gen;
	gen.fixed_topology = square;
	gen.min_terminals = 2;
	gen.max_terminals = 4;
	gen.prune = false;
	auto target = PlanningInstance::whole(square, {1, 2, 3, 4});
	int hits = 0;
	const int seeds = 50;
	for (int seed = 1; seed <= seeds; ++seed) {
		PlannerConfig cfg;
		cfg.t_max = 10;
		cfg.embed = 16;
		cfg.hidden = 16;
		cfg.epochs = 10;
		cfg.batch = 16;
		cfg.seed = static_cast<std::uint64_t>(seed);
		auto trained =
		    train_policy(PolicyParams::init(16, 16, static_cast<std::uint64_t>(seed)), gen.batch(200, static_cast<std::uint64_t>(seed)), cfg);
		hits += decode_greedy(trained.params, target, cfg).plan.K() == 1 ? 1 : 0;
	}
	CHECK(optimal_path_count(target, 10) == 1);
	CAPTURE(hits);
	CHECK(hits >= 45);
}

TEST_CASE("policy file round trip") {
	auto p = PolicyParams::init(5, 7, 3);
	randomize(p, 4);
	std::string text = save_policy(p);
	PolicyParams q = load_policy(text);
	CHECK(q.embed == 5);
	CHECK(q.hidden == 7);
	for (std::size_t i = 0; i < p.tensors().size(); ++i) {
		CHECK(q.tensors()[i]->value == p.tensors()[i]->value);
	}
	CHECK(save_policy(q) == text);
	CHECK_THROWS_AS(load_policy("telemplan-policy 1\n"), PlannerError);
}

TEST_CASE("critic value is a finite scalar") {
	auto p = PolicyParams::init(4, 4, 1);
	std::mt19937_64 rng(1);
	MatrixXd x = random_matrix(rng, 6, kFeatures);
	CHECK(std::isfinite(critic_value(p, x)));
}
