#include "doctest.h"

#include "../oracles.hpp"

#include "telemplan/baselines.hpp"
#include "telemplan/planner.hpp"

#include <random>

using namespace telemplan;

namespace {

Topology path3(double l12 = 1, double l23 = 1) {
	return Topology::from_parts({100, 100, 100}, {{1, 2, l12}, {2, 3, l23}});
}

Topology triangle() {
	return Topology::from_parts({100, 100, 100}, {{1, 2, 1}, {2, 3, 1}, {1, 3, 1}});
}

Topology cycle(int n) {
	std::vector<double> caps(static_cast<std::size_t>(n), 100.0);
	std::vector<Edge> edges;
	for (int i = 1; i <= n; ++i) {
		edges.push_back({i, i % n + 1, 2.0});
	}
	return Topology::from_parts(caps, edges);
}

PlannerConfig budget(double t_max) {
	PlannerConfig cfg;
	cfg.t_max = t_max;
	return cfg;
}

std::vector<NodeId> unmasked(const std::vector<char> &mask) {
	std::vector<NodeId> out;
	for (std::size_t i = 0; i < mask.size(); ++i) {
		if (mask[i]) {
			out.push_back(static_cast<NodeId>(i));
		}
	}
	return out;
}

} // namespace

TEST_CASE("planning instance layout") {
	auto inst = PlanningInstance::whole(path3(), {3, 1, 3});
	CHECK(inst.terminals() == std::vector<NodeId>{1, 3});
	CHECK(inst.actions == std::vector<NodeId>{0, 1, 2, 3});
	CHECK(inst.row_of(0) == 0);
	CHECK(inst.row_of(2) == 2);
	CHECK(inst.row_of(4) == -1);
	CHECK(inst.dist[1][3] == 2.0);

	Subnetwork s;
	s.nodes = {1, 2};
	s.edges = {0};
	s.terminals = {3};
	CHECK_THROWS_AS(PlanningInstance::make(path3(), s), PlannerError);
}

TEST_CASE("encoding lists every subnet node plus the new-path token") {
	auto inst = PlanningInstance::whole(path3(), {1, 3});
	auto enc = encode_instance(inst, PlannerConfig{});
	CHECK(enc.inputs.size() == 4);
	CHECK(enc.static_features.rows() == 4);
	CHECK(enc.static_features(0, 0) == 1.0);

	Topology star = Topology::from_parts({1, 1, 1, 1, 1}, {{1, 2, 1}, {2, 3, 4}, {2, 5, 7}, {4, 5, 1}});
	auto si = PlanningInstance::whole(star, {2});
	auto se = encode_instance(si, PlannerConfig{});
	const auto &in3 = se.inputs[static_cast<std::size_t>(si.row_of(3))];
	REQUIRE(in3.neighbors.size() == 1);
	CHECK(in3.neighbors[0] == std::pair<NodeId, double>{2, 4.0});
	const auto &in5 = se.inputs[static_cast<std::size_t>(si.row_of(5))];
	std::vector<std::pair<NodeId, double>> n5(in5.neighbors.begin(), in5.neighbors.end());
	std::sort(n5.begin(), n5.end());
	CHECK(n5 == std::vector<std::pair<NodeId, double>>{{2, 7.0}, {4, 1.0}});
}

TEST_CASE("feasible mask rules") {
	auto inst = PlanningInstance::whole(path3(), {1, 3});
	PlannerConfig cfg = budget(30);
	EpisodeState s = initial_state(inst);
	CHECK(unmasked(feasible_mask(s, inst, cfg)) == std::vector<NodeId>{1, 3});
	s = step(s, 1, inst, cfg);
	s = step(s, 2, inst, cfg);
	CHECK(s.current == 2);
	CHECK(s.uncovered == std::vector<NodeId>{3});
	// node 1 is covered and visited, so only 3 and the close action remain
	CHECK(unmasked(feasible_mask(s, inst, cfg)) == std::vector<NodeId>{0, 3});
	CHECK_THROWS_AS(step(s, 1, inst, cfg), PlannerError);

	s = step(s, 3, inst, cfg);
	CHECK(s.terminal());
	CHECK(unmasked(feasible_mask(s, inst, cfg)).empty());

	// budget rule: the 2-3 link does not fit after 1-2
	auto tight = PlanningInstance::whole(path3(2, 2), {1, 3});
	EpisodeState t = step(initial_state(tight), 1, tight, budget(3));
	t = step(t, 2, tight, budget(3));
	CHECK(unmasked(feasible_mask(t, tight, budget(3))) == std::vector<NodeId>{0});
}

TEST_CASE("transit through covered nodes only when nothing else is reachable") {
	// star: 1 is the hub, leaves 2 and 3
	Topology star = Topology::from_parts({1, 1, 1}, {{1, 2, 1}, {1, 3, 1}});
	auto inst = PlanningInstance::whole(star, {2, 3});
	PlannerConfig cfg = budget(30);
	EpisodeState s = step(initial_state(inst), 2, inst, cfg);
	s = step(s, 1, inst, cfg);
	s = step(s, 0, inst, cfg);
	s = step(s, 3, inst, cfg);
	CHECK(s.terminal());

	EpisodeState u = step(initial_state(inst), 2, inst, cfg);
	u = step(u, 1, inst, cfg);
	u = step(u, 3, inst, cfg);
	CHECK(u.terminal());
	CHECK(finish_plan(u).paths.front().nodes == std::vector<NodeId>{2, 1, 3});

	// dead end at leaf 2 after visiting 1: transit back to 1 is allowed
	auto inst4 = PlanningInstance::whole(Topology::from_parts({1, 1, 1}, {{1, 2, 1}, {1, 3, 1}}), {3});
	EpisodeState w = step(initial_state(inst4), 3, inst4, cfg);
	CHECK(w.terminal());

	Topology line4 = Topology::from_parts({1, 1, 1, 1}, {{1, 2, 1}, {2, 3, 1}, {2, 4, 1}});
	auto li = PlanningInstance::whole(line4, {1, 3, 4});
	EpisodeState a = step(initial_state(li), 3, li, cfg);
	a = step(a, 2, li, cfg);
	a = step(a, 4, li, cfg);
	CHECK(unmasked(feasible_mask(a, li, cfg)) == std::vector<NodeId>{0, 2});
	PlannerConfig strict = cfg;
	strict.allow_transit = false;
	CHECK(unmasked(feasible_mask(a, li, strict)) == std::vector<NodeId>{0});
}

TEST_CASE("step bookkeeping") {
	Topology t = Topology::from_parts({1, 1, 1}, {{1, 2, 5}, {2, 3, 1}});
	auto inst = PlanningInstance::whole(t, {1, 2, 3});
	PlannerConfig cfg = budget(30);
	EpisodeState s = step(initial_state(inst), 1, inst, cfg);
	s = step(s, 2, inst, cfg);
	CHECK(s.current_path == std::vector<NodeId>{1, 2});
	CHECK(s.current_path_latency == 5.0);
	s = step(s, 0, inst, cfg);
	CHECK(s.current == 0);
	REQUIRE(s.partial.paths.size() == 1);
	CHECK(s.partial.paths[0].nodes == std::vector<NodeId>{1, 2});
	CHECK(s.partial.covered == std::vector<NodeId>{1, 2});
	s = step(s, 3, inst, cfg);
	CHECK(s.terminal());
	ProbePlan plan = finish_plan(s);
	CHECK(plan.K() == 2);
	CHECK(plan.covered == std::vector<NodeId>{1, 2, 3});
	CHECK(s.steps == 4);
}

TEST_CASE("latency, overhead and reward") {
	Topology t = Topology::from_parts({1, 1, 1, 1}, {{1, 2, 1}, {2, 3, 2}, {3, 4, 5}});
	ProbePlan one = make_plan(t, {{1, 2, 3}});
	CHECK(plan_latency(one) == 3.0);
	ProbePlan two = make_plan(t, {{1, 2, 3}, {3, 4}});
	CHECK(plan_latency(two) == 5.0);
	std::vector<Diagnostic> d;
	CHECK(plan_latency(ProbePlan{}, &d) == 0.0);
	REQUIRE(d.size() == 1);
	CHECK(d[0].code == "empty-plan");

	ProbePlan four = make_plan(t, {{1}, {2}, {3}, {4}});
	CHECK(control_overhead(four, 1.0) == 4.0);
	CHECK(control_overhead(two, 2.5) == 5.0);
	CHECK(control_overhead(ProbePlan{}, 3.0) == 0.0);

	PlannerConfig cfg = budget(5.0);
	CHECK(reward(two, cfg, 4) == 2.0); // T == T_max is feasible
	CHECK_FALSE(score_plan(two, {1, 4}, cfg, 4).flag);
	cfg.t_max = 4.0;
	cfg.lambda = 1000.0;
	CHECK(reward(two, cfg, 4) == 1002.0);
	cfg.lambda = 0.0;
	CHECK(cfg.lambda_for(4) == 4e4);

	// random plans: latency equals the largest per-path sum
	std::mt19937_64 rng(3);
	Topology r = random_topology({12, 3.0, 1, 10, 100.0}, 9);
	for (int rep = 0; rep < 20; ++rep) {
		std::vector<std::vector<NodeId>> walks;
		double expect = 0.0;
		for (int k = 0; k < 3; ++k) {
			std::vector<NodeId> w{static_cast<NodeId>(1 + rng() % 12)};
			double len = 0.0;
			for (int s = 0; s < 4; ++s) {
				auto nb = r.neighbors(w.back());
				const auto &pick = nb[rng() % nb.size()];
				len += pick.latency_us;
				w.push_back(pick.node);
			}
			expect = std::max(expect, len);
			walks.push_back(w);
		}
		CHECK(plan_latency(make_plan(r, walks)) == expect);
	}
}

TEST_CASE("plan file round trip keeps the recorded score") {
	Topology t = random_topology({10, 3.0, 1, 10, 100.0}, 2);
	auto inst = PlanningInstance::whole(t, {2, 5, 9});
	PlannerConfig cfg = budget(25);
	ProbePlan plan = netview_plan(inst, cfg);
	auto before = score_plan(plan, inst.terminals(), cfg, t.node_count());
	auto file = read_plan(write_plan(plan, t, {{"method", "netview"}}), t);
	CHECK(file.meta.at("method") == "netview");
	CHECK(file.plan == plan);
	auto after = score_plan(file.plan, inst.terminals(), cfg, t.node_count());
	CHECK(after.flag == before.flag);
	CHECK(after.C == doctest::Approx(before.C).epsilon(1e-9));
	CHECK(check_plan(file.plan, t, inst.terminals()).empty());
}

TEST_CASE("check_plan reports broken plans") {
	Topology t = path3();
	ProbePlan bad = make_plan(t, {{1, 2}});
	auto d = check_plan(bad, t, {1, 3});
	CHECK_FALSE(d.empty());
	ProbePlan jump;
	jump.paths.push_back(Path{{1, 3}, 2.0});
	jump.covered = {1, 3};
	CHECK_FALSE(check_plan(jump, t, {1, 3}).empty());
}

TEST_CASE("optimal path count matches the partition oracle") {
	for (std::uint64_t seed = 1; seed <= 15; ++seed) {
		Topology t = random_topology({9, 3.0, 1, 10, 100.0}, seed);
		std::vector<NodeId> terms{1, 3, 5, 7, 9};
		terms.resize(2 + seed % 4);
		auto inst = PlanningInstance::whole(t, terms);
		for (double t_max : {5.0, 12.0, 30.0}) {
			auto fw = oracle::floyd_warshall(t);
			CHECK(optimal_path_count(inst, t_max) == oracle::min_walk_cover(fw, inst.terminals(), t_max));
		}
	}
}

TEST_CASE("dfs and euler baselines cover the whole topology") {
	Topology c = cycle(6);
	ProbePlan e = euler_plan(c);
	CHECK(e.K() == 1);
	CHECK(e.covered.size() == 6);
	CHECK(e.paths[0].nodes.size() == 7);

	for (std::uint64_t seed = 1; seed <= 10; ++seed) {
		Topology t = random_topology({15, 3.0, 1, 10, 100.0}, seed);
		for (const ProbePlan &p : {dfs_plan(t), euler_plan(t)}) {
			CHECK(p.covered.size() == 15);
			std::vector<NodeId> all;
			for (int v = 1; v <= 15; ++v) {
				all.push_back(v);
			}
			CHECK(check_plan(p, t, all).empty());
		}
		// every link appears exactly once across the Euler trails
		std::map<std::pair<NodeId, NodeId>, int> used;
		for (const auto &p : euler_plan(t).paths) {
			for (std::size_t i = 1; i < p.nodes.size(); ++i) {
				++used[std::minmax(p.nodes[i - 1], p.nodes[i])];
			}
		}
		CHECK(used.size() == t.edge_count());
		for (auto [k, n] : used) {
			CHECK(n == 1);
		}
	}
}

TEST_CASE("netview baseline") {
	Topology c = cycle(5);
	auto single = PlanningInstance::whole(c, {3});
	ProbePlan p = netview_plan(single, budget(30));
	REQUIRE(p.K() == 1);
	CHECK(p.paths[0].nodes == std::vector<NodeId>{3});

	for (std::uint64_t seed = 1; seed <= 10; ++seed) {
		Topology t = random_topology({12, 3.0, 1, 10, 100.0}, seed);
		auto inst = PlanningInstance::whole(t, {1, 4, 8, 12});
		PlannerConfig cfg = budget(15);
		ProbePlan q = netview_plan(inst, cfg);
		CHECK(check_plan(q, t, inst.terminals()).empty());
		CHECK(plan_latency(q) <= cfg.t_max);
	}
}

TEST_CASE("annealing with a large budget reaches the exhaustive optimum") {
	for (std::uint64_t seed = 1; seed <= 10; ++seed) {
		Topology t = random_topology({5, 2.8, 1, 10, 100.0}, seed);
		auto inst = PlanningInstance::whole(t, {1, 2, 3, 4, 5});
		PlannerConfig cfg = budget(12);
		AnnealingConfig sa;
		sa.iterations = 20000;
		sa.seed = seed;
		ProbePlan p = annealing_plan(inst, cfg, sa);
		auto score = score_plan(p, inst.terminals(), cfg, 5);
		CHECK_FALSE(score.flag);
		CHECK(score.coverage == 1.0);
		CHECK(score.K == oracle::min_walk_cover(oracle::floyd_warshall(t), inst.terminals(), cfg.t_max));

		PlannerConfig scaled = cfg;
		scaled.a = 7.5;
		ProbePlan ps = annealing_plan(inst, scaled, sa);
		CHECK(ps == p);
	}
}

TEST_CASE("baseline names") {
	CHECK(parse_baseline("sa") == BaselineMethod::sa);
	CHECK(to_string(BaselineMethod::euler) == "euler");
	CHECK_THROWS(parse_baseline("greedy"));
}
