#include "telemplan/planner.hpp"

#include "telemplan/textio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace telemplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool sorted_contains(const std::vector<NodeId> &v, NodeId x) {
	return std::binary_search(v.begin(), v.end(), x);
}

} // namespace

double PlannerConfig::lambda_for(int node_count) const {
	return lambda > 0.0 ? lambda : 1e4 * a * static_cast<double>(node_count);
}

void check_planner_config(const PlannerConfig &cfg) {
	if (!(cfg.a > 0.0) || !std::isfinite(cfg.a)) {
		throw PlannerError("planner config: a must be positive");
	}
	if (!(cfg.t_max > 0.0) || !std::isfinite(cfg.t_max)) {
		throw PlannerError("planner config: T_max must be positive");
	}
	if (cfg.lambda < 0.0) {
		throw PlannerError("planner config: lambda must be non-negative");
	}
	if (cfg.embed < 1 || cfg.hidden < 1 || cfg.batch < 1 || cfg.epochs < 1 || cfg.instances < 1) {
		throw PlannerError("planner config: dimensions, batch, epochs and instances must be >= 1");
	}
	if (!(cfg.actor_lr >= 0.0) || !(cfg.critic_lr >= 0.0)) {
		throw PlannerError("planner config: learning rates must be non-negative");
	}
}

PlanningInstance PlanningInstance::make(Topology topo, Subnetwork subnet) {
	PlanningInstance inst;
	for (NodeId v : subnet.terminals) {
		if (!subnet.has_node(v)) {
			throw PlannerError("target switch " + std::to_string(v) + " is outside the subnetwork");
		}
	}
	if (subnet.terminals.empty()) {
		throw PlannerError("no target switches to cover");
	}
	inst.sub_topo = edge_subgraph(topo, subnet.edges);
	inst.actions.push_back(0);
	inst.actions.insert(inst.actions.end(), subnet.nodes.begin(), subnet.nodes.end());
	const auto n = static_cast<std::size_t>(topo.node_count());
	inst.dist.assign(n + 1, std::vector<double>(n + 1, kInf));
	for (NodeId v : subnet.nodes) {
		auto d = distances_from(inst.sub_topo, v);
		for (NodeId w : subnet.nodes) {
			inst.dist[static_cast<std::size_t>(v)][static_cast<std::size_t>(w)] = d[static_cast<std::size_t>(w)];
		}
	}
	for (NodeId v : subnet.terminals) {
		for (NodeId w : subnet.terminals) {
			if (!std::isfinite(inst.dist[static_cast<std::size_t>(v)][static_cast<std::size_t>(w)])) {
				throw PlannerError("target switches are not connected inside the subnetwork");
			}
		}
	}
	inst.topo = std::move(topo);
	inst.subnet = std::move(subnet);
	return inst;
}

PlanningInstance PlanningInstance::whole(Topology topo, std::vector<NodeId> terminals) {
	Subnetwork s;
	for (NodeId v = 1; v <= topo.node_count(); ++v) {
		s.nodes.push_back(v);
	}
	for (std::size_t e = 0; e < topo.edge_count(); ++e) {
		s.edges.push_back(e);
	}
	std::sort(terminals.begin(), terminals.end());
	terminals.erase(std::unique(terminals.begin(), terminals.end()), terminals.end());
	s.terminals = std::move(terminals);
	return make(std::move(topo), std::move(s));
}

int PlanningInstance::row_of(NodeId v) const {
	if (v == 0) {
		return 0;
	}
	auto it = std::lower_bound(actions.begin() + 1, actions.end(), v);
	return it != actions.end() && *it == v ? static_cast<int>(it - actions.begin()) : -1;
}

InstanceEncoding encode_instance(const PlanningInstance &inst, const PlannerConfig &cfg) {
	InstanceEncoding enc;
	const int rows = inst.action_count();
	enc.static_features = Eigen::MatrixXd::Zero(rows, kStaticFeatures);
	enc.inputs.resize(static_cast<std::size_t>(rows));
	enc.static_features(0, 0) = 1.0;
	for (int r = 1; r < rows; ++r) {
		NodeId v = inst.actions[static_cast<std::size_t>(r)];
		auto &in = enc.inputs[static_cast<std::size_t>(r)];
		in.node = v;
		std::vector<double> lats;
		for (const auto &nb : inst.sub_topo.neighbors(v)) {
			in.neighbors.emplace_back(nb.node, nb.latency_us);
			lats.push_back(nb.latency_us);
		}
		std::sort(lats.begin(), lats.end());
		auto f = enc.static_features.row(r);
		f(1) = sorted_contains(inst.terminals(), v) ? 1.0 : 0.0;
		f(2) = static_cast<double>(lats.size()) / 4.0;
		if (!lats.empty()) {
			double sum = 0.0;
			for (double l : lats) {
				sum += l;
			}
			f(3) = sum / static_cast<double>(lats.size()) / cfg.t_max;
			f(4) = lats.front() / cfg.t_max;
		}
		for (std::size_t p = 0; p < 4 && p < lats.size(); ++p) {
			f(5 + static_cast<Eigen::Index>(p)) = lats[p] / cfg.t_max;
			f(9 + static_cast<Eigen::Index>(p)) = 1.0;
		}
	}
	return enc;
}

EpisodeState initial_state(const PlanningInstance &inst) {
	EpisodeState s;
	s.uncovered = inst.terminals();
	s.visited.assign(static_cast<std::size_t>(inst.topo.node_count() + 1), 0);
	return s;
}

std::vector<char> feasible_mask(const EpisodeState &state, const PlanningInstance &inst, const PlannerConfig &cfg) {
	std::vector<char> mask(static_cast<std::size_t>(inst.topo.node_count() + 1), 0);
	if (state.terminal()) {
		return mask;
	}
	if (state.current == 0) {
		for (NodeId v : state.uncovered) {
			mask[static_cast<std::size_t>(v)] = 1;
		}
		return mask;
	}
	bool any = false;
	for (const auto &nb : inst.sub_topo.neighbors(state.current)) {
		if (!state.visited[static_cast<std::size_t>(nb.node)] && state.current_path_latency + nb.latency_us <= cfg.t_max) {
			mask[static_cast<std::size_t>(nb.node)] = 1;
			any = true;
		}
	}
	if (!any && cfg.allow_transit) {
		for (const auto &nb : inst.sub_topo.neighbors(state.current)) {
			if (state.current_path_latency + nb.latency_us <= cfg.t_max) {
				mask[static_cast<std::size_t>(nb.node)] = 1;
			}
		}
	}
	mask[0] = state.current_path.empty() ? 0 : 1;
	return mask;
}

std::vector<char> row_mask(const std::vector<char> &full_mask, const PlanningInstance &inst) {
	std::vector<char> out(inst.actions.size(), 0);
	for (std::size_t r = 0; r < inst.actions.size(); ++r) {
		out[r] = full_mask[static_cast<std::size_t>(inst.actions[r])];
	}
	return out;
}

namespace {

Path close_path(const EpisodeState &s) {
	return Path{s.current_path, s.current_path_latency};
}

void add_covered(ProbePlan &plan, const std::vector<NodeId> &nodes) {
	std::set<NodeId> c(plan.covered.begin(), plan.covered.end());
	c.insert(nodes.begin(), nodes.end());
	plan.covered.assign(c.begin(), c.end());
}

} // namespace

EpisodeState step(const EpisodeState &state, NodeId action, const PlanningInstance &inst, const PlannerConfig &cfg) {
	auto mask = feasible_mask(state, inst, cfg);
	if (action < 0 || static_cast<std::size_t>(action) >= mask.size() || !mask[static_cast<std::size_t>(action)]) {
		throw PlannerError("action " + std::to_string(action) + " is masked in the current state");
	}
	EpisodeState s = state;
	++s.steps;
	if (action == 0) {
		s.partial.paths.push_back(close_path(s));
		add_covered(s.partial, s.current_path);
		s.current_path.clear();
		s.current_path_latency = 0.0;
		s.current = 0;
		return s;
	}
	if (s.current != 0) {
		s.current_path_latency += *inst.sub_topo.latency(s.current, action);
	}
	s.current_path.push_back(action);
	s.current = action;
	s.visited[static_cast<std::size_t>(action)] = 1;
	auto it = std::lower_bound(s.uncovered.begin(), s.uncovered.end(), action);
	if (it != s.uncovered.end() && *it == action) {
		s.uncovered.erase(it);
	}
	return s;
}

ProbePlan finish_plan(const EpisodeState &state) {
	ProbePlan plan = state.partial;
	if (!state.current_path.empty()) {
		plan.paths.push_back(close_path(state));
		add_covered(plan, state.current_path);
	}
	return plan;
}

Eigen::MatrixXd state_features(const PlanningInstance &inst, const InstanceEncoding &enc, const EpisodeState &state,
                               const std::vector<char> &rows_mask, const PlannerConfig &cfg) {
	const int rows = inst.action_count();
	Eigen::MatrixXd x(rows, kFeatures);
	x.leftCols(kStaticFeatures) = enc.static_features;
	auto dyn = x.rightCols(kDynamicFeatures);
	dyn.setZero();
	const double remaining = std::max(0.0, cfg.t_max - state.current_path_latency) / cfg.t_max;
	const double frac =
	    inst.terminals().empty() ? 0.0 : static_cast<double>(state.uncovered.size()) / static_cast<double>(inst.terminals().size());
	const bool at_start = state.current == 0;
	std::set<NodeId> in_path(state.current_path.begin(), state.current_path.end());
	for (int r = 0; r < rows; ++r) {
		NodeId v = inst.actions[static_cast<std::size_t>(r)];
		auto d = dyn.row(r);
		d(6) = remaining;
		d(8) = frac;
		d(9) = at_start ? 1.0 : 0.0;
		d(10) = rows_mask[static_cast<std::size_t>(r)] ? 1.0 : 0.0;
		d(11) = 1.0;
		if (v == 0) {
			continue;
		}
		auto vi = static_cast<std::size_t>(v);
		d(0) = sorted_contains(state.uncovered, v) ? 1.0 : 0.0;
		d(1) = state.visited[vi] ? 1.0 : 0.0;
		d(2) = v == state.current ? 1.0 : 0.0;
		if (!at_start) {
			if (auto lat = inst.sub_topo.latency(state.current, v)) {
				d(3) = 1.0;
				d(4) = *lat / cfg.t_max;
			}
			d(12) = std::min(2.0, inst.dist[static_cast<std::size_t>(state.current)][vi] / cfg.t_max);
		}
		d(5) = in_path.count(v) ? 1.0 : 0.0;
		double nearest = kInf;
		for (NodeId u : state.uncovered) {
			nearest = std::min(nearest, inst.dist[vi][static_cast<std::size_t>(u)]);
		}
		d(7) = std::min(2.0, nearest / cfg.t_max);
	}
	return x;
}

double plan_latency(const ProbePlan &plan, std::vector<Diagnostic> *diagnostics) {
	if (plan.paths.empty()) {
		if (diagnostics) {
			diagnostics->push_back({"empty-plan", ""});
		}
		return 0.0;
	}
	double t = 0.0;
	for (const auto &p : plan.paths) {
		t = std::max(t, p.total_latency);
	}
	return t;
}

double control_overhead(const ProbePlan &plan, double a) {
	return a * static_cast<double>(plan.K());
}

PlanScore score_plan(const ProbePlan &plan, const std::vector<NodeId> &terminals, const PlannerConfig &cfg, int node_count) {
	PlanScore s;
	s.K = plan.K();
	s.C = control_overhead(plan, cfg.a);
	s.T = plan_latency(plan);
	s.flag = s.T > cfg.t_max;
	s.reward = s.C + (s.flag ? cfg.lambda_for(node_count) : 0.0);
	std::size_t hit = 0;
	for (NodeId v : terminals) {
		hit += sorted_contains(plan.covered, v) ? 1 : 0;
	}
	s.coverage = terminals.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(terminals.size());
	return s;
}

double reward(const ProbePlan &plan, const PlannerConfig &cfg, int node_count) {
	return score_plan(plan, {}, cfg, node_count).reward;
}

ProbePlan make_plan(const Topology &topo, const std::vector<std::vector<NodeId>> &walks) {
	ProbePlan plan;
	for (const auto &w : walks) {
		if (w.empty()) {
			throw PlannerError("plan contains an empty path");
		}
		for (NodeId v : w) {
			if (!topo.contains(v)) {
				throw PlannerError("plan references unknown switch " + std::to_string(v));
			}
		}
		Path p;
		p.nodes = w;
		p.total_latency = path_latency(topo, w);
		plan.paths.push_back(std::move(p));
		add_covered(plan, w);
	}
	return plan;
}

std::vector<Diagnostic> check_plan(const ProbePlan &plan, const Topology &topo, const std::vector<NodeId> &terminals) {
	std::vector<Diagnostic> out;
	std::set<NodeId> covered;
	for (std::size_t k = 0; k < plan.paths.size(); ++k) {
		const auto &p = plan.paths[k];
		if (p.nodes.empty()) {
			out.push_back({"empty-path", std::to_string(k)});
			continue;
		}
		double sum = 0.0;
		bool linked = true;
		for (std::size_t i = 0; i < p.nodes.size(); ++i) {
			covered.insert(p.nodes[i]);
			if (i + 1 < p.nodes.size()) {
				auto lat = topo.latency(p.nodes[i], p.nodes[i + 1]);
				if (!lat) {
					out.push_back({"not-a-link", std::to_string(p.nodes[i]) + "-" + std::to_string(p.nodes[i + 1])});
					linked = false;
				} else {
					sum += *lat;
				}
			}
		}
		if (linked && !nearly_equal(sum, p.total_latency)) {
			out.push_back({"latency-mismatch", std::to_string(k)});
		}
	}
	if (std::vector<NodeId>(covered.begin(), covered.end()) != plan.covered) {
		out.push_back({"covered-mismatch", ""});
	}
	for (NodeId v : terminals) {
		if (!covered.count(v)) {
			out.push_back({"uncovered-target", std::to_string(v)});
		}
	}
	return out;
}

std::string write_plan(const ProbePlan &plan, const Topology &topo, const std::map<std::string, std::string> &meta) {
	std::ostringstream out;
	for (const auto &[k, v] : meta) {
		out << "# " << k << " " << v << "\n";
	}
	for (const auto &p : plan.paths) {
		for (std::size_t i = 0; i < p.nodes.size(); ++i) {
			out << (i ? " " : "") << topo.external_id(p.nodes[i]);
		}
		out << "\n";
	}
	return out.str();
}

PlanFile read_plan(std::string_view text, const Topology &topo) {
	PlanFile f;
	std::vector<std::vector<NodeId>> walks;
	int line_no = 0;
	for (auto raw : textio::split(text, '\n')) {
		++line_no;
		auto line = textio::trim(raw);
		if (line.empty()) {
			continue;
		}
		if (line.front() == '#') {
			auto body = textio::trim(line.substr(1));
			auto space = body.find_first_of(" \t");
			if (space == std::string_view::npos) {
				f.meta[std::string(body)] = "";
			} else {
				f.meta[std::string(body.substr(0, space))] = std::string(textio::trim(body.substr(space)));
			}
			continue;
		}
		std::vector<NodeId> walk;
		for (auto tok : textio::tokenize(line)) {
			std::optional<NodeId> v;
			try {
				v = topo.internal_id(textio::parse_int(tok));
			} catch (const std::invalid_argument &e) {
				throw PlannerError("plan line " + std::to_string(line_no) + ": " + e.what());
			}
			if (!v) {
				throw PlannerError("plan line " + std::to_string(line_no) + ": unknown switch " + std::string(tok));
			}
			walk.push_back(*v);
		}
		for (std::size_t i = 0; i + 1 < walk.size(); ++i) {
			if (!topo.edge_index(walk[i], walk[i + 1])) {
				throw PlannerError("plan line " + std::to_string(line_no) + ": consecutive switches are not linked");
			}
		}
		walks.push_back(std::move(walk));
	}
	f.plan = make_plan(topo, walks);
	return f;
}

int optimal_path_count(const PlanningInstance &inst, double t_max) {
	const auto &targets = inst.terminals();
	const int m = static_cast<int>(targets.size());
	if (m == 0) {
		return 0;
	}
	if (m > 16) {
		throw PlannerError("exhaustive search supports at most 16 targets");
	}
	auto d = [&](int i, int j) {
		return inst.dist[static_cast<std::size_t>(targets[static_cast<std::size_t>(i)])][static_cast<std::size_t>(targets[static_cast<std::size_t>(j)])];
	};
	const std::uint32_t full = (1u << m) - 1;
	std::vector<std::vector<double>> walk(full + 1, std::vector<double>(static_cast<std::size_t>(m), kInf));
	for (int i = 0; i < m; ++i) {
		walk[1u << i][static_cast<std::size_t>(i)] = 0.0;
	}
	std::vector<char> fits(full + 1, 0);
	for (std::uint32_t s = 1; s <= full; ++s) {
		for (int j = 0; j < m; ++j) {
			double here = walk[s][static_cast<std::size_t>(j)];
			if (!(s >> j & 1u) || !std::isfinite(here)) {
				continue;
			}
			if (here <= t_max) {
				fits[s] = 1;
			}
			for (int k = 0; k < m; ++k) {
				if (s >> k & 1u) {
					continue;
				}
				double &next = walk[s | (1u << k)][static_cast<std::size_t>(k)];
				next = std::min(next, here + d(j, k));
			}
		}
	}
	std::vector<int> best(full + 1, std::numeric_limits<int>::max());
	best[0] = 0;
	for (std::uint32_t s = 1; s <= full; ++s) {
		std::uint32_t low = s & (~s + 1);
		for (std::uint32_t sub = s; sub; sub = (sub - 1) & s) {
			if ((sub & low) && fits[sub] && best[s ^ sub] != std::numeric_limits<int>::max()) {
				best[s] = std::min(best[s], best[s ^ sub] + 1);
			}
		}
	}
	return best[full];
}

PlanningInstance InstanceGenerator::sample(std::uint64_t seed) const {
	std::mt19937_64 rng(seed);
	for (int attempt = 0; attempt < 1000; ++attempt) {
		Topology topo = fixed_topology ? *fixed_topology : random_topology(topology, rng());
		const int n = topo.node_count();
		int lo = std::clamp(min_terminals, 1, n);
		int hi = std::clamp(max_terminals, lo, n);
		std::uniform_int_distribution<int> count_dist(lo, hi);
		int count = count_dist(rng);
		std::vector<NodeId> all(static_cast<std::size_t>(n));
		for (int i = 0; i < n; ++i) {
			all[static_cast<std::size_t>(i)] = i + 1;
		}
		std::shuffle(all.begin(), all.end(), rng);
		std::vector<NodeId> targets(all.begin(), all.begin() + count);
		std::sort(targets.begin(), targets.end());
		if (!prune) {
			return PlanningInstance::whole(std::move(topo), std::move(targets));
		}
		Subnetwork s = telemplan::prune(topo, targets);
		if (max_subnet_nodes > 0 && static_cast<int>(s.nodes.size()) > max_subnet_nodes) {
			continue;
		}
		return PlanningInstance::make(std::move(topo), std::move(s));
	}
	throw PlannerError("instance generator could not meet the subnetwork size limit");
}

std::vector<PlanningInstance> InstanceGenerator::batch(int count, std::uint64_t seed) const {
	std::vector<PlanningInstance> out;
	std::mt19937_64 rng(seed);
	for (int i = 0; i < count; ++i) {
		out.push_back(sample(rng()));
	}
	return out;
}

} // namespace telemplan
