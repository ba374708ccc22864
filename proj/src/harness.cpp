#include "telemplan/harness.hpp"

#include "telemplan/textio.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <set>
#include <sstream>

namespace telemplan {

using nlohmann::json;
namespace fs = std::filesystem;

StageError::StageError(std::string stage, const std::string &message, std::vector<std::string> artifacts)
    : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)), artifacts_(std::move(artifacts)) {
}

PredictorKind parse_predictor_kind(std::string_view name) {
	if (name == "learned") {
		return PredictorKind::learned;
	}
	if (name == "no-model") {
		return PredictorKind::no_model;
	}
	if (name == "ewma") {
		return PredictorKind::ewma;
	}
	if (name == "oracle") {
		return PredictorKind::oracle;
	}
	throw std::invalid_argument("unknown predictor '" + std::string(name) + "' (expected learned, no-model, ewma or oracle)");
}

std::string to_string(PredictorKind kind) {
	switch (kind) {
	case PredictorKind::learned:
		return "learned";
	case PredictorKind::no_model:
		return "no-model";
	case PredictorKind::ewma:
		return "ewma";
	case PredictorKind::oracle:
		return "oracle";
	}
	return "unknown";
}

namespace {

/// Reads keys from one JSON object and rejects any it did not ask for.
class Section {
public:
	Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
		if (!j_.is_object()) {
			throw std::invalid_argument("config: '" + path_ + "' must be an object");
		}
	}
	~Section() noexcept(false) {
		if (std::uncaught_exceptions() > 0) {
			return;
		}
		for (auto it = j_.begin(); it != j_.end(); ++it) {
			if (!seen_.count(it.key())) {
				throw std::invalid_argument("config: unknown key '" + path_ + (path_.empty() ? "" : ".") + it.key() + "'");
			}
		}
	}
	template <class T> void read(const std::string &key, T &dest) {
		seen_.insert(key);
		if (!j_.contains(key)) {
			return;
		}
		try {
			dest = j_.at(key).get<T>();
		} catch (const json::exception &) {
			throw std::invalid_argument("config: '" + name(key) + "' has the wrong type");
		}
	}
	bool has(const std::string &key) const {
		return j_.contains(key);
	}
	Section child(const std::string &key) {
		seen_.insert(key);
		return Section(j_.at(key), name(key));
	}
	std::string name(const std::string &key) const {
		return path_.empty() ? key : path_ + "." + key;
	}

private:
	const json &j_;
	std::string path_;
	std::set<std::string> seen_;
};

} // namespace

PipelineConfig parse_pipeline_config(std::string_view json_text) {
	json j;
	try {
		j = json::parse(json_text);
	} catch (const json::parse_error &e) {
		throw std::invalid_argument(std::string("config: ") + e.what());
	}
	PipelineConfig c;
	Section root(j, "");
	root.read("seed", c.seed);
	root.read("out", c.out_dir);
	if (root.has("topology")) {
		auto s = root.child("topology");
		s.read("file", c.topology_file);
		s.read("nodes", c.topology.nodes);
		s.read("mean_degree", c.topology.mean_degree);
		s.read("latency_min_us", c.topology.latency_min_us);
		s.read("latency_max_us", c.topology.latency_max_us);
		s.read("capacity_per_link", c.topology.capacity_per_link);
	}
	if (root.has("traffic")) {
		auto s = root.child("traffic");
		auto &p = c.traffic;
		s.read("file", c.traffic_file);
		s.read("slots", c.slots);
		s.read("base_min", p.base_min);
		s.read("base_max", p.base_max);
		s.read("diurnal_amplitude", p.diurnal_amplitude);
		s.read("period_slots", p.period_slots);
		s.read("phase_jitter", p.phase_jitter);
		s.read("ar_coefficient", p.ar_coefficient);
		s.read("noise_std", p.noise_std);
		s.read("burst_rate", p.burst_rate);
		s.read("burst_shape", p.burst_shape);
		s.read("burst_scale", p.burst_scale);
		s.read("burst_cap", p.burst_cap);
		s.read("burst_mean_duration", p.burst_mean_duration);
	}
	if (root.has("predictor")) {
		auto s = root.child("predictor");
		std::string kind = to_string(c.predictor);
		s.read("kind", kind);
		c.predictor = parse_predictor_kind(kind);
		s.read("in_len", c.in_len);
		s.read("horizon", c.horizon);
		s.read("split", c.split);
		s.read("model_file", c.model_file);
		s.read("ewma_decay", c.ewma_decay);
		if (s.has("model")) {
			auto m = s.child("model");
			m.read("d_embed", c.model.d_embed);
			m.read("topk", c.model.topk);
			m.read("alpha", c.model.alpha);
			m.read("beta", c.model.beta);
			m.read("channels", c.model.channels);
			m.read("skip_channels", c.model.skip_channels);
			m.read("kernel", c.model.kernel);
			m.read("dilation1", c.model.dilation1);
			m.read("dilation2", c.model.dilation2);
		}
		if (s.has("train")) {
			auto t = s.child("train");
			std::string schedule = c.train.lr.kind == LrSchedule::Kind::stepped ? "stepped" : "constant";
			t.read("lr", c.train.lr.base);
			t.read("schedule", schedule);
			if (schedule != "stepped" && schedule != "constant") {
				throw std::invalid_argument("config: predictor.train.schedule must be 'stepped' or 'constant'");
			}
			c.train.lr.kind = schedule == "stepped" ? LrSchedule::Kind::stepped : LrSchedule::Kind::constant;
			t.read("batch", c.train.batch);
			t.read("step_size", c.train.step_size);
			t.read("split_groups", c.train.split_groups);
			t.read("max_horizon", c.train.max_horizon);
			t.read("epochs", c.train.epochs);
		}
	}
	if (root.has("identify")) {
		auto s = root.child("identify");
		std::string mode = to_string(c.mode);
		s.read("theta", c.theta);
		s.read("mode", mode);
		c.mode = parse_threshold_mode(mode);
	}
	if (root.has("prune")) {
		auto s = root.child("prune");
		s.read("subnet_file", c.subnet_file);
	}
	if (root.has("planner")) {
		auto s = root.child("planner");
		auto &p = c.planner;
		s.read("a", p.a);
		s.read("lambda", p.lambda);
		s.read("t_max", p.t_max);
		s.read("allow_transit", p.allow_transit);
		s.read("embed", p.embed);
		s.read("hidden", p.hidden);
		s.read("actor_lr", p.actor_lr);
		s.read("critic_lr", p.critic_lr);
		s.read("instances", p.instances);
		s.read("batch", p.batch);
		s.read("epochs", p.epochs);
		s.read("min_terminals", c.min_terminals);
		s.read("max_terminals", c.max_terminals);
		s.read("policy_file", c.policy_file);
	}
	if (root.has("baselines")) {
		std::vector<std::string> names;
		root.read("baselines", names);
		c.baselines.clear();
		for (const auto &n : names) {
			c.baselines.push_back(parse_baseline(n));
		}
	}
	if (root.has("annealing")) {
		auto s = root.child("annealing");
		s.read("iterations", c.annealing.iterations);
		s.read("start_temperature", c.annealing.start_temperature);
		s.read("cooling", c.annealing.cooling);
	}
	if (root.has("ablation")) {
		auto s = root.child("ablation");
		s.read("enabled", c.ablation);
		s.read("epochs", c.ablation_epochs);
	}
	if (c.slots < 1 || c.in_len < 1 || c.horizon < 1 || c.ablation_epochs < 1) {
		throw std::invalid_argument("config: slots, in_len, horizon and ablation.epochs must be >= 1");
	}
	if (c.min_terminals < 1 || c.max_terminals < c.min_terminals) {
		throw std::invalid_argument("config: planner terminal range is empty");
	}
	check_profile(c.traffic);
	check_planner_config(c.planner);
	return c;
}

std::string dump_pipeline_config(const PipelineConfig &c) {
	json j;
	j["seed"] = c.seed;
	j["out"] = c.out_dir;
	j["topology"] = {{"file", c.topology_file},
	                 {"nodes", c.topology.nodes},
	                 {"mean_degree", c.topology.mean_degree},
	                 {"latency_min_us", c.topology.latency_min_us},
	                 {"latency_max_us", c.topology.latency_max_us},
	                 {"capacity_per_link", c.topology.capacity_per_link}};
	const auto &p = c.traffic;
	j["traffic"] = {{"file", c.traffic_file},
	                {"slots", c.slots},
	                {"base_min", p.base_min},
	                {"base_max", p.base_max},
	                {"diurnal_amplitude", p.diurnal_amplitude},
	                {"period_slots", p.period_slots},
	                {"phase_jitter", p.phase_jitter},
	                {"ar_coefficient", p.ar_coefficient},
	                {"noise_std", p.noise_std},
	                {"burst_rate", p.burst_rate},
	                {"burst_shape", p.burst_shape},
	                {"burst_scale", p.burst_scale},
	                {"burst_cap", p.burst_cap},
	                {"burst_mean_duration", p.burst_mean_duration}};
	j["predictor"] = {{"kind", to_string(c.predictor)},
	                  {"in_len", c.in_len},
	                  {"horizon", c.horizon},
	                  {"split", c.split},
	                  {"model_file", c.model_file},
	                  {"ewma_decay", c.ewma_decay},
	                  {"model",
	                   {{"d_embed", c.model.d_embed},
	                    {"topk", c.model.topk},
	                    {"alpha", c.model.alpha},
	                    {"beta", c.model.beta},
	                    {"channels", c.model.channels},
	                    {"skip_channels", c.model.skip_channels},
	                    {"kernel", c.model.kernel},
	                    {"dilation1", c.model.dilation1},
	                    {"dilation2", c.model.dilation2}}},
	                  {"train",
	                   {{"lr", c.train.lr.base},
	                    {"schedule", c.train.lr.kind == LrSchedule::Kind::stepped ? "stepped" : "constant"},
	                    {"batch", c.train.batch},
	                    {"step_size", c.train.step_size},
	                    {"split_groups", c.train.split_groups},
	                    {"max_horizon", c.train.max_horizon},
	                    {"epochs", c.train.epochs}}}};
	j["identify"] = {{"theta", c.theta}, {"mode", to_string(c.mode)}};
	j["prune"] = {{"subnet_file", c.subnet_file}};
	j["planner"] = {{"a", c.planner.a},
	                {"lambda", c.planner.lambda},
	                {"t_max", c.planner.t_max},
	                {"allow_transit", c.planner.allow_transit},
	                {"embed", c.planner.embed},
	                {"hidden", c.planner.hidden},
	                {"actor_lr", c.planner.actor_lr},
	                {"critic_lr", c.planner.critic_lr},
	                {"instances", c.planner.instances},
	                {"batch", c.planner.batch},
	                {"epochs", c.planner.epochs},
	                {"min_terminals", c.min_terminals},
	                {"max_terminals", c.max_terminals},
	                {"policy_file", c.policy_file}};
	json names = json::array();
	for (auto b : c.baselines) {
		names.push_back(to_string(b));
	}
	j["baselines"] = names;
	j["annealing"] = {{"iterations", c.annealing.iterations},
	                  {"start_temperature", c.annealing.start_temperature},
	                  {"cooling", c.annealing.cooling}};
	j["ablation"] = {{"enabled", c.ablation}, {"epochs", c.ablation_epochs}};
	return j.dump(2) + "\n";
}

std::uint64_t derive_seed(std::uint64_t seed, SeedSlot slot) {
	return seed + static_cast<std::uint64_t>(slot);
}

Topology stage_topology(const PipelineConfig &cfg) {
	if (!cfg.topology_file.empty()) {
		return load_topology(textio::read_file(cfg.topology_file));
	}
	return random_topology(cfg.topology, derive_seed(cfg.seed, SeedSlot::topology));
}

TrafficSeries stage_traffic(const PipelineConfig &cfg, const Topology &topo) {
	if (!cfg.traffic_file.empty()) {
		return ingest_csv(textio::read_file(cfg.traffic_file), topo);
	}
	return generate_traffic(topo, cfg.traffic, cfg.slots, derive_seed(cfg.seed, SeedSlot::traffic)).series;
}

TrainConfig predictor_train_config(const PipelineConfig &cfg) {
	TrainConfig tc = cfg.train;
	tc.seed = derive_seed(cfg.seed, SeedSlot::predictor_train);
	if (tc.max_horizon == 0) {
		tc.max_horizon = 16;
		for (int h : {8, 4, 1}) {
			if (h >= cfg.horizon) {
				tc.max_horizon = h;
			}
		}
	}
	return tc;
}

InstanceGenerator planner_generator(const PipelineConfig &cfg, const Topology &topo, bool prune) {
	InstanceGenerator g;
	g.fixed_topology = topo;
	g.min_terminals = cfg.min_terminals;
	g.max_terminals = cfg.max_terminals;
	g.prune = prune;
	return g;
}

AblationReport summarize_ablation(std::vector<PolicyEpochRecord> pruned, std::vector<PolicyEpochRecord> full) {
	AblationReport r;
	r.ran = true;
	r.epochs = static_cast<int>(full.size());
	if (!full.empty()) {
		r.full_reference_reward = full.back().mean_reward;
		r.full_seconds = full.back().seconds;
		for (const auto &rec : pruned) {
			if (rec.mean_reward <= r.full_reference_reward) {
				r.pruned_epochs_to_match = rec.epoch;
				r.pruned_seconds_to_match = rec.seconds;
				break;
			}
		}
	}
	r.pruned_trace = std::move(pruned);
	r.full_trace = std::move(full);
	return r;
}

AblationReport run_ablation(const std::vector<PlanningInstance> &pruned, const std::vector<PlanningInstance> &full, const PlannerConfig &cfg,
                            int epochs) {
	PlannerConfig c = cfg;
	c.epochs = epochs;
	auto init = PolicyParams::init(c.embed, c.hidden, c.seed);
	auto full_run = train_policy(init, full, c);
	auto pruned_run = train_policy(init, pruned, c);
	return summarize_ablation(std::move(pruned_run.trace), std::move(full_run.trace));
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
	return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json metrics_json(const ClassificationMetrics &m) {
	return {{"precision", m.precision},      {"recall", m.recall},
	        {"f1", m.f1},                    {"true_positives", m.true_positives},
	        {"false_positives", m.false_positives}, {"false_negatives", m.false_negatives},
	        {"degenerate", m.degenerate}};
}

ClassificationMetrics metrics_from(const json &j) {
	ClassificationMetrics m;
	m.precision = j.at("precision").get<double>();
	m.recall = j.at("recall").get<double>();
	m.f1 = j.at("f1").get<double>();
	m.true_positives = j.at("true_positives").get<std::size_t>();
	m.false_positives = j.at("false_positives").get<std::size_t>();
	m.false_negatives = j.at("false_negatives").get<std::size_t>();
	m.degenerate = j.at("degenerate").get<bool>();
	return m;
}

json trace_json(const std::vector<PolicyEpochRecord> &trace) {
	json a = json::array();
	for (const auto &r : trace) {
		a.push_back({{"epoch", r.epoch},
		             {"mean_reward", r.mean_reward},
		             {"violation_rate", r.violation_rate},
		             {"mean_paths", r.mean_paths},
		             {"critic_loss", r.critic_loss},
		             {"seconds", r.seconds}});
	}
	return a;
}

std::vector<PolicyEpochRecord> trace_from(const json &a) {
	std::vector<PolicyEpochRecord> out;
	for (const auto &j : a) {
		PolicyEpochRecord r;
		r.epoch = j.at("epoch").get<int>();
		r.mean_reward = j.at("mean_reward").get<double>();
		r.violation_rate = j.at("violation_rate").get<double>();
		r.mean_paths = j.at("mean_paths").get<double>();
		r.critic_loss = j.at("critic_loss").get<double>();
		r.seconds = j.at("seconds").get<double>();
		out.push_back(r);
	}
	return out;
}

json report_json(const RunReport &r) {
	json j;
	const auto &p = r.predictor;
	j["predictor"] = {{"kind", p.kind},
	                  {"test_windows", p.test_windows},
	                  {"mae_per_step", p.mae_per_step},
	                  {"mse_per_step", p.mse_per_step},
	                  {"mae", p.mae},
	                  {"mse", p.mse},
	                  {"baseline_mae_per_step", p.baseline_mae_per_step},
	                  {"baseline_mae", p.baseline_mae},
	                  {"train_seconds", p.train_seconds}};
	const auto &id = r.identification;
	j["identification"] = {{"theta", id.theta},
	                       {"mode", id.mode},
	                       {"metrics", metrics_json(id.metrics)},
	                       {"baseline_metrics", metrics_json(id.baseline_metrics)},
	                       {"planned_switches", id.planned_switches}};
	const auto &s = r.subnetwork;
	j["subnetwork"] = {{"topology_nodes", s.topology_nodes},
	                   {"topology_edges", s.topology_edges},
	                   {"nodes", s.nodes},
	                   {"edges", s.edges},
	                   {"naive_edges", s.naive_edges},
	                   {"biconnected", s.biconnected},
	                   {"diagnostics", s.diagnostics}};
	json planners = json::array();
	for (const auto &pl : r.planners) {
		planners.push_back({{"name", pl.name},
		                    {"scope", pl.scope},
		                    {"K", pl.K},
		                    {"C", pl.C},
		                    {"T", pl.T},
		                    {"feasible", pl.feasible},
		                    {"reward", pl.reward},
		                    {"coverage", pl.coverage},
		                    {"plan_seconds", pl.plan_seconds},
		                    {"train_seconds", pl.train_seconds}});
	}
	j["planners"] = planners;
	const auto &a = r.ablation;
	j["ablation"] = {{"ran", a.ran},
	                 {"epochs", a.epochs},
	                 {"pruned_trace", trace_json(a.pruned_trace)},
	                 {"full_trace", trace_json(a.full_trace)},
	                 {"full_reference_reward", a.full_reference_reward},
	                 {"pruned_epochs_to_match", a.pruned_epochs_to_match},
	                 {"pruned_seconds_to_match", a.pruned_seconds_to_match},
	                 {"full_seconds", a.full_seconds}};
	j["provenance"] = {{"config_hash", r.provenance.config_hash}, {"seed", r.provenance.seed}, {"version", r.provenance.version}};
	j["diagnostics"] = r.diagnostics;
	j["artifacts"] = r.artifacts;
	return j;
}

void strip_timing(json &j) {
	if (j.is_object()) {
		for (auto it = j.begin(); it != j.end();) {
			const auto &k = it.key();
			if (k.find("seconds") != std::string::npos) {
				it = j.erase(it);
			} else {
				strip_timing(*it);
				++it;
			}
		}
	} else if (j.is_array()) {
		for (auto &e : j) {
			strip_timing(e);
		}
	}
}

std::vector<std::int64_t> external(const Topology &topo, const std::vector<NodeId> &nodes) {
	std::vector<std::int64_t> out;
	for (NodeId v : nodes) {
		out.push_back(topo.external_id(v));
	}
	return out;
}

PlannerReport planner_entry(const std::string &name, const std::string &scope, const ProbePlan &plan, const PlanningInstance &inst,
                            const PlannerConfig &cfg, double plan_seconds, double train_seconds) {
	PlanScore s = score_plan(plan, inst.terminals(), cfg, inst.topo.node_count());
	PlannerReport r;
	r.name = name;
	r.scope = scope;
	r.K = s.K;
	r.C = s.C;
	r.T = s.T;
	r.feasible = !s.flag;
	r.reward = s.reward;
	r.coverage = s.coverage;
	r.plan_seconds = plan_seconds;
	r.train_seconds = train_seconds;
	return r;
}

std::map<std::string, std::string> plan_meta(const PlanScore &s, std::uint64_t seed) {
	return {{"K", std::to_string(s.K)}, {"T", textio::format_double(s.T)}, {"C", textio::format_double(s.C)}, {"seed", std::to_string(seed)}};
}

} // namespace

std::string report_to_json(const RunReport &report) {
	return report_json(report).dump(2) + "\n";
}

RunReport report_from_json(std::string_view text) {
	RunReport r;
	try {
		json j = json::parse(text);
		const auto &p = j.at("predictor");
		r.predictor.kind = p.at("kind").get<std::string>();
		r.predictor.test_windows = p.at("test_windows").get<std::size_t>();
		r.predictor.mae_per_step = p.at("mae_per_step").get<std::vector<double>>();
		r.predictor.mse_per_step = p.at("mse_per_step").get<std::vector<double>>();
		r.predictor.mae = p.at("mae").get<double>();
		r.predictor.mse = p.at("mse").get<double>();
		r.predictor.baseline_mae_per_step = p.at("baseline_mae_per_step").get<std::vector<double>>();
		r.predictor.baseline_mae = p.at("baseline_mae").get<double>();
		r.predictor.train_seconds = p.at("train_seconds").get<double>();
		const auto &id = j.at("identification");
		r.identification.theta = id.at("theta").get<double>();
		r.identification.mode = id.at("mode").get<std::string>();
		r.identification.metrics = metrics_from(id.at("metrics"));
		r.identification.baseline_metrics = metrics_from(id.at("baseline_metrics"));
		r.identification.planned_switches = id.at("planned_switches").get<std::vector<std::int64_t>>();
		const auto &s = j.at("subnetwork");
		r.subnetwork.topology_nodes = s.at("topology_nodes").get<int>();
		r.subnetwork.topology_edges = s.at("topology_edges").get<int>();
		r.subnetwork.nodes = s.at("nodes").get<int>();
		r.subnetwork.edges = s.at("edges").get<int>();
		r.subnetwork.naive_edges = s.at("naive_edges").get<int>();
		r.subnetwork.biconnected = s.at("biconnected").get<bool>();
		r.subnetwork.diagnostics = s.at("diagnostics").get<std::vector<std::string>>();
		for (const auto &pl : j.at("planners")) {
			PlannerReport e;
			e.name = pl.at("name").get<std::string>();
			e.scope = pl.at("scope").get<std::string>();
			e.K = pl.at("K").get<int>();
			e.C = pl.at("C").get<double>();
			e.T = pl.at("T").get<double>();
			e.feasible = pl.at("feasible").get<bool>();
			e.reward = pl.at("reward").get<double>();
			e.coverage = pl.at("coverage").get<double>();
			e.plan_seconds = pl.at("plan_seconds").get<double>();
			e.train_seconds = pl.at("train_seconds").get<double>();
			r.planners.push_back(e);
		}
		const auto &a = j.at("ablation");
		r.ablation.ran = a.at("ran").get<bool>();
		r.ablation.epochs = a.at("epochs").get<int>();
		r.ablation.pruned_trace = trace_from(a.at("pruned_trace"));
		r.ablation.full_trace = trace_from(a.at("full_trace"));
		r.ablation.full_reference_reward = a.at("full_reference_reward").get<double>();
		r.ablation.pruned_epochs_to_match = a.at("pruned_epochs_to_match").get<int>();
		r.ablation.pruned_seconds_to_match = a.at("pruned_seconds_to_match").get<double>();
		r.ablation.full_seconds = a.at("full_seconds").get<double>();
		const auto &pv = j.at("provenance");
		r.provenance.config_hash = pv.at("config_hash").get<std::string>();
		r.provenance.seed = pv.at("seed").get<std::uint64_t>();
		r.provenance.version = pv.at("version").get<std::string>();
		r.diagnostics = j.at("diagnostics").get<std::vector<std::string>>();
		r.artifacts = j.at("artifacts").get<std::vector<std::string>>();
	} catch (const json::exception &e) {
		throw std::invalid_argument(std::string("report: ") + e.what());
	}
	return r;
}

std::string report_without_timing(const RunReport &report) {
	json j = report_json(report);
	strip_timing(j);
	return j.dump(2) + "\n";
}

std::vector<ComparisonRow> compare_planners(const RunReport &report) {
	std::vector<ComparisonRow> rows;
	for (const auto &p : report.planners) {
		rows.push_back({p.name, p.scope, p.K, p.T, p.C, p.feasible});
	}
	std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow &a, const ComparisonRow &b) {
		if (a.K != b.K) {
			return a.K < b.K;
		}
		if (a.T != b.T) {
			return a.T < b.T;
		}
		return a.name < b.name;
	});
	return rows;
}

std::string comparison_csv(const std::vector<ComparisonRow> &rows) {
	std::ostringstream out;
	out << "rank,planner,scope,K,T,C,feasible\n";
	for (std::size_t i = 0; i < rows.size(); ++i) {
		const auto &r = rows[i];
		out << i + 1 << "," << r.name << "," << r.scope << "," << r.K << "," << textio::format_double(r.T) << "," << textio::format_double(r.C)
		    << "," << (r.feasible ? 1 : 0) << "\n";
	}
	return out.str();
}

RunReport run_pipeline(const PipelineConfig &cfg) {
	RunReport report;
	const fs::path out(cfg.out_dir);
	auto write = [&](const std::string &name, const std::string &content) {
		textio::write_file((out / name).string(), content);
		report.artifacts.push_back(name);
	};
	auto stage = [&](const std::string &name, auto &&fn) -> decltype(fn()) {
		try {
			return fn();
		} catch (const StageError &) {
			throw;
		} catch (const std::exception &e) {
			throw StageError(name, e.what(), report.artifacts);
		}
	};

	stage("setup", [&] {
		fs::create_directories(out);
		return 0;
	});
	PipelineConfig canonical = cfg;
	canonical.out_dir.clear();
	report.provenance.config_hash = textio::hex64(textio::fnv1a(dump_pipeline_config(canonical)));
	report.provenance.seed = cfg.seed;
	report.provenance.version = kVersion;

	const Topology topo = stage("topology", [&] {
		Topology t = stage_topology(cfg);
		write("topology.txt", write_topology(t));
		return t;
	});
	const TrafficSeries series = stage("traffic", [&] {
		TrafficSeries s = stage_traffic(cfg, topo);
		write("traffic.csv", export_csv(s, topo));
		return s;
	});
	const DatasetSplit data = stage("dataset", [&] { return prepare_dataset(series, cfg.in_len, cfg.horizon, cfg.split); });

	// Denormalized forecasts, one per test window.
	std::vector<Eigen::MatrixXd> forecasts;
	std::vector<Eigen::MatrixXd> actuals;
	std::vector<Eigen::MatrixXd> persistence;
	stage("predict", [&] {
		const auto &test = data.test;
		std::optional<PredictorParams> model;
		Normalization norm = test.normalization();
		if (cfg.predictor == PredictorKind::learned) {
			auto t0 = std::chrono::steady_clock::now();
			if (!cfg.model_file.empty()) {
				auto [params, loaded_norm] = load_checkpoint(textio::read_file(cfg.model_file));
				model = std::move(params);
				norm = std::move(loaded_norm);
			} else {
				TrainConfig tc = predictor_train_config(cfg);
				auto init = PredictorParams::init(topo, cfg.in_len, cfg.horizon, cfg.model, derive_seed(cfg.seed, SeedSlot::predictor_init));
				auto result = train(std::move(init), data.train, tc);
				write("predictor_epochs.csv", epochs_csv(result.epochs));
				write("predictor_iterations.csv", iterations_csv(result.iterations));
				model = std::move(result.params);
			}
			report.predictor.train_seconds = seconds_since(t0);
			write("model.txt", save_checkpoint(*model, norm));
		}
		for (std::size_t i = 0; i < test.size(); ++i) {
			actuals.push_back(test.raw_target(i));
			persistence.push_back(baseline_predict(BaselineKind::no_model, test.raw_input(i), cfg.horizon).values);
			switch (cfg.predictor) {
			case PredictorKind::learned:
				forecasts.push_back(predict_raw(*model, norm, test.raw_input(i)).values);
				break;
			case PredictorKind::no_model:
				forecasts.push_back(persistence.back());
				break;
			case PredictorKind::ewma:
				forecasts.push_back(baseline_predict(BaselineKind::ewma, test.raw_input(i), cfg.horizon, cfg.ewma_decay).values);
				break;
			case PredictorKind::oracle:
				forecasts.push_back(actuals.back());
				break;
			}
		}
		auto m = forecast_metrics(forecasts, actuals);
		auto b = forecast_metrics(persistence, actuals);
		report.predictor.kind = to_string(cfg.predictor);
		report.predictor.test_windows = test.size();
		report.predictor.mae_per_step = m.mae_per_step;
		report.predictor.mse_per_step = m.mse_per_step;
		report.predictor.mae = m.mae;
		report.predictor.mse = m.mse;
		report.predictor.baseline_mae_per_step = b.mae_per_step;
		report.predictor.baseline_mae = b.mae;
		TrafficSeries last{series.links, forecasts.back()};
		write("forecast.csv", export_csv(last, topo));
		return 0;
	});

	const std::vector<NodeId> targets = stage("identify", [&] {
		std::size_t tp = 0, fp = 0, fn = 0, btp = 0, bfp = 0, bfn = 0;
		HighLoadSet planned;
		for (std::size_t i = 0; i < actuals.size(); ++i) {
			auto actual = identify_highload(horizon_switch_load(topo, actuals[i]), topo, cfg.theta, cfg.mode);
			auto predicted = identify_highload(horizon_switch_load(topo, forecasts[i]), topo, cfg.theta, cfg.mode);
			auto base = identify_highload(horizon_switch_load(topo, persistence[i]), topo, cfg.theta, cfg.mode);
			auto m = classification_metrics(predicted, actual);
			auto bm = classification_metrics(base, actual);
			tp += m.true_positives;
			fp += m.false_positives;
			fn += m.false_negatives;
			btp += bm.true_positives;
			bfp += bm.false_positives;
			bfn += bm.false_negatives;
			planned = std::move(predicted);
		}
		report.identification.theta = cfg.theta;
		report.identification.mode = to_string(cfg.mode);
		report.identification.metrics = combine_counts(tp, fp, fn);
		report.identification.baseline_metrics = combine_counts(btp, bfp, bfn);
		report.identification.planned_switches = external(topo, planned.switches);
		write("highload.txt", write_highload(planned, topo));
		return planned.switches;
	});

	report.subnetwork.topology_nodes = topo.node_count();
	report.subnetwork.topology_edges = static_cast<int>(topo.edge_count());
	if (targets.empty()) {
		report.diagnostics.push_back("no-highload-switches: nothing to prune or plan");
		write("report.json", report_to_json(report));
		return report;
	}

	const Subnetwork subnet = stage("prune", [&] {
		Subnetwork s = cfg.subnet_file.empty() ? prune(topo, targets) : read_subnetwork(textio::read_file(cfg.subnet_file), topo);
		Subnetwork naive = naive_subnetwork(topo, s.terminals);
		report.subnetwork.nodes = static_cast<int>(s.nodes.size());
		report.subnetwork.edges = static_cast<int>(s.edges.size());
		report.subnetwork.naive_edges = static_cast<int>(naive.edges.size());
		report.subnetwork.biconnected = is_biconnected(s, topo);
		for (const auto &d : s.diagnostics) {
			report.subnetwork.diagnostics.push_back(d.to_string());
		}
		write("subnet.txt", write_subnetwork(s, topo));
		return s;
	});

	PlannerConfig pc = cfg.planner;
	pc.seed = derive_seed(cfg.seed, SeedSlot::policy_train);
	const PlanningInstance inst = stage("plan", [&] { return PlanningInstance::make(topo, subnet); });
	const std::uint64_t instance_seed = derive_seed(cfg.seed, SeedSlot::instances);
	const std::uint64_t init_seed = derive_seed(cfg.seed, SeedSlot::policy_init);

	std::vector<PolicyEpochRecord> pruned_trace;
	stage("plan", [&] {
		auto t0 = std::chrono::steady_clock::now();
		PolicyParams policy;
		if (!cfg.policy_file.empty()) {
			policy = load_policy(textio::read_file(cfg.policy_file));
		} else {
			auto instances = planner_generator(cfg, topo, true).batch(pc.instances, instance_seed);
			auto result = train_policy(PolicyParams::init(pc.embed, pc.hidden, init_seed), instances, pc);
			policy = std::move(result.params);
			pruned_trace = std::move(result.trace);
			write("planner_trace.csv", policy_trace_csv(pruned_trace));
		}
		const double train_s = seconds_since(t0);
		write("policy.txt", save_policy(policy));
		auto t1 = std::chrono::steady_clock::now();
		Rollout r = decode_greedy(policy, inst, pc);
		const double plan_s = seconds_since(t1);
		write("plan.txt", write_plan(r.plan, topo, plan_meta(r.score, cfg.seed)));
		report.planners.push_back(planner_entry("learned", "subnetwork", r.plan, inst, pc, plan_s, train_s));
		return 0;
	});

	stage("baseline", [&] {
		AnnealingConfig sa = cfg.annealing;
		sa.seed = derive_seed(cfg.seed, SeedSlot::annealing);
		for (auto method : cfg.baselines) {
			auto t0 = std::chrono::steady_clock::now();
			ProbePlan plan = baseline_plan(method, inst, pc, sa);
			const double s = seconds_since(t0);
			const bool whole = method == BaselineMethod::dfs || method == BaselineMethod::euler;
			auto entry = planner_entry(to_string(method), whole ? "topology" : "subnetwork", plan, inst, pc, s, 0.0);
			write("plan_" + to_string(method) + ".txt",
			      write_plan(plan, topo, plan_meta(score_plan(plan, inst.terminals(), pc, topo.node_count()), cfg.seed)));
			report.planners.push_back(entry);
		}
		return 0;
	});

	if (cfg.ablation && cfg.policy_file.empty()) {
		stage("ablation", [&] {
			PlannerConfig fc = pc;
			fc.epochs = cfg.ablation_epochs;
			auto full_instances = planner_generator(cfg, topo, false).batch(pc.instances, instance_seed);
			auto t0 = std::chrono::steady_clock::now();
			auto result = train_policy(PolicyParams::init(pc.embed, pc.hidden, init_seed), full_instances, fc);
			const double train_s = seconds_since(t0);
			write("planner_full_trace.csv", policy_trace_csv(result.trace));
			const PlanningInstance whole = PlanningInstance::whole(topo, subnet.terminals);
			auto t1 = std::chrono::steady_clock::now();
			Rollout r = decode_greedy(result.params, whole, pc);
			report.planners.push_back(planner_entry("learned-full", "topology", r.plan, whole, pc, seconds_since(t1), train_s));
			report.ablation = summarize_ablation(pruned_trace, std::move(result.trace));
			return 0;
		});
	}

	write("comparison.csv", comparison_csv(compare_planners(report)));
	report.artifacts.push_back("report.json");
	textio::write_file((out / "report.json").string(), report_to_json(report));
	return report;
}

} // namespace telemplan
