#include "telemplan/harness.hpp"
#include "telemplan/textio.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace telemplan;

namespace {

struct Globals {
	std::string config;
	std::optional<std::uint64_t> seed;
	std::string out;
};

PipelineConfig load_config(const Globals &g) {
	PipelineConfig cfg;
	if (!g.config.empty()) {
		cfg = parse_pipeline_config(textio::read_file(g.config));
	}
	if (g.seed) {
		cfg.seed = *g.seed;
	}
	if (!g.out.empty()) {
		cfg.out_dir = g.out;
	}
	fs::create_directories(cfg.out_dir);
	return cfg;
}

std::string in_out(const PipelineConfig &cfg, const std::string &given, const std::string &name) {
	return given.empty() ? (fs::path(cfg.out_dir) / name).string() : given;
}

void save(const PipelineConfig &cfg, const std::string &name, const std::string &content) {
	const auto path = fs::path(cfg.out_dir) / name;
	textio::write_file(path.string(), content);
	std::cout << "wrote " << path.string() << "\n";
}

Topology read_topo(const PipelineConfig &cfg, const std::string &given) {
	return load_topology(textio::read_file(in_out(cfg, given, "topology.txt")));
}

template <class F> void run_stage(const std::string &stage, F &&fn) {
	try {
		fn();
	} catch (const StageError &) {
		throw;
	} catch (const std::exception &e) {
		throw StageError(stage, e.what());
	}
}

void print_plan_score(const std::string &name, const ProbePlan &plan, const PlanningInstance &inst, const PlannerConfig &pc) {
	auto s = score_plan(plan, inst.terminals(), pc, inst.topo.node_count());
	std::cout << name << ": K=" << s.K << " C=" << textio::format_double(s.C) << " T=" << textio::format_double(s.T)
	          << " coverage=" << textio::format_double(s.coverage) << (s.flag ? " over-budget" : "") << "\n";
}

} // namespace

int main(int argc, char **argv) {
	CLI::App app{"Traffic-aware telemetry probe planning"};
	app.fallthrough();
	app.require_subcommand(1);
	app.set_version_flag("--version", std::string(kVersion));

	Globals g;
	std::uint64_t seed_value = 0;
	app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
	auto *seed_opt = app.add_option("--seed", seed_value, "Seed for every stochastic stage");
	app.add_option("--out", g.out, "Output directory");

	std::string topo_file, traffic_file, model_file, forecast_file, highload_file, subnet_file, policy_file, report_file;
	std::vector<std::string> plan_files;
	int window = -1;
	std::string method = "dfs";
	bool oracle = false;

	auto *gen_topo = app.add_subcommand("gen-topo", "Generate a random connected topology");

	auto *gen_traffic = app.add_subcommand("gen-traffic", "Generate per-link traffic for a topology");
	gen_traffic->add_option("--topology", topo_file, "Topology file");

	auto *train_pred = app.add_subcommand("train-predictor", "Train the traffic forecaster");
	train_pred->add_option("--topology", topo_file, "Topology file");
	train_pred->add_option("--traffic", traffic_file, "Traffic CSV");

	auto *predict_cmd = app.add_subcommand("predict", "Forecast the test windows and report MAE/MSE");
	predict_cmd->add_option("--topology", topo_file, "Topology file");
	predict_cmd->add_option("--traffic", traffic_file, "Traffic CSV");
	predict_cmd->add_option("--model", model_file, "Model checkpoint");
	predict_cmd->add_option("--window", window, "Test window written to forecast.csv (default: last)");

	auto *identify_cmd = app.add_subcommand("identify", "Select high-load switches from a forecast");
	identify_cmd->add_option("--topology", topo_file, "Topology file");
	identify_cmd->add_option("--forecast", forecast_file, "Forecast CSV (horizon rows)");

	auto *prune_cmd = app.add_subcommand("prune", "Build the biconnected subnetwork around the high-load switches");
	prune_cmd->add_option("--topology", topo_file, "Topology file");
	prune_cmd->add_option("--highload", highload_file, "High-load set file");

	auto *train_plan = app.add_subcommand("train-planner", "Train the probe path policy");
	train_plan->add_option("--topology", topo_file, "Topology file");

	auto *plan_cmd = app.add_subcommand("plan", "Greedy-decode probe paths for a subnetwork");
	plan_cmd->add_option("--topology", topo_file, "Topology file");
	plan_cmd->add_option("--subnet", subnet_file, "Subnetwork file");
	plan_cmd->add_option("--policy", policy_file, "Policy file");

	auto *baseline_cmd = app.add_subcommand("baseline", "Plan with a baseline method");
	baseline_cmd->add_option("--topology", topo_file, "Topology file");
	baseline_cmd->add_option("--subnet", subnet_file, "Subnetwork file");
	baseline_cmd->add_option("--method", method, "dfs, euler, netview or sa");

	auto *evaluate_cmd = app.add_subcommand("evaluate", "Score plan files, or rank the planners of a report");
	evaluate_cmd->add_option("--topology", topo_file, "Topology file");
	evaluate_cmd->add_option("--subnet", subnet_file, "Subnetwork file");
	evaluate_cmd->add_option("--plan", plan_files, "Plan files");
	evaluate_cmd->add_option("--report", report_file, "Report JSON");

	auto *pipeline_cmd = app.add_subcommand("pipeline", "Run every stage and write report.json");
	pipeline_cmd->add_flag("--oracle", oracle, "Use the true future traffic as the forecast");

	CLI11_PARSE(app, argc, argv);
	if (*seed_opt) {
		g.seed = seed_value;
	}

	try {
		PipelineConfig cfg;
		run_stage("config", [&] { cfg = load_config(g); });
		PlannerConfig pc = cfg.planner;

		if (gen_topo->parsed()) {
			run_stage("topology", [&] {
				PipelineConfig c = cfg;
				c.topology_file.clear();
				auto topo = stage_topology(c);
				save(cfg, "topology.txt", write_topology(topo));
			});
		} else if (gen_traffic->parsed()) {
			run_stage("traffic", [&] {
				auto topo = read_topo(cfg, topo_file);
				PipelineConfig c = cfg;
				c.traffic_file.clear();
				save(cfg, "traffic.csv", export_csv(stage_traffic(c, topo), topo));
			});
		} else if (train_pred->parsed()) {
			run_stage("predict", [&] {
				auto topo = read_topo(cfg, topo_file);
				auto series = ingest_csv(textio::read_file(in_out(cfg, traffic_file, "traffic.csv")), topo);
				auto data = prepare_dataset(series, cfg.in_len, cfg.horizon, cfg.split);
				TrainConfig tc = predictor_train_config(cfg);
				auto init = PredictorParams::init(topo, cfg.in_len, cfg.horizon, cfg.model, derive_seed(cfg.seed, SeedSlot::predictor_init));
				auto result = train(std::move(init), data.train, tc);
				for (const auto &e : result.epochs) {
					std::cout << "epoch " << e.epoch << " lr=" << textio::format_double(e.lr)
					          << " train_mae=" << textio::format_double(e.train_mae) << "\n";
				}
				save(cfg, "model.txt", save_checkpoint(result.params, data.train.normalization()));
				save(cfg, "predictor_epochs.csv", epochs_csv(result.epochs));
				save(cfg, "predictor_iterations.csv", iterations_csv(result.iterations));
			});
		} else if (predict_cmd->parsed()) {
			run_stage("predict", [&] {
				auto topo = read_topo(cfg, topo_file);
				auto series = ingest_csv(textio::read_file(in_out(cfg, traffic_file, "traffic.csv")), topo);
				auto [params, norm] = load_checkpoint(textio::read_file(in_out(cfg, model_file, "model.txt")));
				auto data = prepare_dataset(series, params.in_len, params.horizon, cfg.split);
				if (data.test.empty()) {
					throw std::runtime_error("no test windows");
				}
				std::vector<Eigen::MatrixXd> pred, actual, base;
				for (std::size_t i = 0; i < data.test.size(); ++i) {
					pred.push_back(predict_raw(params, norm, data.test.raw_input(i)).values);
					base.push_back(baseline_predict(BaselineKind::no_model, data.test.raw_input(i), params.horizon).values);
					actual.push_back(data.test.raw_target(i));
				}
				auto m = forecast_metrics(pred, actual);
				auto b = forecast_metrics(base, actual);
				std::cout << "step,mae,mse,no_model_mae\n";
				for (std::size_t h = 0; h < m.mae_per_step.size(); ++h) {
					std::cout << h + 1 << "," << textio::format_double(m.mae_per_step[h]) << "," << textio::format_double(m.mse_per_step[h]) << ","
					          << textio::format_double(b.mae_per_step[h]) << "\n";
				}
				const std::size_t w = window < 0 ? data.test.size() - 1 : static_cast<std::size_t>(window);
				if (w >= data.test.size()) {
					throw std::runtime_error("window " + std::to_string(w) + " out of range");
				}
				save(cfg, "forecast.csv", export_csv(TrafficSeries{series.links, pred[w]}, topo));
			});
		} else if (identify_cmd->parsed()) {
			run_stage("identify", [&] {
				auto topo = read_topo(cfg, topo_file);
				auto forecast = ingest_csv(textio::read_file(in_out(cfg, forecast_file, "forecast.csv")), topo);
				auto set = identify_highload(horizon_switch_load(topo, forecast.values), topo, cfg.theta, cfg.mode);
				std::cout << "high-load switches:";
				for (NodeId v : set.switches) {
					std::cout << " " << topo.external_id(v);
				}
				std::cout << "\n";
				save(cfg, "highload.txt", write_highload(set, topo));
			});
		} else if (prune_cmd->parsed()) {
			run_stage("prune", [&] {
				auto topo = read_topo(cfg, topo_file);
				auto set = read_highload(textio::read_file(in_out(cfg, highload_file, "highload.txt")), topo);
				if (set.switches.empty()) {
					throw std::runtime_error("no high-load switches to connect");
				}
				auto subnet = prune(topo, set.switches);
				auto naive = naive_subnetwork(topo, set.switches);
				std::cout << "subnetwork: " << subnet.nodes.size() << " nodes, " << subnet.edges.size() << " links (naive " << naive.edges.size()
				          << ")\n";
				for (const auto &d : subnet.diagnostics) {
					std::cerr << "diagnostic: " << d.to_string() << "\n";
				}
				save(cfg, "subnet.txt", write_subnetwork(subnet, topo));
			});
		} else if (train_plan->parsed()) {
			run_stage("plan", [&] {
				auto topo = read_topo(cfg, topo_file);
				pc.seed = derive_seed(cfg.seed, SeedSlot::policy_train);
				auto instances = planner_generator(cfg, topo, true).batch(pc.instances, derive_seed(cfg.seed, SeedSlot::instances));
				auto result = train_policy(PolicyParams::init(pc.embed, pc.hidden, derive_seed(cfg.seed, SeedSlot::policy_init)), instances, pc, [](const PolicyEpochRecord &r) {
					std::cout << "epoch " << r.epoch << " reward=" << textio::format_double(r.mean_reward)
					          << " violations=" << textio::format_double(r.violation_rate) << "\n";
				});
				save(cfg, "policy.txt", save_policy(result.params));
				save(cfg, "planner_trace.csv", policy_trace_csv(result.trace));
			});
		} else if (plan_cmd->parsed()) {
			run_stage("plan", [&] {
				auto topo = read_topo(cfg, topo_file);
				auto inst = PlanningInstance::make(topo, read_subnetwork(textio::read_file(in_out(cfg, subnet_file, "subnet.txt")), topo));
				auto policy = load_policy(textio::read_file(in_out(cfg, policy_file, "policy.txt")));
				auto r = decode_greedy(policy, inst, pc);
				print_plan_score("learned", r.plan, inst, pc);
				save(cfg, "plan.txt",
				     write_plan(r.plan, topo,
				                {{"K", std::to_string(r.score.K)},
				                 {"T", textio::format_double(r.score.T)},
				                 {"C", textio::format_double(r.score.C)},
				                 {"seed", std::to_string(cfg.seed)}}));
			});
		} else if (baseline_cmd->parsed()) {
			run_stage("baseline", [&] {
				auto topo = read_topo(cfg, topo_file);
				auto inst = PlanningInstance::make(topo, read_subnetwork(textio::read_file(in_out(cfg, subnet_file, "subnet.txt")), topo));
				auto m = parse_baseline(method);
				AnnealingConfig sa = cfg.annealing;
				sa.seed = derive_seed(cfg.seed, SeedSlot::annealing);
				auto plan = baseline_plan(m, inst, pc, sa);
				auto s = score_plan(plan, inst.terminals(), pc, topo.node_count());
				print_plan_score(to_string(m), plan, inst, pc);
				save(cfg, "plan_" + to_string(m) + ".txt",
				     write_plan(plan, topo,
				                {{"K", std::to_string(s.K)},
				                 {"T", textio::format_double(s.T)},
				                 {"C", textio::format_double(s.C)},
				                 {"seed", std::to_string(cfg.seed)}}));
			});
		} else if (evaluate_cmd->parsed()) {
			run_stage("evaluate", [&] {
				if (!report_file.empty()) {
					auto report = report_from_json(textio::read_file(report_file));
					std::cout << comparison_csv(compare_planners(report));
					return;
				}
				if (plan_files.empty()) {
					throw std::runtime_error("give --plan files or --report");
				}
				auto topo = read_topo(cfg, topo_file);
				auto inst = PlanningInstance::make(topo, read_subnetwork(textio::read_file(in_out(cfg, subnet_file, "subnet.txt")), topo));
				RunReport report;
				for (const auto &file : plan_files) {
					auto pf = read_plan(textio::read_file(file), topo);
					for (const auto &d : check_plan(pf.plan, topo, inst.terminals())) {
						std::cerr << file << ": " << d.to_string() << "\n";
					}
					auto s = score_plan(pf.plan, inst.terminals(), pc, topo.node_count());
					PlannerReport e;
					e.name = fs::path(file).stem().string();
					e.scope = "file";
					e.K = s.K;
					e.C = s.C;
					e.T = s.T;
					e.feasible = !s.flag && s.coverage == 1.0;
					report.planners.push_back(e);
				}
				auto csv = comparison_csv(compare_planners(report));
				std::cout << csv;
				save(cfg, "comparison.csv", csv);
			});
		} else if (pipeline_cmd->parsed()) {
			if (oracle) {
				cfg.predictor = PredictorKind::oracle;
			}
			auto report = run_pipeline(cfg);
			for (const auto &d : report.diagnostics) {
				std::cerr << "diagnostic: " << d << "\n";
			}
			std::cout << comparison_csv(compare_planners(report));
			std::cout << "wrote " << (fs::path(cfg.out_dir) / "report.json").string() << "\n";
		}
	} catch (const StageError &e) {
		std::cerr << "telemplan: error " << e.what() << "\n";
		for (const auto &a : e.artifacts()) {
			std::cerr << "  artifact: " << a << "\n";
		}
		return 2;
	}
	return 0;
}
