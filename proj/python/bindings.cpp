#include "telemplan/harness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace telemplan;

PYBIND11_MODULE(_core, m) {
	m.doc() = "Traffic-aware telemetry probe planning";
	m.attr("__version__") = kVersion;

	py::register_exception<TopologyError>(m, "TopologyError", PyExc_ValueError);
	py::register_exception<TrafficError>(m, "TrafficError", PyExc_ValueError);
	py::register_exception<PredictorError>(m, "PredictorError", PyExc_ValueError);
	py::register_exception<HighLoadError>(m, "HighLoadError", PyExc_ValueError);
	py::register_exception<PruningError>(m, "PruningError", PyExc_ValueError);
	py::register_exception<PlannerError>(m, "PlannerError", PyExc_ValueError);
	py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

	py::class_<Edge>(m, "Edge")
	    .def(py::init<NodeId, NodeId, double>(), py::arg("u"), py::arg("v"), py::arg("latency_us"))
	    .def_readonly("u", &Edge::u)
	    .def_readonly("v", &Edge::v)
	    .def_readonly("latency_us", &Edge::latency_us)
	    .def("__repr__", [](const Edge &e) {
		    return "Edge(" + std::to_string(e.u) + ", " + std::to_string(e.v) + ", " + std::to_string(e.latency_us) + ")";
	    });

	py::class_<Topology>(m, "Topology")
	    .def_static("from_parts", [](std::vector<double> caps, std::vector<Edge> edges) { return Topology::from_parts(caps, edges); },
	                py::arg("capacity"), py::arg("edges"))
	    .def_property_readonly("node_count", &Topology::node_count)
	    .def_property_readonly("edge_count", &Topology::edge_count)
	    .def_property_readonly("edges", &Topology::edges)
	    .def("capacity", &Topology::capacity)
	    .def("latency", &Topology::latency)
	    .def("__eq__", &Topology::operator==);

	m.def("load_topology", &load_topology, py::arg("text"));
	m.def("write_topology", &write_topology, py::arg("topology"));
	m.def("validate", [](const Topology &t) {
		std::vector<std::string> out;
		for (const auto &d : validate(t)) {
			out.push_back(d.to_string());
		}
		return out;
	});
	m.def(
	    "random_topology",
	    [](int nodes, double mean_degree, std::uint64_t seed) {
		    RandomTopologyConfig c;
		    c.nodes = nodes;
		    c.mean_degree = mean_degree;
		    return random_topology(c, seed);
	    },
	    py::arg("nodes") = 20, py::arg("mean_degree") = 3.0, py::arg("seed") = 7);
	m.def(
	    "shortest_path",
	    [](const Topology &t, NodeId a, NodeId b) {
		    Path p = shortest_path(t, a, b);
		    return py::make_tuple(p.nodes, p.total_latency);
	    },
	    py::arg("topology"), py::arg("src"), py::arg("dst"));

	m.def(
	    "generate_traffic",
	    [](const Topology &t, int slots, std::uint64_t seed, double burst_rate, double noise_std) {
		    TrafficProfile p;
		    p.burst_rate = burst_rate;
		    p.noise_std = noise_std;
		    return Eigen::MatrixXd(generate_traffic(t, p, slots, seed).series.values);
	    },
	    py::arg("topology"), py::arg("slots"), py::arg("seed") = 7, py::arg("burst_rate") = TrafficProfile{}.burst_rate,
	    py::arg("noise_std") = TrafficProfile{}.noise_std, "Slots x links traffic matrix (columns in edge order).");

	m.def(
	    "switch_load",
	    [](const Topology &t, const Eigen::VectorXd &links) { return switch_load(t, links); }, py::arg("topology"),
	    py::arg("link_traffic"));
	m.def(
	    "identify_highload",
	    [](const Topology &t, const std::map<NodeId, double> &loads, double theta, const std::string &mode) {
		    return identify_highload(loads, t, theta, parse_threshold_mode(mode)).switches;
	    },
	    py::arg("topology"), py::arg("loads"), py::arg("theta") = 0.8, py::arg("mode") = "capacity");

	py::class_<Subnetwork>(m, "Subnetwork")
	    .def_readonly("nodes", &Subnetwork::nodes)
	    .def_readonly("edges", &Subnetwork::edges)
	    .def_readonly("terminals", &Subnetwork::terminals)
	    .def_property_readonly("diagnostics", [](const Subnetwork &s) {
		    std::vector<std::string> out;
		    for (const auto &d : s.diagnostics) {
			    out.push_back(d.to_string());
		    }
		    return out;
	    });
	m.def("prune", &prune, py::arg("topology"), py::arg("terminals"));
	m.def("naive_subnetwork", &naive_subnetwork, py::arg("topology"), py::arg("terminals"));
	m.def("is_biconnected", &is_biconnected, py::arg("subnet"), py::arg("topology"));
	m.def("articulation_points", &articulation_points, py::arg("subnet"), py::arg("topology"));

	py::class_<PlannerConfig>(m, "PlannerConfig")
	    .def(py::init<>())
	    .def_readwrite("a", &PlannerConfig::a)
	    .def_readwrite("lam", &PlannerConfig::lambda)
	    .def_readwrite("t_max", &PlannerConfig::t_max)
	    .def_readwrite("allow_transit", &PlannerConfig::allow_transit);

	py::class_<PlanningInstance>(m, "PlanningInstance")
	    .def_static("make", &PlanningInstance::make, py::arg("topology"), py::arg("subnet"))
	    .def_static("whole", &PlanningInstance::whole, py::arg("topology"), py::arg("terminals"))
	    .def_property_readonly("terminals", &PlanningInstance::terminals)
	    .def_readonly("actions", &PlanningInstance::actions);

	py::class_<PlanScore>(m, "PlanScore")
	    .def_readonly("K", &PlanScore::K)
	    .def_readonly("C", &PlanScore::C)
	    .def_readonly("T", &PlanScore::T)
	    .def_readonly("flag", &PlanScore::flag)
	    .def_readonly("reward", &PlanScore::reward)
	    .def_readonly("coverage", &PlanScore::coverage);

	m.def(
	    "baseline_plan",
	    [](const std::string &method, const PlanningInstance &inst, const PlannerConfig &cfg, int iterations, std::uint64_t seed) {
		    AnnealingConfig sa;
		    sa.iterations = iterations;
		    sa.seed = seed;
		    ProbePlan plan = baseline_plan(parse_baseline(method), inst, cfg, sa);
		    std::vector<std::vector<NodeId>> walks;
		    for (const auto &p : plan.paths) {
			    walks.push_back(p.nodes);
		    }
		    return py::make_tuple(walks, score_plan(plan, inst.terminals(), cfg, inst.topo.node_count()));
	    },
	    py::arg("method"), py::arg("instance"), py::arg("config") = PlannerConfig{}, py::arg("iterations") = AnnealingConfig{}.iterations,
	    py::arg("seed") = 7, "Returns (paths, score).");
	m.def("optimal_path_count", &optimal_path_count, py::arg("instance"), py::arg("t_max"));

	m.def(
	    "run_pipeline_json",
	    [](const std::string &config_json) {
		    PipelineConfig cfg = parse_pipeline_config(config_json);
		    py::gil_scoped_release release;
		    return report_to_json(run_pipeline(cfg));
	    },
	    py::arg("config_json"), "Runs every stage; returns the report as JSON text.");
	m.def("default_config_json", [] { return dump_pipeline_config(PipelineConfig{}); });
}
