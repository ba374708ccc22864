#include "doctest.h"

#include "telemplan/highload.hpp"

#include <random>

using namespace telemplan;

namespace {

Topology path3() {
	return Topology::from_parts({100, 100, 100}, {{1, 2, 1}, {2, 3, 1}});
}

HighLoadSet set_of(std::vector<NodeId> v) {
	HighLoadSet s;
	s.switches = std::move(v);
	return s;
}

} // namespace

TEST_CASE("switch_load sums incident links") {
	Eigen::VectorXd links(2);
	links << 10, 20;
	auto loads = switch_load(path3(), links);
	CHECK(loads.at(1) == 10.0);
	CHECK(loads.at(2) == 30.0);
	CHECK(loads.at(3) == 20.0);

	auto zero = switch_load(path3(), Eigen::VectorXd::Zero(2));
	for (auto [v, l] : zero) {
		CHECK(l == 0.0);
	}
	CHECK_THROWS_AS(switch_load(path3(), Eigen::VectorXd::Zero(3)), HighLoadError);
}

TEST_CASE("switch_load matches an incidence-matrix product on random graphs") {
	for (std::uint64_t seed = 1; seed <= 10; ++seed) {
		Topology t = random_topology({8, 3.0, 1, 10, 100.0}, seed);
		Eigen::MatrixXd incidence = Eigen::MatrixXd::Zero(8, static_cast<Eigen::Index>(t.edge_count()));
		for (std::size_t e = 0; e < t.edge_count(); ++e) {
			incidence(t.edges()[e].u - 1, static_cast<Eigen::Index>(e)) = 1.0;
			incidence(t.edges()[e].v - 1, static_cast<Eigen::Index>(e)) = 1.0;
		}
		std::mt19937_64 rng(seed);
		std::uniform_real_distribution<double> d(0.0, 100.0);
		Eigen::VectorXd links(static_cast<Eigen::Index>(t.edge_count()));
		for (Eigen::Index i = 0; i < links.size(); ++i) {
			links(i) = d(rng);
		}
		Eigen::VectorXd expect = incidence * links;
		auto loads = switch_load(t, links);
		for (int v = 1; v <= 8; ++v) {
			CHECK(loads.at(v) == doctest::Approx(expect(v - 1)).epsilon(1e-12));
		}
	}
}

TEST_CASE("horizon_switch_load takes the per-switch maximum over slots") {
	Eigen::MatrixXd f(2, 2);
	f << 10, 20, 40, 1;
	auto loads = horizon_switch_load(path3(), f);
	CHECK(loads.at(1) == 40.0);
	CHECK(loads.at(2) == 41.0);
	CHECK(loads.at(3) == 20.0);
}

TEST_CASE("capacity threshold uses >=") {
	Topology t = path3();
	auto s = identify_highload({{1, 85.0}, {2, 80.0}, {3, 79.999}}, t, 0.8, ThresholdMode::capacity);
	CHECK(s.switches == std::vector<NodeId>{1, 2});
	CHECK(s.contains(2));
	CHECK_FALSE(s.contains(3));
	CHECK(s.threshold_used.at(1) == doctest::Approx(80.0));
	CHECK(s.loads.at(3) == 79.999);
}

TEST_CASE("max-observed threshold") {
	auto s = identify_highload({{1, 10.0}, {2, 50.0}, {3, 100.0}}, path3(), 0.8, ThresholdMode::max_observed);
	CHECK(s.switches == std::vector<NodeId>{3});
	CHECK(s.threshold_used.at(1) == doctest::Approx(80.0));

	CHECK(parse_threshold_mode("max-observed") == ThresholdMode::max_observed);
	CHECK(parse_threshold_mode(to_string(ThresholdMode::capacity)) == ThresholdMode::capacity);
	CHECK_THROWS_AS(parse_threshold_mode("median"), HighLoadError);
}

TEST_CASE("classification metrics") {
	auto same = classification_metrics(set_of({2, 5}), set_of({2, 5}));
	CHECK(same.precision == 1.0);
	CHECK(same.recall == 1.0);
	CHECK(same.f1 == 1.0);
	CHECK_FALSE(same.degenerate);

	auto half = classification_metrics(set_of({1, 2}), set_of({2, 3}));
	CHECK(half.precision == 0.5);
	CHECK(half.recall == 0.5);
	CHECK(half.f1 == 0.5);
	CHECK(half.true_positives == 1);
	CHECK(half.false_positives == 1);
	CHECK(half.false_negatives == 1);

	auto none = classification_metrics(set_of({}), set_of({1}));
	CHECK(none.precision == 0.0);
	CHECK(none.recall == 0.0);
	CHECK(none.f1 == 0.0);
	CHECK(none.degenerate);

	auto both_empty = classification_metrics(set_of({}), set_of({}));
	CHECK(both_empty.f1 == 1.0);
	CHECK(both_empty.degenerate);

	auto micro = combine_counts(3, 1, 2);
	CHECK(micro.precision == doctest::Approx(0.75));
	CHECK(micro.recall == doctest::Approx(0.6));
	CHECK(micro.f1 == doctest::Approx(2 * 0.75 * 0.6 / 1.35));
}

TEST_CASE("high-load file round trip") {
	Topology t = path3();
	auto s = identify_highload({{1, 85.0}, {2, 80.0}, {3, 1.0 / 3.0}}, t, 0.8, ThresholdMode::capacity);
	auto text = write_highload(s, t);
	auto back = read_highload(text, t);
	CHECK(back.switches == s.switches);
	CHECK(back.loads == s.loads);
	CHECK(back.threshold_used == s.threshold_used);
	CHECK_THROWS_AS(read_highload("switch 9 1 1 1\n", t), HighLoadError);
}
