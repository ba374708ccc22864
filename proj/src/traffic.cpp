#include "telemplan/traffic.hpp"

#include "telemplan/textio.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace telemplan {

void check_profile(const TrafficProfile &p) {
	auto fail = [](const std::string &what) { throw TrafficError("invalid traffic profile: " + what); };
	if (!(p.base_min >= 0.0) || !(p.base_max >= p.base_min)) {
		fail("base level range");
	}
	if (!(p.diurnal_amplitude >= 0.0)) {
		fail("negative diurnal amplitude");
	}
	if (!(p.period_slots > 0.0)) {
		fail("period must be positive");
	}
	if (!(p.phase_jitter >= 0.0)) {
		fail("negative phase jitter");
	}
	if (!(std::abs(p.ar_coefficient) < 1.0)) {
		fail("AR coefficient must lie in (-1, 1)");
	}
	if (!(p.noise_std >= 0.0)) {
		fail("negative noise level");
	}
	if (!(p.burst_rate >= 0.0)) {
		fail("negative burst rate");
	}
	if (!(p.burst_shape > 0.0)) {
		fail("burst shape must be positive");
	}
	if (!(p.burst_scale > 0.0)) {
		fail("burst size must be positive");
	}
	if (!(p.burst_mean_duration >= 1.0)) {
		fail("burst duration must be >= 1 slot");
	}
}

GeneratedTraffic generate_traffic(const Topology &topo, const TrafficProfile &profile, int slots, std::uint64_t seed) {
	check_profile(profile);
	if (slots < 1) {
		throw TrafficError("generate_traffic: slots must be >= 1");
	}
	const auto m = static_cast<int>(topo.edge_count());
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	std::normal_distribution<double> gauss(0.0, 1.0);

	GeneratedTraffic out;
	out.series.links = topo.edges();
	out.series.values = Eigen::MatrixXd::Zero(slots, m);

	std::vector<double> base(static_cast<std::size_t>(m));
	std::vector<double> phase(static_cast<std::size_t>(m));
	for (int l = 0; l < m; ++l) {
		base[static_cast<std::size_t>(l)] = profile.base_min + (profile.base_max - profile.base_min) * unit(rng);
		phase[static_cast<std::size_t>(l)] = profile.phase_jitter * (2.0 * unit(rng) - 1.0);
	}

	const double omega = 2.0 * std::numbers::pi / profile.period_slots;
	std::vector<double> ar(static_cast<std::size_t>(m), 0.0);
	for (int t = 0; t < slots; ++t) {
		for (int l = 0; l < m; ++l) {
			auto li = static_cast<std::size_t>(l);
			double level = base[li] * (1.0 + profile.diurnal_amplitude * std::sin(omega * t + phase[li]));
			if (profile.noise_std > 0.0) {
				ar[li] = profile.ar_coefficient * ar[li] + profile.noise_std * gauss(rng);
			}
			out.series.values(t, l) = level + base[li] * ar[li];
		}
	}

	const int n = topo.node_count();
	if (profile.burst_rate > 0.0 && n >= 2) {
		std::poisson_distribution<int> arrivals(profile.burst_rate);
		std::geometric_distribution<int> extra(1.0 / profile.burst_mean_duration);
		std::uniform_int_distribution<int> node(1, n);
		for (int t = 0; t < slots; ++t) {
			int count = arrivals(rng);
			for (int k = 0; k < count; ++k) {
				BurstEvent ev;
				ev.start_slot = t;
				ev.src = node(rng);
				do {
					ev.dst = node(rng);
				} while (ev.dst == ev.src);
				// Pareto(shape, scale) via inverse CDF
				double u = 1.0 - unit(rng);
				ev.volume = profile.burst_scale / std::pow(u, 1.0 / profile.burst_shape);
				if (profile.burst_cap > 0.0) {
					ev.volume = std::min(ev.volume, profile.burst_cap);
				}
				ev.duration = 1 + extra(rng);
				ev.route = shortest_path(topo, ev.src, ev.dst).nodes;
				for (std::size_t i = 1; i < ev.route.size(); ++i) {
					auto e = topo.edge_index(ev.route[i - 1], ev.route[i]);
					for (int s = t; s < std::min(slots, t + ev.duration); ++s) {
						out.series.values(s, static_cast<Eigen::Index>(*e)) += ev.volume;
					}
				}
				out.events.push_back(std::move(ev));
			}
		}
	}
	out.series.values = out.series.values.cwiseMax(0.0);
	return out;
}

std::string export_csv(const TrafficSeries &series, const Topology &topo) {
	std::ostringstream out;
	out << "slot";
	for (const auto &e : series.links) {
		out << "," << topo.external_id(e.u) << "-" << topo.external_id(e.v);
	}
	out << "\n";
	for (int t = 0; t < series.slots(); ++t) {
		out << t;
		for (int l = 0; l < series.link_count(); ++l) {
			out << "," << textio::format_double(series.values(t, l));
		}
		out << "\n";
	}
	return out.str();
}

TrafficSeries ingest_csv(std::string_view text, const Topology &topo) {
	auto lines = textio::split(text, '\n');
	std::size_t first = 0;
	while (first < lines.size() && textio::trim(lines[first]).empty()) {
		++first;
	}
	if (first == lines.size()) {
		throw TrafficError("traffic csv: empty input");
	}
	auto header = textio::split(textio::trim(lines[first]), ',');
	if (header.empty() || textio::trim(header[0]) != "slot") {
		throw TrafficError("traffic csv: first column must be 'slot'");
	}
	const std::size_t m = topo.edge_count();
	std::vector<int> column_to_edge;
	std::vector<char> seen(m, 0);
	for (std::size_t c = 1; c < header.size(); ++c) {
		auto name = textio::trim(header[c]);
		auto parts = textio::split(name, '-');
		std::optional<std::size_t> edge;
		if (parts.size() == 2) {
			try {
				auto a = topo.internal_id(textio::parse_int(parts[0]));
				auto b = topo.internal_id(textio::parse_int(parts[1]));
				if (a && b) {
					edge = topo.edge_index(*a, *b);
				}
			} catch (const std::invalid_argument &) {
			}
		}
		if (!edge) {
			throw TrafficError("traffic csv: unknown link '" + std::string(name) + "'");
		}
		if (seen[*edge]) {
			throw TrafficError("traffic csv: link '" + std::string(name) + "' listed twice");
		}
		seen[*edge] = 1;
		column_to_edge.push_back(static_cast<int>(*edge));
	}
	for (std::size_t e = 0; e < m; ++e) {
		if (!seen[e]) {
			const auto &edge = topo.edges()[e];
			throw TrafficError("traffic csv: missing link " + std::to_string(topo.external_id(edge.u)) + "-" +
			                   std::to_string(topo.external_id(edge.v)));
		}
	}

	std::vector<std::vector<double>> rows;
	for (std::size_t i = first + 1; i < lines.size(); ++i) {
		auto line = textio::trim(lines[i]);
		if (line.empty()) {
			continue;
		}
		auto cells = textio::split(line, ',');
		if (cells.size() != header.size()) {
			throw TrafficError("traffic csv: row " + std::to_string(i + 1) + " has " + std::to_string(cells.size()) +
			                   " fields, expected " + std::to_string(header.size()));
		}
		std::vector<double> row(m);
		for (std::size_t c = 1; c < cells.size(); ++c) {
			double v = 0.0;
			try {
				v = textio::parse_double(textio::trim(cells[c]));
			} catch (const std::invalid_argument &e) {
				throw TrafficError("traffic csv: row " + std::to_string(i + 1) + ": " + e.what());
			}
			if (!(v >= 0.0) || !std::isfinite(v)) {
				throw TrafficError("traffic csv: row " + std::to_string(i + 1) + ": negative or non-finite value");
			}
			row[static_cast<std::size_t>(column_to_edge[c - 1])] = v;
		}
		rows.push_back(std::move(row));
	}
	TrafficSeries series;
	series.links = topo.edges();
	series.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
	for (std::size_t t = 0; t < rows.size(); ++t) {
		for (std::size_t l = 0; l < m; ++l) {
			series.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l)) = rows[t][l];
		}
	}
	return series;
}

Eigen::MatrixXd Normalization::apply(const Eigen::MatrixXd &raw) const {
	Eigen::MatrixXd out = raw.rowwise() - mean.transpose();
	return out.array().rowwise() / scale.transpose().array();
}

Eigen::MatrixXd Normalization::invert(const Eigen::MatrixXd &normalized) const {
	Eigen::MatrixXd out = normalized.array().rowwise() * scale.transpose().array();
	return out.rowwise() + mean.transpose();
}

Eigen::MatrixXd Normalization::invert_columns(const Eigen::MatrixXd &normalized, const std::vector<int> &columns) const {
	Eigen::MatrixXd out(normalized.rows(), normalized.cols());
	for (std::size_t c = 0; c < columns.size(); ++c) {
		auto col = static_cast<Eigen::Index>(c);
		out.col(col) = normalized.col(col).array() * scale(columns[c]) + mean(columns[c]);
	}
	return out;
}

Normalization fit_normalization(const Eigen::MatrixXd &raw) {
	Normalization norm;
	norm.mean = raw.colwise().mean().transpose();
	norm.scale.resize(raw.cols());
	for (Eigen::Index c = 0; c < raw.cols(); ++c) {
		double var = (raw.col(c).array() - norm.mean(c)).square().mean();
		double sd = std::sqrt(var);
		norm.scale(c) = (sd > 1e-12 * std::max(1.0, std::abs(norm.mean(c)))) ? sd : 1.0;
	}
	return norm;
}

WindowedDataset::WindowedDataset(std::shared_ptr<const Eigen::MatrixXd> normalized, std::shared_ptr<const Eigen::MatrixXd> raw,
                                 Normalization norm, int in_len, int out_len, std::vector<int> starts)
    : normalized_(std::move(normalized)), raw_(std::move(raw)), norm_(std::move(norm)), in_len_(in_len), out_len_(out_len),
      starts_(std::move(starts)) {
}

Eigen::MatrixXd WindowedDataset::input(std::size_t i) const {
	return normalized_->middleRows(starts_.at(i), in_len_);
}

Eigen::MatrixXd WindowedDataset::target(std::size_t i) const {
	return normalized_->middleRows(starts_.at(i) + in_len_, out_len_);
}

Eigen::MatrixXd WindowedDataset::raw_target(std::size_t i) const {
	return raw_->middleRows(starts_.at(i) + in_len_, out_len_);
}

Eigen::MatrixXd WindowedDataset::raw_input(std::size_t i) const {
	return raw_->middleRows(starts_.at(i), in_len_);
}

DatasetSplit prepare_dataset(const TrafficSeries &series, int in_len, int out_len, double split) {
	if (in_len < 1 || out_len < 1) {
		throw TrafficError("prepare_dataset: window lengths must be positive");
	}
	if (!(split > 0.0 && split < 1.0)) {
		throw TrafficError("prepare_dataset: split must lie in (0, 1)");
	}
	const int total = series.slots();
	if (total < in_len + out_len) {
		throw TrafficError("prepare_dataset: series has " + std::to_string(total) + " slots, need at least " +
		                   std::to_string(in_len + out_len));
	}
	const int windows = total - in_len - out_len + 1;
	int test_count = static_cast<int>(std::ceil((1.0 - split) * windows - 1e-9));
	test_count = std::clamp(test_count, 1, windows);
	const int first_test = windows - test_count;
	const int boundary = first_test + in_len;

	std::vector<int> train_starts;
	for (int s = 0; s + in_len + out_len <= boundary; ++s) {
		train_starts.push_back(s);
	}
	std::vector<int> test_starts;
	for (int s = first_test; s < windows; ++s) {
		test_starts.push_back(s);
	}

	Normalization norm = fit_normalization(series.values.topRows(boundary));
	auto raw = std::make_shared<const Eigen::MatrixXd>(series.values);
	auto normalized = std::make_shared<const Eigen::MatrixXd>(norm.apply(series.values));

	DatasetSplit out;
	out.train = WindowedDataset(normalized, raw, norm, in_len, out_len, std::move(train_starts));
	out.test = WindowedDataset(normalized, raw, norm, in_len, out_len, std::move(test_starts));
	out.boundary_slot = boundary;
	return out;
}

} // namespace telemplan
