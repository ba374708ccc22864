#include "telemplan/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace telemplan::ad {

const Matrix &Var::value() const {
	return tape_->value(*this);
}

Var Tape::constant(Matrix value) {
	Node n;
	n.value = std::move(value);
	nodes_.push_back(std::move(n));
	return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter &p) {
	Node n;
	n.value = p.value;
	n.needs_grad = true;
	n.sink = &p;
	nodes_.push_back(std::move(n));
	return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
	Node n;
	n.value = std::move(value);
	for (const auto &in : inputs) {
		assert(in.tape_ == this);
		n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
	}
	if (n.needs_grad) {
		n.backward = std::move(backward);
	}
	nodes_.push_back(std::move(n));
	return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var> &inputs, Backward backward) {
	Node n;
	n.value = std::move(value);
	for (const auto &in : inputs) {
		n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
	}
	if (n.needs_grad) {
		n.backward = std::move(backward);
	}
	nodes_.push_back(std::move(n));
	return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var &v, const Matrix &g) {
	Node &n = nodes_[v.id_];
	if (!n.needs_grad) {
		return;
	}
	if (!n.has_grad) {
		n.grad = g;
		n.has_grad = true;
	} else {
		n.grad += g;
	}
}

void Tape::backward(const Var &out) {
	if (out.rows() != 1 || out.cols() != 1) {
		throw std::invalid_argument("backward: output must be a scalar");
	}
	backward(out, Matrix::Ones(1, 1));
}

void Tape::backward(const Var &out, const Matrix &seed) {
	accumulate(out, seed);
	for (std::size_t i = out.id_ + 1; i-- > 0;) {
		Node &n = nodes_[i];
		if (!n.has_grad) {
			continue;
		}
		if (n.sink) {
			n.sink->grad += n.grad;
		} else if (n.backward) {
			// Inputs always have smaller ids, so accumulate never touches n.
			n.backward(*this, n.grad);
		}
	}
}

Var matmul(const Var &a, const Var &b) {
	Tape &t = *a.tape();
	if (a.cols() != b.rows()) {
		throw std::invalid_argument("matmul: shape mismatch");
	}
	return t.record(a.value() * b.value(), {a, b}, [a, b](Tape &t, const Matrix &g) {
		if (t.needs_grad(a)) {
			t.accumulate(a, g * b.value().transpose());
		}
		if (t.needs_grad(b)) {
			t.accumulate(b, a.value().transpose() * g);
		}
	});
}

Var add(const Var &a, const Var &b) {
	Tape &t = *a.tape();
	return t.record(a.value() + b.value(), {a, b}, [a, b](Tape &t, const Matrix &g) {
		t.accumulate(a, g);
		t.accumulate(b, g);
	});
}

Var sub(const Var &a, const Var &b) {
	Tape &t = *a.tape();
	return t.record(a.value() - b.value(), {a, b}, [a, b](Tape &t, const Matrix &g) {
		t.accumulate(a, g);
		t.accumulate(b, -g);
	});
}

Var mul(const Var &a, const Var &b) {
	Tape &t = *a.tape();
	return t.record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape &t, const Matrix &g) {
		if (t.needs_grad(a)) {
			t.accumulate(a, g.cwiseProduct(b.value()));
		}
		if (t.needs_grad(b)) {
			t.accumulate(b, g.cwiseProduct(a.value()));
		}
	});
}

Var scale(const Var &a, double s) {
	Tape &t = *a.tape();
	return t.record(a.value() * s, {a}, [a, s](Tape &t, const Matrix &g) { t.accumulate(a, g * s); });
}

Var add_row(const Var &a, const Var &b) {
	Tape &t = *a.tape();
	if (b.rows() != 1 || b.cols() != a.cols()) {
		throw std::invalid_argument("add_row: shape mismatch");
	}
	Matrix v = a.value().rowwise() + b.value().row(0);
	return t.record(std::move(v), {a, b}, [a, b](Tape &t, const Matrix &g) {
		t.accumulate(a, g);
		if (t.needs_grad(b)) {
			t.accumulate(b, g.colwise().sum());
		}
	});
}

Var add_col(const Var &a, const Var &b) {
	Tape &t = *a.tape();
	if (b.cols() != 1 || b.rows() != a.rows()) {
		throw std::invalid_argument("add_col: shape mismatch");
	}
	Matrix v = a.value().colwise() + b.value().col(0);
	return t.record(std::move(v), {a, b}, [a, b](Tape &t, const Matrix &g) {
		t.accumulate(a, g);
		if (t.needs_grad(b)) {
			t.accumulate(b, g.rowwise().sum());
		}
	});
}

Var mul_const(const Var &a, const Matrix &c) {
	Tape &t = *a.tape();
	return t.record(a.value().cwiseProduct(c), {a}, [a, c](Tape &t, const Matrix &g) { t.accumulate(a, g.cwiseProduct(c)); });
}

Var tanh(const Var &a) {
	Tape &t = *a.tape();
	Matrix y = a.value().array().tanh().matrix();
	Var out = t.record(y, {a}, [a, y](Tape &t, const Matrix &g) {
		t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
	});
	return out;
}

Var sigmoid(const Var &a) {
	Tape &t = *a.tape();
	Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
	return t.record(y, {a}, [a, y](Tape &t, const Matrix &g) {
		t.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
	});
}

Var relu(const Var &a) {
	Tape &t = *a.tape();
	Matrix y = a.value().cwiseMax(0.0);
	return t.record(y, {a}, [a](Tape &t, const Matrix &g) {
		t.accumulate(a, (a.value().array() > 0.0).cast<double>().matrix().cwiseProduct(g));
	});
}

Var abs(const Var &a) {
	Tape &t = *a.tape();
	return t.record(a.value().cwiseAbs(), {a}, [a](Tape &t, const Matrix &g) {
		Matrix s = a.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
		t.accumulate(a, s.cwiseProduct(g));
	});
}

Var square(const Var &a) {
	Tape &t = *a.tape();
	return t.record(a.value().array().square().matrix(), {a}, [a](Tape &t, const Matrix &g) {
		t.accumulate(a, 2.0 * a.value().cwiseProduct(g));
	});
}

Var transpose(const Var &a) {
	Tape &t = *a.tape();
	return t.record(a.value().transpose(), {a}, [a](Tape &t, const Matrix &g) { t.accumulate(a, g.transpose()); });
}

Var sum(const Var &a) {
	Tape &t = *a.tape();
	Matrix v(1, 1);
	v(0, 0) = a.value().sum();
	return t.record(std::move(v), {a}, [a](Tape &t, const Matrix &g) {
		t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
	});
}

Var mean(const Var &a) {
	const double count = static_cast<double>(a.rows() * a.cols());
	return scale(sum(a), 1.0 / count);
}

Var concat_cols(const std::vector<Var> &parts) {
	if (parts.empty()) {
		throw std::invalid_argument("concat_cols: no inputs");
	}
	Tape &t = *parts.front().tape();
	Eigen::Index rows = parts.front().rows();
	Eigen::Index cols = 0;
	for (const auto &p : parts) {
		if (p.rows() != rows) {
			throw std::invalid_argument("concat_cols: row mismatch");
		}
		cols += p.cols();
	}
	Matrix v(rows, cols);
	Eigen::Index at = 0;
	for (const auto &p : parts) {
		v.middleCols(at, p.cols()) = p.value();
		at += p.cols();
	}
	return t.record(std::move(v), parts, [parts](Tape &t, const Matrix &g) {
		Eigen::Index at = 0;
		for (const auto &p : parts) {
			if (t.needs_grad(p)) {
				t.accumulate(p, g.middleCols(at, p.cols()));
			}
			at += p.cols();
		}
	});
}

Var concat_rows(const std::vector<Var> &parts) {
	if (parts.empty()) {
		throw std::invalid_argument("concat_rows: no inputs");
	}
	Tape &t = *parts.front().tape();
	Eigen::Index cols = parts.front().cols();
	Eigen::Index rows = 0;
	for (const auto &p : parts) {
		if (p.cols() != cols) {
			throw std::invalid_argument("concat_rows: column mismatch");
		}
		rows += p.rows();
	}
	Matrix v(rows, cols);
	Eigen::Index at = 0;
	for (const auto &p : parts) {
		v.middleRows(at, p.rows()) = p.value();
		at += p.rows();
	}
	return t.record(std::move(v), parts, [parts](Tape &t, const Matrix &g) {
		Eigen::Index at = 0;
		for (const auto &p : parts) {
			if (t.needs_grad(p)) {
				t.accumulate(p, g.middleRows(at, p.rows()));
			}
			at += p.rows();
		}
	});
}

Var slice_rows(const Var &a, Eigen::Index start, Eigen::Index count) {
	Tape &t = *a.tape();
	if (start < 0 || count < 0 || start + count > a.rows()) {
		throw std::out_of_range("slice_rows: out of range");
	}
	return t.record(a.value().middleRows(start, count), {a}, [a, start, count](Tape &t, const Matrix &g) {
		Matrix full = Matrix::Zero(a.rows(), a.cols());
		full.middleRows(start, count) = g;
		t.accumulate(a, full);
	});
}

Var slice_cols(const Var &a, Eigen::Index start, Eigen::Index count) {
	Tape &t = *a.tape();
	if (start < 0 || count < 0 || start + count > a.cols()) {
		throw std::out_of_range("slice_cols: out of range");
	}
	return t.record(a.value().middleCols(start, count), {a}, [a, start, count](Tape &t, const Matrix &g) {
		Matrix full = Matrix::Zero(a.rows(), a.cols());
		full.middleCols(start, count) = g;
		t.accumulate(a, full);
	});
}

Var block_left_mul(const Var &a, const Var &z, Eigen::Index blocks) {
	Tape &t = *a.tape();
	const Eigen::Index n = a.rows();
	if (a.cols() != n || z.rows() != n * blocks) {
		throw std::invalid_argument("block_left_mul: shape mismatch");
	}
	Matrix v(z.rows(), z.cols());
	for (Eigen::Index b = 0; b < blocks; ++b) {
		v.middleRows(b * n, n).noalias() = a.value() * z.value().middleRows(b * n, n);
	}
	return t.record(std::move(v), {a, z}, [a, z, blocks, n](Tape &t, const Matrix &g) {
		if (t.needs_grad(a)) {
			Matrix ga = Matrix::Zero(n, n);
			for (Eigen::Index b = 0; b < blocks; ++b) {
				ga.noalias() += g.middleRows(b * n, n) * z.value().middleRows(b * n, n).transpose();
			}
			t.accumulate(a, ga);
		}
		if (t.needs_grad(z)) {
			Matrix gz(z.rows(), z.cols());
			for (Eigen::Index b = 0; b < blocks; ++b) {
				gz.middleRows(b * n, n).noalias() = a.value().transpose() * g.middleRows(b * n, n);
			}
			t.accumulate(z, gz);
		}
	});
}

Var row_normalize(const Var &a) {
	Tape &t = *a.tape();
	Eigen::VectorXd s = a.value().rowwise().sum();
	if ((s.array() <= 0.0).any()) {
		throw std::domain_error("row_normalize: non-positive row sum");
	}
	Matrix y = a.value().array().colwise() / s.array();
	return t.record(y, {a}, [a, s, y](Tape &t, const Matrix &g) {
		// d y_ij / d a_ik = (delta_jk - y_ij) / s_i
		Eigen::VectorXd inner = g.cwiseProduct(y).rowwise().sum();
		Matrix ga = (g.colwise() - inner).array().colwise() / s.array();
		t.accumulate(a, ga);
	});
}

namespace {

Eigen::VectorXd stable_masked_softmax(const Eigen::VectorXd &u, const std::vector<char> &mask) {
	double hi = -std::numeric_limits<double>::infinity();
	for (Eigen::Index i = 0; i < u.size(); ++i) {
		if (mask[static_cast<std::size_t>(i)]) {
			hi = std::max(hi, u(i));
		}
	}
	if (!std::isfinite(hi)) {
		throw std::invalid_argument("masked_softmax: all entries masked");
	}
	Eigen::VectorXd p = Eigen::VectorXd::Zero(u.size());
	double z = 0.0;
	for (Eigen::Index i = 0; i < u.size(); ++i) {
		if (mask[static_cast<std::size_t>(i)]) {
			p(i) = std::exp(u(i) - hi);
			z += p(i);
		}
	}
	return p / z;
}

} // namespace

Var masked_softmax(const Var &logits, const std::vector<char> &mask) {
	Tape &t = *logits.tape();
	if (logits.cols() != 1 || static_cast<std::size_t>(logits.rows()) != mask.size()) {
		throw std::invalid_argument("masked_softmax: expects a column vector matching the mask");
	}
	Eigen::VectorXd p = stable_masked_softmax(logits.value().col(0), mask);
	Matrix out = p;
	return t.record(out, {logits}, [logits, p](Tape &t, const Matrix &g) {
		double inner = g.col(0).dot(p);
		Matrix gl = (p.array() * (g.col(0).array() - inner)).matrix();
		t.accumulate(logits, gl);
	});
}

Var masked_log_softmax_at(const Var &logits, const std::vector<char> &mask, Eigen::Index index) {
	Tape &t = *logits.tape();
	if (logits.cols() != 1 || static_cast<std::size_t>(logits.rows()) != mask.size()) {
		throw std::invalid_argument("masked_log_softmax_at: expects a column vector matching the mask");
	}
	if (!mask.at(static_cast<std::size_t>(index))) {
		throw std::invalid_argument("masked_log_softmax_at: selected entry is masked");
	}
	Eigen::VectorXd p = stable_masked_softmax(logits.value().col(0), mask);
	Matrix out(1, 1);
	out(0, 0) = std::log(p(index));
	return t.record(out, {logits}, [logits, p, index](Tape &t, const Matrix &g) {
		Matrix gl = -g(0, 0) * p;
		gl(index, 0) += g(0, 0);
		t.accumulate(logits, gl);
	});
}

Adam::Adam(std::vector<Parameter *> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
	for (auto *p : params_) {
		m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
		v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
	}
}

void Adam::step(double lr) {
	++t_;
	const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
	const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
	for (std::size_t i = 0; i < params_.size(); ++i) {
		auto &p = *params_[i];
		m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
		v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
		p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
	}
}

void Adam::zero_grad() {
	for (auto *p : params_) {
		p->zero_grad();
	}
}

void sgd_step(const std::vector<Parameter *> &params, double lr) {
	for (auto *p : params) {
		p->value -= lr * p->grad;
	}
}

bool all_finite(const std::vector<Parameter *> &params) {
	for (const auto *p : params) {
		if (!p->value.allFinite()) {
			return false;
		}
	}
	return true;
}

} // namespace telemplan::ad
