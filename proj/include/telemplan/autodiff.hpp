#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

/// Minimal reverse-mode differentiation over dense matrices.
///
/// A Tape records every operation applied to Vars; `backward` walks it in
/// reverse and accumulates gradients into the Parameters that were bound as
/// leaves. Tapes are single-use and not thread-safe.
namespace telemplan::ad {

using Matrix = Eigen::MatrixXd;

struct Parameter {
	std::string name;
	Matrix value;
	Matrix grad;

	Parameter() = default;
	Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {
	}
	void zero_grad() {
		grad.setZero(value.rows(), value.cols());
	}
};

class Tape;

class Var {
public:
	Var() = default;
	const Matrix &value() const;
	Eigen::Index rows() const {
		return value().rows();
	}
	Eigen::Index cols() const {
		return value().cols();
	}
	/// Scalar value of a 1x1 var.
	double item() const {
		return value()(0, 0);
	}
	Tape *tape() const {
		return tape_;
	}
	std::size_t id() const {
		return id_;
	}

private:
	friend class Tape;
	Var(Tape *t, std::size_t id) : tape_(t), id_(id) {
	}
	Tape *tape_ = nullptr;
	std::size_t id_ = 0;
};

class Tape {
public:
	using Backward = std::function<void(Tape &, const Matrix &grad_out)>;

	Var constant(Matrix value);
	Var param(Parameter &p);

	/// Records a node. `inputs` decide whether the node needs a gradient;
	/// `backward` receives the node's output gradient.
	Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
	Var record(Matrix value, const std::vector<Var> &inputs, Backward backward);

	/// Adds `g` to the gradient of `v` (no-op for constants).
	void accumulate(const Var &v, const Matrix &g);
	bool needs_grad(const Var &v) const {
		return nodes_[v.id_].needs_grad;
	}

	/// Seeds d(out)/d(out) = 1 for a 1x1 output (or `seed` when given) and
	/// accumulates into bound Parameters.
	void backward(const Var &out);
	void backward(const Var &out, const Matrix &seed);

	const Matrix &value(const Var &v) const {
		return nodes_[v.id_].value;
	}
	std::size_t size() const {
		return nodes_.size();
	}

private:
	struct Node {
		Matrix value;
		Matrix grad;
		bool has_grad = false;
		bool needs_grad = false;
		Backward backward;
		Parameter *sink = nullptr;
	};
	std::vector<Node> nodes_;
};

// Elementwise and linear algebra ops. Shapes follow Eigen conventions.
Var matmul(const Var &a, const Var &b);
Var add(const Var &a, const Var &b);
Var sub(const Var &a, const Var &b);
Var mul(const Var &a, const Var &b);
Var scale(const Var &a, double s);
/// a (r x c) plus row vector b (1 x c) broadcast over rows.
Var add_row(const Var &a, const Var &b);
/// a (r x c) plus column vector b (r x 1) broadcast over columns.
Var add_col(const Var &a, const Var &b);
Var mul_const(const Var &a, const Matrix &c);
Var tanh(const Var &a);
Var sigmoid(const Var &a);
Var relu(const Var &a);
Var abs(const Var &a);
Var square(const Var &a);
Var transpose(const Var &a);
Var sum(const Var &a);
Var mean(const Var &a);
Var concat_cols(const std::vector<Var> &parts);
Var concat_rows(const std::vector<Var> &parts);
Var slice_rows(const Var &a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var &a, Eigen::Index start, Eigen::Index count);
/// Z holds `blocks` vertically stacked (n x c) blocks; returns A * Z_b per block.
Var block_left_mul(const Var &a, const Var &z, Eigen::Index blocks);
/// Divides each row by its sum; rows must have positive sums.
Var row_normalize(const Var &a);
/// Softmax over a column vector. Entries with mask[i] == 0 get probability
/// exactly 0; at least one entry must be unmasked.
Var masked_softmax(const Var &logits, const std::vector<char> &mask);
/// log softmax(logits)[index] under the same masking (1x1).
Var masked_log_softmax_at(const Var &logits, const std::vector<char> &mask, Eigen::Index index);

/// Adam with bias correction. Step size is supplied per call so callers can
/// follow a schedule.
class Adam {
public:
	explicit Adam(std::vector<Parameter *> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
	void step(double lr);
	void zero_grad();
	long steps() const {
		return t_;
	}

private:
	std::vector<Parameter *> params_;
	std::vector<Matrix> m_;
	std::vector<Matrix> v_;
	double beta1_;
	double beta2_;
	double eps_;
	long t_ = 0;
};

/// Plain gradient descent: value -= lr * grad.
void sgd_step(const std::vector<Parameter *> &params, double lr);

bool all_finite(const std::vector<Parameter *> &params);

} // namespace telemplan::ad
