#pragma once

#include "telemplan/autodiff.hpp"
#include "telemplan/planner.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace telemplan {

/// Attention policy with a recurrent decoder and a value head.
///
/// Every input row is embedded linearly (x̄ = x We + be). A gated recurrent
/// cell advances the decoder state h from the embedding of the chosen action.
/// Alignment u_i = v_a' tanh(W_a [x̄_i; h]) gives attention weights a and a
/// context c = sum a_i x̄_i; action scores are v_c' tanh(W_c [x̄_i; c]) and
/// the output is their masked softmax. The critic embeds the initial inputs
/// separately and maps their mean through a rectifier and a linear unit.
struct PolicyParams {
	int features = kFeatures;
	int embed = 0;
	int hidden = 0;

	ad::Parameter embed_w, embed_b;
	ad::Parameter gru_wz, gru_uz, gru_bz;
	ad::Parameter gru_wr, gru_ur, gru_br;
	ad::Parameter gru_wn, gru_un, gru_bn;
	ad::Parameter att_wx, att_wh, att_v; // W_a split into its x̄ and h blocks
	ad::Parameter out_wx, out_wc, out_v; // W_c split into its x̄ and c blocks
	ad::Parameter critic_embed_w, critic_embed_b, critic_w1, critic_b1, critic_w2, critic_b2;

	static PolicyParams init(int embed, int hidden, std::uint64_t seed, int features = kFeatures);

	std::vector<ad::Parameter *> actor_tensors();
	std::vector<ad::Parameter *> critic_tensors();
	std::vector<ad::Parameter *> tensors();
	bool finite() const;
};

/// Action probabilities for one decoding step (rows follow the features).
/// Masked rows get probability exactly 0. Throws when everything is masked.
Eigen::VectorXd policy_forward(const PolicyParams &params, const Eigen::MatrixXd &features, const Eigen::RowVectorXd &h,
                               const std::vector<char> &mask);

/// Decoder state after choosing the action in row `row`.
Eigen::RowVectorXd decoder_step(const PolicyParams &params, const Eigen::MatrixXd &features, const Eigen::RowVectorXd &h, int row);

/// Critic estimate for the initial state of an instance.
double critic_value(const PolicyParams &params, const Eigen::MatrixXd &features);

struct Rollout {
	ProbePlan plan;
	std::vector<NodeId> actions;
	double log_prob = 0.0;
	double min_chosen_prob = 1.0;
	double masked_fraction = 0.0; // mean over steps, full action space
	PlanScore score;
};

/// Always takes the most probable action (ties: lowest node id).
Rollout decode_greedy(const PolicyParams &params, const PlanningInstance &inst, const PlannerConfig &cfg);

/// Samples actions from the policy.
Rollout decode_sample(const PolicyParams &params, const PlanningInstance &inst, const PlannerConfig &cfg, std::uint64_t seed);

/// log P(actions) of a fixed action sequence; accumulates d/dtheta into the
/// actor tensors when `backprop` is set.
double sequence_log_prob(PolicyParams &params, const PlanningInstance &inst, const PlannerConfig &cfg, const std::vector<NodeId> &actions,
                         bool backprop);

struct PolicyEpochRecord {
	int epoch = 0;
	double mean_reward = 0.0;
	double violation_rate = 0.0;
	double mean_paths = 0.0;
	double critic_loss = 0.0;
	double seconds = 0.0; // cumulative training wall time
};

struct PolicyTrainResult {
	PolicyParams params;
	std::vector<PolicyEpochRecord> trace;
};

/// Actor-critic training: per batch, sampled rollouts give rewards R; the
/// actor follows mean((R - V) grad log P) downhill and the critic fits R.
/// `progress` (optional) is called after every epoch.
PolicyTrainResult train_policy(PolicyParams params, const std::vector<PlanningInstance> &instances, const PlannerConfig &cfg,
                               const std::function<void(const PolicyEpochRecord &)> &progress = {});

std::string save_policy(const PolicyParams &params);
PolicyParams load_policy(std::string_view text);

std::string policy_trace_csv(const std::vector<PolicyEpochRecord> &trace);

} // namespace telemplan
