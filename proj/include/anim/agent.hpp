#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anim/episode.hpp"
#include "anim/kinematics.hpp"
#include "anim/mathutil.hpp"
#include "anim/nn.hpp"
#include "anim/signals.hpp"

namespace anim::agent {

// Architecture/objective controls studied in the ablation experiments.
//  full                  - the standard agent
//  single_state          - no self-description; the posterior conditions on
//                          measured descriptions instead of portrayal output
//  single_dynamics_space - task and behaviour latents merged into one
//                          deterministic+stochastic state
//  supervised_loss       - full architecture, trained with the imitation
//                          term only (reconstruction/KL weights zeroed)
enum class AblationKind { full, single_state, single_dynamics_space, supervised_loss };

std::string to_string(AblationKind kind);
AblationKind ablation_from_string(const std::string& s);

struct AgentConfig {
    int h_dim = 64;
    int b_det_dim = 64;
    int b_stoch_dim = 16;
    int portrayal_hidden_dim = 128;
    int decoder_hidden_dim = 128;
    int policy_hidden_dim = 128;
    double min_stddev = 0.01;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static AgentConfig from_json(const nlohmann::json& doc);
};

struct LatentState {
    Eigen::VectorXd h;        // deterministic task state (merged state for sds)
    Eigen::VectorXd b_det;    // deterministic behaviour feature
    Eigen::VectorXd b_sample; // stochastic behaviour sample
    Eigen::VectorXd b_mean, b_stddev;
};

struct BetaPolicyOutput {
    Eigen::VectorXd alpha, beta; // componentwise > 1

    Eigen::VectorXd mean() const { return alpha.cwiseQuotient(alpha + beta); }
};

struct GaussianParams {
    Eigen::VectorXd mean, stddev;
};

enum class RolloutMode { stochastic, deterministic };

// Recorded per-step inputs for one chunk batch (columns = chunks).
struct ChunkBatchStep {
    Eigen::MatrixXd o;      // 6 x C
    Eigen::MatrixXd a_prev; // 45 x C, action recorded at the previous step
    Eigen::MatrixXd d_real; // 42 x C
    Eigen::MatrixXd m;      // 45 x C
    Eigen::MatrixXd noise;  // b_stoch x C, reparameterization draws
    Eigen::MatrixXd mask;   // 1 x C, 1 = valid step
};

// Differentiable per-step outputs of an unrolled chunk.
struct UnrolledStep {
    nn::Var d_hat; // 42 x C conditioning description (recorded d' for single_state)
    nn::Var prior_mean, prior_stddev;
    nn::Var post_mean, post_stddev;
    nn::Var decoded;    // 42 x C
    nn::Var gen_action; // 45 x C, Beta mean
};

// The three cooperating models (portrayal, behaviour, animation) plus the
// rollout procedure. Parameters are immutable during rollout; training owns
// them exclusively while updating.
class AgentModel {
public:
    AgentModel(const AgentConfig& config, AblationKind kind = AblationKind::full);

    const AgentConfig& config() const { return config_; }
    AblationKind kind() const { return kind_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    int action_dim() const { return action_dim_; }

    // -- single-step model evaluation (plain, batch of one) --

    // Advances the portrayal memory and emits the renormalized description
    // prediction for the current objective.
    std::pair<sig::DescriptionSignal, Eigen::VectorXd> portrayal_step(
        const kin::Skeleton& skeleton, const sig::ObjectiveSignal& o,
        const Eigen::VectorXd& state) const;
    Eigen::VectorXd portrayal_initial_state() const;

    Eigen::VectorXd task_state_update(const Eigen::VectorXd& h_prev,
                                      const sig::ObjectiveSignal& o) const;

    struct PriorResult {
        Eigen::VectorXd b_det;
        GaussianParams dist;
    };
    PriorResult behaviour_prior(const Eigen::VectorXd& h, const Eigen::VectorXd& b_prev_sample,
                                const Eigen::VectorXd& a_prev,
                                const Eigen::VectorXd& b_det_prev) const;

    GaussianParams behaviour_posterior(const Eigen::VectorXd& b_det,
                                       const Eigen::Matrix<double, sig::kDescriptionDim, 1>& d)
        const;

    BetaPolicyOutput animation_step(const Eigen::VectorXd& h,
                                    const Eigen::VectorXd& b_sample) const;

    Eigen::VectorXd decode_description(const Eigen::VectorXd& h,
                                       const Eigen::VectorXd& b_sample) const;

    // -- episode generation --

    // Runs the models over the objective sequence, applies actions through
    // the skeleton and records (o, a, d'). `ideal_actions`, when given,
    // becomes the episode's m sequence (rest encoding otherwise). Stochastic
    // mode draws behaviour samples and Beta actions from `rng`.
    EpisodeRecord rollout(const std::vector<sig::ObjectiveSignal>& objectives,
                          const kin::Skeleton& skeleton, RolloutMode mode, Rng* rng = nullptr,
                          const std::vector<Eigen::VectorXd>* ideal_actions = nullptr) const;

    // -- training support --

    // Builds the differentiable teacher-forced unroll of one chunk batch.
    std::vector<UnrolledStep> unroll(nn::Tape& tape, const nn::ParamLeaves& leaves,
                                     const std::vector<ChunkBatchStep>& steps) const;

    // -- checkpoints --

    // Versioned binary container: magic, header JSON (config, ablation kind,
    // signal layout, seed, tensor index), then column-major float64 tensor
    // data. Exact layout documented in docs/checkpoint_format.md.
    void save_checkpoint(const std::string& path, std::uint64_t training_seed) const;

private:
    void register_networks();

    AgentConfig config_;
    AblationKind kind_;
    int action_dim_;
    int det_dim_; // h_dim, or h_dim + b_det_dim when the latent is merged
    nn::ParamStore params_;
    nn::GruCell portrayal_gru_, task_gru_, behaviour_gru_;
    nn::Mlp prior_head_, posterior_head_, decoder_, action_head_;
    // portrayal output layer
    static constexpr const char* kPortrayalOutW = "portrayal_out/W";
    static constexpr const char* kPortrayalOutB = "portrayal_out/b";

    bool merged() const { return kind_ == AblationKind::single_dynamics_space; }
    bool has_portrayal() const { return kind_ != AblationKind::single_state; }
};

struct LoadedCheckpoint {
    AgentModel model;
    std::uint64_t training_seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace anim::agent
