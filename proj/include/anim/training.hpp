#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anim/agent.hpp"
#include "anim/episode.hpp"
#include "anim/motion.hpp"

namespace anim::train {

enum class BehaviourSet { point, wave, both };

std::string to_string(BehaviourSet s);
BehaviourSet behaviour_set_from_string(const std::string& s);

struct TrainConfig {
    int epochs = 100;
    BehaviourSet behaviours = BehaviourSet::both;
    int chunks_per_update = 8;  // C
    int chunk_length = 24;      // L
    int updates_per_epoch = 20; // T
    double learning_rate = 3e-4;
    double huber_delta = 0.1;
    double grad_clip_norm = 10.0;
    int buffer_capacity = 500;
    double w1 = 1.0, w2 = 1.0, w3 = 1.0;
    std::uint64_t seed = 0;
    int eval_every = 10;          // holdout scoring cadence in epochs, 0 = off
    int checkpoint_every = 0;     // periodic checkpoint cadence, 0 = off
    double early_stop_score = 0;  // stop once holdout reaches this, 0 = off

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& doc);
};

// Contiguous window into one buffered episode. Windows shorter than the
// nominal chunk length get a masked tail.
struct ChunkView {
    const EpisodeRecord* episode = nullptr;
    int start = 0;
    int valid = 0; // number of real steps, <= chunk length
};

std::vector<ChunkView> sample_chunks(const EpisodeBuffer& buffer, int chunks, int length,
                                     Rng& rng);

// ---- losses (single sequence, mask 1=valid) ----

double loss_l1(const std::vector<Eigen::VectorXd>& decoded,
               const std::vector<Eigen::VectorXd>& d_real, const std::vector<double>& mask);

double loss_l2(const std::vector<agent::GaussianParams>& posterior,
               const std::vector<agent::GaussianParams>& prior, const std::vector<double>& mask,
               double min_stddev = 0.0);

double loss_l3(const std::vector<Eigen::VectorXd>& generated,
               const std::vector<Eigen::VectorXd>& m, double delta,
               const std::vector<double>& mask);

struct LossParts {
    double l1 = 0, l2 = 0, l3 = 0;
};

double total_loss(const LossParts& parts, double w1 = 1.0, double w2 = 1.0, double w3 = 1.0);

// ---- updates ----

struct LossReport {
    double l1 = 0, l2 = 0, l3 = 0; // weighted contributions w_i * L_i
    double total = 0;
    double grad_norm = 0;
    bool skipped = false; // non-finite gradient; parameters untouched
};

// Differentiable composite loss over an unrolled chunk batch. Exposed so the
// gradient checks can evaluate the exact training objective.
struct LossGraph {
    nn::Var l1, l2, l3, total;
};
LossGraph build_loss_graph(nn::Tape& tape, const nn::ParamLeaves& leaves,
                           const agent::AgentModel& model,
                           const std::vector<agent::ChunkBatchStep>& steps,
                           const TrainConfig& config);

// Column-batched teacher-forcing inputs for a set of chunks.
std::vector<agent::ChunkBatchStep> build_chunk_batch(const std::vector<ChunkView>& chunks,
                                                     int length, int b_stoch,
                                                     const Eigen::VectorXd& rest_action,
                                                     Rng& noise_rng);

// Recomputes latents along each chunk (teacher-forcing the recorded o, a, d'),
// backpropagates the composite loss, clips the global gradient norm and
// applies one optimizer step.
LossReport update_step(agent::AgentModel& model, const std::vector<ChunkView>& chunks,
                       const TrainConfig& config, const kin::Skeleton& skeleton, Rng& noise_rng);

// ---- the training loop ----

struct TrainLogRow {
    int epoch = 0;
    double l1 = 0, l2 = 0, l3 = 0, total = 0, grad_norm = 0;
    std::optional<double> holdout_score;
};

struct TrainResult {
    agent::AgentModel model;
    std::vector<TrainLogRow> log;
};

using HoldoutScorer = std::function<double(const agent::AgentModel&)>;
using CheckpointSink = std::function<void(int epoch, const agent::AgentModel&)>;

// Per epoch: draws one clip per requested behaviour, performs a stochastic
// rollout imitating it, appends the episode, then runs the configured number
// of chunked update steps. Fully deterministic given (configs, dataset).
TrainResult train(const TrainConfig& train_config, const agent::AgentConfig& agent_config,
                  const motion::DatasetSplit& dataset, const kin::Skeleton& skeleton,
                  agent::AblationKind kind = agent::AblationKind::full,
                  const HoldoutScorer& holdout = {}, const CheckpointSink& checkpoint_sink = {});

// Append-only CSV: epoch,l1,l2,l3,total,grad_norm,holdout_score.
void write_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows);
std::string log_csv_string(const std::vector<TrainLogRow>& rows);

} // namespace anim::train
