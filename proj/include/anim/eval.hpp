#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "anim/agent.hpp"
#include "anim/motion.hpp"
#include "anim/training.hpp"

namespace anim::eval {

using agent::AblationKind;

struct ScoreRow {
    std::string clip_id;
    Behaviour behaviour = Behaviour::point;
    double score = 0;      // 100 - total error / frames (unclamped)
    double smoothness = 0; // 0..100
    std::vector<double> per_frame_errors;
};

struct ScoreReport {
    std::vector<ScoreRow> rows;

    double mean_score(std::optional<Behaviour> filter = {}) const;
    double mean_smoothness(std::optional<Behaviour> filter = {}) const;
};

// The ten description joints (collar/shoulder/elbow/wrist/index_base per arm).
std::vector<int> description_joint_set(const kin::Skeleton& skeleton);

// Sum over the joint set of |dx| + |dy| + |dz| between root-relative
// positions.
double error_per_frame(const kin::PoseGeometry& agent_geometry,
                       const kin::PoseGeometry& ref_geometry, const kin::Skeleton& skeleton,
                       const std::vector<int>& joint_set = {});

// Sum of per-frame errors plus the log_{1.01} penalty applied to every frame
// whose error exceeds 1.
double total_error(const std::vector<double>& per_frame_errors);

// 100 - total_error / frames. The reference is resampled onto the agent
// clip's frame count when the lengths differ.
double score(const motion::MotionClip& agent_clip, const motion::MotionClip& ref_clip,
             const kin::Skeleton& skeleton);

// Center smoothing kernel of the least-squares polynomial fit.
Eigen::VectorXd savgol_coefficients(int window, int order);

// Per-channel polynomial least-squares smoothing with mirror padding.
std::vector<Eigen::VectorXd> savitzky_golay(const std::vector<Eigen::VectorXd>& sequence,
                                            int window, int order);

// 100 * min(1, (D(ref)+eps)/(D(agent)+eps)) where D sums |c - SG(c)| over the
// joint-position channels.
double smoothness(const motion::MotionClip& agent_clip, const motion::MotionClip& ref_clip,
                  const kin::Skeleton& skeleton, int window = 9, int order = 3);

// Deterministic-mode rollout imitating the reference clip's objectives;
// n_frames_override > 0 time-warps the portrayal.
motion::MotionClip rollout_imitation(const agent::AgentModel& model,
                                     const motion::MotionClip& ref_clip,
                                     const kin::Skeleton& skeleton, int n_frames_override = 0);

ScoreReport evaluate(const agent::AgentModel& model, const std::vector<motion::MotionClip>& refs,
                     const kin::Skeleton& skeleton, int window = 9, int order = 3);

struct AblationResult {
    agent::AgentModel model;
    std::vector<train::TrainLogRow> log;
    ScoreReport train_report; // scored on clips seen in training
    ScoreReport test_report;  // scored on the held-out clips
};

// Trains the requested control (full = the standard trainer) and scores it on
// both splits. supervised_loss zeroes the reconstruction and KL weights.
AblationResult run_ablation(AblationKind kind, const train::TrainConfig& train_config,
                            const agent::AgentConfig& agent_config,
                            const motion::DatasetSplit& dataset, const kin::Skeleton& skeleton);

struct FlexRow {
    std::string clip_id;
    double factor = 1.0;
    double smoothness = 0;
};

// Rolls out at factor * reference length and scores smoothness against the
// equally resampled reference.
std::vector<FlexRow> flexibility_sweep(const agent::AgentModel& model,
                                       const std::vector<motion::MotionClip>& refs,
                                       const std::vector<double>& factors,
                                       const kin::Skeleton& skeleton, int window = 9,
                                       int order = 3);

struct MethodRun {
    std::string method;
    std::string behaviour_set;
    ScoreReport train_report, test_report;
    std::vector<std::pair<int, double>> score_by_epoch; // holdout trace
};

// Writes report.csv (method,behaviour_set,split,score,smoothness,n_clips) and
// scores.svg (score-vs-epoch polyline per method) into `dir`.
void emit_report(const std::vector<MethodRun>& reports, const std::string& dir);

} // namespace anim::eval
