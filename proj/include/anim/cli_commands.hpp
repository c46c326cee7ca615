#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anim/agent.hpp"
#include "anim/eval.hpp"
#include "anim/motion.hpp"
#include "anim/training.hpp"

namespace anim::cli {

struct EvalConfig {
    int window = 9;
    int order = 3;

    nlohmann::json to_json() const;
    static EvalConfig from_json(const nlohmann::json& doc);
};

// One experiment = one JSON document; per-section seeds derive from the
// master seed unless a section pins its own.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    motion::DatasetSpec dataset;
    agent::AgentConfig agent;
    train::TrainConfig train;
    EvalConfig eval;

    static ExperimentConfig load(const std::string& path,
                                 std::optional<std::uint64_t> seed_override = {},
                                 std::optional<std::string> out_override = {});
};

// dataset: writes clips/<id>.json, skeleton.json and manifest.json under
// <out_dir>/dataset. Returns the manifest path.
std::string run_dataset(const ExperimentConfig& config);

struct LoadedDataset {
    kin::Skeleton skeleton;
    motion::DatasetSplit split;
};
LoadedDataset load_dataset(const std::string& manifest_path);

// train: trains (optionally an ablation control) against the generated
// dataset, writes log.csv plus the final checkpoint, returns checkpoint path.
std::string run_train(const ExperimentConfig& config, agent::AblationKind kind,
                      bool print_rows = true);

struct EvalOptions {
    std::string split = "test"; // train | test
    std::vector<double> flex_factors;
};
// eval: deterministic scoring of a checkpoint against a manifest split;
// writes report.csv, scores.svg, per_clip.csv and optionally flexibility.csv.
std::string run_eval(const std::string& checkpoint_path, const std::string& manifest_path,
                     const EvalOptions& options, const std::string& out_dir, int window = 9,
                     int order = 3);

struct GenerateOptions {
    Behaviour behaviour = Behaviour::wave;
    Arm arm = Arm::right;
    Eigen::Vector3d target = Eigen::Vector3d(0, 0, 1); // point
    double exaggeration = 0.5;                          // wave
    bool normalize_target = false;
    int frames = 60;
    double fps = 30.0;
    bool write_bvh = false;
};
// generate: rolls the checkpoint out on a user-specified objective and writes
// the clip (JSON, optionally BVH). Returns the clip path.
std::string run_generate(const std::string& checkpoint_path, const GenerateOptions& options,
                         const std::string& out_path);

// Applies the output-root override from the environment (ANIMAGENT_OUT_ROOT).
std::string resolve_out_dir(const std::string& configured);

} // namespace anim::cli
