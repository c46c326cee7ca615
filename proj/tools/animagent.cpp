// Command-line entry point: dataset generation, training, evaluation and
// clip synthesis driven by a single experiment config.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "anim/cli_commands.hpp"
#include "anim/errors.hpp"

namespace {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const anim::IoError*>(&e)) return 3;
    if (dynamic_cast<const anim::VersionError*>(&e)) return 4;
    if (dynamic_cast<const anim::NumericFault*>(&e)) return 5;
    if (dynamic_cast<const anim::Error*>(&e)) return 2;
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-dynamics animation agent"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    std::uint64_t seed_value = 0;
    std::string out_value;
    app.add_option("--config", config_path, "experiment config JSON")->envname("ANIMAGENT_CONFIG");
    auto* seed_opt = app.add_option("--seed", seed_value, "override the master seed");
    auto* out_opt = app.add_option("--out", out_value, "override the output directory");

    CLI::App* cmd_dataset = app.add_subcommand("dataset", "generate the synthetic clip dataset");

    CLI::App* cmd_train = app.add_subcommand("train", "train an agent against the dataset");
    std::string ablation = "full";
    cmd_train->add_option("--ablation", ablation,
                          "full | single_state | single_dynamics_space | supervised_loss");

    CLI::App* cmd_eval = app.add_subcommand("eval", "score a checkpoint against a manifest");
    std::string ckpt_path, manifest_path, split = "test", eval_out = "eval";
    std::vector<double> flex_factors;
    cmd_eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    cmd_eval->add_option("manifest", manifest_path, "dataset manifest")->required();
    cmd_eval->add_option("--split", split, "train | test");
    cmd_eval->add_option("--flex", flex_factors, "time-warp factors for the flexibility sweep")
        ->delimiter(',');
    cmd_eval->add_option("--report-dir", eval_out, "report output directory");
    int window = 9, order = 3;
    cmd_eval->add_option("--window", window, "smoothing filter window (odd)");
    cmd_eval->add_option("--order", order, "smoothing filter polynomial order");

    CLI::App* cmd_generate = app.add_subcommand("generate", "synthesize a clip from a checkpoint");
    std::string gen_ckpt, gen_out = "generated.json";
    std::vector<double> point_target;
    double wave_ex = -1;
    std::string arm = "right";
    int frames = 60;
    double fps = 30.0;
    bool normalize = false, bvh = false;
    cmd_generate->add_option("checkpoint", gen_ckpt, "checkpoint file")->required();
    cmd_generate->add_option("--point", point_target, "pointing target x,y,z")->delimiter(',');
    cmd_generate->add_option("--wave", wave_ex, "wave exaggeration in [0,1]");
    cmd_generate->add_option("--arm", arm, "left | right");
    cmd_generate->add_option("--frames", frames, "episode length");
    cmd_generate->add_option("--fps", fps, "clip frame rate");
    cmd_generate->add_flag("--normalize", normalize, "normalize a non-unit pointing target");
    cmd_generate->add_flag("--bvh", bvh, "also write a BVH file");
    cmd_generate->add_option("--clip-out", gen_out, "output clip path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        std::cerr << e.what() << "\n";
        return 2;
    }
    if (seed_opt->count()) seed_override = seed_value;
    if (out_opt->count()) out_override = out_value;

    try {
        if (cmd_dataset->parsed() || cmd_train->parsed()) {
            if (config_path.empty()) {
                throw anim::ConfigError("--config is required for this command");
            }
            const anim::cli::ExperimentConfig config =
                anim::cli::ExperimentConfig::load(config_path, seed_override, out_override);
            if (cmd_dataset->parsed()) {
                std::cout << anim::cli::run_dataset(config) << "\n";
            } else {
                std::cout << anim::cli::run_train(config,
                                                  anim::agent::ablation_from_string(ablation))
                          << "\n";
            }
        } else if (cmd_eval->parsed()) {
            anim::cli::EvalOptions options;
            options.split = split;
            options.flex_factors = flex_factors;
            std::cout << anim::cli::run_eval(ckpt_path, manifest_path, options,
                                             anim::cli::resolve_out_dir(
                                                 out_override.value_or(eval_out)),
                                             window, order)
                      << "\n";
        } else if (cmd_generate->parsed()) {
            anim::cli::GenerateOptions options;
            if (!point_target.empty() && wave_ex >= 0) {
                throw anim::ConfigError("--point and --wave are mutually exclusive");
            }
            if (!point_target.empty()) {
                if (point_target.size() != 3) {
                    throw anim::ConfigError("--point needs exactly three components");
                }
                options.behaviour = anim::Behaviour::point;
                options.target =
                    Eigen::Vector3d(point_target[0], point_target[1], point_target[2]);
            } else if (wave_ex >= 0) {
                options.behaviour = anim::Behaviour::wave;
                options.exaggeration = wave_ex;
            } else {
                throw anim::ConfigError("one of --point or --wave is required");
            }
            options.arm = anim::arm_from_string(arm);
            options.frames = frames;
            options.fps = fps;
            options.normalize_target = normalize;
            options.write_bvh = bvh;
            std::cout << anim::cli::run_generate(
                             gen_ckpt, options,
                             out_override ? *out_override : gen_out)
                      << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 0;
}
