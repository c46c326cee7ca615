#include "anim/cli_commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anim/errors.hpp"
#include "anim/mathutil.hpp"
#include "anim/signals.hpp"

namespace fs = std::filesystem;

namespace anim::cli {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp);
        out << content;
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        nlohmann::json doc;
        in >> doc;
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
}

} // namespace

nlohmann::json EvalConfig::to_json() const { return {{"window", window}, {"order", order}}; }

EvalConfig EvalConfig::from_json(const nlohmann::json& doc) {
    EvalConfig c;
    c.window = doc.value("window", c.window);
    c.order = doc.value("order", c.order);
    if (c.window < 3 || c.window % 2 == 0 || c.order < 0 || c.order >= c.window) {
        throw ConfigError("eval.window must be odd >= 3 and eval.order < window");
    }
    return c;
}

std::string resolve_out_dir(const std::string& configured) {
    if (const char* root = std::getenv("ANIMAGENT_OUT_ROOT")) {
        return (fs::path(root) / configured).string();
    }
    return configured;
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        std::optional<std::uint64_t> seed_override,
                                        std::optional<std::string> out_override) {
    const nlohmann::json doc = load_json(path);
    ExperimentConfig c;
    try {
        if (doc.contains("seed")) {
            c.seed = doc["seed"].is_string() ? std::stoull(doc["seed"].get<std::string>())
                                             : doc["seed"].get<std::uint64_t>();
        } else if (!seed_override) {
            throw ConfigError("config field 'seed' is required (no implicit entropy)");
        }
        if (seed_override) c.seed = *seed_override;
        c.out_dir = doc.value("out_dir", c.out_dir);
        if (out_override) c.out_dir = *out_override;
        c.out_dir = resolve_out_dir(c.out_dir);

        const nlohmann::json ds = doc.value("dataset", nlohmann::json::object());
        c.dataset.train_point = ds.value("train_point", c.dataset.train_point);
        c.dataset.train_wave = ds.value("train_wave", c.dataset.train_wave);
        c.dataset.test_point = ds.value("test_point", c.dataset.test_point);
        c.dataset.test_wave = ds.value("test_wave", c.dataset.test_wave);
        c.dataset.min_frames = ds.value("min_frames", c.dataset.min_frames);
        c.dataset.max_frames = ds.value("max_frames", c.dataset.max_frames);
        c.dataset.fps = ds.value("fps", c.dataset.fps);
        c.dataset.micro_motion = ds.value("micro_motion", c.dataset.micro_motion);
        c.dataset.seed = ds.contains("seed") ? ds["seed"].get<std::uint64_t>()
                                             : derive_seed(c.seed, "dataset");

        c.agent = agent::AgentConfig::from_json(doc.value("agent", nlohmann::json::object()));
        if (!doc.contains("agent") || !doc["agent"].contains("seed")) {
            c.agent.seed = derive_seed(c.seed, "agent");
        }
        c.train = train::TrainConfig::from_json(doc.value("train", nlohmann::json::object()));
        if (!doc.contains("train") || !doc["train"].contains("seed")) {
            c.train.seed = derive_seed(c.seed, "train");
        }
        c.eval = EvalConfig::from_json(doc.value("eval", nlohmann::json::object()));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid experiment config: ") + e.what());
    }
    return c;
}

std::string run_dataset(const ExperimentConfig& config) {
    const kin::Skeleton skeleton = kin::Skeleton::canonical();
    const motion::DatasetSplit split = motion::make_dataset(skeleton, config.dataset);

    const fs::path dir = fs::path(config.out_dir) / "dataset";
    fs::create_directories(dir / "clips");

    nlohmann::json manifest;
    manifest["skeleton"] = "skeleton.json";
    manifest["params"] = {{"train_point", config.dataset.train_point},
                          {"train_wave", config.dataset.train_wave},
                          {"test_point", config.dataset.test_point},
                          {"test_wave", config.dataset.test_wave},
                          {"min_frames", config.dataset.min_frames},
                          {"max_frames", config.dataset.max_frames},
                          {"fps", config.dataset.fps},
                          {"micro_motion", config.dataset.micro_motion},
                          {"seed", std::to_string(config.dataset.seed)}};
    manifest["train"] = nlohmann::json::array();
    manifest["test"] = nlohmann::json::array();
    manifest["files"] = nlohmann::json::object();

    const auto emit = [&](const motion::MotionClip& clip, const char* split_name) {
        const std::string rel = "clips/" + clip.id + ".json";
        write_text_atomic((dir / rel).string(), motion::clip_to_json(clip).dump(2) + "\n");
        manifest[split_name].push_back(clip.id);
        manifest["files"][clip.id] = rel;
    };
    for (const motion::MotionClip& clip : split.train) emit(clip, "train");
    for (const motion::MotionClip& clip : split.test) emit(clip, "test");

    write_text_atomic((dir / "skeleton.json").string(), skeleton.to_json().dump(2) + "\n");
    const std::string manifest_path = (dir / "manifest.json").string();
    write_text_atomic(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

LoadedDataset load_dataset(const std::string& manifest_path) {
    const nlohmann::json manifest = load_json(manifest_path);
    const fs::path dir = fs::path(manifest_path).parent_path();
    LoadedDataset out{kin::Skeleton::load((dir / manifest.at("skeleton").get<std::string>())
                                              .string()),
                      {}};
    for (const auto& id : manifest.at("train")) {
        const std::string rel = manifest.at("files").at(id.get<std::string>()).get<std::string>();
        out.split.train.push_back(motion::load_clip((dir / rel).string()));
    }
    for (const auto& id : manifest.at("test")) {
        const std::string rel = manifest.at("files").at(id.get<std::string>()).get<std::string>();
        out.split.test.push_back(motion::load_clip((dir / rel).string()));
    }
    return out;
}

std::string run_train(const ExperimentConfig& config, agent::AblationKind kind, bool print_rows) {
    const fs::path manifest_path = fs::path(config.out_dir) / "dataset" / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw IoError("dataset manifest not found: " + manifest_path.string() +
                      " (run the dataset command first)");
    }
    LoadedDataset data = load_dataset(manifest_path.string());

    const fs::path dir = fs::path(config.out_dir) / "train" / agent::to_string(kind);
    fs::create_directories(dir);

    train::TrainConfig cfg = config.train;
    if (kind == agent::AblationKind::supervised_loss) {
        cfg.w1 = 0.0;
        cfg.w2 = 0.0;
    }

    train::HoldoutScorer scorer;
    if (!data.split.test.empty()) {
        scorer = [&](const agent::AgentModel& m) {
            return eval::evaluate(m, data.split.test, data.skeleton, config.eval.window,
                                  config.eval.order)
                .mean_score();
        };
    }
    train::CheckpointSink sink;
    if (cfg.checkpoint_every > 0) {
        sink = [&](int epoch, const agent::AgentModel& m) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.bin", epoch);
            const std::string path = (dir / name).string();
            m.save_checkpoint(path + ".tmp", cfg.seed);
            fs::rename(path + ".tmp", path);
        };
    }

    train::TrainResult result =
        train::train(cfg, config.agent, data.split, data.skeleton, kind, scorer, sink);
    if (print_rows) {
        for (const train::TrainLogRow& row : result.log) {
            std::cout << "epoch " << row.epoch << " l1 " << fmt(row.l1) << " l2 " << fmt(row.l2)
                      << " l3 " << fmt(row.l3) << " total " << fmt(row.total);
            if (row.holdout_score) std::cout << " holdout " << fmt(*row.holdout_score);
            std::cout << "\n";
        }
    }

    train::write_log_csv((dir / "log.csv").string(), result.log);
    {
        nlohmann::json snapshot;
        snapshot["agent"] = config.agent.to_json();
        snapshot["train"] = cfg.to_json();
        snapshot["eval"] = config.eval.to_json();
        snapshot["kind"] = agent::to_string(kind);
        write_text_atomic((dir / "config.json").string(), snapshot.dump(2) + "\n");
    }
    const std::string ckpt = (dir / "checkpoint.bin").string();
    result.model.save_checkpoint(ckpt + ".tmp", cfg.seed);
    fs::rename(ckpt + ".tmp", ckpt);
    return ckpt;
}

std::string run_eval(const std::string& checkpoint_path, const std::string& manifest_path,
                     const EvalOptions& options, const std::string& out_dir, int window,
                     int order) {
    if (options.split != "train" && options.split != "test") {
        throw ConfigError("--split must be 'train' or 'test'");
    }
    agent::LoadedCheckpoint ckpt = agent::load_checkpoint(checkpoint_path);
    LoadedDataset data = load_dataset(manifest_path);
    const std::vector<motion::MotionClip>& clips =
        options.split == "train" ? data.split.train : data.split.test;
    if (clips.empty()) throw ConfigError("selected split has no clips");

    const eval::ScoreReport report =
        eval::evaluate(ckpt.model, clips, data.skeleton, window, order);

    fs::create_directories(out_dir);

    std::ostringstream per_clip;
    per_clip << "clip_id,behaviour,score,smoothness\n";
    for (const eval::ScoreRow& row : report.rows) {
        per_clip << row.clip_id << "," << to_string(row.behaviour) << "," << fmt(row.score) << ","
                 << fmt(row.smoothness) << "\n";
    }
    write_text_atomic((fs::path(out_dir) / "per_clip.csv").string(), per_clip.str());

    eval::MethodRun run;
    run.method = agent::to_string(ckpt.model.kind());
    run.behaviour_set = "both";
    if (options.split == "train") {
        run.train_report = report;
    } else {
        run.test_report = report;
    }
    eval::emit_report({run}, out_dir);

    if (!options.flex_factors.empty()) {
        const std::vector<eval::FlexRow> flex = eval::flexibility_sweep(
            ckpt.model, clips, options.flex_factors, data.skeleton, window, order);
        std::ostringstream fcsv;
        fcsv << "clip_id,factor,smoothness\n";
        for (const eval::FlexRow& row : flex) {
            fcsv << row.clip_id << "," << fmt(row.factor) << "," << fmt(row.smoothness) << "\n";
        }
        write_text_atomic((fs::path(out_dir) / "flexibility.csv").string(), fcsv.str());
    }
    return (fs::path(out_dir) / "report.csv").string();
}

std::string run_generate(const std::string& checkpoint_path, const GenerateOptions& options,
                         const std::string& out_path) {
    if (options.frames < 1) throw ConfigError("--frames must be positive");
    GenerateOptions opt = options;
    if (opt.behaviour == Behaviour::point) {
        const double norm = opt.target.norm();
        if (std::abs(norm - 1.0) > 1e-6) {
            if (!opt.normalize_target) {
                throw ConfigError("pointing target must be a unit vector (use --normalize)");
            }
            if (norm < 1e-9) throw ConfigError("pointing target must be non-zero");
            opt.target /= norm;
        }
    } else if (opt.exaggeration < 0.0 || opt.exaggeration > 1.0) {
        throw ConfigError("--wave exaggeration must lie in [0, 1]");
    }

    agent::LoadedCheckpoint ckpt = agent::load_checkpoint(checkpoint_path);
    const kin::Skeleton skeleton = kin::Skeleton::canonical();

    const Eigen::Vector3d attrs = opt.behaviour == Behaviour::point
                                      ? opt.target
                                      : Eigen::Vector3d::Constant(opt.exaggeration);
    std::vector<sig::ObjectiveSignal> objectives;
    objectives.reserve(opt.frames);
    for (int t = 0; t < opt.frames; ++t) {
        objectives.push_back(sig::make_objective(opt.behaviour, opt.arm, attrs,
                                                 static_cast<double>(t) / opt.frames));
    }
    const EpisodeRecord ep =
        ckpt.model.rollout(objectives, skeleton, agent::RolloutMode::deterministic);

    motion::MotionClip clip;
    clip.id = "generated";
    clip.behaviour = opt.behaviour;
    clip.arm = opt.arm;
    clip.attributes = attrs;
    clip.fps = opt.fps;
    for (const Eigen::VectorXd& a : ep.a) {
        clip.frames.push_back(kin::action_to_pose(skeleton, a));
    }

    if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty()) {
        fs::create_directories(parent);
    }
    write_text_atomic(out_path, motion::clip_to_json(clip).dump(2) + "\n");
    if (opt.write_bvh) {
        const std::string bvh_path = (fs::path(out_path).replace_extension(".bvh")).string();
        write_text_atomic(bvh_path, motion::write_bvh(skeleton, clip));
    }

    // smoothness against the clip's own angle-filtered version
    double self_smoothness = 100.0;
    if (clip.length() >= 9) {
        std::vector<Eigen::VectorXd> channels;
        channels.reserve(clip.frames.size());
        for (const kin::Pose& f : clip.frames) channels.push_back(f.rotations);
        const std::vector<Eigen::VectorXd> smoothed = eval::savitzky_golay(channels, 9, 3);
        motion::MotionClip filtered = clip;
        for (int t = 0; t < clip.length(); ++t) {
            filtered.frames[t] = kin::clamp_to_limits(skeleton, smoothed[t]);
        }
        self_smoothness = eval::smoothness(clip, filtered, skeleton);
    }
    std::cout << "frames " << clip.length() << " self_smoothness " << fmt(self_smoothness)
              << "\n";
    return out_path;
}

} // namespace anim::cli
