#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anim/motion.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBinary = ANIMAGENT_BINARY;

int run(const std::string& args) {
    const std::string cmd = kBinary + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

struct Workspace {
    fs::path dir;
    fs::path config;

    Workspace() {
        dir = fs::temp_directory_path() / "animagent_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
        config = dir / "config.json";

        nlohmann::json doc;
        doc["seed"] = 7;
        doc["out_dir"] = (dir / "out").string();
        doc["dataset"] = {{"train_point", 2}, {"train_wave", 2}, {"test_point", 1},
                          {"test_wave", 1}, {"min_frames", 12}, {"max_frames", 16}};
        doc["agent"] = {{"h_dim", 8},
                        {"b_det_dim", 8},
                        {"b_stoch_dim", 4},
                        {"portrayal_hidden_dim", 8},
                        {"decoder_hidden_dim", 8},
                        {"policy_hidden_dim", 8}};
        doc["train"] = {{"epochs", 2},
                        {"chunk_length", 8},
                        {"chunks_per_update", 2},
                        {"updates_per_epoch", 2},
                        {"eval_every", 1}};
        std::ofstream(config) << doc.dump(2);
    }
};

} // namespace

TEST_CASE("dataset / train / eval / generate pipeline") {
    Workspace ws;
    const std::string cfg = "--config " + ws.config.string();

    // dataset is deterministic byte for byte
    REQUIRE(run(cfg + " dataset") == 0);
    const fs::path manifest = ws.dir / "out" / "dataset" / "manifest.json";
    REQUIRE(fs::exists(manifest));
    const std::string manifest_bytes = slurp(manifest);
    REQUIRE(run(cfg + " dataset") == 0);
    CHECK(slurp(manifest) == manifest_bytes);

    const nlohmann::json mdoc = nlohmann::json::parse(manifest_bytes);
    CHECK(mdoc["train"].size() == 4);
    CHECK(mdoc["test"].size() == 2);

    // train writes a log and a loadable checkpoint; reruns reproduce the log
    REQUIRE(run(cfg + " train") == 0);
    const fs::path log = ws.dir / "out" / "train" / "full" / "log.csv";
    const fs::path ckpt = ws.dir / "out" / "train" / "full" / "checkpoint.bin";
    REQUIRE(fs::exists(log));
    REQUIRE(fs::exists(ckpt));
    const std::string log_bytes = slurp(log);
    REQUIRE(run(cfg + " train") == 0);
    CHECK(slurp(log) == log_bytes);

    {
        std::istringstream ls(log_bytes);
        std::string header;
        std::getline(ls, header);
        CHECK(header == "epoch,l1,l2,l3,total,grad_norm,holdout_score");
        int rows = 0;
        std::string line;
        while (std::getline(ls, line)) {
            if (!line.empty()) ++rows;
        }
        CHECK(rows == 2);
    }

    // --ablation=full equals omitting the flag
    const std::string out2 = " --out " + (ws.dir / "out2").string();
    REQUIRE(run(cfg + out2 + " dataset") == 0);
    REQUIRE(run(cfg + out2 + " train --ablation=full") == 0);
    CHECK(slurp(ws.dir / "out2" / "train" / "full" / "log.csv") == log_bytes);

    // eval: bit-stable across reruns, both splits work
    const std::string eval_dir = (ws.dir / "eval").string();
    REQUIRE(run("eval " + ckpt.string() + " " + manifest.string() + " --split=test" +
                " --report-dir " + eval_dir) == 0);
    const std::string report_bytes = slurp(fs::path(eval_dir) / "report.csv");
    const std::string per_clip_bytes = slurp(fs::path(eval_dir) / "per_clip.csv");
    REQUIRE(run("eval " + ckpt.string() + " " + manifest.string() + " --split=test" +
                " --report-dir " + eval_dir) == 0);
    CHECK(slurp(fs::path(eval_dir) / "report.csv") == report_bytes);
    CHECK(slurp(fs::path(eval_dir) / "per_clip.csv") == per_clip_bytes);
    CHECK(report_bytes.find(",test,") != std::string::npos);

    {
        std::istringstream ps(per_clip_bytes);
        std::string line;
        std::getline(ps, line); // header
        int rows = 0;
        while (std::getline(ps, line)) {
            if (!line.empty()) ++rows;
        }
        CHECK(rows == 2); // the two held-out clips
    }

    REQUIRE(run("eval " + ckpt.string() + " " + manifest.string() + " --split=train" +
                " --report-dir " + eval_dir + "2") == 0);
    CHECK(slurp(fs::path(eval_dir + "2") / "report.csv").find(",train,") != std::string::npos);

    // flexibility sweep emits one row per clip and factor
    REQUIRE(run("eval " + ckpt.string() + " " + manifest.string() + " --split=test" +
                " --flex 1.0,1.2 --report-dir " + eval_dir + "3") == 0);
    const std::string flex = slurp(fs::path(eval_dir + "3") / "flexibility.csv");
    CHECK(std::count(flex.begin(), flex.end(), '\n') == 1 + 2 * 2);

    // generate: wave metadata and frame count; BVH reparses to the same length
    const std::string clip_path = (ws.dir / "gen.json").string();
    REQUIRE(run("generate " + ckpt.string() + " --wave 0.5 --arm left --frames 60 --bvh" +
                " --clip-out " + clip_path) == 0);
    const anim::motion::MotionClip clip = anim::motion::load_clip(clip_path);
    CHECK(clip.behaviour == anim::Behaviour::wave);
    CHECK(clip.arm == anim::Arm::left);
    CHECK(clip.length() == 60);

    const anim::kin::Skeleton skeleton = anim::kin::Skeleton::canonical();
    const std::string bvh_text = slurp(ws.dir / "gen.bvh");
    const anim::motion::MotionClip reparsed =
        anim::motion::parse_bvh(bvh_text, skeleton, anim::motion::canonical_name_map(skeleton))
            .clip;
    CHECK(reparsed.length() == 60);

    // non-unit pointing targets are rejected without --normalize
    CHECK(run("generate " + ckpt.string() + " --point 0,2,0 --clip-out " + clip_path) == 2);
    CHECK(run("generate " + ckpt.string() + " --point 0,2,0 --normalize --clip-out " +
              clip_path) == 0);

    fs::remove_all(ws.dir);
}

TEST_CASE("exit codes distinguish config, io and version failures") {
    Workspace ws;
    const std::string cfg = "--config " + ws.config.string();

    // train before dataset: missing manifest is an I/O failure
    CHECK(run(cfg + " train") == 3);

    // invalid config field
    nlohmann::json bad = nlohmann::json::parse(slurp(ws.config));
    bad["train"]["epochs"] = 0;
    std::ofstream(ws.config) << bad.dump(2);
    CHECK(run(cfg + " dataset") == 2);

    // unreadable config
    CHECK(run("--config " + (ws.dir / "missing.json").string() + " dataset") == 3);

    // unknown flag
    CHECK(run("dataset --no-such-flag") == 2);

    // bad ablation name
    nlohmann::json good = bad;
    good["train"]["epochs"] = 1;
    std::ofstream(ws.config) << good.dump(2);
    REQUIRE(run(cfg + " dataset") == 0);
    CHECK(run(cfg + " train --ablation=bogus") == 2);

    // version mismatch: corrupt the layout string inside a checkpoint
    REQUIRE(run(cfg + " train") == 0);
    const fs::path ckpt = ws.dir / "out" / "train" / "full" / "checkpoint.bin";
    const fs::path manifest = ws.dir / "out" / "dataset" / "manifest.json";
    std::string bytes = slurp(ckpt);
    const size_t pos = bytes.find("obj6-desc42-v1");
    REQUIRE(pos != std::string::npos);
    bytes[pos + 13] = '9';
    const fs::path bad_ckpt = ws.dir / "bad.bin";
    std::ofstream(bad_ckpt, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK(run("eval " + bad_ckpt.string() + " " + manifest.string() + " --report-dir " +
              (ws.dir / "er").string()) == 4);

    fs::remove_all(ws.dir);
}
