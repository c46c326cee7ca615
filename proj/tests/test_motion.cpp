#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "anim/errors.hpp"
#include "anim/motion.hpp"
#include "anim/signals.hpp"
#include "test_util.hpp"

using namespace anim;
using motion::MotionClip;

namespace {

const kin::Skeleton& skel() {
    static const kin::Skeleton s = kin::Skeleton::canonical();
    return s;
}

const char* kMinimalBvh = R"(HIERARCHY
ROOT root
{
  OFFSET 0 1 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT spine
  {
    OFFSET 0 0.25 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 0.25 0
    }
  }
}
MOTION
Frames: 1
Frame Time: 0.04
0 0 0 0 0 0 0 0 0
)";

} // namespace

TEST_CASE("minimal BVH parses to a single rest pose") {
    const motion::BvhResult r =
        motion::parse_bvh(kMinimalBvh, skel(), motion::canonical_name_map(skel()));
    REQUIRE(r.clip.length() == 1);
    CHECK(r.clip.fps == doctest::Approx(25.0));
    CHECK(r.clip.frames[0].rotations.cwiseAbs().maxCoeff() == 0.0);
    CHECK(r.warnings.empty());
}

TEST_CASE("BVH degrees convert to radians through rotation matrices") {
    std::string text = kMinimalBvh;
    text.replace(text.find("0 0 0 0 0 0 0 0 0"), 17, "0 0 0 0 0 0 0 0 90");
    const motion::BvhResult r =
        motion::parse_bvh(text, skel(), motion::canonical_name_map(skel()));
    const int spine_y = skel().axis_of(skel().joint_index("spine"), 1);
    CHECK(r.clip.frames[0].rotations[spine_y] == doctest::Approx(M_PI / 2).epsilon(1e-9));
}

TEST_CASE("BVH parse errors carry line numbers") {
    CHECK_THROWS_AS(motion::parse_bvh("HIERARCHY\nJOINT x\n", skel(),
                                      motion::canonical_name_map(skel())),
                    ParseError);
    try {
        motion::parse_bvh("HIERARCHY\nROOT a\n{\nOFFSET 0 0 z\n", skel(),
                          motion::canonical_name_map(skel()));
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    }

    // declared two frames, provides one
    std::string text = kMinimalBvh;
    text.replace(text.find("Frames: 1"), 9, "Frames: 2");
    CHECK_THROWS_AS(motion::parse_bvh(text, skel(), motion::canonical_name_map(skel())),
                    ParseError);
}

TEST_CASE("BVH name mapping: unknown targets fail, unmapped joints warn") {
    std::map<std::string, std::string> bad{{"spine", "no_such_joint"}};
    CHECK_THROWS_AS(motion::parse_bvh(kMinimalBvh, skel(), bad), MappingError);

    std::map<std::string, std::string> partial{{"spine", "spine"}};
    const motion::BvhResult r = motion::parse_bvh(kMinimalBvh, skel(), partial);
    REQUIRE(r.warnings.size() == 1); // the root is unmapped
    CHECK(r.warnings[0].find("root") != std::string::npos);
}

TEST_CASE("BVH round-trip is stable after one write/parse cycle") {
    const MotionClip original = motion::synth_wave_clip(skel(), 0.7, Arm::left, 24, 30.0);
    const std::string x = motion::write_bvh(skel(), original);
    const MotionClip c1 = motion::parse_bvh(x, skel(), motion::canonical_name_map(skel())).clip;
    const std::string y = motion::write_bvh(skel(), c1);
    const MotionClip c2 = motion::parse_bvh(y, skel(), motion::canonical_name_map(skel())).clip;
    REQUIRE(c1.length() == c2.length());
    CHECK(c1.fps == doctest::Approx(c2.fps));
    for (int t = 0; t < c1.length(); ++t) {
        CHECK((c1.frames[t].rotations - c2.frames[t].rotations).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("point clips start and end at rest and aim at the apex") {
    const Eigen::Vector3d target = Eigen::Vector3d(0.3, 0.25, 1.0).normalized();
    const MotionClip clip = motion::synth_point_clip(skel(), target, Arm::right, 32, 30.0);
    clip.validate(skel());
    CHECK(clip.frames.front().rotations.cwiseAbs().maxCoeff() == 0.0);
    CHECK((clip.frames.back().rotations - clip.frames.front().rotations).cwiseAbs().maxCoeff() <=
          1e-9);

    const kin::PoseGeometry apex = kin::forward_kinematics(skel(), clip.frames[32 / 2]);
    CHECK(apex.effector_directions[3].dot(target) >= std::cos(1e-3));
}

TEST_CASE("apex alignment holds for 50 random reachable targets per arm") {
    Rng rng(4242);
    for (const Arm arm : {Arm::left, Arm::right}) {
        const double side = arm == Arm::left ? 1.0 : -1.0;
        const int effector = arm == Arm::left ? 2 : 3;
        for (int i = 0; i < 50; ++i) {
            const double az = rng.uniform(-0.9, 0.9) + side * 0.35;
            const double el = rng.uniform(-0.5, 0.8);
            const Eigen::Vector3d target(std::sin(az) * std::cos(el), std::sin(el),
                                         std::cos(az) * std::cos(el));
            const int n = 16 + static_cast<int>(rng.uniform_int(32));
            const MotionClip clip =
                motion::synth_point_clip(skel(), target.normalized(), arm, n, 30.0);
            const kin::PoseGeometry apex = kin::forward_kinematics(skel(), clip.frames[n / 2]);
            CHECK(apex.effector_directions[effector].dot(target.normalized()) >=
                  std::cos(1e-3));
        }
    }
}

TEST_CASE("point clip rejects targets behind the reach cone") {
    // across the body and backwards: the combined collar+shoulder yaw runs out
    const Eigen::Vector3d behind = Eigen::Vector3d(-1.0, 0.0, -0.05).normalized();
    CHECK_THROWS_WITH_AS(motion::synth_point_clip(skel(), behind, Arm::left, 32, 30.0),
                         doctest::Contains("shoulder"), GenerationError);
    CHECK_THROWS_AS(motion::synth_point_clip(skel(), Eigen::Vector3d(0, 0, 2), Arm::left, 32,
                                             30.0),
                    ContractError);
    CHECK_THROWS_AS(motion::synth_point_clip(skel(), Eigen::Vector3d(0, 0, 1), Arm::left, 4,
                                             30.0),
                    ContractError);
}

TEST_CASE("wave oscillation amplitude scales with exaggeration") {
    const int wrist_z = skel().axis_of(skel().joint_index("wrist_l"), 2);

    const MotionClip still = motion::synth_wave_clip(skel(), 0.0, Arm::left, 64, 30.0);
    still.validate(skel());
    for (const kin::Pose& f : still.frames) CHECK(f.rotations[wrist_z] == 0.0);

    const MotionClip full = motion::synth_wave_clip(skel(), 1.0, Arm::left, 64, 30.0);
    double lo = 0, hi = 0;
    for (const kin::Pose& f : full.frames) {
        lo = std::min(lo, f.rotations[wrist_z]);
        hi = std::max(hi, f.rotations[wrist_z]);
    }
    // configured max amplitude of the wrist oscillation
    CHECK(std::abs((hi - lo) / 2 - 0.6) <= 1e-9);

    CHECK(full.frames.front().rotations.cwiseAbs().maxCoeff() == 0.0);
    CHECK(full.frames.back().rotations.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generated clips satisfy invariants for random parameters") {
    Rng rng(77);
    for (int i = 0; i < 30; ++i) {
        const Arm arm = rng.uniform() < 0.5 ? Arm::left : Arm::right;
        const int n = 8 + static_cast<int>(rng.uniform_int(80));
        if (rng.uniform() < 0.5) {
            const double az = rng.uniform(-0.9, 0.9);
            const double el = rng.uniform(-0.5, 0.8);
            const Eigen::Vector3d t(std::sin(az) * std::cos(el), std::sin(el),
                                    std::cos(az) * std::cos(el));
            motion::synth_point_clip(skel(), t.normalized(), arm, n, 30.0).validate(skel());
        } else {
            motion::synth_wave_clip(skel(), rng.uniform(), arm, n, 30.0).validate(skel());
        }
    }
}

TEST_CASE("make_dataset honors counts, determinism and id disjointness") {
    motion::DatasetSpec spec;
    spec.train_point = 12;
    spec.train_wave = 10;
    spec.test_point = 3;
    spec.test_wave = 2;
    spec.seed = 99;
    const motion::DatasetSplit a = motion::make_dataset(skel(), spec);
    CHECK(a.train.size() == 22);
    CHECK(a.test.size() == 5);

    const motion::DatasetSplit b = motion::make_dataset(skel(), spec);
    REQUIRE(a.train.size() == b.train.size());
    for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].id == b.train[i].id);

    std::set<std::string> train_ids, test_ids;
    for (const MotionClip& c : a.train) train_ids.insert(c.id);
    for (const MotionClip& c : a.test) test_ids.insert(c.id);
    CHECK(train_ids.size() == a.train.size());
    for (const std::string& id : test_ids) CHECK(train_ids.count(id) == 0);

    for (const MotionClip& c : a.train) c.validate(skel());
    for (const MotionClip& c : a.test) c.validate(skel());

    // held-out attribute values differ from every training value
    for (const MotionClip& t : a.test) {
        for (const MotionClip& tr : a.train) {
            if (t.behaviour != tr.behaviour) continue;
            if (t.behaviour == Behaviour::wave) {
                CHECK(std::abs(t.attributes[0] - tr.attributes[0]) >= 0.02);
            } else {
                CHECK(std::acos(std::clamp(t.attributes.dot(tr.attributes), -1.0, 1.0)) >= 0.04);
            }
        }
    }
}

TEST_CASE("make_dataset rejects invalid specs") {
    motion::DatasetSpec spec;
    spec.train_point = -1;
    CHECK_THROWS_AS(motion::make_dataset(skel(), spec), ConfigError);
}

TEST_CASE("resample_clip") {
    const MotionClip clip = motion::synth_wave_clip(skel(), 0.5, Arm::right, 64, 30.0);

    const MotionClip same = motion::resample_clip(clip, 1.0);
    REQUIRE(same.length() == clip.length());
    for (int t = 0; t < clip.length(); ++t) {
        CHECK((same.frames[t].rotations - clip.frames[t].rotations).cwiseAbs().maxCoeff() == 0.0);
    }

    const MotionClip half = motion::resample_clip(clip, 0.5);
    REQUIRE(half.length() == 32);
    CHECK((half.frames.front().rotations - clip.frames.front().rotations).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK((half.frames.back().rotations - clip.frames.back().rotations).cwiseAbs().maxCoeff() ==
          0.0);

    // linear interpolation: a 2-frame clip stretched to 3 frames lands on the midpoint
    MotionClip tiny = clip;
    tiny.frames.assign(2, kin::rest_pose(skel()));
    const int wrist_z = skel().axis_of(skel().joint_index("wrist_l"), 2);
    tiny.frames[1].rotations[wrist_z] = 1.0;
    const MotionClip stretched = motion::resample_clip(tiny, 1.5);
    REQUIRE(stretched.length() == 3);
    CHECK(stretched.frames[1].rotations[wrist_z] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(motion::resample_clip(clip, 0.01), ContractError);
}

TEST_CASE("native clip JSON round-trip") {
    const MotionClip clip = motion::synth_point_clip(skel(), Eigen::Vector3d(0, 0, 1), Arm::left,
                                                     16, 24.0, "roundtrip");
    const MotionClip back = motion::clip_from_json(motion::clip_to_json(clip));
    CHECK(back.id == clip.id);
    CHECK(back.behaviour == clip.behaviour);
    CHECK(back.arm == clip.arm);
    CHECK(back.fps == clip.fps);
    REQUIRE(back.length() == clip.length());
    for (int t = 0; t < clip.length(); ++t) {
        CHECK((back.frames[t].rotations - clip.frames[t].rotations).cwiseAbs().maxCoeff() == 0.0);
    }
}
