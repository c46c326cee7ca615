#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "anim/behaviour.hpp"
#include "anim/kinematics.hpp"
#include "anim/mathutil.hpp"

namespace anim::motion {

// A timed sequence of poses plus behaviour metadata. For point clips the
// attributes hold the unit target vector; for wave clips all three components
// carry the exaggeration scalar.
struct MotionClip {
    std::string id;
    Behaviour behaviour = Behaviour::wave;
    Arm arm = Arm::right;
    Eigen::Vector3d attributes = Eigen::Vector3d::Constant(0.5);
    double fps = 30.0;
    std::vector<kin::Pose> frames;

    int length() const { return static_cast<int>(frames.size()); }
    void validate(const kin::Skeleton& skeleton) const;
};

struct DatasetSplit {
    std::vector<MotionClip> train;
    std::vector<MotionClip> test;
};

struct DatasetSpec {
    int train_point = 50;
    int train_wave = 50;
    int test_point = 6;
    int test_wave = 4;
    int min_frames = 48;
    int max_frames = 72;
    double fps = 30.0;
    // Peak amplitude (radians) of the band-limited per-joint micro-motion
    // layered over the analytic gestures, mimicking capture noise and human
    // sway. Zero disables it.
    double micro_motion = 0.008;
    std::uint64_t seed = 0;
};

// Superimposes seeded 2-8 Hz sinusoidal micro-motion on every actuated axis,
// faded out at the clip boundaries and clamped to limits.
MotionClip add_micro_motion(const kin::Skeleton& skeleton, const MotionClip& clip,
                            double amplitude, Rng& rng);

struct BvhResult {
    MotionClip clip;
    std::vector<std::string> warnings; // BVH joints ignored for lack of a mapping
};

// Identity mapping for BVH files that already use canonical joint names.
std::map<std::string, std::string> canonical_name_map(const kin::Skeleton& skeleton);

// Parses the BVH subset (HIERARCHY with ROOT/JOINT/End Site, OFFSET,
// CHANNELS 3|6, MOTION with Frames/Frame Time). Angles arrive in degrees and
// any declared rotation-channel order; they are converted through rotation
// matrices into canonical intrinsic XYZ radians, remapped through name_map,
// and clamped to limits. Metadata cannot be recovered from BVH, so the caller
// supplies it (defaults: wave, right arm, exaggeration 0.5).
BvhResult parse_bvh(const std::string& text, const kin::Skeleton& skeleton,
                    const std::map<std::string, std::string>& name_map,
                    std::optional<Behaviour> behaviour = {}, std::optional<Arm> arm = {},
                    std::optional<Eigen::Vector3d> attributes = {});

std::string write_bvh(const kin::Skeleton& skeleton, const MotionClip& clip);

// Ease-in/ease-out pointing gesture: rest -> aim (index effector aligned with
// `target` at the apex frame, analytic collar/shoulder/elbow solve) -> rest.
MotionClip synth_point_clip(const kin::Skeleton& skeleton, const Eigen::Vector3d& target,
                            Arm arm, int n_frames, double fps, const std::string& id = "point");

// Raised-arm posture with sinusoidal elbow/wrist oscillation whose amplitude
// scales with `exaggeration`; starts and ends at rest.
MotionClip synth_wave_clip(const kin::Skeleton& skeleton, double exaggeration, Arm arm,
                           int n_frames, double fps, const std::string& id = "wave");

// Deterministic under spec.seed. Test targets/exaggerations are kept apart
// from every training value so the held-out split probes interpolation.
DatasetSplit make_dataset(const kin::Skeleton& skeleton, const DatasetSpec& spec);

// Linear interpolation of per-joint angles onto ceil(factor * n) frames,
// endpoints preserved exactly.
MotionClip resample_clip(const MotionClip& clip, double factor);

nlohmann::json clip_to_json(const MotionClip& clip);
MotionClip clip_from_json(const nlohmann::json& doc);
void save_clip(const MotionClip& clip, const std::string& path);
MotionClip load_clip(const std::string& path);

} // namespace anim::motion
