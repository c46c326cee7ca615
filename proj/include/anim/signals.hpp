#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>

#include "anim/behaviour.hpp"
#include "anim/kinematics.hpp"
#include "anim/motion.hpp"

namespace anim::sig {

inline constexpr int kObjectiveDim = 6;
inline constexpr int kDescriptionDim = 42;

// Frozen signal layout id; embedded in checkpoints and verified on load.
inline constexpr const char* kLayoutVersion = "obj6-desc42-v1";

// Description layout: four effector direction blocks followed by ten
// root-relative joint positions, three scalars each.
inline constexpr std::array<const char*, 4> kEffectorOrder = {"eye_l", "eye_r", "index_l",
                                                              "index_r"};
inline constexpr std::array<const char*, 10> kJointOrder = {
    "collar_l", "shoulder_l", "elbow_l", "wrist_l", "index_base_l",
    "collar_r", "shoulder_r", "elbow_r", "wrist_r", "index_base_r"};

// [type, arm, attr1, attr2, attr3, time]: type 1=point 2=wave, arm 0=left
// 1=right, attributes are the unit target (point) or repeated exaggeration
// (wave), time is normalized progress t/N.
struct ObjectiveSignal {
    Eigen::Matrix<double, kObjectiveDim, 1> v = Eigen::Matrix<double, kObjectiveDim, 1>::Zero();

    double type() const { return v[0]; }
    double arm() const { return v[1]; }
    Eigen::Vector3d attributes() const { return v.segment<3>(2); }
    double time() const { return v[5]; }

    void validate() const;
};

struct DescriptionSignal {
    Eigen::Matrix<double, kDescriptionDim, 1> v =
        Eigen::Matrix<double, kDescriptionDim, 1>::Zero();
};

ObjectiveSignal make_objective(Behaviour behaviour, Arm arm, const Eigen::Vector3d& attributes,
                               double time);

// Objective at frame t of a clip; N comes from the clip unless overridden
// (the override realizes time-warped portrayals).
ObjectiveSignal objective_for(const motion::MotionClip& clip, int t,
                              std::optional<int> n_frames_override = {});

// Flattens geometry into the frozen layout; positions are root-relative.
DescriptionSignal description_of(const kin::Skeleton& skeleton, const kin::PoseGeometry& geometry);

// Description of the rest pose (fallback directions come from here).
DescriptionSignal rest_description(const kin::Skeleton& skeleton);

// Scales each effector 3-block to unit norm; a zero block falls back to the
// rest-pose direction for that effector.
DescriptionSignal renormalize_description(const kin::Skeleton& skeleton,
                                          const Eigen::Matrix<double, kDescriptionDim, 1>& raw);

} // namespace anim::sig
