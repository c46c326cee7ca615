#include "anim/signals.hpp"

#include <cmath>

#include "anim/errors.hpp"

namespace anim::sig {

void ObjectiveSignal::validate() const {
    if (!v.allFinite()) throw ValidationError("objective signal has non-finite components");
    if (v[0] != 1.0 && v[0] != 2.0) throw ValidationError("objective type must be 1 or 2");
    if (v[1] != 0.0 && v[1] != 1.0) throw ValidationError("objective arm must be 0 or 1");
    if (v[5] < 0.0 || v[5] > 1.0) throw ValidationError("objective time must lie in [0, 1]");
    if (v[0] == 1.0) {
        if (std::abs(attributes().norm() - 1.0) > 1e-6) {
            throw ValidationError("point objective attributes must be a unit vector");
        }
    } else {
        if (v[2] != v[3] || v[3] != v[4] || v[2] < 0.0 || v[2] > 1.0) {
            throw ValidationError("wave objective attributes must repeat a [0,1] scalar");
        }
    }
}

ObjectiveSignal make_objective(Behaviour behaviour, Arm arm, const Eigen::Vector3d& attributes,
                               double time) {
    ObjectiveSignal o;
    o.v[0] = behaviour_code(behaviour);
    o.v[1] = arm_code(arm);
    o.v.segment<3>(2) = attributes;
    o.v[5] = time;
    o.validate();
    return o;
}

ObjectiveSignal objective_for(const motion::MotionClip& clip, int t,
                              std::optional<int> n_frames_override) {
    const int n = n_frames_override.value_or(clip.length());
    if (t < 0 || t >= n) {
        throw ContractError("objective frame index " + std::to_string(t) +
                            " outside [0, " + std::to_string(n) + ")");
    }
    return make_objective(clip.behaviour, clip.arm, clip.attributes,
                          static_cast<double>(t) / n);
}

DescriptionSignal description_of(const kin::Skeleton& skeleton,
                                 const kin::PoseGeometry& geometry) {
    DescriptionSignal d;
    int k = 0;
    for (const char* name : kEffectorOrder) {
        int idx = -1;
        for (int i = 0; i < static_cast<int>(skeleton.anchors().size()); ++i) {
            if (skeleton.anchors()[i].name == name) idx = i;
        }
        if (idx < 0) throw ContractError(std::string("skeleton lacks effector anchor ") + name);
        d.v.segment<3>(k) = geometry.effector_directions[idx];
        k += 3;
    }
    const int root = 0; // topological order puts the root first
    const Eigen::Vector3d root_pos = geometry.joint_positions[root];
    for (const char* name : kJointOrder) {
        const int idx = skeleton.joint_index(name);
        if (idx < 0) throw ContractError(std::string("skeleton lacks joint ") + name);
        d.v.segment<3>(k) = geometry.joint_positions[idx] - root_pos;
        k += 3;
    }
    return d;
}

DescriptionSignal rest_description(const kin::Skeleton& skeleton) {
    return description_of(skeleton, forward_kinematics(skeleton, kin::rest_pose(skeleton)));
}

DescriptionSignal renormalize_description(const kin::Skeleton& skeleton,
                                          const Eigen::Matrix<double, kDescriptionDim, 1>& raw) {
    if (!raw.allFinite()) throw ValidationError("description has non-finite components");
    DescriptionSignal d;
    d.v = raw;
    const DescriptionSignal rest = rest_description(skeleton);
    for (int block = 0; block < 4; ++block) {
        const int k = 3 * block;
        const double n = d.v.segment<3>(k).norm();
        if (n < 1e-12) {
            d.v.segment<3>(k) = rest.v.segment<3>(k);
        } else {
            d.v.segment<3>(k) /= n;
        }
    }
    return d;
}

} // namespace anim::sig
