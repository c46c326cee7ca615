#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace anim::kin {

struct Joint {
    std::string name;
    int parent = -1; // -1 for the root
    Eigen::Vector3d offset = Eigen::Vector3d::Zero(); // meters, relative to parent
    bool actuated = false;
    // Per-axis [min, max] in radians; meaningful only when actuated.
    std::array<std::array<double, 2>, 3> limits{{{0, 0}, {0, 0}, {0, 0}}};
};

// Fixed local direction attached to a joint; rotated by the joint's world
// orientation to produce an effector direction vector.
struct EffectorAnchor {
    std::string name;
    int joint = -1;
    Eigen::Vector3d direction = Eigen::Vector3d::UnitZ();
};

// Immutable joint hierarchy. Joints are stored in topological order (parent
// index strictly below child index). Safe to share across threads.
class Skeleton {
public:
    Skeleton(std::vector<Joint> joints, std::vector<EffectorAnchor> anchors);

    // The bundled desk-scale upper-body skeleton: 15 actuated joints
    // (spine/neck/head plus collar..index_mid per arm), action dimension 45.
    static Skeleton canonical();

    static Skeleton from_json(const nlohmann::json& doc);
    static Skeleton load(const std::string& path);
    nlohmann::json to_json() const;

    const std::vector<Joint>& joints() const { return joints_; }
    const std::vector<EffectorAnchor>& anchors() const { return anchors_; }
    const std::vector<int>& actuated() const { return actuated_; }

    int joint_index(std::string_view name) const; // -1 when absent
    int actuated_count() const { return static_cast<int>(actuated_.size()); }
    int action_dim() const { return 3 * actuated_count(); }

    // Flat [min,max] per action axis, in pose-vector order.
    double limit_min(int axis) const { return limit_min_[axis]; }
    double limit_max(int axis) const { return limit_max_[axis]; }

    // Action-vector slot of (actuated joint, axis), or -1 if not actuated.
    int axis_of(int joint, int axis) const;

    const std::string& axis_joint_name(int axis) const;

private:
    void validate() const;

    std::vector<Joint> joints_;
    std::vector<EffectorAnchor> anchors_;
    std::vector<int> actuated_;          // joint indices, skeleton order
    std::vector<double> limit_min_, limit_max_;
    std::vector<int> axis_joint_;        // action axis -> joint index
};

// Per-actuated-joint intrinsic XYZ Euler angles, radians, length action_dim.
struct Pose {
    Eigen::VectorXd rotations;
};

struct PoseGeometry {
    std::vector<Eigen::Vector3d> joint_positions;     // all joints, world space
    std::vector<Eigen::Vector3d> effector_directions; // unit vectors, anchor order
};

// Throws ValidationError naming the joint if any angle is out of limits or
// non-finite; throws ContractError on a dimension mismatch.
void validate_pose(const Skeleton& skeleton, const Pose& pose);

// Composes parent-to-child rigid transforms in topological order.
PoseGeometry forward_kinematics(const Skeleton& skeleton, const Pose& pose);

// Clamps each raw angle into its joint's [min, max].
Pose clamp_to_limits(const Skeleton& skeleton, const Eigen::VectorXd& raw_rotations);

// Affine map from the Beta policy's [0,1] support onto the joint limits.
Pose action_to_pose(const Skeleton& skeleton, const Eigen::VectorXd& unit_action);

// Inverse of action_to_pose.
Eigen::VectorXd pose_to_action(const Skeleton& skeleton, const Pose& pose);

Pose rest_pose(const Skeleton& skeleton);
Eigen::VectorXd rest_action(const Skeleton& skeleton);

} // namespace anim::kin
