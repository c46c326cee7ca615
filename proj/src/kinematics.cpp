#include "anim/kinematics.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "anim/errors.hpp"
#include "anim/mathutil.hpp"

namespace anim::kin {

namespace {

constexpr double kHalfPi = M_PI / 2;

std::array<std::array<double, 2>, 3> sym_limits(double a) {
    return {{{-a, a}, {-a, a}, {-a, a}}};
}

} // namespace

Skeleton::Skeleton(std::vector<Joint> joints, std::vector<EffectorAnchor> anchors)
    : joints_(std::move(joints)), anchors_(std::move(anchors)) {
    for (int i = 0; i < static_cast<int>(joints_.size()); ++i) {
        if (!joints_[i].actuated) continue;
        actuated_.push_back(i);
        for (int axis = 0; axis < 3; ++axis) {
            limit_min_.push_back(joints_[i].limits[axis][0]);
            limit_max_.push_back(joints_[i].limits[axis][1]);
            axis_joint_.push_back(i);
        }
    }
    validate();
}

void Skeleton::validate() const {
    if (joints_.empty()) throw ValidationError("skeleton has no joints");
    int roots = 0;
    for (int i = 0; i < static_cast<int>(joints_.size()); ++i) {
        const Joint& j = joints_[i];
        if (j.parent < 0) {
            ++roots;
        } else if (j.parent >= i) {
            throw ValidationError("joint '" + j.name + "' breaks topological order");
        }
        if (!j.offset.allFinite()) {
            throw ValidationError("joint '" + j.name + "' has a non-finite offset");
        }
        if (j.actuated) {
            for (int axis = 0; axis < 3; ++axis) {
                const double lo = j.limits[axis][0], hi = j.limits[axis][1];
                if (!(lo < hi)) {
                    throw ValidationError("joint '" + j.name + "' axis " +
                                          std::to_string(axis) + " limits require min < max");
                }
                if (lo < -M_PI || hi > M_PI) {
                    throw ValidationError("joint '" + j.name + "' limits exceed [-pi, pi]");
                }
            }
        }
    }
    if (roots != 1) throw ValidationError("skeleton must have exactly one root joint");
    for (const EffectorAnchor& a : anchors_) {
        if (a.joint < 0 || a.joint >= static_cast<int>(joints_.size())) {
            throw ValidationError("effector anchor '" + a.name + "' references an unknown joint");
        }
        if (a.direction.norm() < 1e-12) {
            throw ValidationError("effector anchor '" + a.name + "' has a zero direction");
        }
    }
}

int Skeleton::joint_index(std::string_view name) const {
    for (int i = 0; i < static_cast<int>(joints_.size()); ++i) {
        if (joints_[i].name == name) return i;
    }
    return -1;
}

int Skeleton::axis_of(int joint, int axis) const {
    for (int a = 0; a < static_cast<int>(axis_joint_.size()); ++a) {
        if (axis_joint_[a] == joint && a % 3 == axis) return a;
    }
    return -1;
}

const std::string& Skeleton::axis_joint_name(int axis) const {
    return joints_[axis_joint_[axis]].name;
}

Skeleton Skeleton::canonical() {
    std::vector<Joint> joints;
    auto add = [&](const std::string& name, const std::string& parent, double ox, double oy,
                   double oz, bool actuated,
                   std::array<std::array<double, 2>, 3> limits = sym_limits(kHalfPi)) {
        Joint j;
        j.name = name;
        j.parent = -1;
        if (!parent.empty()) {
            for (int i = 0; i < static_cast<int>(joints.size()); ++i) {
                if (joints[i].name == parent) j.parent = i;
            }
        }
        j.offset = Eigen::Vector3d(ox, oy, oz);
        j.actuated = actuated;
        j.limits = limits;
        joints.push_back(j);
    };

    const std::array<std::array<double, 2>, 3> wrist = sym_limits(1.0);
    // Elbow flexion is the z axis; the sign is mirrored per arm because the
    // two arms run along +x and -x.
    std::array<std::array<double, 2>, 3> elbow_l = sym_limits(kHalfPi);
    elbow_l[2] = {0.0, 2.6};
    std::array<std::array<double, 2>, 3> elbow_r = sym_limits(kHalfPi);
    elbow_r[2] = {-2.6, 0.0};

    add("root", "", 0.0, 1.00, 0.0, false);
    add("spine", "root", 0.0, 0.25, 0.0, true);
    add("neck", "spine", 0.0, 0.25, 0.0, true);
    add("head", "neck", 0.0, 0.12, 0.0, true);
    add("collar_l", "spine", 0.04, 0.20, 0.0, true);
    add("shoulder_l", "collar_l", 0.14, 0.0, 0.0, true);
    add("elbow_l", "shoulder_l", 0.28, 0.0, 0.0, true, elbow_l);
    add("wrist_l", "elbow_l", 0.25, 0.0, 0.0, true, wrist);
    add("index_base_l", "wrist_l", 0.09, 0.0, 0.0, true);
    add("index_mid_l", "index_base_l", 0.04, 0.0, 0.0, true);
    add("index_tip_l", "index_mid_l", 0.03, 0.0, 0.0, false);
    add("collar_r", "spine", -0.04, 0.20, 0.0, true);
    add("shoulder_r", "collar_r", -0.14, 0.0, 0.0, true);
    add("elbow_r", "shoulder_r", -0.28, 0.0, 0.0, true, elbow_r);
    add("wrist_r", "elbow_r", -0.25, 0.0, 0.0, true, wrist);
    add("index_base_r", "wrist_r", -0.09, 0.0, 0.0, true);
    add("index_mid_r", "index_base_r", -0.04, 0.0, 0.0, true);
    add("index_tip_r", "index_mid_r", -0.03, 0.0, 0.0, false);

    std::vector<EffectorAnchor> anchors;
    auto anchor = [&](const std::string& name, const std::string& joint, double x, double y,
                      double z) {
        EffectorAnchor a;
        a.name = name;
        for (int i = 0; i < static_cast<int>(joints.size()); ++i) {
            if (joints[i].name == joint) a.joint = i;
        }
        a.direction = Eigen::Vector3d(x, y, z);
        anchors.push_back(a);
    };
    anchor("eye_l", "head", 0.0, 0.0, 1.0);
    anchor("eye_r", "head", 0.0, 0.0, 1.0);
    anchor("index_l", "index_tip_l", 1.0, 0.0, 0.0);
    anchor("index_r", "index_tip_r", -1.0, 0.0, 0.0);

    return Skeleton(std::move(joints), std::move(anchors));
}

Skeleton Skeleton::from_json(const nlohmann::json& doc) {
    std::vector<Joint> joints;
    if (!doc.contains("joints") || !doc["joints"].is_array()) {
        throw ValidationError("skeleton document needs a 'joints' array");
    }
    for (const auto& jd : doc["joints"]) {
        Joint j;
        j.name = jd.at("name").get<std::string>();
        j.parent = jd.at("parent").is_null() ? -1 : jd.at("parent").get<int>();
        const auto& off = jd.at("offset");
        j.offset = Eigen::Vector3d(off.at(0).get<double>(), off.at(1).get<double>(),
                                   off.at(2).get<double>());
        if (jd.contains("limits") && !jd["limits"].is_null()) {
            j.actuated = true;
            const auto& lim = jd["limits"];
            for (int axis = 0; axis < 3; ++axis) {
                j.limits[axis][0] = lim.at(axis).at(0).get<double>();
                j.limits[axis][1] = lim.at(axis).at(1).get<double>();
            }
        }
        joints.push_back(std::move(j));
    }
    std::vector<EffectorAnchor> anchors;
    if (doc.contains("effector_anchors")) {
        for (const auto& ad : doc["effector_anchors"]) {
            EffectorAnchor a;
            a.name = ad.at("name").get<std::string>();
            const std::string joint = ad.at("joint").get<std::string>();
            a.joint = -1;
            for (int i = 0; i < static_cast<int>(joints.size()); ++i) {
                if (joints[i].name == joint) a.joint = i;
            }
            if (a.joint < 0) {
                throw ValidationError("anchor '" + a.name + "' references unknown joint '" +
                                      joint + "'");
            }
            const auto& d = ad.at("direction");
            a.direction = Eigen::Vector3d(d.at(0).get<double>(), d.at(1).get<double>(),
                                          d.at(2).get<double>());
            anchors.push_back(std::move(a));
        }
    }
    return Skeleton(std::move(joints), std::move(anchors));
}

Skeleton Skeleton::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open skeleton file: " + path);
    nlohmann::json doc;
    in >> doc;
    return from_json(doc);
}

nlohmann::json Skeleton::to_json() const {
    nlohmann::json doc;
    doc["joints"] = nlohmann::json::array();
    for (const Joint& j : joints_) {
        nlohmann::json jd;
        jd["name"] = j.name;
        if (j.parent < 0) {
            jd["parent"] = nullptr;
        } else {
            jd["parent"] = j.parent;
        }
        jd["offset"] = {j.offset.x(), j.offset.y(), j.offset.z()};
        if (j.actuated) {
            jd["limits"] = {{j.limits[0][0], j.limits[0][1]},
                            {j.limits[1][0], j.limits[1][1]},
                            {j.limits[2][0], j.limits[2][1]}};
        } else {
            jd["limits"] = nullptr;
        }
        doc["joints"].push_back(jd);
    }
    doc["effector_anchors"] = nlohmann::json::array();
    for (const EffectorAnchor& a : anchors_) {
        nlohmann::json ad;
        ad["name"] = a.name;
        ad["joint"] = joints_[a.joint].name;
        ad["direction"] = {a.direction.x(), a.direction.y(), a.direction.z()};
        doc["effector_anchors"].push_back(ad);
    }
    return doc;
}

void validate_pose(const Skeleton& skeleton, const Pose& pose) {
    if (pose.rotations.size() != skeleton.action_dim()) {
        throw ContractError("pose has " + std::to_string(pose.rotations.size()) +
                            " angles, skeleton expects " + std::to_string(skeleton.action_dim()));
    }
    for (int a = 0; a < skeleton.action_dim(); ++a) {
        const double v = pose.rotations[a];
        if (!std::isfinite(v)) {
            throw ValidationError("non-finite angle at joint '" + skeleton.axis_joint_name(a) +
                                  "'");
        }
        if (v < skeleton.limit_min(a) - 1e-12 || v > skeleton.limit_max(a) + 1e-12) {
            throw ValidationError("angle out of limits at joint '" +
                                  skeleton.axis_joint_name(a) + "' axis " +
                                  std::to_string(a % 3));
        }
    }
}

PoseGeometry forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
    validate_pose(skeleton, pose);
    const auto& joints = skeleton.joints();
    std::vector<Eigen::Matrix3d> world_rot(joints.size());
    PoseGeometry geo;
    geo.joint_positions.resize(joints.size());

    // actuated joints appear in skeleton order, so the pose vector can be
    // consumed sequentially
    int axis = 0;
    for (int i = 0; i < static_cast<int>(joints.size()); ++i) {
        const Joint& j = joints[i];
        Eigen::Matrix3d local = Eigen::Matrix3d::Identity();
        if (j.actuated) {
            local = euler_xyz_to_matrix(pose.rotations[axis], pose.rotations[axis + 1],
                                        pose.rotations[axis + 2]);
            axis += 3;
        }
        if (j.parent < 0) {
            geo.joint_positions[i] = j.offset;
            world_rot[i] = local;
        } else {
            geo.joint_positions[i] =
                geo.joint_positions[j.parent] + world_rot[j.parent] * j.offset;
            world_rot[i] = world_rot[j.parent] * local;
        }
    }

    geo.effector_directions.reserve(skeleton.anchors().size());
    for (const EffectorAnchor& a : skeleton.anchors()) {
        geo.effector_directions.push_back((world_rot[a.joint] * a.direction).normalized());
    }
    return geo;
}

Pose clamp_to_limits(const Skeleton& skeleton, const Eigen::VectorXd& raw_rotations) {
    if (raw_rotations.size() != skeleton.action_dim()) {
        throw ContractError("raw rotation vector has wrong dimension");
    }
    if (!raw_rotations.allFinite()) {
        throw ValidationError("raw rotations contain a non-finite value");
    }
    Pose p;
    p.rotations.resize(raw_rotations.size());
    for (int a = 0; a < raw_rotations.size(); ++a) {
        p.rotations[a] =
            std::clamp(raw_rotations[a], skeleton.limit_min(a), skeleton.limit_max(a));
    }
    return p;
}

Pose action_to_pose(const Skeleton& skeleton, const Eigen::VectorXd& unit_action) {
    if (unit_action.size() != skeleton.action_dim()) {
        throw ContractError("unit action has wrong dimension");
    }
    Pose p;
    p.rotations.resize(unit_action.size());
    for (int a = 0; a < unit_action.size(); ++a) {
        const double u = unit_action[a];
        if (!(u >= 0.0 && u <= 1.0)) {
            throw ValidationError("unit action component " + std::to_string(a) +
                                  " outside [0, 1]");
        }
        p.rotations[a] =
            skeleton.limit_min(a) + u * (skeleton.limit_max(a) - skeleton.limit_min(a));
    }
    return p;
}

Eigen::VectorXd pose_to_action(const Skeleton& skeleton, const Pose& pose) {
    validate_pose(skeleton, pose);
    Eigen::VectorXd u(pose.rotations.size());
    for (int a = 0; a < pose.rotations.size(); ++a) {
        const double lo = skeleton.limit_min(a), hi = skeleton.limit_max(a);
        u[a] = std::clamp((pose.rotations[a] - lo) / (hi - lo), 0.0, 1.0);
    }
    return u;
}

Pose rest_pose(const Skeleton& skeleton) {
    Pose p;
    p.rotations = Eigen::VectorXd::Zero(skeleton.action_dim());
    return p;
}

Eigen::VectorXd rest_action(const Skeleton& skeleton) {
    return pose_to_action(skeleton, rest_pose(skeleton));
}

} // namespace anim::kin
