#include "anim/motion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anim/errors.hpp"
#include "anim/mathutil.hpp"

namespace anim::motion {

namespace {

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

// Shared rise-hold-fall envelope: zero at both ends, exactly 1 on the plateau.
double bump(int t, int n, int ramp) {
    if (t <= 0 || t >= n - 1) return 0.0;
    if (t < ramp) return smoothstep(static_cast<double>(t) / ramp);
    if (t > n - 1 - ramp) return smoothstep(static_cast<double>(n - 1 - t) / ramp);
    return 1.0;
}

struct ArmAxes {
    int collar_y, shoulder_y, shoulder_z, elbow_z, wrist_z;
    double mirror; // +1 left, -1 right
};

ArmAxes arm_axes(const kin::Skeleton& s, Arm arm) {
    const bool left = arm == Arm::left;
    const std::string suffix = left ? "_l" : "_r";
    ArmAxes ax;
    ax.collar_y = s.axis_of(s.joint_index("collar" + suffix), 1);
    ax.shoulder_y = s.axis_of(s.joint_index("shoulder" + suffix), 1);
    ax.shoulder_z = s.axis_of(s.joint_index("shoulder" + suffix), 2);
    ax.elbow_z = s.axis_of(s.joint_index("elbow" + suffix), 2);
    ax.wrist_z = s.axis_of(s.joint_index("wrist" + suffix), 2);
    ax.mirror = left ? 1.0 : -1.0;
    if (ax.collar_y < 0 || ax.shoulder_y < 0 || ax.shoulder_z < 0 || ax.elbow_z < 0 ||
        ax.wrist_z < 0) {
        throw GenerationError("skeleton lacks the canonical arm joints for " + to_string(arm));
    }
    return ax;
}

void add_gaze(const kin::Skeleton& s, Eigen::VectorXd& angles, const Eigen::Vector3d& target) {
    const int head = s.joint_index("head");
    if (head < 0) return;
    const int head_x = s.axis_of(head, 0);
    const int head_y = s.axis_of(head, 1);
    if (head_x < 0 || head_y < 0) return;
    // partial gaze toward the target, eyes face +z at rest
    const double yaw = std::clamp(0.5 * std::atan2(target.x(), target.z()), -1.2, 1.2);
    const double pitch = std::clamp(-0.5 * std::asin(std::clamp(target.y(), -1.0, 1.0)), -0.8, 0.8);
    angles[head_y] = yaw;
    angles[head_x] = pitch;
}

} // namespace

void MotionClip::validate(const kin::Skeleton& skeleton) const {
    if (frames.empty()) throw ValidationError("clip '" + id + "' has no frames");
    if (!(fps > 0)) throw ValidationError("clip '" + id + "' has non-positive fps");
    for (const kin::Pose& f : frames) kin::validate_pose(skeleton, f);
    if (behaviour == Behaviour::point) {
        if (std::abs(attributes.norm() - 1.0) > 1e-6) {
            throw ValidationError("point clip '" + id + "' target is not a unit vector");
        }
    } else {
        const double e = attributes[0];
        if (attributes[1] != e || attributes[2] != e || e < 0.0 || e > 1.0) {
            throw ValidationError("wave clip '" + id + "' exaggeration must repeat a [0,1] value");
        }
    }
}

MotionClip synth_point_clip(const kin::Skeleton& skeleton, const Eigen::Vector3d& target,
                            Arm arm, int n_frames, double fps, const std::string& id) {
    if (n_frames < 8) throw ContractError("point clip needs at least 8 frames");
    if (std::abs(target.norm() - 1.0) > 1e-6) {
        throw ContractError("pointing target must be a unit vector");
    }
    const ArmAxes ax = arm_axes(skeleton, arm);

    // Aim solve. With the arm chain straight, the finger direction is
    // Ry(B) * Rz(elev) applied to the rest direction (+-x). The elbow takes a
    // small flexion and the shoulder compensates so alignment stays exact.
    const double ty = std::clamp(target.y(), -1.0, 1.0);
    const double elev = std::asin(ty);
    double yaw_total;
    if (arm == Arm::left) {
        yaw_total = std::atan2(-target.z(), target.x());
    } else {
        yaw_total = std::atan2(target.z(), -target.x());
    }
    if (std::abs(yaw_total) > 2.95) {
        throw GenerationError("target outside the reach cone of shoulder" +
                              std::string(arm == Arm::left ? "_l" : "_r"));
    }
    const double flex = std::min(0.25, elev + M_PI / 2); // >= 0
    const double shoulder_elev = arm == Arm::left ? (elev - flex) : (flex - elev);

    Eigen::VectorXd apex = Eigen::VectorXd::Zero(skeleton.action_dim());
    apex[ax.collar_y] = yaw_total / 2;
    apex[ax.shoulder_y] = yaw_total / 2;
    apex[ax.shoulder_z] = shoulder_elev;
    apex[ax.elbow_z] = ax.mirror * flex;
    add_gaze(skeleton, apex, target);

    MotionClip clip;
    clip.id = id;
    clip.behaviour = Behaviour::point;
    clip.arm = arm;
    clip.attributes = target;
    clip.fps = fps;
    clip.frames.reserve(n_frames);
    // rise with a slight overshoot, settle exactly on the apex pose, hold,
    // then ease back to rest
    const int apex_frame = n_frames / 2;
    const int hold_end = std::min(n_frames - 2, apex_frame + std::max(2, n_frames / 5));
    for (int t = 0; t < n_frames; ++t) {
        double w;
        if (t <= apex_frame) {
            const double u = static_cast<double>(t) / apex_frame;
            w = smoothstep(u) * (1.0 + 0.15 * std::sin(M_PI * u));
        } else if (t <= hold_end) {
            w = 1.0;
        } else {
            w = smoothstep(static_cast<double>(n_frames - 1 - t) / (n_frames - 1 - hold_end));
        }
        clip.frames.push_back(kin::clamp_to_limits(skeleton, w * apex));
    }
    clip.validate(skeleton);
    return clip;
}

MotionClip synth_wave_clip(const kin::Skeleton& skeleton, double exaggeration, Arm arm,
                           int n_frames, double fps, const std::string& id) {
    if (n_frames < 8) throw ContractError("wave clip needs at least 8 frames");
    if (exaggeration < 0.0 || exaggeration > 1.0) {
        throw ContractError("exaggeration must lie in [0, 1]");
    }
    const ArmAxes ax = arm_axes(skeleton, arm);

    constexpr double kShoulderRaise = 1.1;
    constexpr double kShoulderForward = 0.3;
    constexpr double kElbowBase = 0.9;
    constexpr double kElbowAmp = 0.5;
    constexpr double kWristAmp = 0.6;

    Eigen::VectorXd hold = Eigen::VectorXd::Zero(skeleton.action_dim());
    hold[ax.shoulder_z] = ax.mirror * kShoulderRaise;
    hold[ax.shoulder_y] = -ax.mirror * kShoulderForward;
    hold[ax.elbow_z] = ax.mirror * kElbowBase;

    const int ramp = n_frames / 4;
    // Quarter period in frames: close to a 2 Hz wave, kept integer so the
    // sine reaches both +1 and -1 at frames inside the plateau and
    // peak-to-peak measures the configured amplitude exactly.
    const int quarter = std::clamp(static_cast<int>(std::lround(fps / 8.0)), 2,
                                   std::max(2, (n_frames - 1 - 2 * ramp) / 3));

    MotionClip clip;
    clip.id = id;
    clip.behaviour = Behaviour::wave;
    clip.arm = arm;
    clip.attributes = Eigen::Vector3d::Constant(exaggeration);
    clip.fps = fps;
    clip.frames.reserve(n_frames);
    for (int t = 0; t < n_frames; ++t) {
        const double env = bump(t, n_frames, ramp);
        const double osc = std::sin(M_PI / 2 * static_cast<double>(t - ramp) / quarter);
        Eigen::VectorXd angles = env * hold;
        angles[ax.elbow_z] += ax.mirror * env * exaggeration * kElbowAmp * osc;
        angles[ax.wrist_z] += ax.mirror * env * exaggeration * kWristAmp * osc;
        clip.frames.push_back(kin::clamp_to_limits(skeleton, angles));
    }
    clip.validate(skeleton);
    return clip;
}

MotionClip add_micro_motion(const kin::Skeleton& skeleton, const MotionClip& clip,
                            double amplitude, Rng& rng) {
    if (amplitude <= 0.0) return clip;
    const int n = clip.length();
    const int dof = skeleton.action_dim();
    constexpr int kComponents = 3;

    struct Wave {
        double a, f, phase;
    };
    std::vector<Wave> waves(static_cast<size_t>(dof) * kComponents);
    for (Wave& w : waves) {
        w.a = amplitude * rng.uniform(0.3, 1.0);
        w.f = rng.uniform(2.0, 8.0);
        w.phase = rng.uniform(0.0, 2.0 * M_PI);
    }

    MotionClip out = clip;
    const int ramp = std::max(1, n / 8);
    for (int t = 0; t < n; ++t) {
        const double env = bump(t, n, ramp);
        const double time = t / clip.fps;
        Eigen::VectorXd angles = clip.frames[t].rotations;
        for (int a = 0; a < dof; ++a) {
            double noise = 0;
            for (int k = 0; k < kComponents; ++k) {
                const Wave& w = waves[a * kComponents + k];
                noise += w.a * std::sin(2.0 * M_PI * w.f * time + w.phase);
            }
            angles[a] += env * noise;
        }
        out.frames[t] = kin::clamp_to_limits(skeleton, angles);
    }
    return out;
}

namespace {

// Training and held-out attributes come from disjoint regions: training
// covers an inner range while the test split sits outside it, so held-out
// scoring probes conditions beyond the training support.
constexpr double kAzTrain = 0.55;   // training |relative azimuth| bound
constexpr double kAzTestLo = 0.60, kAzTestHi = 0.85;
constexpr double kExTrainLo = 0.25, kExTrainHi = 0.75;
constexpr double kExTestMargin = 0.05, kExTestSpan = 0.20;

Eigen::Vector3d target_from(double az_rel, double el, Arm arm) {
    const double az = az_rel + (arm == Arm::left ? 0.35 : -0.35);
    Eigen::Vector3d t(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
    return t.normalized();
}

Eigen::Vector3d sample_target(Rng& rng, Arm arm, bool held_out) {
    double az_rel;
    if (held_out) {
        az_rel = rng.uniform(kAzTestLo, kAzTestHi);
        if (rng.uniform() < 0.5) az_rel = -az_rel;
    } else {
        az_rel = rng.uniform(-kAzTrain, kAzTrain);
    }
    return target_from(az_rel, rng.uniform(-0.5, 0.8), arm);
}

double sample_exaggeration(Rng& rng, bool held_out) {
    if (!held_out) return rng.uniform(kExTrainLo, kExTrainHi);
    if (rng.uniform() < 0.5) {
        return rng.uniform(kExTrainLo - kExTestMargin - kExTestSpan, kExTrainLo - kExTestMargin);
    }
    return rng.uniform(kExTrainHi + kExTestMargin, kExTrainHi + kExTestMargin + kExTestSpan);
}

} // namespace

DatasetSplit make_dataset(const kin::Skeleton& skeleton, const DatasetSpec& spec) {
    if (spec.train_point < 0 || spec.train_wave < 0 || spec.test_point < 0 ||
        spec.test_wave < 0) {
        throw ConfigError("dataset counts must be non-negative");
    }
    if (spec.train_point + spec.train_wave <= 0) {
        throw ConfigError("dataset needs at least one training clip");
    }
    if (spec.min_frames < 8 || spec.max_frames < spec.min_frames) {
        throw ConfigError("dataset frame range is invalid");
    }
    Rng rng(derive_seed(spec.seed, "dataset"));

    auto frames = [&]() {
        return spec.min_frames +
               static_cast<int>(rng.uniform_int(spec.max_frames - spec.min_frames + 1));
    };
    auto tag = [](const char* split, Behaviour b, Arm a, int i) {
        std::ostringstream os;
        os << split << "_" << to_string(b) << "_" << (a == Arm::left ? "l" : "r") << "_";
        os.width(3);
        os.fill('0');
        os << i;
        return os.str();
    };

    DatasetSplit out;

    for (int i = 0; i < spec.train_point; ++i) {
        const Arm arm = (i % 2 == 0) ? Arm::left : Arm::right;
        const Eigen::Vector3d target = sample_target(rng, arm, false);
        out.train.push_back(add_micro_motion(
            skeleton,
            synth_point_clip(skeleton, target, arm, frames(), spec.fps,
                             tag("train", Behaviour::point, arm, i)),
            spec.micro_motion, rng));
    }
    for (int i = 0; i < spec.train_wave; ++i) {
        const Arm arm = (i % 2 == 0) ? Arm::left : Arm::right;
        const double ex = sample_exaggeration(rng, false);
        out.train.push_back(add_micro_motion(
            skeleton,
            synth_wave_clip(skeleton, ex, arm, frames(), spec.fps,
                            tag("train", Behaviour::wave, arm, i)),
            spec.micro_motion, rng));
    }

    // Held-out values are pushed away from every training value so the test
    // split never repeats a training condition.
    for (int i = 0; i < spec.test_point; ++i) {
        const Arm arm = (i % 2 == 0) ? Arm::left : Arm::right;
        const Eigen::Vector3d target = sample_target(rng, arm, true);
        out.test.push_back(add_micro_motion(
            skeleton,
            synth_point_clip(skeleton, target, arm, frames(), spec.fps,
                             tag("test", Behaviour::point, arm, i)),
            spec.micro_motion, rng));
    }
    for (int i = 0; i < spec.test_wave; ++i) {
        const Arm arm = (i % 2 == 0) ? Arm::left : Arm::right;
        const double ex = sample_exaggeration(rng, true);
        out.test.push_back(add_micro_motion(
            skeleton,
            synth_wave_clip(skeleton, ex, arm, frames(), spec.fps,
                            tag("test", Behaviour::wave, arm, i)),
            spec.micro_motion, rng));
    }
    return out;
}

MotionClip resample_clip(const MotionClip& clip, double factor) {
    if (factor < 0.1 || factor > 4.0) throw ContractError("resample factor outside [0.1, 4]");
    const int n = clip.length();
    const int n2 = std::max(1, static_cast<int>(std::ceil(factor * n)));
    MotionClip out = clip;
    out.frames.clear();
    out.frames.reserve(n2);
    for (int j = 0; j < n2; ++j) {
        double src = (n2 == 1) ? 0.0
                               : static_cast<double>(j) * (n - 1) / (n2 - 1);
        if (j == n2 - 1) src = n - 1; // endpoints exact
        const int i0 = std::min(static_cast<int>(src), n - 1);
        const int i1 = std::min(i0 + 1, n - 1);
        const double w = src - i0;
        kin::Pose p;
        p.rotations = (1.0 - w) * clip.frames[i0].rotations + w * clip.frames[i1].rotations;
        out.frames.push_back(std::move(p));
    }
    return out;
}

// ---- native JSON clip format ----

nlohmann::json clip_to_json(const MotionClip& clip) {
    nlohmann::json doc;
    doc["id"] = clip.id;
    doc["behaviour"] = to_string(clip.behaviour);
    doc["arm"] = to_string(clip.arm);
    doc["attributes"] = {clip.attributes[0], clip.attributes[1], clip.attributes[2]};
    doc["fps"] = clip.fps;
    doc["frames"] = nlohmann::json::array();
    for (const kin::Pose& f : clip.frames) {
        nlohmann::json row = nlohmann::json::array();
        for (int i = 0; i < f.rotations.size(); ++i) row.push_back(f.rotations[i]);
        doc["frames"].push_back(std::move(row));
    }
    return doc;
}

MotionClip clip_from_json(const nlohmann::json& doc) {
    MotionClip clip;
    clip.id = doc.at("id").get<std::string>();
    clip.behaviour = behaviour_from_string(doc.at("behaviour").get<std::string>());
    clip.arm = arm_from_string(doc.at("arm").get<std::string>());
    const auto& attrs = doc.at("attributes");
    clip.attributes =
        Eigen::Vector3d(attrs.at(0).get<double>(), attrs.at(1).get<double>(), attrs.at(2).get<double>());
    clip.fps = doc.at("fps").get<double>();
    for (const auto& row : doc.at("frames")) {
        kin::Pose p;
        p.rotations.resize(row.size());
        for (int i = 0; i < static_cast<int>(row.size()); ++i) {
            p.rotations[i] = row.at(i).get<double>();
        }
        clip.frames.push_back(std::move(p));
    }
    if (clip.frames.empty()) throw ValidationError("clip '" + clip.id + "' has no frames");
    return clip;
}

void save_clip(const MotionClip& clip, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write clip file: " + path);
    out << clip_to_json(clip).dump(2) << "\n";
}

MotionClip load_clip(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open clip file: " + path);
    nlohmann::json doc;
    in >> doc;
    return clip_from_json(doc);
}

// ---- BVH subset ----

namespace {

struct BvhChannel {
    int kind; // 0..2 translation xyz, 3..5 rotation xyz
};

struct BvhJoint {
    std::string name;
    int parent = -1;
    std::vector<BvhChannel> channels;
    bool end_site = false;
};

struct Tokenizer {
    explicit Tokenizer(const std::string& text) {
        int line = 1;
        size_t i = 0;
        while (i < text.size()) {
            if (text[i] == '\n') {
                ++line;
                ++i;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(text[i]))) {
                ++i;
                continue;
            }
            size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            tokens.emplace_back(text.substr(i, j - i), line);
            i = j;
        }
    }

    bool done() const { return pos >= tokens.size(); }
    int line() const {
        if (pos < tokens.size()) return tokens[pos].second;
        return tokens.empty() ? 1 : tokens.back().second;
    }
    const std::string& peek() const {
        static const std::string empty;
        return pos < tokens.size() ? tokens[pos].first : empty;
    }
    std::string next(const char* what) {
        if (done()) throw ParseError(std::string("unexpected end of file, expected ") + what,
                                     line());
        return tokens[pos++].first;
    }
    void expect(const std::string& tok) {
        const int ln = line();
        const std::string got = next(tok.c_str());
        if (got != tok) throw ParseError("expected '" + tok + "', got '" + got + "'", ln);
    }
    double number(const char* what) {
        const int ln = line();
        const std::string tok = next(what);
        try {
            size_t used = 0;
            const double v = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw ParseError(std::string("expected a number for ") + what + ", got '" + tok + "'",
                             ln);
        }
    }

    std::vector<std::pair<std::string, int>> tokens;
    size_t pos = 0;
};

int parse_channel(const std::string& name, int line) {
    if (name == "Xposition") return 0;
    if (name == "Yposition") return 1;
    if (name == "Zposition") return 2;
    if (name == "Xrotation") return 3;
    if (name == "Yrotation") return 4;
    if (name == "Zrotation") return 5;
    throw ParseError("unknown channel '" + name + "'", line);
}

void parse_joint_body(Tokenizer& tok, std::vector<BvhJoint>& joints, int self) {
    tok.expect("{");
    tok.expect("OFFSET");
    tok.number("OFFSET x");
    tok.number("OFFSET y");
    tok.number("OFFSET z");
    if (!joints[self].end_site) {
        tok.expect("CHANNELS");
        const int ln = tok.line();
        const int n = static_cast<int>(tok.number("channel count"));
        if (n != 3 && n != 6) throw ParseError("CHANNELS must declare 3 or 6 channels", ln);
        for (int i = 0; i < n; ++i) {
            const int cl = tok.line();
            joints[self].channels.push_back({parse_channel(tok.next("channel name"), cl)});
        }
    }
    while (true) {
        const int ln = tok.line();
        const std::string kw = tok.next("'}', JOINT or End");
        if (kw == "}") break;
        if (kw == "JOINT") {
            BvhJoint j;
            j.name = tok.next("joint name");
            j.parent = self;
            joints.push_back(j);
            parse_joint_body(tok, joints, static_cast<int>(joints.size()) - 1);
        } else if (kw == "End") {
            tok.expect("Site");
            BvhJoint j;
            j.name = joints[self].name + "_end";
            j.parent = self;
            j.end_site = true;
            joints.push_back(j);
            parse_joint_body(tok, joints, static_cast<int>(joints.size()) - 1);
        } else {
            throw ParseError("expected '}', JOINT or End, got '" + kw + "'", ln);
        }
    }
}

} // namespace

std::map<std::string, std::string> canonical_name_map(const kin::Skeleton& skeleton) {
    std::map<std::string, std::string> m;
    for (const kin::Joint& j : skeleton.joints()) m[j.name] = j.name;
    return m;
}

BvhResult parse_bvh(const std::string& text, const kin::Skeleton& skeleton,
                    const std::map<std::string, std::string>& name_map,
                    std::optional<Behaviour> behaviour, std::optional<Arm> arm,
                    std::optional<Eigen::Vector3d> attributes) {
    Tokenizer tok(text);
    tok.expect("HIERARCHY");
    tok.expect("ROOT");

    std::vector<BvhJoint> joints;
    BvhJoint root;
    root.name = tok.next("root name");
    joints.push_back(root);
    parse_joint_body(tok, joints, 0);

    tok.expect("MOTION");
    tok.expect("Frames:");
    const int frames_ln = tok.line();
    const int n_frames = static_cast<int>(tok.number("frame count"));
    if (n_frames < 1) throw ParseError("Frames must be positive", frames_ln);
    tok.expect("Frame");
    tok.expect("Time:");
    const int ft_ln = tok.line();
    const double frame_time = tok.number("frame time");
    if (!(frame_time > 0)) throw ParseError("Frame Time must be positive", ft_ln);

    int total_channels = 0;
    for (const BvhJoint& j : joints) total_channels += static_cast<int>(j.channels.size());
    const long available = static_cast<long>(tok.tokens.size() - tok.pos);
    const long expected = static_cast<long>(n_frames) * total_channels;
    if (available != expected) {
        throw ParseError("motion data has " + std::to_string(available) + " values, expected " +
                             std::to_string(expected) + " for the declared " +
                             std::to_string(n_frames) + " frames",
                         tok.line());
    }

    // map BVH joints onto canonical actuated joints
    std::vector<int> canonical_joint(joints.size(), -1);
    std::vector<std::string> warnings;
    for (size_t i = 0; i < joints.size(); ++i) {
        if (joints[i].end_site) continue;
        const auto it = name_map.find(joints[i].name);
        if (it == name_map.end()) {
            warnings.push_back("unmapped BVH joint '" + joints[i].name + "' ignored");
            continue;
        }
        const int idx = skeleton.joint_index(it->second);
        if (idx < 0) {
            throw MappingError("name table maps '" + joints[i].name + "' to unknown joint '" +
                               it->second + "'");
        }
        if (!skeleton.joints()[idx].actuated) {
            // the fixed root is expected to carry channels in BVH; only other
            // non-actuated targets are worth a warning
            if (skeleton.joints()[idx].parent >= 0) {
                warnings.push_back("BVH joint '" + joints[i].name + "' maps to non-actuated '" +
                                   it->second + "', rotations ignored");
            }
            continue;
        }
        canonical_joint[i] = idx;
    }

    MotionClip clip;
    clip.id = "bvh";
    clip.behaviour = behaviour.value_or(Behaviour::wave);
    clip.arm = arm.value_or(Arm::right);
    clip.attributes = attributes.value_or(Eigen::Vector3d::Constant(0.5));
    clip.fps = 1.0 / frame_time;
    clip.frames.reserve(n_frames);

    constexpr double kDeg = M_PI / 180.0;
    for (int f = 0; f < n_frames; ++f) {
        Eigen::VectorXd raw = Eigen::VectorXd::Zero(skeleton.action_dim());
        for (size_t ji = 0; ji < joints.size(); ++ji) {
            const BvhJoint& j = joints[ji];
            if (j.channels.empty()) continue;
            Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
            bool any_rotation = false;
            for (const BvhChannel& ch : j.channels) {
                const double v = tok.number("channel value");
                if (ch.kind < 3) continue; // translation ignored, the root is fixed
                any_rotation = true;
                const double a = v * kDeg;
                // channels apply left to right
                if (ch.kind == 3) r = r * rot_x(a);
                if (ch.kind == 4) r = r * rot_y(a);
                if (ch.kind == 5) r = r * rot_z(a);
            }
            if (canonical_joint[ji] < 0 || !any_rotation) continue;
            const Eigen::Vector3d euler = matrix_to_euler_xyz(r);
            const int base = skeleton.axis_of(canonical_joint[ji], 0);
            raw[base] = euler[0];
            raw[base + 1] = euler[1];
            raw[base + 2] = euler[2];
        }
        clip.frames.push_back(kin::clamp_to_limits(skeleton, raw));
    }
    if (!tok.done()) {
        throw ParseError("motion data has more values than the declared " +
                             std::to_string(n_frames) + " frames",
                         tok.line());
    }
    return {std::move(clip), std::move(warnings)};
}

std::string write_bvh(const kin::Skeleton& skeleton, const MotionClip& clip) {
    const auto& joints = skeleton.joints();
    std::vector<std::vector<int>> children(joints.size());
    int root = -1;
    for (int i = 0; i < static_cast<int>(joints.size()); ++i) {
        if (joints[i].parent < 0) {
            root = i;
        } else {
            children[joints[i].parent].push_back(i);
        }
    }

    std::ostringstream os;
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(10);

    // joints with channels, in emission order
    std::vector<int> channel_joints;

    auto emit = [&](auto&& self, int idx, int depth) -> void {
        const kin::Joint& j = joints[idx];
        const std::string ind(2 * depth, ' ');
        const bool leaf = children[idx].empty();
        if (j.parent < 0) {
            os << ind << "ROOT " << j.name << "\n";
        } else if (!j.actuated && leaf) {
            os << ind << "End Site\n";
            os << ind << "{\n";
            os << ind << "  OFFSET " << j.offset.x() << " " << j.offset.y() << " " << j.offset.z()
               << "\n";
            os << ind << "}\n";
            return;
        } else {
            os << ind << "JOINT " << j.name << "\n";
        }
        os << ind << "{\n";
        os << ind << "  OFFSET " << j.offset.x() << " " << j.offset.y() << " " << j.offset.z()
           << "\n";
        if (j.parent < 0) {
            os << ind << "  CHANNELS 6 Xposition Yposition Zposition Xrotation Yrotation"
               << " Zrotation\n";
        } else {
            os << ind << "  CHANNELS 3 Xrotation Yrotation Zrotation\n";
        }
        channel_joints.push_back(idx);
        for (int c : children[idx]) self(self, c, depth + 1);
        os << ind << "}\n";
    };

    os << "HIERARCHY\n";
    emit(emit, root, 0);

    os << "MOTION\n";
    os << "Frames: " << clip.length() << "\n";
    os << "Frame Time: " << (1.0 / clip.fps) << "\n";
    constexpr double kRad = 180.0 / M_PI;
    for (const kin::Pose& f : clip.frames) {
        bool first = true;
        for (int idx : channel_joints) {
            const kin::Joint& j = joints[idx];
            if (j.parent < 0) {
                os << (first ? "" : " ") << "0 0 0";
                first = false;
            }
            double x = 0, y = 0, z = 0;
            if (j.actuated) {
                const int base = skeleton.axis_of(idx, 0);
                x = f.rotations[base] * kRad;
                y = f.rotations[base + 1] * kRad;
                z = f.rotations[base + 2] * kRad;
            }
            os << (first ? "" : " ") << x << " " << y << " " << z;
            first = false;
        }
        os << "\n";
    }
    return os.str();
}

} // namespace anim::motion
