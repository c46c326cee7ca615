#include "anim/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "anim/errors.hpp"
#include "anim/signals.hpp"

namespace anim::eval {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// linear resample onto an exact frame count, endpoints preserved
motion::MotionClip resample_to_length(const motion::MotionClip& clip, int n2) {
    motion::MotionClip out = clip;
    out.frames.clear();
    const int n = clip.length();
    for (int j = 0; j < n2; ++j) {
        double src = (n2 == 1) ? 0.0 : static_cast<double>(j) * (n - 1) / (n2 - 1);
        if (j == n2 - 1) src = n - 1;
        const int i0 = std::min(static_cast<int>(src), n - 1);
        const int i1 = std::min(i0 + 1, n - 1);
        const double w = src - i0;
        kin::Pose p;
        p.rotations = (1.0 - w) * clip.frames[i0].rotations + w * clip.frames[i1].rotations;
        out.frames.push_back(std::move(p));
    }
    return out;
}

// root-relative positions of the description joints, flattened per frame
std::vector<Eigen::VectorXd> joint_position_channels(const motion::MotionClip& clip,
                                                     const kin::Skeleton& skeleton,
                                                     const std::vector<int>& joints) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(clip.frames.size());
    for (const kin::Pose& pose : clip.frames) {
        const kin::PoseGeometry geo = kin::forward_kinematics(skeleton, pose);
        const Eigen::Vector3d root = geo.joint_positions[0];
        Eigen::VectorXd row(3 * joints.size());
        for (size_t j = 0; j < joints.size(); ++j) {
            row.segment<3>(3 * j) = geo.joint_positions[joints[j]] - root;
        }
        out.push_back(std::move(row));
    }
    return out;
}

} // namespace

double ScoreReport::mean_score(std::optional<Behaviour> filter) const {
    double sum = 0;
    int n = 0;
    for (const ScoreRow& r : rows) {
        if (filter && r.behaviour != *filter) continue;
        sum += r.score;
        ++n;
    }
    return n ? sum / n : 0.0;
}

double ScoreReport::mean_smoothness(std::optional<Behaviour> filter) const {
    double sum = 0;
    int n = 0;
    for (const ScoreRow& r : rows) {
        if (filter && r.behaviour != *filter) continue;
        sum += r.smoothness;
        ++n;
    }
    return n ? sum / n : 0.0;
}

std::vector<int> description_joint_set(const kin::Skeleton& skeleton) {
    std::vector<int> joints;
    for (const char* name : sig::kJointOrder) {
        const int idx = skeleton.joint_index(name);
        if (idx < 0) throw ContractError(std::string("skeleton lacks joint ") + name);
        joints.push_back(idx);
    }
    return joints;
}

double error_per_frame(const kin::PoseGeometry& agent_geometry,
                       const kin::PoseGeometry& ref_geometry, const kin::Skeleton& skeleton,
                       const std::vector<int>& joint_set) {
    const std::vector<int> joints =
        joint_set.empty() ? description_joint_set(skeleton) : joint_set;
    const Eigen::Vector3d root_a = agent_geometry.joint_positions[0];
    const Eigen::Vector3d root_r = ref_geometry.joint_positions[0];
    double err = 0;
    for (int j : joints) {
        const Eigen::Vector3d pa = agent_geometry.joint_positions[j] - root_a;
        const Eigen::Vector3d pr = ref_geometry.joint_positions[j] - root_r;
        err += std::abs(pa.x() - pr.x()) + std::abs(pa.y() - pr.y()) + std::abs(pa.z() - pr.z());
    }
    return err;
}

double total_error(const std::vector<double>& per_frame_errors) {
    static const double kLogBase = std::log(1.01);
    double total = 0;
    for (double e : per_frame_errors) {
        if (!(e >= 0)) throw ContractError("per-frame errors must be non-negative");
        total += e;
        if (e > 0) total += std::max(0.0, std::log(e) / kLogBase);
    }
    return total;
}

double score(const motion::MotionClip& agent_clip, const motion::MotionClip& ref_clip,
             const kin::Skeleton& skeleton) {
    if (agent_clip.frames.empty() || ref_clip.frames.empty()) {
        throw ContractError("score needs non-empty clips");
    }
    const motion::MotionClip ref = ref_clip.length() == agent_clip.length()
                                       ? ref_clip
                                       : resample_to_length(ref_clip, agent_clip.length());
    const std::vector<int> joints = description_joint_set(skeleton);
    std::vector<double> errors;
    errors.reserve(agent_clip.frames.size());
    for (int t = 0; t < agent_clip.length(); ++t) {
        errors.push_back(error_per_frame(kin::forward_kinematics(skeleton, agent_clip.frames[t]),
                                         kin::forward_kinematics(skeleton, ref.frames[t]),
                                         skeleton, joints));
    }
    return 100.0 - total_error(errors) / static_cast<double>(errors.size());
}

Eigen::VectorXd savgol_coefficients(int window, int order) {
    if (window < 3 || window % 2 == 0) throw ConfigError("filter window must be odd and >= 3");
    if (order < 0 || order >= window) throw ConfigError("filter order must satisfy 0 <= order < window");
    const int m = window / 2;
    Eigen::MatrixXd a(window, order + 1);
    for (int i = 0; i < window; ++i) {
        double p = 1.0;
        for (int j = 0; j <= order; ++j) {
            a(i, j) = p;
            p *= (i - m);
        }
    }
    // center row of the least-squares projection (A^T A)^-1 A^T
    const Eigen::MatrixXd g = (a.transpose() * a).ldlt().solve(a.transpose());
    return g.row(0).transpose();
}

std::vector<Eigen::VectorXd> savitzky_golay(const std::vector<Eigen::VectorXd>& sequence,
                                            int window, int order) {
    const Eigen::VectorXd kernel = savgol_coefficients(window, order);
    const int n = static_cast<int>(sequence.size());
    if (n < window) throw ConfigError("sequence shorter than the filter window");
    const int m = window / 2;
    std::vector<Eigen::VectorXd> out;
    out.reserve(n);
    for (int t = 0; t < n; ++t) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(sequence[t].size());
        for (int k = -m; k <= m; ++k) {
            int i = t + k;
            if (i < 0) i = -i; // mirror padding
            if (i >= n) i = 2 * n - 2 - i;
            acc += kernel[k + m] * sequence[i];
        }
        out.push_back(std::move(acc));
    }
    return out;
}

double smoothness(const motion::MotionClip& agent_clip, const motion::MotionClip& ref_clip,
                  const kin::Skeleton& skeleton, int window, int order) {
    if (agent_clip.frames.empty() || ref_clip.frames.empty()) {
        throw ConfigError("smoothness needs non-empty clips");
    }
    const std::vector<int> joints = description_joint_set(skeleton);
    const auto roughness = [&](const motion::MotionClip& clip) {
        const std::vector<Eigen::VectorXd> channels =
            joint_position_channels(clip, skeleton, joints);
        const std::vector<Eigen::VectorXd> smooth = savitzky_golay(channels, window, order);
        double d = 0;
        for (size_t t = 0; t < channels.size(); ++t) {
            d += (channels[t] - smooth[t]).cwiseAbs().sum();
        }
        return d;
    };
    constexpr double kEps = 1e-8;
    const double d_ref = roughness(ref_clip);
    const double d_agent = roughness(agent_clip);
    return 100.0 * std::min(1.0, (d_ref + kEps) / (d_agent + kEps));
}

motion::MotionClip rollout_imitation(const agent::AgentModel& model,
                                     const motion::MotionClip& ref_clip,
                                     const kin::Skeleton& skeleton, int n_frames_override) {
    const int n = n_frames_override > 0 ? n_frames_override : ref_clip.length();
    std::vector<sig::ObjectiveSignal> objectives;
    objectives.reserve(n);
    for (int t = 0; t < n; ++t) {
        objectives.push_back(sig::objective_for(ref_clip, t, n));
    }
    const EpisodeRecord ep =
        model.rollout(objectives, skeleton, agent::RolloutMode::deterministic);
    motion::MotionClip out;
    out.id = ref_clip.id + "_agent";
    out.behaviour = ref_clip.behaviour;
    out.arm = ref_clip.arm;
    out.attributes = ref_clip.attributes;
    out.fps = ref_clip.fps;
    out.frames.reserve(n);
    for (const Eigen::VectorXd& a : ep.a) {
        out.frames.push_back(kin::action_to_pose(skeleton, a));
    }
    return out;
}

ScoreReport evaluate(const agent::AgentModel& model, const std::vector<motion::MotionClip>& refs,
                     const kin::Skeleton& skeleton, int window, int order) {
    ScoreReport report;
    const std::vector<int> joints = description_joint_set(skeleton);
    for (const motion::MotionClip& ref : refs) {
        const motion::MotionClip agent_clip = rollout_imitation(model, ref, skeleton);
        ScoreRow row;
        row.clip_id = ref.id;
        row.behaviour = ref.behaviour;
        row.per_frame_errors.reserve(ref.frames.size());
        for (int t = 0; t < ref.length(); ++t) {
            row.per_frame_errors.push_back(
                error_per_frame(kin::forward_kinematics(skeleton, agent_clip.frames[t]),
                                kin::forward_kinematics(skeleton, ref.frames[t]), skeleton,
                                joints));
        }
        row.score =
            100.0 - total_error(row.per_frame_errors) / static_cast<double>(ref.length());
        row.smoothness = smoothness(agent_clip, ref, skeleton, window, order);
        report.rows.push_back(std::move(row));
    }
    return report;
}

AblationResult run_ablation(AblationKind kind, const train::TrainConfig& train_config,
                            const agent::AgentConfig& agent_config,
                            const motion::DatasetSplit& dataset, const kin::Skeleton& skeleton) {
    train::TrainConfig cfg = train_config;
    if (kind == AblationKind::supervised_loss) {
        cfg.w1 = 0.0;
        cfg.w2 = 0.0;
    }
    train::HoldoutScorer scorer;
    if (!dataset.test.empty()) {
        scorer = [&dataset, &skeleton](const agent::AgentModel& m) {
            return evaluate(m, dataset.test, skeleton).mean_score();
        };
    }
    train::TrainResult tr = train::train(cfg, agent_config, dataset, skeleton, kind, scorer);
    AblationResult result{std::move(tr.model), std::move(tr.log), {}, {}};
    result.train_report = evaluate(result.model, dataset.train, skeleton);
    result.test_report = evaluate(result.model, dataset.test, skeleton);
    return result;
}

std::vector<FlexRow> flexibility_sweep(const agent::AgentModel& model,
                                       const std::vector<motion::MotionClip>& refs,
                                       const std::vector<double>& factors,
                                       const kin::Skeleton& skeleton, int window, int order) {
    std::vector<FlexRow> rows;
    for (const motion::MotionClip& ref : refs) {
        for (double factor : factors) {
            const motion::MotionClip warped_ref = motion::resample_clip(ref, factor);
            const motion::MotionClip agent_clip =
                rollout_imitation(model, ref, skeleton, warped_ref.length());
            FlexRow row;
            row.clip_id = ref.id;
            row.factor = factor;
            row.smoothness = smoothness(agent_clip, warped_ref, skeleton, window, order);
            rows.push_back(row);
        }
    }
    return rows;
}

namespace {

void write_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp);
        out << content;
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

std::string svg_chart(const std::vector<MethodRun>& reports) {
    constexpr int kW = 640, kH = 400;
    constexpr int kL = 60, kR = 20, kT = 20, kB = 50;
    int max_epoch = 1;
    for (const MethodRun& r : reports) {
        for (const auto& [epoch, s] : r.score_by_epoch) max_epoch = std::max(max_epoch, epoch);
    }
    const double x0 = kL, x1 = kW - kR, y0 = kH - kB, y1 = kT;
    const auto x_of = [&](double epoch) { return x0 + (x1 - x0) * epoch / max_epoch; };
    const auto y_of = [&](double s) {
        const double clamped = std::clamp(s, 0.0, 100.0);
        return y0 + (y1 - y0) * clamped / 100.0;
    };
    static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                     "#ff7f0e", "#8c564b"};

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
       << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
    os << "  <rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH
       << "\" fill=\"white\"/>\n";
    os << "  <line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
       << "\" stroke=\"black\"/>\n";
    os << "  <line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
       << "\" stroke=\"black\"/>\n";
    for (int s = 0; s <= 100; s += 20) {
        os << "  <text x=\"" << (x0 - 8) << "\" y=\"" << (y_of(s) + 4)
           << "\" font-size=\"11\" text-anchor=\"end\">" << s << "</text>\n";
    }
    os << "  <text x=\"" << (x0 + (x1 - x0) / 2) << "\" y=\"" << (kH - 12)
       << "\" font-size=\"13\" text-anchor=\"middle\">epoch</text>\n";
    os << "  <text x=\"16\" y=\"" << (y1 + (y0 - y1) / 2)
       << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (y1 + (y0 - y1) / 2) << ")\">score</text>\n";

    int color = 0;
    int legend_y = y1 + 14;
    for (const MethodRun& r : reports) {
        const char* stroke = kPalette[color % 6];
        ++color;
        if (!r.score_by_epoch.empty()) {
            os << "  <polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\""
               << " points=\"";
            for (const auto& [epoch, s] : r.score_by_epoch) {
                os << fmt(x_of(epoch)) << "," << fmt(y_of(s)) << " ";
            }
            os << "\"/>\n";
        }
        os << "  <text x=\"" << (x0 + 10) << "\" y=\"" << legend_y << "\" font-size=\"12\" fill=\""
           << stroke << "\">" << r.method << "</text>\n";
        legend_y += 16;
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace

void emit_report(const std::vector<MethodRun>& reports, const std::string& dir) {
    if (reports.empty()) throw ContractError("emit_report needs at least one report");
    std::filesystem::create_directories(dir);

    std::ostringstream csv;
    csv << "method,behaviour_set,split,score,smoothness,n_clips\n";
    for (const MethodRun& r : reports) {
        const auto emit_split = [&](const char* split, const ScoreReport& rep) {
            if (rep.rows.empty()) return;
            csv << r.method << "," << r.behaviour_set << "," << split << ","
                << fmt(rep.mean_score()) << "," << fmt(rep.mean_smoothness()) << ","
                << rep.rows.size() << "\n";
        };
        emit_split("train", r.train_report);
        emit_split("test", r.test_report);
    }
    write_atomic((std::filesystem::path(dir) / "report.csv").string(), csv.str());
    write_atomic((std::filesystem::path(dir) / "scores.svg").string(), svg_chart(reports));
}

} // namespace anim::eval
