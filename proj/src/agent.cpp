#include "anim/agent.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "anim/errors.hpp"

namespace anim::agent {

namespace {
constexpr int kActionDim = 45;
constexpr char kMagic[8] = {'A', 'N', 'I', 'M', 'C', 'K', 'P', '1'};

void require_finite(const Eigen::VectorXd& v, const char* what) {
    if (!v.allFinite()) throw NumericFault(what);
}
} // namespace

std::string to_string(AblationKind kind) {
    switch (kind) {
        case AblationKind::full: return "full";
        case AblationKind::single_state: return "single_state";
        case AblationKind::single_dynamics_space: return "single_dynamics_space";
        case AblationKind::supervised_loss: return "supervised_loss";
    }
    return "full";
}

AblationKind ablation_from_string(const std::string& s) {
    if (s == "full") return AblationKind::full;
    if (s == "single_state") return AblationKind::single_state;
    if (s == "single_dynamics_space") return AblationKind::single_dynamics_space;
    if (s == "supervised_loss") return AblationKind::supervised_loss;
    throw ValidationError("unknown ablation kind: " + s);
}

void AgentConfig::validate() const {
    if (h_dim < 1 || b_det_dim < 1 || b_stoch_dim < 1 || portrayal_hidden_dim < 1 ||
        decoder_hidden_dim < 1 || policy_hidden_dim < 1) {
        throw ConfigError("agent widths must be positive");
    }
    if (!(min_stddev > 0)) throw ConfigError("min_stddev must be positive");
}

nlohmann::json AgentConfig::to_json() const {
    return {{"h_dim", h_dim},
            {"b_det_dim", b_det_dim},
            {"b_stoch_dim", b_stoch_dim},
            {"portrayal_hidden_dim", portrayal_hidden_dim},
            {"decoder_hidden_dim", decoder_hidden_dim},
            {"policy_hidden_dim", policy_hidden_dim},
            {"min_stddev", min_stddev},
            {"seed", std::to_string(seed)}};
}

AgentConfig AgentConfig::from_json(const nlohmann::json& doc) {
    AgentConfig c;
    c.h_dim = doc.value("h_dim", c.h_dim);
    c.b_det_dim = doc.value("b_det_dim", c.b_det_dim);
    c.b_stoch_dim = doc.value("b_stoch_dim", c.b_stoch_dim);
    c.portrayal_hidden_dim = doc.value("portrayal_hidden_dim", c.portrayal_hidden_dim);
    c.decoder_hidden_dim = doc.value("decoder_hidden_dim", c.decoder_hidden_dim);
    c.policy_hidden_dim = doc.value("policy_hidden_dim", c.policy_hidden_dim);
    c.min_stddev = doc.value("min_stddev", c.min_stddev);
    if (doc.contains("seed")) {
        if (doc["seed"].is_string()) {
            c.seed = std::stoull(doc["seed"].get<std::string>());
        } else {
            c.seed = doc["seed"].get<std::uint64_t>();
        }
    }
    c.validate();
    return c;
}

AgentModel::AgentModel(const AgentConfig& config, AblationKind kind)
    : config_(config), kind_(kind), action_dim_(kActionDim) {
    config_.validate();
    det_dim_ = merged() ? config_.h_dim + config_.b_det_dim : config_.h_dim;
    register_networks();
}

void AgentModel::register_networks() {
    Rng rng(derive_seed(config_.seed, "agent-params"));
    const int ad = action_dim_;
    const int bs = config_.b_stoch_dim;

    if (has_portrayal()) {
        portrayal_gru_ = {"portrayal_gru", sig::kObjectiveDim, config_.portrayal_hidden_dim};
        portrayal_gru_.register_params(params_, rng);
        params_.add_matrix(kPortrayalOutW, sig::kDescriptionDim, config_.portrayal_hidden_dim,
                           rng);
        params_.add_bias(kPortrayalOutB, sig::kDescriptionDim);
    }

    if (merged()) {
        task_gru_ = {"dynamics_gru", sig::kObjectiveDim + bs + ad, det_dim_};
        task_gru_.register_params(params_, rng);
    } else {
        task_gru_ = {"task_gru", sig::kObjectiveDim, config_.h_dim};
        task_gru_.register_params(params_, rng);
        behaviour_gru_ = {"behaviour_gru", config_.h_dim + bs + ad, config_.b_det_dim};
        behaviour_gru_.register_params(params_, rng);
    }

    const int feat = merged() ? det_dim_ : config_.b_det_dim;
    prior_head_ = {"prior_head", feat, config_.decoder_hidden_dim, 2 * bs};
    prior_head_.register_params(params_, rng);
    posterior_head_ = {"posterior_head", feat + sig::kDescriptionDim, config_.decoder_hidden_dim,
                       2 * bs};
    posterior_head_.register_params(params_, rng);
    decoder_ = {"decoder", det_dim_ + bs, config_.decoder_hidden_dim, sig::kDescriptionDim};
    decoder_.register_params(params_, rng);
    action_head_ = {"action_head", det_dim_ + bs, config_.policy_hidden_dim, 2 * ad};
    action_head_.register_params(params_, rng);
}

// ---- plain single-step evaluation ----

Eigen::VectorXd AgentModel::portrayal_initial_state() const {
    if (!has_portrayal()) return Eigen::VectorXd();
    return Eigen::VectorXd::Zero(config_.portrayal_hidden_dim);
}

std::pair<sig::DescriptionSignal, Eigen::VectorXd> AgentModel::portrayal_step(
    const kin::Skeleton& skeleton, const sig::ObjectiveSignal& o,
    const Eigen::VectorXd& state) const {
    if (!has_portrayal()) {
        throw ContractError("the single_state control has no portrayal model");
    }
    if (state.size() != config_.portrayal_hidden_dim) {
        throw ContractError("portrayal state has the wrong dimension");
    }
    const Eigen::VectorXd next = portrayal_gru_.step_plain(params_, o.v, state);
    Eigen::Matrix<double, sig::kDescriptionDim, 1> raw =
        params_.tensor(kPortrayalOutW) * next + params_.tensor(kPortrayalOutB).col(0);
    if (!raw.allFinite()) throw NumericFault("portrayal_out activations");
    return {sig::renormalize_description(skeleton, raw), next};
}

Eigen::VectorXd AgentModel::task_state_update(const Eigen::VectorXd& h_prev,
                                              const sig::ObjectiveSignal& o) const {
    if (merged()) {
        throw ContractError("the merged-latent control has no standalone task state");
    }
    if (h_prev.size() != config_.h_dim) throw ContractError("task state has the wrong dimension");
    Eigen::VectorXd h = task_gru_.step_plain(params_, o.v, h_prev);
    if (!h.allFinite()) throw NumericFault("task_gru activations");
    return h;
}

AgentModel::PriorResult AgentModel::behaviour_prior(const Eigen::VectorXd& h,
                                                    const Eigen::VectorXd& b_prev_sample,
                                                    const Eigen::VectorXd& a_prev,
                                                    const Eigen::VectorXd& b_det_prev) const {
    if (merged()) throw ContractError("the merged-latent control has no behaviour recurrence");
    if (h.size() != config_.h_dim || b_prev_sample.size() != config_.b_stoch_dim ||
        a_prev.size() != action_dim_ || b_det_prev.size() != config_.b_det_dim) {
        throw ContractError("behaviour_prior input dimensions do not match the config");
    }
    Eigen::VectorXd x(h.size() + b_prev_sample.size() + a_prev.size());
    x << h, b_prev_sample, a_prev;
    PriorResult r;
    r.b_det = behaviour_gru_.step_plain(params_, x, b_det_prev);
    if (!r.b_det.allFinite()) throw NumericFault("behaviour_gru activations");
    const Eigen::VectorXd out = prior_head_.run_plain(params_, r.b_det);
    if (!out.allFinite()) throw NumericFault("prior_head activations");
    const int bs = config_.b_stoch_dim;
    r.dist.mean = out.head(bs);
    r.dist.stddev =
        out.tail(bs).unaryExpr([this](double v) { return config_.min_stddev + nn::softplus(v); });
    return r;
}

GaussianParams AgentModel::behaviour_posterior(
    const Eigen::VectorXd& b_det, const Eigen::Matrix<double, sig::kDescriptionDim, 1>& d) const {
    const int feat = merged() ? det_dim_ : config_.b_det_dim;
    if (b_det.size() != feat) throw ContractError("behaviour feature has the wrong dimension");
    Eigen::VectorXd x(feat + sig::kDescriptionDim);
    x << b_det, d;
    const Eigen::VectorXd out = posterior_head_.run_plain(params_, x);
    if (!out.allFinite()) throw NumericFault("posterior_head activations");
    const int bs = config_.b_stoch_dim;
    GaussianParams g;
    g.mean = out.head(bs);
    g.stddev =
        out.tail(bs).unaryExpr([this](double v) { return config_.min_stddev + nn::softplus(v); });
    return g;
}

BetaPolicyOutput AgentModel::animation_step(const Eigen::VectorXd& h,
                                            const Eigen::VectorXd& b_sample) const {
    if (h.size() != det_dim_ || b_sample.size() != config_.b_stoch_dim) {
        throw ContractError("animation_step input dimensions do not match the config");
    }
    Eigen::VectorXd x(h.size() + b_sample.size());
    x << h, b_sample;
    const Eigen::VectorXd out = action_head_.run_plain(params_, x);
    if (!out.allFinite()) throw NumericFault("action_head activations");
    BetaPolicyOutput beta;
    beta.alpha = out.head(action_dim_).unaryExpr([](double v) { return 1.0 + nn::softplus(v); });
    beta.beta = out.tail(action_dim_).unaryExpr([](double v) { return 1.0 + nn::softplus(v); });
    return beta;
}

Eigen::VectorXd AgentModel::decode_description(const Eigen::VectorXd& h,
                                               const Eigen::VectorXd& b_sample) const {
    if (h.size() != det_dim_ || b_sample.size() != config_.b_stoch_dim) {
        throw ContractError("decode_description input dimensions do not match the config");
    }
    Eigen::VectorXd x(h.size() + b_sample.size());
    x << h, b_sample;
    const Eigen::VectorXd out = decoder_.run_plain(params_, x);
    if (!out.allFinite()) throw NumericFault("decoder activations");
    return out;
}

// ---- rollout ----

EpisodeRecord AgentModel::rollout(const std::vector<sig::ObjectiveSignal>& objectives,
                                  const kin::Skeleton& skeleton, RolloutMode mode, Rng* rng,
                                  const std::vector<Eigen::VectorXd>* ideal_actions) const {
    if (objectives.empty()) throw ContractError("rollout needs a non-empty objective sequence");
    if (mode == RolloutMode::stochastic && rng == nullptr) {
        throw ContractError("stochastic rollout needs a random source");
    }
    if (skeleton.action_dim() != action_dim_) {
        throw ContractError("skeleton action dimension does not match the agent");
    }
    if (ideal_actions && static_cast<int>(ideal_actions->size()) != static_cast<int>(objectives.size())) {
        throw ContractError("ideal action sequence length does not match the objectives");
    }

    const int n = static_cast<int>(objectives.size());
    const int bs = config_.b_stoch_dim;
    const Eigen::VectorXd rest_a = kin::rest_action(skeleton);

    Eigen::VectorXd ph = portrayal_initial_state();
    Eigen::VectorXd h = Eigen::VectorXd::Zero(det_dim_);
    Eigen::VectorXd b_det = Eigen::VectorXd::Zero(merged() ? 0 : config_.b_det_dim);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(bs);
    Eigen::VectorXd a_prev = rest_a;
    Eigen::Matrix<double, sig::kDescriptionDim, 1> d_measured = sig::rest_description(skeleton).v;

    EpisodeRecord ep;
    ep.o.reserve(n);
    ep.a.reserve(n);
    ep.d_real.reserve(n);
    ep.m.reserve(n);

    for (int t = 0; t < n; ++t) {
        const sig::ObjectiveSignal& o = objectives[t];

        GaussianParams dist;
        BetaPolicyOutput beta;
        try {
            // Descriptions reach the agent only through its own portrayal
            // model; the environment's measurements go to the buffer alone.
            // The single_state control therefore has no description channel
            // at generation time and samples its behaviour state from the
            // prior (the encoder is still trained on real descriptions).
            Eigen::Matrix<double, sig::kDescriptionDim, 1> d_cond =
                Eigen::Matrix<double, sig::kDescriptionDim, 1>::Zero();
            if (has_portrayal()) {
                auto [d_hat, ph_next] = portrayal_step(skeleton, o, ph);
                ph = std::move(ph_next);
                require_finite(ph, "portrayal state");
                d_cond = d_hat.v;
            }

            if (merged()) {
                Eigen::VectorXd x(sig::kObjectiveDim + bs + action_dim_);
                x << o.v, b, a_prev;
                h = task_gru_.step_plain(params_, x, h);
                require_finite(h, "dynamics state");
                dist = behaviour_posterior(h, d_cond);
            } else {
                h = task_state_update(h, o);
                const PriorResult prior = behaviour_prior(h, b, a_prev, b_det);
                b_det = prior.b_det;
                dist = has_portrayal() ? behaviour_posterior(b_det, d_cond) : prior.dist;
            }

            if (mode == RolloutMode::stochastic) {
                b = dist.mean;
                for (int i = 0; i < bs; ++i) b[i] += dist.stddev[i] * rng->normal();
            } else {
                b = dist.mean;
            }
            require_finite(b, "behaviour sample");
            beta = animation_step(h, b);
        } catch (const NumericFault& f) {
            throw NumericFault(f.context() + " at rollout step " + std::to_string(t));
        }
        Eigen::VectorXd a(action_dim_);
        if (mode == RolloutMode::stochastic) {
            for (int i = 0; i < action_dim_; ++i) a[i] = rng->beta(beta.alpha[i], beta.beta[i]);
        } else {
            a = beta.mean();
        }
        if (!a.allFinite()) {
            throw NumericFault("action at rollout step " + std::to_string(t));
        }

        const kin::Pose pose = kin::action_to_pose(skeleton, a);
        const kin::PoseGeometry geo = kin::forward_kinematics(skeleton, pose);
        d_measured = sig::description_of(skeleton, geo).v;

        ep.o.push_back(o.v);
        ep.a.push_back(std::move(a));
        ep.d_real.push_back(d_measured);
        ep.m.push_back(ideal_actions ? (*ideal_actions)[t] : rest_a);
        a_prev = ep.a.back();
    }
    return ep;
}

// ---- differentiable unroll ----

std::vector<UnrolledStep> AgentModel::unroll(nn::Tape& tape, const nn::ParamLeaves& p,
                                             const std::vector<ChunkBatchStep>& steps) const {
    if (steps.empty()) throw ContractError("unroll needs at least one step");
    const int cols = static_cast<int>(steps[0].o.cols());
    const int bs = config_.b_stoch_dim;

    nn::Var ph;
    if (has_portrayal()) {
        ph = tape.constant(Eigen::MatrixXd::Zero(config_.portrayal_hidden_dim, cols));
    }
    nn::Var h = tape.constant(Eigen::MatrixXd::Zero(det_dim_, cols));
    nn::Var b_det;
    if (!merged()) b_det = tape.constant(Eigen::MatrixXd::Zero(config_.b_det_dim, cols));
    nn::Var b = tape.constant(Eigen::MatrixXd::Zero(bs, cols));

    std::vector<UnrolledStep> out;
    out.reserve(steps.size());
    for (const ChunkBatchStep& s : steps) {
        nn::Var o = tape.constant(s.o);
        nn::Var a_prev = tape.constant(s.a_prev);

        nn::Var d_cond;
        if (has_portrayal()) {
            ph = portrayal_gru_.step(p, o, ph);
            nn::Var raw = nn::add_bias(nn::matmul(p[kPortrayalOutW], ph), p[kPortrayalOutB]);
            nn::Var blocks = nn::vcat(
                nn::vcat(nn::normalize_columns(nn::rows(raw, 0, 3)),
                         nn::normalize_columns(nn::rows(raw, 3, 3))),
                nn::vcat(nn::normalize_columns(nn::rows(raw, 6, 3)),
                         nn::normalize_columns(nn::rows(raw, 9, 3))));
            d_cond = nn::vcat(blocks, nn::rows(raw, 12, 30));
        } else {
            d_cond = tape.constant(s.d_real);
        }

        nn::Var feat; // prior/posterior conditioning feature
        if (merged()) {
            h = task_gru_.step(p, nn::vcat(o, b, a_prev), h);
            feat = h;
        } else {
            h = task_gru_.step(p, o, h);
            b_det = behaviour_gru_.step(p, nn::vcat(h, b, a_prev), b_det);
            feat = b_det;
        }

        UnrolledStep u;
        u.d_hat = d_cond;
        nn::Var prior_out = prior_head_.run(p, feat);
        u.prior_mean = nn::rows(prior_out, 0, bs);
        u.prior_stddev =
            nn::add_scalar(nn::softplus_op(nn::rows(prior_out, bs, bs)), config_.min_stddev);

        nn::Var post_out = posterior_head_.run(p, nn::vcat(feat, d_cond));
        u.post_mean = nn::rows(post_out, 0, bs);
        u.post_stddev =
            nn::add_scalar(nn::softplus_op(nn::rows(post_out, bs, bs)), config_.min_stddev);

        b = nn::add(u.post_mean, nn::cmul(u.post_stddev, tape.constant(s.noise)));

        nn::Var latent = nn::vcat(h, b);
        u.decoded = decoder_.run(p, latent);

        nn::Var act_out = action_head_.run(p, latent);
        nn::Var alpha = nn::add_scalar(nn::softplus_op(nn::rows(act_out, 0, action_dim_)), 1.0);
        nn::Var beta =
            nn::add_scalar(nn::softplus_op(nn::rows(act_out, action_dim_, action_dim_)), 1.0);
        u.gen_action = nn::cdiv(alpha, nn::add(alpha, beta));

        out.push_back(std::move(u));
    }
    return out;
}

// ---- checkpoints ----

void AgentModel::save_checkpoint(const std::string& path, std::uint64_t training_seed) const {
    nlohmann::json header;
    header["layout"] = sig::kLayoutVersion;
    header["kind"] = to_string(kind_);
    header["training_seed"] = std::to_string(training_seed);
    header["config"] = config_.to_json();
    header["tensors"] = nlohmann::json::array();
    for (int i = 0; i < params_.count(); ++i) {
        header["tensors"].push_back({{"name", params_.name(i)},
                                     {"rows", params_.tensor(i).rows()},
                                     {"cols", params_.tensor(i).cols()}});
    }
    const std::string head = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::uint32_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t head_len = head.size();
    out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (int i = 0; i < params_.count(); ++i) {
        const Eigen::MatrixXd& m = params_.tensor(i);
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(sizeof(double) * m.size()));
    }
    if (!out) throw IoError("failed while writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ValidationError("not a checkpoint file: " + path);
    }
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != 1) {
        throw VersionError("checkpoint container version " + std::to_string(version) +
                           ", expected 1");
    }
    std::uint64_t head_len = 0;
    in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
    std::string head(head_len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head_len));
    if (!in) throw IoError("truncated checkpoint header: " + path);
    const nlohmann::json header = nlohmann::json::parse(head);

    const std::string layout = header.at("layout").get<std::string>();
    if (layout != sig::kLayoutVersion) {
        throw VersionError("checkpoint signal layout '" + layout + "' does not match library '" +
                           sig::kLayoutVersion + "'");
    }

    const AgentConfig config = AgentConfig::from_json(header.at("config"));
    const AblationKind kind = ablation_from_string(header.at("kind").get<std::string>());
    AgentModel model(config, kind);

    const auto& tensors = header.at("tensors");
    if (static_cast<int>(tensors.size()) != model.params().count()) {
        throw ValidationError("checkpoint tensor count does not match the architecture");
    }
    for (int i = 0; i < model.params().count(); ++i) {
        const auto& td = tensors.at(i);
        const std::string name = td.at("name").get<std::string>();
        const long rows = td.at("rows").get<long>();
        const long cols = td.at("cols").get<long>();
        Eigen::MatrixXd& dst = model.params().tensor(name);
        if (dst.rows() != rows || dst.cols() != cols) {
            throw ValidationError("checkpoint tensor '" + name + "' has shape " +
                                  std::to_string(rows) + "x" + std::to_string(cols) +
                                  ", expected " + std::to_string(dst.rows()) + "x" +
                                  std::to_string(dst.cols()));
        }
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(sizeof(double) * dst.size()));
    }
    if (!in) throw IoError("truncated checkpoint data: " + path);
    model.params().check_finite();

    LoadedCheckpoint lc{std::move(model), 0};
    std::uint64_t seed = 0;
    if (header.contains("training_seed")) {
        seed = std::stoull(header["training_seed"].get<std::string>());
    }
    lc.training_seed = seed;
    return lc;
}

} // namespace anim::agent
