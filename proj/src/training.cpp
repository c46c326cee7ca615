#include "anim/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "anim/errors.hpp"

namespace anim::train {

std::string to_string(BehaviourSet s) {
    switch (s) {
        case BehaviourSet::point: return "point";
        case BehaviourSet::wave: return "wave";
        case BehaviourSet::both: return "both";
    }
    return "both";
}

BehaviourSet behaviour_set_from_string(const std::string& s) {
    if (s == "point") return BehaviourSet::point;
    if (s == "wave") return BehaviourSet::wave;
    if (s == "both") return BehaviourSet::both;
    throw ValidationError("unknown behaviour set: " + s);
}

void TrainConfig::validate() const {
    if (epochs < 1 || chunks_per_update < 1 || chunk_length < 2 || updates_per_epoch < 1) {
        throw ConfigError("epochs, C, T must be positive and L >= 2");
    }
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(huber_delta > 0)) throw ConfigError("huber_delta must be positive");
    if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be positive");
    if (w1 < 0 || w2 < 0 || w3 < 0) throw ConfigError("loss weights must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"behaviours", to_string(behaviours)},
            {"chunks_per_update", chunks_per_update},
            {"chunk_length", chunk_length},
            {"updates_per_epoch", updates_per_epoch},
            {"learning_rate", learning_rate},
            {"huber_delta", huber_delta},
            {"grad_clip_norm", grad_clip_norm},
            {"buffer_capacity", buffer_capacity},
            {"w1", w1},
            {"w2", w2},
            {"w3", w3},
            {"seed", std::to_string(seed)},
            {"eval_every", eval_every},
            {"checkpoint_every", checkpoint_every},
            {"early_stop_score", early_stop_score}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
    TrainConfig c;
    c.epochs = doc.value("epochs", c.epochs);
    if (doc.contains("behaviours")) {
        c.behaviours = behaviour_set_from_string(doc["behaviours"].get<std::string>());
    }
    c.chunks_per_update = doc.value("chunks_per_update", c.chunks_per_update);
    c.chunk_length = doc.value("chunk_length", c.chunk_length);
    c.updates_per_epoch = doc.value("updates_per_epoch", c.updates_per_epoch);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.huber_delta = doc.value("huber_delta", c.huber_delta);
    c.grad_clip_norm = doc.value("grad_clip_norm", c.grad_clip_norm);
    c.buffer_capacity = doc.value("buffer_capacity", c.buffer_capacity);
    c.w1 = doc.value("w1", c.w1);
    c.w2 = doc.value("w2", c.w2);
    c.w3 = doc.value("w3", c.w3);
    if (doc.contains("seed")) {
        if (doc["seed"].is_string()) {
            c.seed = std::stoull(doc["seed"].get<std::string>());
        } else {
            c.seed = doc["seed"].get<std::uint64_t>();
        }
    }
    c.eval_every = doc.value("eval_every", c.eval_every);
    c.checkpoint_every = doc.value("checkpoint_every", c.checkpoint_every);
    c.early_stop_score = doc.value("early_stop_score", c.early_stop_score);
    c.validate();
    return c;
}

std::vector<ChunkView> sample_chunks(const EpisodeBuffer& buffer, int chunks, int length,
                                     Rng& rng) {
    if (buffer.empty()) throw StateError("cannot sample chunks from an empty buffer");
    if (length < 2) throw ContractError("chunk length must be at least 2");
    std::vector<ChunkView> out;
    out.reserve(chunks);
    for (int i = 0; i < chunks; ++i) {
        const EpisodeRecord& ep = buffer.at(static_cast<int>(rng.uniform_int(buffer.size())));
        ChunkView v;
        v.episode = &ep;
        if (ep.length() <= length) {
            v.start = 0;
            v.valid = ep.length();
        } else {
            v.start = static_cast<int>(rng.uniform_int(ep.length() - length + 1));
            v.valid = length;
        }
        out.push_back(v);
    }
    return out;
}

// ---- plain losses ----

double loss_l1(const std::vector<Eigen::VectorXd>& decoded,
               const std::vector<Eigen::VectorXd>& d_real, const std::vector<double>& mask) {
    if (decoded.size() != d_real.size() || decoded.size() != mask.size()) {
        throw ContractError("loss_l1 sequences disagree on length");
    }
    double sum = 0;
    long count = 0;
    for (size_t t = 0; t < decoded.size(); ++t) {
        if (mask[t] == 0.0) continue;
        if (decoded[t].size() != d_real[t].size()) {
            throw ContractError("loss_l1 step dimensions disagree");
        }
        sum += (decoded[t] - d_real[t]).squaredNorm();
        count += decoded[t].size();
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

namespace {
double kl_diag(const agent::GaussianParams& q, const agent::GaussianParams& p) {
    double kl = 0;
    for (int i = 0; i < q.mean.size(); ++i) {
        const double sq = q.stddev[i], sp = p.stddev[i];
        const double dm = q.mean[i] - p.mean[i];
        kl += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
    }
    return kl;
}
} // namespace

double loss_l2(const std::vector<agent::GaussianParams>& posterior,
               const std::vector<agent::GaussianParams>& prior, const std::vector<double>& mask,
               double min_stddev) {
    if (posterior.size() != prior.size() || posterior.size() != mask.size()) {
        throw ContractError("loss_l2 sequences disagree on length");
    }
    double sum = 0;
    long count = 0;
    for (size_t t = 0; t < posterior.size(); ++t) {
        if (mask[t] == 0.0) continue;
        if (posterior[t].mean.size() != prior[t].mean.size()) {
            throw ContractError("loss_l2 step dimensions disagree");
        }
        if ((posterior[t].stddev.array() < min_stddev).any() ||
            (prior[t].stddev.array() < min_stddev).any()) {
            throw ContractError("loss_l2 stddev below the configured floor");
        }
        sum += kl_diag(posterior[t], prior[t]);
        count += 1;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

double loss_l3(const std::vector<Eigen::VectorXd>& generated,
               const std::vector<Eigen::VectorXd>& m, double delta,
               const std::vector<double>& mask) {
    if (generated.size() != m.size() || generated.size() != mask.size()) {
        throw ContractError("loss_l3 sequences disagree on length");
    }
    if (!(delta > 0)) throw ContractError("huber delta must be positive");
    double sum = 0;
    long count = 0;
    for (size_t t = 0; t < generated.size(); ++t) {
        if (mask[t] == 0.0) continue;
        if (generated[t].size() != m[t].size()) {
            throw ContractError("loss_l3 step dimensions disagree");
        }
        for (int i = 0; i < generated[t].size(); ++i) {
            const double r = generated[t][i] - m[t][i];
            const double ar = std::abs(r);
            sum += ar <= delta ? 0.5 * r * r : delta * ar - 0.5 * delta * delta;
        }
        count += generated[t].size();
    }
    return count ? sum / static_cast<double>(count) : 0.0;
}

double total_loss(const LossParts& parts, double w1, double w2, double w3) {
    if (!std::isfinite(parts.l1)) throw NumericFault("loss component L1");
    if (!std::isfinite(parts.l2)) throw NumericFault("loss component L2");
    if (!std::isfinite(parts.l3)) throw NumericFault("loss component L3");
    return w1 * parts.l1 + w2 * parts.l2 + w3 * parts.l3;
}

// ---- update step ----

std::vector<agent::ChunkBatchStep> build_chunk_batch(const std::vector<ChunkView>& chunks,
                                                     int length, int b_stoch,
                                                     const Eigen::VectorXd& rest_action,
                                                     Rng& noise_rng) {
    const int c = static_cast<int>(chunks.size());
    const int obj = sig::kObjectiveDim;
    const int desc = sig::kDescriptionDim;
    const int act = static_cast<int>(rest_action.size());

    std::vector<agent::ChunkBatchStep> steps(length);
    for (int t = 0; t < length; ++t) {
        agent::ChunkBatchStep& s = steps[t];
        s.o = Eigen::MatrixXd::Zero(obj, c);
        s.a_prev = Eigen::MatrixXd::Zero(act, c);
        s.d_real = Eigen::MatrixXd::Zero(desc, c);
        s.m = Eigen::MatrixXd::Zero(act, c);
        s.noise = Eigen::MatrixXd::Zero(b_stoch, c);
        s.mask = Eigen::MatrixXd::Zero(1, c);
        for (int j = 0; j < c; ++j) {
            const ChunkView& v = chunks[j];
            if (t >= v.valid) continue;
            const int idx = v.start + t;
            s.o.col(j) = v.episode->o[idx];
            s.d_real.col(j) = v.episode->d_real[idx];
            s.m.col(j) = v.episode->m[idx];
            s.a_prev.col(j) = idx > 0 ? v.episode->a[idx - 1] : rest_action;
            s.mask(0, j) = 1.0;
        }
        // one draw per cell, including padded cells, keeps the stream layout
        // independent of chunk lengths
        for (int j = 0; j < c; ++j) {
            for (int i = 0; i < b_stoch; ++i) s.noise(i, j) = noise_rng.normal();
        }
    }
    return steps;
}

namespace {

LossGraph compose_losses(nn::Tape& tape, const std::vector<agent::UnrolledStep>& unrolled,
                         const std::vector<agent::ChunkBatchStep>& steps,
                         const TrainConfig& cfg) {
    const int desc = sig::kDescriptionDim;
    double valid = 0;
    for (const auto& s : steps) valid += s.mask.sum();
    if (valid <= 0) throw ContractError("update has no valid steps");

    nn::Var l1 = tape.constant(Eigen::MatrixXd::Zero(1, 1));
    nn::Var l2 = tape.constant(Eigen::MatrixXd::Zero(1, 1));
    nn::Var l3 = tape.constant(Eigen::MatrixXd::Zero(1, 1));
    for (size_t t = 0; t < unrolled.size(); ++t) {
        const agent::UnrolledStep& u = unrolled[t];
        const agent::ChunkBatchStep& s = steps[t];
        const int act = static_cast<int>(s.m.rows());
        const int bs = static_cast<int>(s.noise.rows());

        const Eigen::MatrixXd w_desc =
            (s.mask.replicate(desc, 1)).array() / (valid * desc);
        const Eigen::MatrixXd w_act = (s.mask.replicate(act, 1)).array() / (valid * act);
        const Eigen::MatrixXd w_kl = (s.mask.replicate(bs, 1)).array() / valid;

        nn::Var d_err = nn::square_op(nn::sub(u.decoded, tape.constant(s.d_real)));
        l1 = nn::add(l1, nn::weighted_sum(d_err, w_desc));

        // closed-form KL(q || p) for diagonal Gaussians
        nn::Var t1 = nn::sub(nn::log_op(u.prior_stddev), nn::log_op(u.post_stddev));
        nn::Var num = nn::add(nn::square_op(u.post_stddev),
                              nn::square_op(nn::sub(u.post_mean, u.prior_mean)));
        nn::Var den = nn::scale(nn::square_op(u.prior_stddev), 2.0);
        nn::Var kl = nn::add_scalar(nn::add(t1, nn::cdiv(num, den)), -0.5);
        l2 = nn::add(l2, nn::weighted_sum(kl, w_kl));

        nn::Var hub =
            nn::huber_op(nn::sub(u.gen_action, tape.constant(s.m)), cfg.huber_delta);
        l3 = nn::add(l3, nn::weighted_sum(hub, w_act));
    }
    LossGraph g{l1, l2, l3, {}};
    g.total = nn::add(nn::add(nn::scale(l1, cfg.w1), nn::scale(l2, cfg.w2)),
                      nn::scale(l3, cfg.w3));
    return g;
}

} // namespace

LossGraph build_loss_graph(nn::Tape& tape, const nn::ParamLeaves& leaves,
                           const agent::AgentModel& model,
                           const std::vector<agent::ChunkBatchStep>& steps,
                           const TrainConfig& config) {
    const std::vector<agent::UnrolledStep> unrolled = model.unroll(tape, leaves, steps);
    return compose_losses(tape, unrolled, steps, config);
}

LossReport update_step(agent::AgentModel& model, const std::vector<ChunkView>& chunks,
                       const TrainConfig& config, const kin::Skeleton& skeleton,
                       Rng& noise_rng) {
    if (chunks.empty()) throw ContractError("update_step needs at least one chunk");

    const std::vector<agent::ChunkBatchStep> steps =
        build_chunk_batch(chunks, config.chunk_length, model.config().b_stoch_dim,
                          kin::rest_action(skeleton), noise_rng);

    nn::Tape tape;
    nn::ParamLeaves leaves(tape, model.params());
    const LossGraph losses = build_loss_graph(tape, leaves, model, steps, config);

    LossReport report;
    report.l1 = config.w1 * losses.l1.value()(0, 0);
    report.l2 = config.w2 * losses.l2.value()(0, 0);
    report.l3 = config.w3 * losses.l3.value()(0, 0);
    report.total = losses.total.value()(0, 0);
    if (!std::isfinite(report.total)) throw NumericFault("total loss");

    tape.backward(losses.total);

    std::vector<Eigen::MatrixXd> grads;
    grads.reserve(leaves.count());
    for (int i = 0; i < leaves.count(); ++i) grads.push_back(leaves.grad(i));

    const nn::AdamOptimizer opt(config.learning_rate, config.grad_clip_norm);
    const nn::AdamOptimizer::Result r = opt.step(model.params(), grads);
    report.grad_norm = r.grad_norm;
    report.skipped = r.skipped;
    return report;
}

// ---- training loop ----

TrainResult train(const TrainConfig& train_config, const agent::AgentConfig& agent_config,
                  const motion::DatasetSplit& dataset, const kin::Skeleton& skeleton,
                  agent::AblationKind kind, const HoldoutScorer& holdout,
                  const CheckpointSink& checkpoint_sink) {
    train_config.validate();
    agent_config.validate();

    std::vector<Behaviour> wanted;
    if (train_config.behaviours != BehaviourSet::wave) wanted.push_back(Behaviour::point);
    if (train_config.behaviours != BehaviourSet::point) wanted.push_back(Behaviour::wave);

    std::vector<std::vector<const motion::MotionClip*>> pools(wanted.size());
    for (size_t w = 0; w < wanted.size(); ++w) {
        for (const motion::MotionClip& clip : dataset.train) {
            if (clip.behaviour == wanted[w]) pools[w].push_back(&clip);
        }
        if (pools[w].empty()) {
            throw ConfigError("training set has no " + to_string(wanted[w]) + " clips");
        }
    }

    agent::AgentModel model(agent_config, kind);
    EpisodeBuffer buffer(train_config.buffer_capacity);

    Rng clip_rng(derive_seed(train_config.seed, "clips"));
    Rng rollout_rng(derive_seed(train_config.seed, "rollouts"));
    Rng chunk_rng(derive_seed(train_config.seed, "chunks"));
    Rng noise_rng(derive_seed(train_config.seed, "noise"));

    TrainResult result{std::move(model), {}};
    for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
        for (size_t w = 0; w < wanted.size(); ++w) {
            const motion::MotionClip& clip =
                *pools[w][clip_rng.uniform_int(pools[w].size())];
            const int n = clip.length();
            std::vector<sig::ObjectiveSignal> objectives;
            objectives.reserve(n);
            std::vector<Eigen::VectorXd> ideal;
            ideal.reserve(n);
            for (int t = 0; t < n; ++t) {
                objectives.push_back(sig::objective_for(clip, t));
                ideal.push_back(kin::pose_to_action(skeleton, clip.frames[t]));
            }
            try {
                buffer.push(result.model.rollout(objectives, skeleton,
                                                 agent::RolloutMode::stochastic, &rollout_rng,
                                                 &ideal));
            } catch (const NumericFault& f) {
                throw NumericFault(std::string(f.context()) + " (epoch " +
                                   std::to_string(epoch) + ", clip " + clip.id + ")");
            }
        }

        TrainLogRow row;
        row.epoch = epoch;
        for (int s = 0; s < train_config.updates_per_epoch; ++s) {
            const std::vector<ChunkView> chunks = sample_chunks(
                buffer, train_config.chunks_per_update, train_config.chunk_length, chunk_rng);
            LossReport rep;
            try {
                rep = update_step(result.model, chunks, train_config, skeleton, noise_rng);
            } catch (const NumericFault& f) {
                throw NumericFault(std::string(f.context()) + " (epoch " +
                                   std::to_string(epoch) + ", update " + std::to_string(s) + ")");
            }
            row.l1 += rep.l1;
            row.l2 += rep.l2;
            row.l3 += rep.l3;
            row.total += rep.total;
            row.grad_norm += rep.grad_norm;
        }
        const double t = train_config.updates_per_epoch;
        row.l1 /= t;
        row.l2 /= t;
        row.l3 /= t;
        row.total /= t;
        row.grad_norm /= t;

        const bool scheduled =
            train_config.eval_every > 0 &&
            (epoch % train_config.eval_every == 0 || epoch == train_config.epochs);
        if (holdout && scheduled) row.holdout_score = holdout(result.model);
        result.log.push_back(row);

        if (checkpoint_sink && train_config.checkpoint_every > 0 &&
            epoch % train_config.checkpoint_every == 0) {
            checkpoint_sink(epoch, result.model);
        }
        if (train_config.early_stop_score > 0 && row.holdout_score &&
            *row.holdout_score >= train_config.early_stop_score) {
            break;
        }
    }
    return result;
}

namespace {
std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}
} // namespace

std::string log_csv_string(const std::vector<TrainLogRow>& rows) {
    std::ostringstream os;
    os << "epoch,l1,l2,l3,total,grad_norm,holdout_score\n";
    for (const TrainLogRow& r : rows) {
        os << r.epoch << "," << fmt(r.l1) << "," << fmt(r.l2) << "," << fmt(r.l3) << ","
           << fmt(r.total) << "," << fmt(r.grad_norm) << ",";
        if (r.holdout_score) os << fmt(*r.holdout_score);
        os << "\n";
    }
    return os.str();
}

void write_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write training log: " + path);
    out << log_csv_string(rows);
}

} // namespace anim::train
