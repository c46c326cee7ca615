#include "anim/nn.hpp"

#include <cmath>

namespace anim::nn {

void Tape::backward(Var root) {
    Node* r = root.node();
    if (r->value.rows() != 1 || r->value.cols() != 1) {
        throw ContractError("backward root must be a scalar node");
    }
    r->grad(0, 0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->backward) it->backward(*it);
    }
}

namespace {

Var unary(Var a, Eigen::MatrixXd value, std::function<void(Node&, Node&)> back) {
    Tape* t = a.tape();
    Var out = t->make(std::move(value), a.requires_grad());
    if (a.requires_grad()) {
        Node* pa = a.node();
        out.node()->backward = [pa, back = std::move(back)](Node& self) { back(self, *pa); };
    }
    return out;
}

Var binary(Var a, Var b, Eigen::MatrixXd value,
           std::function<void(Node&, Node&, Node&)> back) {
    Tape* t = a.tape();
    const bool req = a.requires_grad() || b.requires_grad();
    Var out = t->make(std::move(value), req);
    if (req) {
        Node* pa = a.node();
        Node* pb = b.node();
        out.node()->backward = [pa, pb, back = std::move(back)](Node& self) {
            back(self, *pa, *pb);
        };
    }
    return out;
}

} // namespace

Var matmul(Var a, Var b) {
    return binary(a, b, a.value() * b.value(), [](Node& self, Node& na, Node& nb) {
        if (na.requires_grad) na.grad.noalias() += self.grad * nb.value.transpose();
        if (nb.requires_grad) nb.grad.noalias() += na.value.transpose() * self.grad;
    });
}

Var add(Var a, Var b) {
    return binary(a, b, a.value() + b.value(), [](Node& self, Node& na, Node& nb) {
        if (na.requires_grad) na.grad += self.grad;
        if (nb.requires_grad) nb.grad += self.grad;
    });
}

Var sub(Var a, Var b) {
    return binary(a, b, a.value() - b.value(), [](Node& self, Node& na, Node& nb) {
        if (na.requires_grad) na.grad += self.grad;
        if (nb.requires_grad) nb.grad -= self.grad;
    });
}

Var cmul(Var a, Var b) {
    return binary(a, b, a.value().cwiseProduct(b.value()),
                  [](Node& self, Node& na, Node& nb) {
                      if (na.requires_grad) na.grad += self.grad.cwiseProduct(nb.value);
                      if (nb.requires_grad) nb.grad += self.grad.cwiseProduct(na.value);
                  });
}

Var cdiv(Var a, Var b) {
    return binary(a, b, a.value().cwiseQuotient(b.value()),
                  [](Node& self, Node& na, Node& nb) {
                      if (na.requires_grad) na.grad += self.grad.cwiseQuotient(nb.value);
                      if (nb.requires_grad) {
                          nb.grad.array() -= self.grad.array() * na.value.array() /
                                             (nb.value.array() * nb.value.array());
                      }
                  });
}

Var add_bias(Var m, Var bias) {
    Eigen::MatrixXd v = m.value();
    v.colwise() += Eigen::VectorXd(bias.value().col(0));
    return binary(m, bias, std::move(v), [](Node& self, Node& nm, Node& nb) {
        if (nm.requires_grad) nm.grad += self.grad;
        if (nb.requires_grad) nb.grad.col(0) += self.grad.rowwise().sum();
    });
}

Var scale(Var a, double c) {
    return unary(a, c * a.value(),
                 [c](Node& self, Node& na) { na.grad += c * self.grad; });
}

Var add_scalar(Var a, double c) {
    return unary(a, (a.value().array() + c).matrix(),
                 [](Node& self, Node& na) { na.grad += self.grad; });
}

Var neg(Var a) {
    return unary(a, -a.value(), [](Node& self, Node& na) { na.grad -= self.grad; });
}

Var tanh_op(Var a) {
    return unary(a, a.value().array().tanh().matrix(), [](Node& self, Node& na) {
        na.grad.array() += self.grad.array() * (1.0 - self.value.array().square());
    });
}

Var sigmoid_op(Var a) {
    Eigen::MatrixXd v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
    return unary(a, std::move(v), [](Node& self, Node& na) {
        na.grad.array() +=
            self.grad.array() * self.value.array() * (1.0 - self.value.array());
    });
}

Var softplus_op(Var a) {
    Eigen::MatrixXd v = a.value().unaryExpr([](double x) { return softplus(x); });
    return unary(a, std::move(v), [](Node& self, Node& na) {
        na.grad.array() += self.grad.array() / (1.0 + (-na.value.array()).exp());
    });
}

Var square_op(Var a) {
    return unary(a, a.value().array().square().matrix(), [](Node& self, Node& na) {
        na.grad.array() += 2.0 * self.grad.array() * na.value.array();
    });
}

Var log_op(Var a) {
    return unary(a, a.value().array().log().matrix(), [](Node& self, Node& na) {
        na.grad.array() += self.grad.array() / na.value.array();
    });
}

Var vcat(Var a, Var b) {
    Eigen::MatrixXd v(a.value().rows() + b.value().rows(), a.value().cols());
    v << a.value(), b.value();
    const int ra = static_cast<int>(a.value().rows());
    const int rb = static_cast<int>(b.value().rows());
    return binary(a, b, std::move(v), [ra, rb](Node& self, Node& na, Node& nb) {
        if (na.requires_grad) na.grad += self.grad.topRows(ra);
        if (nb.requires_grad) nb.grad += self.grad.bottomRows(rb);
    });
}

Var vcat(Var a, Var b, Var c) { return vcat(vcat(a, b), c); }

Var rows(Var a, int first, int count) {
    return unary(a, a.value().middleRows(first, count),
                 [first, count](Node& self, Node& na) {
                     na.grad.middleRows(first, count) += self.grad;
                 });
}

Var sum_all(Var a) {
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = a.value().sum();
    return unary(a, std::move(v), [](Node& self, Node& na) {
        na.grad.array() += self.grad(0, 0);
    });
}

Var weighted_sum(Var a, const Eigen::MatrixXd& w) {
    Eigen::MatrixXd v(1, 1);
    v(0, 0) = a.value().cwiseProduct(w).sum();
    return unary(a, std::move(v), [w](Node& self, Node& na) {
        na.grad += self.grad(0, 0) * w;
    });
}

Var huber_op(Var residual, double delta) {
    Eigen::MatrixXd v = residual.value().unaryExpr([delta](double r) {
        const double ar = std::abs(r);
        return ar <= delta ? 0.5 * r * r : delta * ar - 0.5 * delta * delta;
    });
    return unary(residual, std::move(v), [delta](Node& self, Node& na) {
        na.grad.array() += self.grad.array() *
                           na.value.array().max(-delta).min(delta);
    });
}

Var normalize_columns(Var a, double eps) {
    const Eigen::MatrixXd& x = a.value();
    Eigen::RowVectorXd norms = (x.colwise().squaredNorm().array() + eps).sqrt();
    Eigen::MatrixXd v = x.array().rowwise() / norms.array();
    return unary(a, std::move(v), [norms](Node& self, Node& na) {
        for (int j = 0; j < na.value.cols(); ++j) {
            const double s = norms(j);
            const Eigen::VectorXd aj = na.value.col(j);
            const Eigen::VectorXd gj = self.grad.col(j);
            na.grad.col(j) += gj / s - aj * (aj.dot(gj)) / (s * s * s);
        }
    });
}

// ---- parameters ----

void ParamStore::add_matrix(const std::string& name, int rows, int cols, Rng& rng) {
    if (index_.count(name)) throw ContractError("duplicate parameter tensor: " + name);
    const double limit = std::sqrt(6.0 / (rows + cols));
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
    }
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.push_back(std::move(m));
    adam_m_.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
    adam_v_.emplace_back(Eigen::MatrixXd::Zero(rows, cols));
}

void ParamStore::add_bias(const std::string& name, int rows, double fill) {
    if (index_.count(name)) throw ContractError("duplicate parameter tensor: " + name);
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    values_.push_back(Eigen::MatrixXd::Constant(rows, 1, fill));
    adam_m_.emplace_back(Eigen::MatrixXd::Zero(rows, 1));
    adam_v_.emplace_back(Eigen::MatrixXd::Zero(rows, 1));
}

Eigen::MatrixXd& ParamStore::tensor(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter tensor: " + name);
    return values_[it->second];
}

const Eigen::MatrixXd& ParamStore::tensor(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter tensor: " + name);
    return values_[it->second];
}

void ParamStore::check_finite() const {
    for (int i = 0; i < count(); ++i) {
        if (!values_[i].allFinite()) throw NumericFault("parameter tensor " + names_[i]);
    }
}

ParamLeaves::ParamLeaves(Tape& tape, const ParamStore& store) : store_(&store) {
    leaves_.reserve(store.count());
    for (int i = 0; i < store.count(); ++i) leaves_.push_back(tape.leaf(store.tensor(i)));
}

Var ParamLeaves::operator[](const std::string& name) const {
    for (int i = 0; i < store_->count(); ++i) {
        if (store_->name(i) == name) return leaves_[i];
    }
    throw ContractError("unknown parameter tensor: " + name);
}

AdamOptimizer::Result AdamOptimizer::step(ParamStore& store,
                                          const std::vector<Eigen::MatrixXd>& grads) const {
    if (static_cast<int>(grads.size()) != store.count()) {
        throw ContractError("gradient list does not match the parameter store");
    }
    Result res;
    double sq = 0.0;
    for (const Eigen::MatrixXd& g : grads) sq += g.squaredNorm();
    res.grad_norm = std::sqrt(sq);
    if (!std::isfinite(res.grad_norm)) {
        res.skipped = true;
        return res;
    }
    double rescale = 1.0;
    if (clip_norm_ > 0.0 && res.grad_norm > clip_norm_) rescale = clip_norm_ / res.grad_norm;

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    store.adam_step_ += 1;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(store.adam_step_));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(store.adam_step_));
    for (int i = 0; i < store.count(); ++i) {
        const Eigen::MatrixXd g = rescale * grads[i];
        store.adam_m_[i] = b1 * store.adam_m_[i] + (1.0 - b1) * g;
        store.adam_v_[i] = b2 * store.adam_v_[i] + (1.0 - b2) * g.cwiseProduct(g);
        store.values_[i].array() -= lr_ * (store.adam_m_[i].array() / corr1) /
                                    ((store.adam_v_[i].array() / corr2).sqrt() + eps);
    }
    return res;
}

// ---- building blocks ----

void GruCell::register_params(ParamStore& store, Rng& rng) const {
    store.add_matrix(prefix + "/Wz", hidden, in, rng);
    store.add_matrix(prefix + "/Uz", hidden, hidden, rng);
    store.add_bias(prefix + "/bz", hidden, 1.0); // bias the update gate toward carrying state
    store.add_matrix(prefix + "/Wr", hidden, in, rng);
    store.add_matrix(prefix + "/Ur", hidden, hidden, rng);
    store.add_bias(prefix + "/br", hidden);
    store.add_matrix(prefix + "/Wn", hidden, in, rng);
    store.add_matrix(prefix + "/Un", hidden, hidden, rng);
    store.add_bias(prefix + "/bn", hidden);
}

Var GruCell::step(const ParamLeaves& p, Var x, Var h) const {
    Var z = sigmoid_op(add_bias(add(matmul(p[prefix + "/Wz"], x), matmul(p[prefix + "/Uz"], h)),
                                p[prefix + "/bz"]));
    Var r = sigmoid_op(add_bias(add(matmul(p[prefix + "/Wr"], x), matmul(p[prefix + "/Ur"], h)),
                                p[prefix + "/br"]));
    Var n = tanh_op(add_bias(
        add(matmul(p[prefix + "/Wn"], x), cmul(r, matmul(p[prefix + "/Un"], h))),
        p[prefix + "/bn"]));
    return add(cmul(z, h), cmul(add_scalar(neg(z), 1.0), n));
}

Eigen::VectorXd GruCell::step_plain(const ParamStore& s, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& h) const {
    const auto sig = [](const Eigen::ArrayXd& a) { return 1.0 / (1.0 + (-a).exp()); };
    const Eigen::ArrayXd z =
        sig((s.tensor(prefix + "/Wz") * x + s.tensor(prefix + "/Uz") * h +
             s.tensor(prefix + "/bz"))
                .array());
    const Eigen::ArrayXd r =
        sig((s.tensor(prefix + "/Wr") * x + s.tensor(prefix + "/Ur") * h +
             s.tensor(prefix + "/br"))
                .array());
    const Eigen::ArrayXd n =
        ((s.tensor(prefix + "/Wn") * x).array() +
         r * (s.tensor(prefix + "/Un") * h).array() +
         s.tensor(prefix + "/bn").array())
            .tanh();
    return (z * h.array() + (1.0 - z) * n).matrix();
}

void Mlp::register_params(ParamStore& store, Rng& rng) const {
    store.add_matrix(prefix + "/W1", hidden, in, rng);
    store.add_bias(prefix + "/b1", hidden);
    store.add_matrix(prefix + "/W2", out, hidden, rng);
    store.add_bias(prefix + "/b2", out);
}

Var Mlp::run(const ParamLeaves& p, Var x) const {
    Var h = tanh_op(add_bias(matmul(p[prefix + "/W1"], x), p[prefix + "/b1"]));
    return add_bias(matmul(p[prefix + "/W2"], h), p[prefix + "/b2"]);
}

Eigen::VectorXd Mlp::run_plain(const ParamStore& s, const Eigen::VectorXd& x) const {
    const Eigen::VectorXd h =
        ((s.tensor(prefix + "/W1") * x + s.tensor(prefix + "/b1")).array().tanh()).matrix();
    return s.tensor(prefix + "/W2") * h + s.tensor(prefix + "/b2");
}

} // namespace anim::nn
