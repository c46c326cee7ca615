#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "anim/errors.hpp"
#include "anim/mathutil.hpp"

namespace anim::nn {

// Reverse-mode automatic differentiation over Eigen matrices. Values are
// double precision; columns act as the batch dimension. Nodes live on a Tape
// arena and are created in topological order, so a single reverse sweep over
// creation order backpropagates correctly.

class Tape;

struct Node {
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    bool requires_grad = false;
    std::function<void(Node&)> backward; // scatters this->grad into parents
};

// Lightweight handle; valid as long as its Tape is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

    const Eigen::MatrixXd& value() const { return node_->value; }
    const Eigen::MatrixXd& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    Tape* tape() const { return tape_; }
    Node* node() const { return node_; }

private:
    Tape* tape_ = nullptr;
    Node* node_ = nullptr;
};

class Tape {
public:
    Var leaf(const Eigen::MatrixXd& v) { return make(v, true); }
    Var constant(const Eigen::MatrixXd& v) { return make(v, false); }

    // Seeds d(root)/d(root) = 1 (root must be 1x1) and sweeps backwards.
    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }

    Var make(const Eigen::MatrixXd& v, bool requires_grad) {
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.value = v;
        n.grad = Eigen::MatrixXd::Zero(v.rows(), v.cols());
        n.requires_grad = requires_grad;
        return Var(this, &n);
    }

private:
    std::deque<Node> nodes_; // deque: stable node addresses
};

// ---- ops ----

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);           // Hadamard product
Var cdiv(Var a, Var b);           // elementwise a / b
Var add_bias(Var m, Var bias);    // bias is a column vector broadcast over columns
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var tanh_op(Var a);
Var sigmoid_op(Var a);
Var softplus_op(Var a);           // log(1 + e^x), numerically stable
Var square_op(Var a);
Var log_op(Var a);
Var vcat(Var a, Var b);           // stack rows
Var vcat(Var a, Var b, Var c);
Var rows(Var a, int first, int count);
Var sum_all(Var a);               // 1x1
Var weighted_sum(Var a, const Eigen::MatrixXd& w); // 1x1, sum of a .* w
Var huber_op(Var residual, double delta);
// Per-column unit normalization of a 3-row block with a smoothing epsilon
// under the square root (keeps the zero-vector gradient finite).
Var normalize_columns(Var a, double eps = 1e-12);

// ---- parameters ----

// Ordered, named collection of parameter tensors plus Adam moments.
class ParamStore {
public:
    // Glorot-uniform init for matrices, zeros for vectors tagged as biases.
    void add_matrix(const std::string& name, int rows, int cols, Rng& rng);
    void add_bias(const std::string& name, int rows, double fill = 0.0);

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Eigen::MatrixXd& tensor(const std::string& name);
    const Eigen::MatrixXd& tensor(const std::string& name) const;

    int count() const { return static_cast<int>(names_.size()); }
    const std::string& name(int i) const { return names_[i]; }
    Eigen::MatrixXd& tensor(int i) { return values_[i]; }
    const Eigen::MatrixXd& tensor(int i) const { return values_[i]; }

    void check_finite() const; // throws NumericFault naming the tensor

private:
    friend class AdamOptimizer;
    std::vector<std::string> names_;
    std::vector<Eigen::MatrixXd> values_;
    std::map<std::string, int> index_;
    std::vector<Eigen::MatrixXd> adam_m_, adam_v_;
    long adam_step_ = 0;
};

// Per-graph view of the parameter store: every tensor becomes a leaf.
class ParamLeaves {
public:
    ParamLeaves(Tape& tape, const ParamStore& store);
    Var operator[](const std::string& name) const;
    // Gradient of tensor i accumulated by the last backward sweep.
    const Eigen::MatrixXd& grad(int i) const { return leaves_[i].grad(); }
    int count() const { return static_cast<int>(leaves_.size()); }

private:
    const ParamStore* store_;
    std::vector<Var> leaves_;
};

// Adaptive-moment optimizer. Update contract, per tensor entry g:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// with b1 = 0.9, b2 = 0.999, eps = 1e-8. Gradients are jointly rescaled
// beforehand when their global norm exceeds clip_norm.
class AdamOptimizer {
public:
    struct Result {
        double grad_norm = 0.0; // pre-clip global norm
        bool skipped = false;   // non-finite gradient, parameters untouched
    };

    explicit AdamOptimizer(double lr, double clip_norm = 0.0)
        : lr_(lr), clip_norm_(clip_norm) {}

    Result step(ParamStore& store, const std::vector<Eigen::MatrixXd>& grads) const;

    double learning_rate() const { return lr_; }

private:
    double lr_;
    double clip_norm_;
};

// ---- network building blocks ----

// Gated recurrent cell:
//   z = sigmoid(Wz x + Uz h + bz)
//   r = sigmoid(Wr x + Ur h + br)
//   n = tanh(Wn x + r .* (Un h) + bn)
//   h' = z .* h + (1 - z) .* n
// Outputs stay in (-1, 1) whenever the initial state does.
struct GruCell {
    std::string prefix;
    int in = 0, hidden = 0;

    void register_params(ParamStore& store, Rng& rng) const;
    Var step(const ParamLeaves& p, Var x, Var h) const;
    Eigen::VectorXd step_plain(const ParamStore& store, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& h) const;
};

// linear -> tanh -> linear
struct Mlp {
    std::string prefix;
    int in = 0, hidden = 0, out = 0;

    void register_params(ParamStore& store, Rng& rng) const;
    Var run(const ParamLeaves& p, Var x) const;
    Eigen::VectorXd run_plain(const ParamStore& store, const Eigen::VectorXd& x) const;
};

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

} // namespace anim::nn
