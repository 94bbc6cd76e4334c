#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major-style
// matrices. A Tape records every operation; backward() replays them in
// reverse. Nodes that do not depend on any gradient-requiring input record
// no closure, so no-grad forward passes stay cheap.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <vector>

namespace paradiff::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

class Tape;

class Var {
public:
    Var() = default;

    const Matrix& value() const;
    const Matrix& grad() const;
    bool has_grad() const;
    bool requires_grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }

    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, int self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    // Leaf whose gradient is kept on the tape (read back via Var::grad()).
    Var variable(Matrix value);
    // Leaf whose gradient is added into *sink on backward(). A null sink
    // makes the parameter a constant.
    Var parameter(const Matrix& value, Matrix* sink);

    // Seeds d(loss)/d(loss) = seed. loss must be 1x1.
    void backward(Var loss, double seed = 1.0);

    std::size_t size() const { return nodes_.size(); }

    // Used by op implementations.
    Var push(Matrix value, bool requires_grad, Backward backward);
    const Matrix& value(int id) const { return nodes_[id].value; }
    const Matrix& grad(int id) const { return nodes_[id].grad; }
    bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    template <typename Derived>
    void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
        auto& n = nodes_[id];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
    };
    std::vector<Node> nodes_;
};

// Arithmetic
Var matmul(Var a, Var b);        // a * b
Var matmul_nt(Var a, Var b);     // a * b^T
Var matmul_tn(Var a, Var b);     // a^T * b
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);           // elementwise
Var add_row(Var a, Var row);     // broadcast a 1xC row over every row of a
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sum(Var a);                  // 1x1
Var log(Var a);
Var exp(Var a);
Var gelu(Var a);                 // tanh approximation

// Row-wise reductions / normalizations
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var l2_normalize_rows(Var a, double eps = 1e-12);
// (w^T x) / sum(w) for a column of weights w (N x 1) and x (N x C).
Var weighted_mean_rows(Var x, Var w);

// Indexing and shape
Var gather_rows(Var table, std::span<const int> ids);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_rows(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var element(Var a, Eigen::Index r, Eigen::Index c);  // 1x1
Var transpose(Var a);

// Sum over rows i with mask[i] != 0 of -logp(i, targets[i]).
Var nll_rows(Var log_probs, std::span<const int> targets, std::span<const double> mask);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }

}  // namespace paradiff::ad
