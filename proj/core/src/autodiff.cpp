#include "paradiff/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace paradiff::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::has_grad() const { return tape_->has_grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) {
    // A leaf with a no-op backward so its gradient is retained.
    return push(std::move(value), true, [](Tape&, int) {});
}

Var Tape::parameter(const Matrix& value, Matrix* sink) {
    if (sink == nullptr) return constant(value);
    return push(value, true, [sink](Tape& t, int self) { *sink += t.grad(self); });
}

void Tape::backward(Var loss, double seed) {
    if (loss.tape() != this) throw std::invalid_argument("backward: variable from another tape");
    if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
    if (!nodes_[loss.id()].requires_grad) return;
    accumulate(loss.id(), Matrix::Constant(1, 1, seed));
    for (int i = loss.id(); i >= 0; --i) {
        auto& n = nodes_[i];
        if (n.backward && n.grad.size() > 0) n.backward(*this, i);
    }
}

namespace {

void check_same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) throw std::invalid_argument("autodiff: variables on different tapes");
}

void check_shape(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("autodiff shape mismatch: ") + what);
}

bool any_grad(Var a) { return a.requires_grad(); }
bool any_grad(Var a, Var b) { return a.requires_grad() || b.requires_grad(); }

}  // namespace

Var matmul(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.cols() == b.rows(), "matmul");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() * b.value(), any_grad(a, b), [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
        if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
    });
}

Var matmul_nt(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.cols() == b.cols(), "matmul_nt");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() * b.value().transpose(), any_grad(a, b), [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
        if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
    });
}

Var matmul_tn(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.rows() == b.rows(), "matmul_tn");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value().transpose() * b.value(), any_grad(a, b), [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) t.accumulate(ia, t.value(ib) * g.transpose());
        if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia) * g);
    });
}

Var add(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, t.grad(self));
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& t, int self) {
        t.accumulate(ia, t.grad(self));
        if (t.requires_grad(ib)) t.accumulate(ib, -t.grad(self));
    });
}

Var mul(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul");
    const int ia = a.id(), ib = b.id();
    return a.tape()->push(a.value().cwiseProduct(b.value()), any_grad(a, b), [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
    });
}

Var add_row(Var a, Var row) {
    check_same_tape(a, row);
    check_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row");
    const int ia = a.id(), ir = row.id();
    Matrix out = a.value().rowwise() + row.value().row(0);
    return a.tape()->push(std::move(out), any_grad(a, row), [ia, ir](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        t.accumulate(ia, g);
        if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
    });
}

Var scale(Var a, double s) {
    const int ia = a.id();
    return a.tape()->push(a.value() * s, any_grad(a), [ia, s](Tape& t, int self) {
        t.accumulate(ia, t.grad(self) * s);
    });
}

Var add_scalar(Var a, double s) {
    const int ia = a.id();
    return a.tape()->push(a.value().array() + s, any_grad(a), [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self));
    });
}

Var sum(Var a) {
    const int ia = a.id();
    return a.tape()->push(Matrix::Constant(1, 1, a.value().sum()), any_grad(a), [ia](Tape& t, int self) {
        const double g = t.grad(self)(0, 0);
        const Matrix& v = t.value(ia);
        t.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), g));
    });
}

Var log(Var a) {
    const int ia = a.id();
    return a.tape()->push(a.value().array().log().matrix(), any_grad(a), [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
    });
}

Var exp(Var a) {
    const int ia = a.id();
    return a.tape()->push(a.value().array().exp().matrix(), any_grad(a), [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var a) {
    const int ia = a.id();
    Matrix out = a.value().unaryExpr([](double x) {
        return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    });
    return a.tape()->push(std::move(out), any_grad(a), [ia](Tape& t, int self) {
        Matrix d = t.value(ia).unaryExpr([](double x) {
            const double u = kGeluC * (x + kGeluA * x * x * x);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
        t.accumulate(ia, t.grad(self).cwiseProduct(d));
    });
}

Var softmax_rows(Var a) {
    const int ia = a.id();
    const Matrix& v = a.value();
    Matrix out(v.rows(), v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double m = v.row(r).maxCoeff();
        out.row(r) = (v.row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return a.tape()->push(std::move(out), any_grad(a), [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        const Vector dot = g.cwiseProduct(y).rowwise().sum();
        Matrix d = y.cwiseProduct(g.colwise() - dot);
        t.accumulate(ia, d);
    });
}

Var log_softmax_rows(Var a) {
    const int ia = a.id();
    const Matrix& v = a.value();
    Matrix out(v.rows(), v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double m = v.row(r).maxCoeff();
        const double lse = m + std::log((v.row(r).array() - m).exp().sum());
        out.row(r) = v.row(r).array() - lse;
    }
    return a.tape()->push(std::move(out), any_grad(a), [ia](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        const Vector gs = g.rowwise().sum();
        Matrix p = y.array().exp().matrix();
        Matrix d = g - (p.array().colwise() * gs.array()).matrix();
        t.accumulate(ia, d);
    });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    check_same_tape(x, gamma);
    check_same_tape(x, beta);
    check_shape(gamma.rows() == 1 && gamma.cols() == x.cols(), "layer_norm gamma");
    check_shape(beta.rows() == 1 && beta.cols() == x.cols(), "layer_norm beta");
    const Matrix& v = x.value();
    const Eigen::Index n = v.rows(), c = v.cols();
    Matrix xhat(n, c);
    Vector inv_std(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const double mean = v.row(r).mean();
        const double var = (v.row(r).array() - mean).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (v.row(r).array() - mean) * inv_std(r);
    }
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    const int ix = x.id(), ig = gamma.id(), ib = beta.id();
    const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    return x.tape()->push(std::move(out), rg,
                          [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
                              const Matrix& g = t.grad(self);
                              if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                              if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                              if (t.requires_grad(ix)) {
                                  const auto c = static_cast<double>(g.cols());
                                  Matrix gx = g.array().rowwise() * t.value(ig).row(0).array();
                                  Matrix dx(g.rows(), g.cols());
                                  for (Eigen::Index r = 0; r < g.rows(); ++r) {
                                      const double m1 = gx.row(r).sum();
                                      const double m2 = gx.row(r).dot(xhat.row(r));
                                      dx.row(r) = (inv_std(r) / c) *
                                                  (c * gx.row(r).array() - m1 - xhat.row(r).array() * m2);
                                  }
                                  t.accumulate(ix, dx);
                              }
                          });
}

Var l2_normalize_rows(Var a, double eps) {
    const int ia = a.id();
    const Matrix& v = a.value();
    Vector norms = v.rowwise().norm().array().max(eps);
    Matrix out = v.array().colwise() / norms.array();
    return a.tape()->push(std::move(out), any_grad(a), [ia, norms = std::move(norms)](Tape& t, int self) {
        const Matrix& y = t.value(self);
        const Matrix& g = t.grad(self);
        const Vector dot = g.cwiseProduct(y).rowwise().sum();
        Matrix d = (g - (y.array().colwise() * dot.array()).matrix()).array().colwise() / norms.array();
        t.accumulate(ia, d);
    });
}

Var weighted_mean_rows(Var x, Var w) {
    check_same_tape(x, w);
    check_shape(w.cols() == 1 && w.rows() == x.rows(), "weighted_mean_rows");
    const double total = w.value().sum();
    if (!(total > 0.0)) throw std::domain_error("weighted_mean_rows: weights sum to zero");
    Matrix out = (w.value().transpose() * x.value()) / total;
    const int ix = x.id(), iw = w.id();
    return x.tape()->push(std::move(out), any_grad(x, w), [ix, iw, total](Tape& t, int self) {
        const Matrix& g = t.grad(self);  // 1 x C
        if (t.requires_grad(ix)) t.accumulate(ix, t.value(iw) * g / total);
        if (t.requires_grad(iw)) {
            // d/dw_i = (x_i - out) . g / total
            Matrix centered = t.value(ix).rowwise() - t.value(self).row(0);
            t.accumulate(iw, centered * g.transpose() / total);
        }
    });
}

Var gather_rows(Var table, std::span<const int> ids) {
    const Matrix& v = table.value();
    Matrix out(static_cast<Eigen::Index>(ids.size()), v.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v.rows()) throw std::out_of_range("gather_rows: id out of range");
        out.row(static_cast<Eigen::Index>(i)) = v.row(ids[i]);
    }
    const int it = table.id();
    std::vector<int> idx(ids.begin(), ids.end());
    return table.tape()->push(std::move(out), any_grad(table), [it, idx = std::move(idx)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix d = Matrix::Zero(t.value(it).rows(), t.value(it).cols());
        for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        t.accumulate(it, d);
    });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    check_shape(start >= 0 && count >= 0 && start + count <= a.rows(), "slice_rows");
    const int ia = a.id();
    return a.tape()->push(a.value().middleRows(start, count), any_grad(a), [ia, start, count](Tape& t, int self) {
        Matrix d = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
        d.middleRows(start, count) = t.grad(self);
        t.accumulate(ia, d);
    });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    check_shape(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols");
    const int ia = a.id();
    return a.tape()->push(a.value().middleCols(start, count), any_grad(a), [ia, start, count](Tape& t, int self) {
        Matrix d = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
        d.middleCols(start, count) = t.grad(self);
        t.accumulate(ia, d);
    });
}

Var concat_rows(Var a, Var b) {
    const Var parts[2] = {a, b};
    return concat_rows(std::span<const Var>(parts, 2));
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts[0].cols();
    bool rg = false;
    for (const auto& p : parts) {
        check_same_tape(parts[0], p);
        check_shape(p.cols() == cols, "concat_rows");
        rows += p.rows();
        rg = rg || p.requires_grad();
    }
    Matrix out(rows, cols);
    std::vector<std::pair<int, Eigen::Index>> spans;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        spans.emplace_back(p.id(), at);
        at += p.rows();
    }
    return parts[0].tape()->push(std::move(out), rg, [spans = std::move(spans)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (const auto& [id, start] : spans) {
            if (t.requires_grad(id)) t.accumulate(id, g.middleRows(start, t.value(id).rows()));
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts[0].rows();
    bool rg = false;
    for (const auto& p : parts) {
        check_same_tape(parts[0], p);
        check_shape(p.rows() == rows, "concat_cols");
        cols += p.cols();
        rg = rg || p.requires_grad();
    }
    Matrix out(rows, cols);
    std::vector<std::pair<int, Eigen::Index>> spans;
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        spans.emplace_back(p.id(), at);
        at += p.cols();
    }
    return parts[0].tape()->push(std::move(out), rg, [spans = std::move(spans)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        for (const auto& [id, start] : spans) {
            if (t.requires_grad(id)) t.accumulate(id, g.middleCols(start, t.value(id).cols()));
        }
    });
}

Var element(Var a, Eigen::Index r, Eigen::Index c) {
    check_shape(r >= 0 && r < a.rows() && c >= 0 && c < a.cols(), "element");
    const int ia = a.id();
    return a.tape()->push(Matrix::Constant(1, 1, a.value()(r, c)), any_grad(a), [ia, r, c](Tape& t, int self) {
        Matrix d = Matrix::Zero(t.value(ia).rows(), t.value(ia).cols());
        d(r, c) = t.grad(self)(0, 0);
        t.accumulate(ia, d);
    });
}

Var transpose(Var a) {
    const int ia = a.id();
    return a.tape()->push(a.value().transpose(), any_grad(a), [ia](Tape& t, int self) {
        t.accumulate(ia, t.grad(self).transpose());
    });
}

Var nll_rows(Var log_probs, std::span<const int> targets, std::span<const double> mask) {
    const Matrix& lp = log_probs.value();
    check_shape(static_cast<Eigen::Index>(targets.size()) == lp.rows() &&
                    static_cast<Eigen::Index>(mask.size()) == lp.rows(),
                "nll_rows");
    double total = 0.0;
    for (Eigen::Index r = 0; r < lp.rows(); ++r) {
        if (mask[r] == 0.0) continue;
        if (targets[r] < 0 || targets[r] >= lp.cols()) throw std::out_of_range("nll_rows: target out of range");
        total -= mask[r] * lp(r, targets[r]);
    }
    const int il = log_probs.id();
    std::vector<int> tg(targets.begin(), targets.end());
    std::vector<double> mk(mask.begin(), mask.end());
    return log_probs.tape()->push(Matrix::Constant(1, 1, total), any_grad(log_probs),
                                  [il, tg = std::move(tg), mk = std::move(mk)](Tape& t, int self) {
                                      const double g = t.grad(self)(0, 0);
                                      Matrix d = Matrix::Zero(t.value(il).rows(), t.value(il).cols());
                                      for (std::size_t r = 0; r < tg.size(); ++r) {
                                          if (mk[r] != 0.0) d(static_cast<Eigen::Index>(r), tg[r]) = -g * mk[r];
                                      }
                                      t.accumulate(il, d);
                                  });
}

}  // namespace paradiff::ad
