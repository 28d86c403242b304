#include "mpisentinel/autodiff.hpp"

#include <cmath>
#include <limits>

#include "mpisentinel/error.hpp"

namespace mpisentinel::ad {

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}});
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}});
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Matrix value, const std::vector<Var>& parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || requires_grad(p.id);
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
    return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Matrix& Tape::grad_accumulator(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.rows() != 1 || loss.cols() != 1) throw Error("ShapeMismatch", "backward needs a 1x1 loss");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    grad_accumulator(loss.id).setOnes();
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
}

namespace {

void check(bool ok, const char* what) {
    if (!ok) throw Error("ShapeMismatch", what);
}

// Adds `g` into the gradient of `v` when it takes one.
template <typename Expr>
void accumulate(Tape& t, Var v, const Expr& g) {
    if (t.requires_grad(v.id)) t.grad_accumulator(v.id) += g;
}

}  // namespace

Var matmul(Var a, Var b) {
    check(a.cols() == b.rows(), "matmul inner dimensions");
    return a.tape->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(a.id)) t.grad_accumulator(a.id).noalias() += g * b.value().transpose();
        if (t.requires_grad(b.id)) t.grad_accumulator(b.id).noalias() += a.value().transpose() * g;
    });
}

Var add(Var a, Var b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "add shapes");
    return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
        accumulate(t, a, t.grad(self));
        accumulate(t, b, t.grad(self));
    });
}

Var add_row(Var a, Var b) {
    check(b.rows() == 1 && b.cols() == a.cols(), "add_row shapes");
    Matrix v = a.value();
    v.rowwise() += b.value().row(0);
    return a.tape->record(std::move(v), {a, b}, [a, b](Tape& t, int self) {
        accumulate(t, a, t.grad(self));
        accumulate(t, b, t.grad(self).colwise().sum());
    });
}

Var gather_rows(Var a, const Index& idx) {
    Matrix v(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        check(idx[k] >= 0 && idx[k] < a.rows(), "gather index out of range");
        v.row(static_cast<Eigen::Index>(k)) = a.value().row(idx[k]);
    }
    return a.tape->record(std::move(v), {a}, [a, idx](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_accumulator(a.id);
        for (std::size_t k = 0; k < idx.size(); ++k) ga.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
    });
}

Var scatter_add_rows(Var a, const Index& idx, Eigen::Index rows) {
    check(static_cast<Eigen::Index>(idx.size()) == a.rows(), "scatter index count");
    Matrix v = Matrix::Zero(rows, a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        check(idx[k] >= 0 && idx[k] < rows, "scatter index out of range");
        v.row(idx[k]) += a.value().row(static_cast<Eigen::Index>(k));
    }
    return a.tape->record(std::move(v), {a}, [a, idx](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_accumulator(a.id);
        for (std::size_t k = 0; k < idx.size(); ++k) ga.row(static_cast<Eigen::Index>(k)) += g.row(idx[k]);
    });
}

Var leaky_relu(Var a, double slope) {
    Matrix v = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
    return a.tape->record(std::move(v), {a}, [a, slope](Tape& t, int self) {
        t.grad_accumulator(a.id).array() +=
            t.grad(self).array() * a.value().array().unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    });
}

Var elu(Var a) {
    Matrix v = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
    return a.tape->record(std::move(v), {a}, [a](Tape& t, int self) {
        t.grad_accumulator(a.id).array() +=
            t.grad(self).array() * a.value().array().unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
    });
}

Var relu(Var a) {
    Matrix v = a.value().cwiseMax(0.0);
    return a.tape->record(std::move(v), {a}, [a](Tape& t, int self) {
        t.grad_accumulator(a.id).array() +=
            t.grad(self).array() * (a.value().array() > 0.0).cast<double>();
    });
}

Var segment_softmax(Var scores, const Index& seg, Eigen::Index segments) {
    check(scores.cols() == 1 && static_cast<Eigen::Index>(seg.size()) == scores.rows(), "segment_softmax shapes");
    const Matrix& s = scores.value();
    Eigen::VectorXd mx = Eigen::VectorXd::Constant(segments, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < seg.size(); ++k) {
        check(seg[k] >= 0 && seg[k] < segments, "segment index out of range");
        mx[seg[k]] = std::max(mx[seg[k]], s(static_cast<Eigen::Index>(k), 0));
    }
    Matrix v(s.rows(), 1);
    Eigen::VectorXd denom = Eigen::VectorXd::Zero(segments);
    for (std::size_t k = 0; k < seg.size(); ++k) {
        v(static_cast<Eigen::Index>(k), 0) = std::exp(s(static_cast<Eigen::Index>(k), 0) - mx[seg[k]]);
        denom[seg[k]] += v(static_cast<Eigen::Index>(k), 0);
    }
    for (std::size_t k = 0; k < seg.size(); ++k) v(static_cast<Eigen::Index>(k), 0) /= denom[seg[k]];
    return scores.tape->record(std::move(v), {scores}, [scores, seg, segments](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& alpha = t.value(self);
        Eigen::VectorXd dot = Eigen::VectorXd::Zero(segments);
        for (std::size_t k = 0; k < seg.size(); ++k)
            dot[seg[k]] += alpha(static_cast<Eigen::Index>(k), 0) * g(static_cast<Eigen::Index>(k), 0);
        Matrix& gs = t.grad_accumulator(scores.id);
        for (std::size_t k = 0; k < seg.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(k);
            gs(r, 0) += alpha(r, 0) * (g(r, 0) - dot[seg[k]]);
        }
    });
}

Var scale_rows(Var a, Var s) {
    check(s.cols() == 1 && s.rows() == a.rows(), "scale_rows shapes");
    Matrix v = a.value().array().colwise() * s.value().col(0).array();
    return a.tape->record(std::move(v), {a, s}, [a, s](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(a.id))
            t.grad_accumulator(a.id).array() += g.array().colwise() * s.value().col(0).array();
        if (t.requires_grad(s.id))
            t.grad_accumulator(s.id).col(0) += (g.array() * a.value().array()).rowwise().sum().matrix();
    });
}

Var vstack(const std::vector<Var>& parts) {
    check(!parts.empty(), "vstack of nothing");
    Eigen::Index rows = 0;
    for (const Var& p : parts) {
        check(p.cols() == parts.front().cols(), "vstack column counts");
        rows += p.rows();
    }
    Matrix v(rows, parts.front().cols());
    Eigen::Index r = 0;
    for (const Var& p : parts) {
        v.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return parts.front().tape->record(std::move(v), parts, [parts](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Eigen::Index offset = 0;
        for (const Var& p : parts) {
            accumulate(t, p, g.middleRows(offset, p.rows()));
            offset += p.rows();
        }
    });
}

Var segment_max_rows(Var a, const Index& seg, Eigen::Index segments) {
    check(static_cast<Eigen::Index>(seg.size()) == a.rows(), "segment_max_rows index count");
    const Matrix& x = a.value();
    Matrix v(segments, x.cols());
    Eigen::MatrixXi arg = Eigen::MatrixXi::Constant(segments, x.cols(), -1);
    for (std::size_t k = 0; k < seg.size(); ++k) {
        check(seg[k] >= 0 && seg[k] < segments, "segment index out of range");
        const auto r = static_cast<Eigen::Index>(k);
        for (Eigen::Index c = 0; c < x.cols(); ++c)
            if (arg(seg[k], c) < 0 || x(r, c) > v(seg[k], c)) {
                v(seg[k], c) = x(r, c);
                arg(seg[k], c) = static_cast<int>(k);
            }
    }
    for (Eigen::Index s = 0; s < segments; ++s)
        if (x.cols() > 0 && arg(s, 0) < 0) throw Error("EmptyGraph", "max pooling over a graph without nodes");
    return a.tape->record(std::move(v), {a}, [a, arg](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& ga = t.grad_accumulator(a.id);
        for (Eigen::Index s = 0; s < arg.rows(); ++s)
            for (Eigen::Index c = 0; c < arg.cols(); ++c) ga(arg(s, c), c) += g(s, c);
    });
}

Var cross_entropy(Var logits, const Index& targets) {
    check(static_cast<Eigen::Index>(targets.size()) == logits.rows(), "cross_entropy target count");
    const Matrix& z = logits.value();
    Matrix probs(z.rows(), z.cols());
    Matrix v(z.rows(), 1);
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const int target = targets[static_cast<std::size_t>(r)];
        if (target < 0 || target >= z.cols()) throw Error("ClassOutOfRange", "target class outside the logits");
        const double mx = z.row(r).maxCoeff();
        probs.row(r) = (z.row(r).array() - mx).exp().matrix();
        const double total = probs.row(r).sum();
        probs.row(r) /= total;
        v(r, 0) = std::log(total) + mx - z(r, target);
    }
    return logits.tape->record(std::move(v), {logits}, [logits, targets, probs](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix d = probs;
        for (Eigen::Index r = 0; r < d.rows(); ++r) {
            d(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
            d.row(r) *= g(r, 0);
        }
        t.grad_accumulator(logits.id) += d;
    });
}

Var sum(Var a) {
    return a.tape->record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& t, int self) {
        t.grad_accumulator(a.id).array() += t.grad(self)(0, 0);
    });
}

Var mean(Var a) {
    check(a.value().size() > 0, "mean of an empty matrix");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var scale(Var a, double factor) {
    return a.tape->record(a.value() * factor, {a}, [a, factor](Tape& t, int self) {
        t.grad_accumulator(a.id) += factor * t.grad(self);
    });
}

}  // namespace mpisentinel::ad
