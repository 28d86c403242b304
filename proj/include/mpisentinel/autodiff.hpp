#pragma once

// Minimal tape-based reverse-mode automatic differentiation over dense
// matrices. Rows are items (nodes, edges, graphs), columns are features.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace mpisentinel::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Matrix& value() const;
    /// Gradient after Tape::backward; empty when the value got no gradient.
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

class Tape {
public:
    /// Leaf that receives no gradient.
    Var constant(Matrix value);
    /// Leaf whose gradient is accumulated by backward().
    Var parameter(Matrix value);

    using Backward = std::function<void(Tape&, int self)>;
    /// Records an op result; `backward` is called only when some parent
    /// requires a gradient.
    Var record(Matrix value, const std::vector<Var>& parents, Backward backward);

    /// Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates.
    void backward(Var loss);

    const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    /// Zero-initialized on first access.
    Matrix& grad_accumulator(int id);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backward backward;
    };
    std::vector<Node> nodes_;
};

using Index = std::vector<int>;

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Adds the 1 x n row `b` to every row of `a`.
Var add_row(Var a, Var b);
/// out.row(k) = a.row(idx[k]).
Var gather_rows(Var a, const Index& idx);
/// out has `rows` rows; out.row(idx[k]) += a.row(k).
Var scatter_add_rows(Var a, const Index& idx, Eigen::Index rows);
Var leaky_relu(Var a, double slope);
Var elu(Var a);
Var relu(Var a);
/// Softmax of the column vector `scores` within each segment seg[k].
Var segment_softmax(Var scores, const Index& seg, Eigen::Index segments);
/// out.row(k) = a.row(k) * s(k, 0).
Var scale_rows(Var a, Var s);
/// Row-wise concatenation; all parts share a column count.
Var vstack(const std::vector<Var>& parts);
/// Column-wise maximum of the rows in each segment; every segment must be
/// non-empty. The gradient goes to the first maximal row.
Var segment_max_rows(Var a, const Index& seg, Eigen::Index segments);
/// Per-row -log softmax(logits)[target] as a column vector.
Var cross_entropy(Var logits, const Index& targets);
Var sum(Var a);
Var mean(Var a);
Var scale(Var a, double factor);

}  // namespace mpisentinel::ad
