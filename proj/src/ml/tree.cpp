#include <algorithm>
#include <numeric>

#include "mpisentinel/error.hpp"
#include "mpisentinel/ml.hpp"

namespace mpisentinel::ml {

void LabeledVectors::validate() const {
    if (y.empty()) throw Error("EmptyDataset", "no rows");
    if (label_space.empty()) throw Error("EmptyDataset", "empty label space");
    if (static_cast<std::size_t>(X.rows()) != y.size())
        throw Error("InvalidConfig", "row count differs from label count");
    if (!ids.empty() && ids.size() != y.size()) throw Error("InvalidConfig", "row count differs from id count");
    for (int label : y)
        if (label < 0 || static_cast<std::size_t>(label) >= label_space.size())
            throw Error("InvalidConfig", "label index outside the label space");
}

LabeledVectors LabeledVectors::select_columns(const std::vector<int>& columns) const {
    LabeledVectors out{Eigen::MatrixXd(X.rows(), static_cast<Eigen::Index>(columns.size())), y, label_space, ids};
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c] < 0 || columns[c] >= X.cols()) throw Error("WidthMismatch", "column index out of range");
        out.X.col(static_cast<Eigen::Index>(c)) = X.col(columns[c]);
    }
    return out;
}

LabeledVectors LabeledVectors::select_rows(const std::vector<std::size_t>& rows) const {
    LabeledVectors out{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), X.cols()), {}, label_space, {}};
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.X.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(rows[r]));
        out.y.push_back(y[rows[r]]);
        if (!ids.empty()) out.ids.push_back(ids[rows[r]]);
    }
    return out;
}

namespace {

// Split quality sum_L(n_k^2)/n_L + sum_R(n_k^2)/n_R as an exact fraction;
// larger means lower weighted Gini impurity.
struct Quality {
    __int128 num = 0;
    __int128 den = 1;

    bool better_than(const Quality& o) const { return num * o.den > o.num * den; }
};

class Builder {
public:
    Builder(const LabeledVectors& d, DecisionTree& t) : data_(d), tree_(t), classes_(d.label_space.size()) {}

    int grow(std::vector<std::size_t> rows) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        std::vector<int> counts(classes_, 0);
        for (std::size_t r : rows) ++counts[static_cast<std::size_t>(data_.y[r])];
        // Earliest label wins ties.
        const int label = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
        const bool pure = counts[static_cast<std::size_t>(label)] == static_cast<int>(rows.size());

        int feature = -1;
        double threshold = 0.0;
        if (!pure && rows.size() >= 2) find_split(rows, counts, feature, threshold);
        if (feature < 0) {
            TreeNode& leaf = tree_.nodes[static_cast<std::size_t>(id)];
            leaf.label = label;
            leaf.class_counts = std::move(counts);
            return id;
        }

        std::vector<std::size_t> left, right;
        for (std::size_t r : rows)
            (data_.X(static_cast<Eigen::Index>(r), feature) <= threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();
        const int l = grow(std::move(left));
        const int r = grow(std::move(right));
        TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = feature;
        node.threshold = threshold;
        node.left = l;
        node.right = r;
        node.label = label;
        node.class_counts = std::move(counts);
        return id;
    }

private:
    void find_split(const std::vector<std::size_t>& rows, const std::vector<int>& counts, int& best_feature,
                    double& best_threshold) {
        const auto n = static_cast<long long>(rows.size());
        Quality best;
        bool found = false;
        std::vector<std::size_t> order(rows);
        std::vector<long long> left(classes_), right(classes_);
        for (Eigen::Index f = 0; f < data_.X.cols(); ++f) {
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return data_.X(static_cast<Eigen::Index>(a), f) < data_.X(static_cast<Eigen::Index>(b), f);
            });
            std::fill(left.begin(), left.end(), 0);
            long long sum_left = 0, sum_right = 0;
            for (std::size_t c = 0; c < classes_; ++c) {
                right[c] = counts[c];
                sum_right += right[c] * right[c];
            }
            for (long long i = 0; i + 1 < n; ++i) {
                const auto c = static_cast<std::size_t>(data_.y[order[static_cast<std::size_t>(i)]]);
                sum_left += 2 * left[c] + 1;
                sum_right -= 2 * right[c] - 1;
                ++left[c];
                --right[c];
                const double a = data_.X(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i)]), f);
                const double b = data_.X(static_cast<Eigen::Index>(order[static_cast<std::size_t>(i + 1)]), f);
                if (!(a < b)) continue;
                const long long n_left = i + 1, n_right = n - n_left;
                const Quality q{static_cast<__int128>(sum_left) * n_right + static_cast<__int128>(sum_right) * n_left,
                                static_cast<__int128>(n_left) * n_right};
                if (!found || q.better_than(best)) {
                    found = true;
                    best = q;
                    best_feature = static_cast<int>(f);
                    double mid = a / 2.0 + b / 2.0;
                    if (mid >= b || mid < a) mid = a;
                    best_threshold = mid;
                }
            }
        }
    }

    const LabeledVectors& data_;
    DecisionTree& tree_;
    std::size_t classes_;
};

}  // namespace

DecisionTree train_tree(const LabeledVectors& data) {
    data.validate();
    DecisionTree tree;
    tree.label_space = data.label_space;
    tree.width = data.X.cols();
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    Builder(data, tree).grow(std::move(rows));
    return tree;
}

const TreeNode& DecisionTree::leaf(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    if (row.size() != width)
        throw Error("WidthMismatch",
                    "row width " + std::to_string(row.size()) + ", tree width " + std::to_string(width));
    std::size_t i = 0;
    while (!nodes[i].is_leaf())
        i = static_cast<std::size_t>(row[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
    return nodes[i];
}

int DecisionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const { return leaf(row).label; }

const std::string& DecisionTree::predict_label(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    return label_space[static_cast<std::size_t>(predict(row))];
}

std::size_t DecisionTree::depth() const {
    std::vector<std::size_t> depth(nodes.size(), 0);
    std::size_t deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        deepest = std::max(deepest, depth[i]);
        if (!nodes[i].is_leaf()) {
            depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
            depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
        }
    }
    return deepest;
}

double accuracy(const DecisionTree& tree, const LabeledVectors& data) {
    if (data.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < data.size(); ++r)
        hits += tree.predict(data.X.row(static_cast<Eigen::Index>(r))) == data.y[r];
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

nlohmann::json to_json(const DecisionTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : tree.nodes) {
        if (n.is_leaf())
            nodes.push_back({{"label", n.label}, {"class_counts", n.class_counts}});
        else
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right},
                             {"label", n.label},
                             {"class_counts", n.class_counts}});
    }
    return {{"width", tree.width}, {"label_space", tree.label_space}, {"nodes", nodes}};
}

DecisionTree tree_from_json(const nlohmann::json& j) {
    DecisionTree t;
    try {
        t.width = j.at("width").get<Eigen::Index>();
        t.label_space = j.at("label_space").get<std::vector<std::string>>();
        for (const auto& n : j.at("nodes")) {
            TreeNode node;
            node.label = n.at("label").get<int>();
            node.class_counts = n.at("class_counts").get<std::vector<int>>();
            if (n.contains("feature")) {
                node.feature = n.at("feature").get<int>();
                node.threshold = n.at("threshold").get<double>();
                node.left = n.at("left").get<int>();
                node.right = n.at("right").get<int>();
            }
            t.nodes.push_back(std::move(node));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("/tree", e.what());
    }
    const auto count = static_cast<int>(t.nodes.size());
    if (count == 0) throw SchemaViolation("/tree/nodes", "tree without nodes");
    for (int i = 0; i < count; ++i) {
        const TreeNode& n = t.nodes[static_cast<std::size_t>(i)];
        if (!n.is_leaf() && (n.feature >= t.width || n.left <= i || n.right <= i || n.left >= count ||
                             n.right >= count))
            throw SchemaViolation("/tree/nodes/" + std::to_string(i), "invalid split node");
        if (n.label < 0 || static_cast<std::size_t>(n.label) >= t.label_space.size())
            throw SchemaViolation("/tree/nodes/" + std::to_string(i) + "/label", "label outside label space");
    }
    return t;
}

}  // namespace mpisentinel::ml
