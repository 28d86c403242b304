#pragma once

// Decision-tree classifier over embedding vectors and genetic-algorithm
// selection of embedding coordinates.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mpisentinel/embed.hpp"

namespace mpisentinel::ml {

/// Rows of X with labels y (indices into label_space). `ids` are stable row
/// identifiers used to order rows for fold construction.
struct LabeledVectors {
    Eigen::MatrixXd X;
    std::vector<int> y;
    std::vector<std::string> label_space;
    std::vector<std::string> ids;

    std::size_t size() const { return y.size(); }
    /// Throws Error("EmptyDataset") / Error("InvalidConfig") on broken invariants.
    void validate() const;
    /// Same rows restricted to the given columns, in the given order.
    LabeledVectors select_columns(const std::vector<int>& columns) const;
    LabeledVectors select_rows(const std::vector<std::size_t>& rows) const;
};

/// Node of a flat binary tree. Leaves have feature == -1.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = -1;
    std::vector<int> class_counts;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    std::vector<std::string> label_space;
    Eigen::Index width = 0;

    /// Label index of the leaf reached; x <= threshold goes left.
    /// Throws Error("WidthMismatch").
    int predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    /// Leaf reached by `row`. Throws Error("WidthMismatch").
    const TreeNode& leaf(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    const std::string& predict_label(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
    std::size_t depth() const;

    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

/// CART with Gini impurity grown to pure leaves (min samples split 2, min
/// samples leaf 1, no depth cap). Ties: lowest feature, then lowest
/// threshold; leaf ties go to the earliest label. Throws Error("EmptyDataset").
DecisionTree train_tree(const LabeledVectors& data);

double accuracy(const DecisionTree& tree, const LabeledVectors& data);

nlohmann::json to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& j);

/// Stratified assignment of row indices to k folds: rows are ordered by
/// (label, id), shuffled within each label, then dealt round-robin with
/// the deal position carried across labels.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& y, const std::vector<std::string>& ids,
                                                       std::size_t k, std::uint64_t seed);

struct GaConfig {
    int population = 2500;
    int generations = 25;
    double crossover_prob = 0.9;
    double mutation_prob = 0.1;
    int genes_per_individual = 5;
    std::uint64_t rng_seed = 0;
    /// Fitness worker threads; 0 means one per hardware thread.
    unsigned jobs = 0;

    /// Population 50, generations 10.
    static GaConfig small();
};

nlohmann::json to_json(const GaConfig& cfg);

struct FeatureSubset {
    std::vector<int> indices;  // sorted, distinct
    double fitness = 0.0;

    friend bool operator==(const FeatureSubset&, const FeatureSubset&) = default;
};

/// Mean accuracy of train_tree over internal stratified min(5, n)-fold
/// cross-validation of `data` restricted to `indices`.
double fitness(const std::vector<int>& indices, const LabeledVectors& data, std::uint64_t seed);

struct GenerationStats {
    int generation = 0;
    double best_fitness = 0.0;
    double mean_fitness = 0.0;
};

struct GaResult {
    FeatureSubset best;
    std::vector<GenerationStats> log;  // generation 0 is the initial population
};

/// Tournament size 2, single-point crossover with duplicate repair,
/// single-gene mutation, elitism 1. Returns the best individual ever seen.
/// Throws Error("EmptyDataset") or Error("InvalidConfig").
GaResult ga_select(const LabeledVectors& data, const GaConfig& cfg);

/// generation,best_fitness,mean_fitness
void write_ga_log_csv(const std::filesystem::path& path, const std::vector<GenerationStats>& log);

/// Decision tree plus the preprocessing it was trained behind.
struct TabularModel {
    DecisionTree tree;
    std::vector<int> feature_subset;  // empty: all coordinates
    embed::Normalizer normalizer;
    /// Seed of the embedding vocabulary the model was trained on.
    std::uint64_t seed = 0;

    /// Full 512-wide embedding rows in, label indices out.
    std::vector<int> predict(const Eigen::MatrixXd& embeddings) const;
    /// Normalized, column-selected features the tree sees.
    Eigen::MatrixXd features(const Eigen::MatrixXd& embeddings) const;
};

nlohmann::json to_json(const TabularModel& model);
TabularModel tabular_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const embed::Normalizer& n);
embed::Normalizer normalizer_from_json(const nlohmann::json& j);

}  // namespace mpisentinel::ml
