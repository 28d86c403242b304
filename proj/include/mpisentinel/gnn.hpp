#pragma once

// Heterogeneous GATv2 graph classifier over program graphs.
//
// Per layer, every relation (source node type, edge type, destination node
// type) has its own GATv2 parameters; relation outputs are summed per
// destination type and passed through ELU. Three layers are followed by
// elementwise max pooling over all nodes and two fully connected layers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mpisentinel/autodiff.hpp"
#include "mpisentinel/graph.hpp"

namespace mpisentinel::gnn {

struct GnnConfig {
    std::array<int, 3> layer_sizes{128, 64, 32};
    int node_embed_dim = 64;
    int fc_hidden = 16;
    double leaky_slope = 0.2;
    int heads = 1;
    double lr = 4e-4;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t rng_seed = 0;

    /// Throws Error("InvalidConfig").
    void validate() const;
};

nlohmann::json to_json(const GnnConfig& cfg);
GnnConfig gnn_config_from_json(const nlohmann::json& j);

/// A relation is either a typed edge (src type, edge type, dst type) or the
/// self-loop relation of one node type.
struct Relation {
    graph::NodeType src;
    graph::EdgeType edge;
    graph::NodeType dst;
    bool self = false;

    std::string name() const;
};

/// Fixed relation order: control, call, variable data, constant data,
/// definition data, then the control, variable and constant self-loops.
const std::vector<Relation>& relations();

/// Parameters of one relation in one layer (row-vector convention):
/// score(i->j) = LeakyReLU(h_i W_src + h_j W_dst) attn,
/// message(i) = h_i W_msg.
struct RelationParams {
    Eigen::MatrixXd w_src, w_dst, attn, w_msg;
};

/// Runs one GATv2 relation: per destination, softmax over incoming edge
/// scores weights the source messages. Destinations without incoming edges
/// receive zeros.
ad::Var gatv2_relation(ad::Var h_src, ad::Var h_dst, const ad::Index& src, const ad::Index& dst, ad::Var w_src,
                       ad::Var w_dst, ad::Var attn, ad::Var w_msg, double slope);

class GnnModel {
public:
    GnnModel() = default;
    /// Xavier-uniform initialization from cfg.rng_seed; biases start at zero.
    GnnModel(GnnConfig cfg, std::vector<std::string> vocabulary, std::vector<std::string> label_space);

    const GnnConfig& config() const { return cfg_; }
    const std::vector<std::string>& vocabulary() const { return vocabulary_; }
    const std::vector<std::string>& label_space() const { return label_space_; }

    /// Token id; 0 is the out-of-vocabulary bucket.
    int token_id(const std::string& token) const;

    /// Flat parameter blocks in checkpoint order: embedding, then per layer
    /// and relation w_src, w_dst, attn, w_msg, then fc1_w, fc1_b, fc2_w, fc2_b.
    std::vector<Eigen::MatrixXd>& params() { return params_; }
    const std::vector<Eigen::MatrixXd>& params() const { return params_; }
    const std::vector<std::string>& param_names() const { return names_; }
    std::size_t parameter_count() const;

    std::size_t embedding_index() const { return 0; }
    std::size_t relation_index(int layer, std::size_t relation) const {
        return 1 + (static_cast<std::size_t>(layer) * relations().size() + relation) * 4;
    }
    std::size_t fc_index() const { return 1 + 3 * relations().size() * 4; }

    void set_zero();

private:
    GnnConfig cfg_;
    std::vector<std::string> vocabulary_;
    std::unordered_map<std::string, int> token_ids_;
    std::vector<std::string> label_space_;
    std::vector<Eigen::MatrixXd> params_;
    std::vector<std::string> names_;
};

/// Sorted distinct node tokens of the graphs.
std::vector<std::string> build_vocabulary(const std::vector<graph::ProgramGraph>& graphs);

/// Disjoint union of graphs with node indices local to each node type.
struct HeteroBatch {
    std::array<ad::Index, graph::kNodeTypeCount> tokens;
    std::array<ad::Index, graph::kNodeTypeCount> graph_of;
    /// Per relation, (src, dst) local indices.
    std::vector<std::pair<ad::Index, ad::Index>> edges;
    int num_graphs = 0;
};

/// Throws Error("EmptyGraph") for graphs without nodes and
/// Error("MissingRelationParams") for edges outside the relation set.
HeteroBatch make_batch(const GnnModel& model, const std::vector<const graph::ProgramGraph*>& graphs);

/// Model parameters as tape leaves.
struct ParamVars {
    std::vector<ad::Var> blocks;
};
ParamVars attach(ad::Tape& tape, const GnnModel& model, bool trainable);

/// One heterogeneous layer: per destination type, sum of relation outputs,
/// then ELU.
std::array<ad::Var, graph::kNodeTypeCount> hetero_layer(const GnnModel& model, const ParamVars& p, int layer,
                                                        const std::array<ad::Var, graph::kNodeTypeCount>& h,
                                                        const HeteroBatch& batch);

/// Logits, one row per graph in the batch.
ad::Var forward(const GnnModel& model, const ParamVars& p, const HeteroBatch& batch);

/// Logits for a single graph.
Eigen::RowVectorXd forward(const GnnModel& model, const graph::ProgramGraph& g);

/// -log softmax(logits)[true_class] with max-shift stabilization.
/// Throws Error("ClassOutOfRange").
double cross_entropy(const Eigen::RowVectorXd& logits, int true_class);

struct LossAndGrad {
    double loss = 0.0;                   // mean over the graphs
    Eigen::VectorXd per_graph;           // individual losses
    std::vector<Eigen::MatrixXd> grads;  // aligned with model.params()
};

LossAndGrad loss_and_gradients(const GnnModel& model, const std::vector<const graph::ProgramGraph*>& graphs,
                               const std::vector<int>& targets);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Eigen::MatrixXd> m, v;
};

/// Standard Adam with bias correction. Throws Error("ShapeMismatch").
void adam_step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads, AdamState& state,
               double lr);

struct TrainResult {
    std::vector<double> epoch_loss;  // mean loss per epoch
};

/// Seeded shuffled mini-batches of cfg.batch_size, one Adam step per batch.
/// `labels` index the model's label space. Throws Error("EmptyDataset").
TrainResult train(GnnModel& model, const std::vector<graph::ProgramGraph>& graphs, const std::vector<int>& labels);

/// Argmax of the logits (earliest label on ties).
int predict(const GnnModel& model, const graph::ProgramGraph& g);
const std::string& predict_label(const GnnModel& model, const graph::ProgramGraph& g);

nlohmann::json to_json(const GnnModel& model);
GnnModel gnn_model_from_json(const nlohmann::json& j);

/// epoch,mean_loss
void write_loss_log_csv(const std::filesystem::path& path, const std::vector<double>& epoch_loss);

}  // namespace mpisentinel::gnn
