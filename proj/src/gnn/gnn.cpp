#include "mpisentinel/gnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "mpisentinel/error.hpp"
#include "mpisentinel/random.hpp"

namespace mpisentinel::gnn {

using graph::EdgeType;
using graph::NodeType;

void GnnConfig::validate() const {
    for (int s : layer_sizes)
        if (s < 1) throw Error("InvalidConfig", "layer sizes must be positive");
    if (node_embed_dim < 1 || fc_hidden < 1) throw Error("InvalidConfig", "dimensions must be positive");
    if (heads != 1) throw Error("InvalidConfig", "only one attention head is supported");
    if (!(lr > 0.0)) throw Error("InvalidConfig", "learning rate must be positive");
    if (epochs < 0 || batch_size < 1) throw Error("InvalidConfig", "epochs >= 0 and batch_size >= 1 required");
}

nlohmann::json to_json(const GnnConfig& c) {
    return {{"layer_sizes", c.layer_sizes}, {"node_embed_dim", c.node_embed_dim}, {"fc_hidden", c.fc_hidden},
            {"leaky_slope", c.leaky_slope}, {"heads", c.heads},                   {"lr", c.lr},
            {"epochs", c.epochs},           {"batch_size", c.batch_size},         {"rng_seed", c.rng_seed}};
}

GnnConfig gnn_config_from_json(const nlohmann::json& j) {
    GnnConfig c;
    try {
        c.layer_sizes = j.at("layer_sizes").get<std::array<int, 3>>();
        c.node_embed_dim = j.at("node_embed_dim").get<int>();
        c.fc_hidden = j.at("fc_hidden").get<int>();
        c.leaky_slope = j.at("leaky_slope").get<double>();
        c.heads = j.at("heads").get<int>();
        c.lr = j.at("lr").get<double>();
        c.epochs = j.at("epochs").get<int>();
        c.batch_size = j.at("batch_size").get<int>();
        c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("/config", e.what());
    }
    c.validate();
    return c;
}

std::string Relation::name() const {
    if (self) return "self-" + std::string(graph::to_string(src));
    return std::string(graph::to_string(src)) + "-" + std::string(graph::to_string(edge)) + "-" +
           std::string(graph::to_string(dst));
}

const std::vector<Relation>& relations() {
    static const std::vector<Relation> rels = {
        {NodeType::Control, EdgeType::Control, NodeType::Control, false},
        {NodeType::Control, EdgeType::Call, NodeType::Control, false},
        {NodeType::Variable, EdgeType::Data, NodeType::Control, false},
        {NodeType::Constant, EdgeType::Data, NodeType::Control, false},
        {NodeType::Control, EdgeType::Data, NodeType::Variable, false},
        {NodeType::Control, EdgeType::Control, NodeType::Control, true},
        {NodeType::Variable, EdgeType::Data, NodeType::Variable, true},
        {NodeType::Constant, EdgeType::Data, NodeType::Constant, true},
    };
    return rels;
}

ad::Var gatv2_relation(ad::Var h_src, ad::Var h_dst, const ad::Index& src, const ad::Index& dst, ad::Var w_src,
                       ad::Var w_dst, ad::Var attn, ad::Var w_msg, double slope) {
    if (src.size() != dst.size()) throw Error("ShapeMismatch", "edge endpoint lists differ in length");
    if (h_src.cols() != w_src.rows() || h_dst.cols() != w_dst.rows() || h_src.cols() != w_msg.rows() ||
        w_src.cols() != attn.rows() || w_dst.cols() != attn.rows() || attn.cols() != 1)
        throw Error("ShapeMismatch", "relation parameter shapes do not match the features");
    ad::Tape& tape = *h_src.tape;
    if (src.empty()) return tape.constant(ad::Matrix::Zero(h_dst.rows(), w_msg.cols()));
    const ad::Var z = ad::add(ad::gather_rows(ad::matmul(h_src, w_src), src),
                              ad::gather_rows(ad::matmul(h_dst, w_dst), dst));
    const ad::Var scores = ad::matmul(ad::leaky_relu(z, slope), attn);
    const ad::Var alpha = ad::segment_softmax(scores, dst, h_dst.rows());
    const ad::Var messages = ad::scale_rows(ad::gather_rows(ad::matmul(h_src, w_msg), src), alpha);
    return ad::scatter_add_rows(messages, dst, h_dst.rows());
}

namespace {

void xavier(Eigen::MatrixXd& m, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
}

}  // namespace

GnnModel::GnnModel(GnnConfig cfg, std::vector<std::string> vocabulary, std::vector<std::string> label_space)
    : cfg_(cfg), vocabulary_(std::move(vocabulary)), label_space_(std::move(label_space)) {
    cfg_.validate();
    if (label_space_.empty()) throw Error("InvalidConfig", "empty label space");
    for (std::size_t i = 0; i < vocabulary_.size(); ++i) token_ids_.emplace(vocabulary_[i], static_cast<int>(i + 1));

    auto add = [this](std::string name, Eigen::Index rows, Eigen::Index cols) {
        params_.push_back(Eigen::MatrixXd::Zero(rows, cols));
        names_.push_back(std::move(name));
    };
    add("embedding", static_cast<Eigen::Index>(vocabulary_.size() + 1), cfg_.node_embed_dim);
    int in = cfg_.node_embed_dim;
    for (int l = 0; l < 3; ++l) {
        const int out = cfg_.layer_sizes[static_cast<std::size_t>(l)];
        for (const Relation& r : relations()) {
            const std::string prefix = "layer" + std::to_string(l) + "." + r.name() + ".";
            add(prefix + "w_src", in, out);
            add(prefix + "w_dst", in, out);
            add(prefix + "attn", out, 1);
            add(prefix + "w_msg", in, out);
        }
        in = out;
    }
    add("fc1_w", in, cfg_.fc_hidden);
    add("fc1_b", 1, cfg_.fc_hidden);
    add("fc2_w", cfg_.fc_hidden, static_cast<Eigen::Index>(label_space_.size()));
    add("fc2_b", 1, static_cast<Eigen::Index>(label_space_.size()));

    Rng rng(cfg_.rng_seed);
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (names_[i] != "fc1_b" && names_[i] != "fc2_b") xavier(params_[i], rng);
}

int GnnModel::token_id(const std::string& token) const {
    auto it = token_ids_.find(token);
    return it == token_ids_.end() ? 0 : it->second;
}

std::size_t GnnModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
    return n;
}

void GnnModel::set_zero() {
    for (auto& p : params_) p.setZero();
}

std::vector<std::string> build_vocabulary(const std::vector<graph::ProgramGraph>& graphs) {
    std::set<std::string> tokens;
    for (const auto& g : graphs)
        for (const auto& n : g.nodes) tokens.insert(n.token);
    return {tokens.begin(), tokens.end()};
}

HeteroBatch make_batch(const GnnModel& model, const std::vector<const graph::ProgramGraph*>& graphs) {
    const auto& rels = relations();
    HeteroBatch b;
    b.edges.resize(rels.size());
    b.num_graphs = static_cast<int>(graphs.size());
    for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
        const graph::ProgramGraph& g = *graphs[gi];
        if (g.nodes.empty()) throw Error("EmptyGraph", "graph without nodes");
        std::vector<int> local(g.nodes.size());
        for (std::size_t i = 0; i < g.nodes.size(); ++i) {
            const auto t = static_cast<std::size_t>(g.nodes[i].type);
            local[i] = static_cast<int>(b.tokens[t].size());
            b.tokens[t].push_back(model.token_id(g.nodes[i].token));
            b.graph_of[t].push_back(static_cast<int>(gi));
        }
        for (const graph::GraphEdge& e : g.edges) {
            if (e.src >= g.nodes.size() || e.dst >= g.nodes.size())
                throw Error("MalformedGraph", "edge endpoint outside the graph");
            const NodeType st = g.nodes[e.src].type, dt = g.nodes[e.dst].type;
            std::size_t r = 0;
            while (r < rels.size() && (rels[r].self || rels[r].src != st || rels[r].edge != e.type || rels[r].dst != dt))
                ++r;
            if (r == rels.size())
                throw Error("MissingRelationParams", "no parameters for relation " + std::string(graph::to_string(st)) +
                                                         "-" + std::string(graph::to_string(e.type)) + "-" +
                                                         std::string(graph::to_string(dt)));
            b.edges[r].first.push_back(local[e.src]);
            b.edges[r].second.push_back(local[e.dst]);
        }
        for (std::size_t r = 0; r < rels.size(); ++r) {
            if (!rels[r].self) continue;
            for (std::size_t i = 0; i < g.nodes.size(); ++i)
                if (g.nodes[i].type == rels[r].src) {
                    b.edges[r].first.push_back(local[i]);
                    b.edges[r].second.push_back(local[i]);
                }
        }
    }
    return b;
}

ParamVars attach(ad::Tape& tape, const GnnModel& model, bool trainable) {
    ParamVars p;
    for (const auto& m : model.params()) p.blocks.push_back(trainable ? tape.parameter(m) : tape.constant(m));
    return p;
}

std::array<ad::Var, graph::kNodeTypeCount> hetero_layer(const GnnModel& model, const ParamVars& p, int layer,
                                                        const std::array<ad::Var, graph::kNodeTypeCount>& h,
                                                        const HeteroBatch& batch) {
    const auto& rels = relations();
    std::array<std::optional<ad::Var>, graph::kNodeTypeCount> sums;
    for (std::size_t r = 0; r < rels.size(); ++r) {
        const std::size_t base = model.relation_index(layer, r);
        const auto s = static_cast<std::size_t>(rels[r].src), d = static_cast<std::size_t>(rels[r].dst);
        // A self-loop is each node's only edge in its relation: alpha is
        // exactly 1 and the score gradient exactly 0, so only W_msg matters.
        const bool identity = rels[r].self && batch.edges[r].first.size() == static_cast<std::size_t>(h[d].rows());
        ad::Var out = identity ? ad::matmul(h[s], p.blocks[base + 3])
                               : gatv2_relation(h[s], h[d], batch.edges[r].first, batch.edges[r].second,
                                                p.blocks[base], p.blocks[base + 1], p.blocks[base + 2],
                                                p.blocks[base + 3], model.config().leaky_slope);
        sums[d] = sums[d] ? ad::add(*sums[d], out) : out;
    }
    std::array<ad::Var, graph::kNodeTypeCount> next;
    for (std::size_t t = 0; t < graph::kNodeTypeCount; ++t) {
        if (!sums[t]) throw Error("MissingRelationParams", "node type without incoming relation");
        next[t] = ad::elu(*sums[t]);
    }
    return next;
}

ad::Var forward(const GnnModel& model, const ParamVars& p, const HeteroBatch& batch) {
    if (batch.num_graphs == 0) throw Error("EmptyGraph", "empty batch");
    std::array<ad::Var, graph::kNodeTypeCount> h;
    for (std::size_t t = 0; t < graph::kNodeTypeCount; ++t)
        h[t] = ad::gather_rows(p.blocks[model.embedding_index()], batch.tokens[t]);
    for (int l = 0; l < 3; ++l) h = hetero_layer(model, p, l, h, batch);

    ad::Index owner;
    for (const auto& g : batch.graph_of) owner.insert(owner.end(), g.begin(), g.end());
    const ad::Var pooled = ad::segment_max_rows(ad::vstack({h[0], h[1], h[2]}), owner, batch.num_graphs);
    const std::size_t fc = model.fc_index();
    const ad::Var hidden = ad::relu(ad::add_row(ad::matmul(pooled, p.blocks[fc]), p.blocks[fc + 1]));
    return ad::add_row(ad::matmul(hidden, p.blocks[fc + 2]), p.blocks[fc + 3]);
}

Eigen::RowVectorXd forward(const GnnModel& model, const graph::ProgramGraph& g) {
    ad::Tape tape;
    const ParamVars p = attach(tape, model, false);
    return forward(model, p, make_batch(model, {&g})).value().row(0);
}

double cross_entropy(const Eigen::RowVectorXd& logits, int true_class) {
    if (true_class < 0 || true_class >= logits.size())
        throw Error("ClassOutOfRange", "class " + std::to_string(true_class) + " outside the logits");
    const double mx = logits.maxCoeff();
    return std::log((logits.array() - mx).exp().sum()) + mx - logits[true_class];
}

LossAndGrad loss_and_gradients(const GnnModel& model, const std::vector<const graph::ProgramGraph*>& graphs,
                               const std::vector<int>& targets) {
    ad::Tape tape;
    const ParamVars p = attach(tape, model, true);
    const ad::Var per_graph = ad::cross_entropy(forward(model, p, make_batch(model, graphs)), targets);
    const ad::Var loss = ad::mean(per_graph);
    tape.backward(loss);
    LossAndGrad out;
    out.loss = loss.value()(0, 0);
    out.per_graph = per_graph.value().col(0);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        const ad::Matrix& g = p.blocks[i].grad();
        out.grads.push_back(g.size() ? g : ad::Matrix::Zero(model.params()[i].rows(), model.params()[i].cols()));
    }
    return out;
}

void adam_step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& grads, AdamState& s,
               double lr) {
    if (grads.size() != params.size()) throw Error("ShapeMismatch", "gradient count differs from parameter count");
    if (s.m.empty()) {
        for (const auto& p : params) {
            s.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
            s.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
        }
    }
    if (s.m.size() != params.size()) throw Error("ShapeMismatch", "optimizer state does not match the parameters");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols() ||
            s.m[i].rows() != params[i].rows() || s.m[i].cols() != params[i].cols())
            throw Error("ShapeMismatch", "gradient shape differs for block " + std::to_string(i));
    ++s.step;
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i].cwiseAbs2();
        params[i].array() -= lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.eps);
    }
}

TrainResult train(GnnModel& model, const std::vector<graph::ProgramGraph>& graphs, const std::vector<int>& labels) {
    if (graphs.empty()) throw Error("EmptyDataset", "no training graphs");
    if (labels.size() != graphs.size()) throw Error("InvalidConfig", "label count differs from graph count");
    for (int l : labels)
        if (l < 0 || static_cast<std::size_t>(l) >= model.label_space().size())
            throw Error("ClassOutOfRange", "training label outside the label space");
    const GnnConfig& cfg = model.config();
    TrainResult result;
    AdamState state;
    Rng rng(cfg.rng_seed ^ 0x5deece66dULL);
    std::vector<std::size_t> order(graphs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const graph::ProgramGraph*> batch;
            std::vector<int> targets;
            for (std::size_t k = start; k < end; ++k) {
                batch.push_back(&graphs[order[k]]);
                targets.push_back(labels[order[k]]);
            }
            LossAndGrad lg = loss_and_gradients(model, batch, targets);
            total += lg.per_graph.sum();
            adam_step(model.params(), lg.grads, state, cfg.lr);
        }
        result.epoch_loss.push_back(total / static_cast<double>(graphs.size()));
    }
    return result;
}

int predict(const GnnModel& model, const graph::ProgramGraph& g) {
    const Eigen::RowVectorXd logits = forward(model, g);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return static_cast<int>(best);
}

const std::string& predict_label(const GnnModel& model, const graph::ProgramGraph& g) {
    return model.label_space()[static_cast<std::size_t>(predict(model, g))];
}

nlohmann::json to_json(const GnnModel& model) {
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const auto& m = model.params()[i];
        std::vector<double> values;
        values.reserve(static_cast<std::size_t>(m.size()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
        params.push_back({{"name", model.param_names()[i]}, {"rows", m.rows()}, {"cols", m.cols()}, {"values", values}});
    }
    return {{"kind", "gnn"},
            {"config", to_json(model.config())},
            {"vocabulary", model.vocabulary()},
            {"label_space", model.label_space()},
            {"params", params}};
}

GnnModel gnn_model_from_json(const nlohmann::json& j) {
    GnnModel model;
    try {
        model = GnnModel(gnn_config_from_json(j.at("config")), j.at("vocabulary").get<std::vector<std::string>>(),
                         j.at("label_space").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw SchemaViolation("/", e.what());
    }
    const auto& params = j.at("params");
    if (!params.is_array() || params.size() != model.params().size())
        throw SchemaViolation("/params", "expected " + std::to_string(model.params().size()) + " parameter blocks");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const std::string ptr = "/params/" + std::to_string(i);
        auto& m = model.params()[i];
        try {
            if (params[i].at("name") != model.param_names()[i] || params[i].at("rows") != m.rows() ||
                params[i].at("cols") != m.cols())
                throw SchemaViolation(ptr, "block does not match the configured architecture");
            const auto values = params[i].at("values").get<std::vector<double>>();
            if (static_cast<Eigen::Index>(values.size()) != m.size())
                throw SchemaViolation(ptr + "/values", "wrong value count");
            std::size_t k = 0;
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = values[k++];
        } catch (const nlohmann::json::exception& e) {
            throw SchemaViolation(ptr, e.what());
        }
    }
    return model;
}

void write_loss_log_csv(const std::filesystem::path& path, const std::vector<double>& epoch_loss) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path.string());
    out << "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, epoch_loss[e]);
        out << buf;
    }
}

}  // namespace mpisentinel::gnn
