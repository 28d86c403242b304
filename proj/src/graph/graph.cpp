#include "mpisentinel/graph.hpp"

#include <map>
#include <unordered_map>

#include "mpisentinel/error.hpp"

namespace mpisentinel::graph {

std::string_view to_string(NodeType t) {
    switch (t) {
        case NodeType::Control: return "control";
        case NodeType::Variable: return "variable";
        case NodeType::Constant: return "constant";
    }
    return "control";
}

std::string_view to_string(EdgeType t) {
    switch (t) {
        case EdgeType::Control: return "control";
        case EdgeType::Data: return "data";
        case EdgeType::Call: return "call";
    }
    return "control";
}

NodeType node_type_from_string(std::string_view s) {
    if (s == "control") return NodeType::Control;
    if (s == "variable") return NodeType::Variable;
    if (s == "constant") return NodeType::Constant;
    throw Error("SchemaViolation", "unknown node type '" + std::string(s) + "'");
}

EdgeType edge_type_from_string(std::string_view s) {
    if (s == "control") return EdgeType::Control;
    if (s == "data") return EdgeType::Data;
    if (s == "call") return EdgeType::Call;
    throw Error("SchemaViolation", "unknown edge type '" + std::string(s) + "'");
}

namespace {

struct FunctionNodes {
    std::vector<std::vector<std::size_t>> control;  // [block][instr] -> node id
    std::vector<std::size_t> rets;
};

class Builder {
public:
    Builder(const ir::Module& m, const GraphOptions& opt) : module_(m), opt_(opt) {}

    ProgramGraph run() {
        for (const ir::Function& fn : module_.functions) {
            if (fn.is_declaration) continue;
            build_function(fn);
        }
        add_call_edges();
        return std::move(g_);
    }

private:
    std::size_t add_node(NodeType type, std::string token, const std::string& fn, bool param = false) {
        const std::size_t id = g_.nodes.size();
        g_.nodes.push_back(GraphNode{id, type, std::move(token), fn, param});
        return id;
    }

    void add_edge(std::size_t src, std::size_t dst, EdgeType type, std::size_t pos) {
        g_.edges.push_back(GraphEdge{src, dst, type, opt_.zero_positions ? 0 : pos});
    }

    std::string control_token(const ir::Instruction& in) const {
        if (in.call_target) {
            const ir::Function* callee = module_.find_function(*in.call_target);
            const bool has_body = callee && !callee->is_declaration;
            const bool direct = in.call_target->empty() || in.call_target->front() != '%';
            if (!has_body && direct) return in.opcode + ":" + *in.call_target;
        }
        return in.opcode;
    }

    void build_function(const ir::Function& fn) {
        (void)ir::def_use_map(fn);  // surfaces UndefinedLocal before any node is emitted

        FunctionNodes& fnodes = functions_[fn.name];
        for (const ir::Block& b : fn.blocks) {
            auto& ids = fnodes.control.emplace_back();
            for (const ir::Instruction& in : b.instructions) {
                ids.push_back(add_node(NodeType::Control, control_token(in), fn.name));
                if (in.opcode == "ret") fnodes.rets.push_back(ids.back());
            }
        }

        std::unordered_map<std::string, std::size_t> values;
        for (const ir::Param& p : fn.params)
            values[p.id] = add_node(NodeType::Variable, ir::canonical_type(p.type_str), fn.name, true);
        for (const ir::Block& b : fn.blocks)
            for (const ir::Instruction& in : b.instructions)
                if (in.result_id)
                    values[*in.result_id] = add_node(NodeType::Variable, ir::canonical_type(in.type_str), fn.name);

        std::map<std::pair<ir::OperandKind, std::string>, std::size_t> constants;
        for (const ir::Block& b : fn.blocks)
            for (const ir::Instruction& in : b.instructions)
                for (const ir::Operand& op : in.operands) {
                    if (op.kind == ir::OperandKind::LocalValue || op.kind == ir::OperandKind::Label) continue;
                    auto key = std::make_pair(op.kind, op.token);
                    if (!constants.count(key)) constants[key] = add_node(NodeType::Constant, "Constant", fn.name);
                }

        // Control flow: instruction order inside blocks, then branch targets.
        for (std::size_t bi = 0; bi < fn.blocks.size(); ++bi) {
            const auto& ids = fnodes.control[bi];
            for (std::size_t ii = 0; ii + 1 < ids.size(); ++ii) add_edge(ids[ii], ids[ii + 1], EdgeType::Control, 0);
            const ir::Instruction& term = fn.blocks[bi].instructions.back();
            std::size_t ordinal = 0;
            for (const ir::Operand& op : term.operands) {
                if (op.kind != ir::OperandKind::Label) continue;
                const std::size_t target = *fn.block_index(op.token);
                add_edge(ids.back(), fnodes.control[target].front(), EdgeType::Control, ordinal++);
            }
        }

        // Data flow: operand uses (ordinal among non-label operands), then the definition.
        for (std::size_t bi = 0; bi < fn.blocks.size(); ++bi) {
            for (std::size_t ii = 0; ii < fn.blocks[bi].instructions.size(); ++ii) {
                const ir::Instruction& in = fn.blocks[bi].instructions[ii];
                const std::size_t node = fnodes.control[bi][ii];
                std::size_t ordinal = 0;
                for (const ir::Operand& op : in.operands) {
                    if (op.kind == ir::OperandKind::Label) continue;
                    const std::size_t src = op.kind == ir::OperandKind::LocalValue
                                                ? values.at(op.token)
                                                : constants.at({op.kind, op.token});
                    add_edge(src, node, EdgeType::Data, ordinal++);
                }
                if (in.result_id) add_edge(node, values.at(*in.result_id), EdgeType::Data, 0);
            }
        }

        for (std::size_t bi = 0; bi < fn.blocks.size(); ++bi)
            for (std::size_t ii = 0; ii < fn.blocks[bi].instructions.size(); ++ii) {
                const ir::Instruction& in = fn.blocks[bi].instructions[ii];
                if (in.call_target) call_sites_.emplace_back(fnodes.control[bi][ii], *in.call_target);
            }
    }

    void add_call_edges() {
        std::unordered_map<std::size_t, std::size_t> ret_out;
        for (const auto& [site, target] : call_sites_) {
            auto it = functions_.find(target);
            if (it == functions_.end()) continue;  // declared only, or indirect
            add_edge(site, it->second.control.front().front(), EdgeType::Call, 0);
            for (std::size_t ret : it->second.rets) add_edge(ret, site, EdgeType::Call, ret_out[ret]++);
        }
    }

    const ir::Module& module_;
    const GraphOptions& opt_;
    ProgramGraph g_;
    std::map<std::string, FunctionNodes> functions_;
    std::vector<std::pair<std::size_t, std::string>> call_sites_;
};

}  // namespace

ProgramGraph build_graph(const ir::Module& module, const GraphOptions& options) {
    return Builder(module, options).run();
}

std::vector<Violation> validate_graph(const ProgramGraph& g) {
    std::vector<Violation> out;
    std::unordered_map<std::size_t, std::size_t> index_of;
    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        if (g.nodes[i].id != i) {
            out.push_back({"id_contiguity",
                           "node at index " + std::to_string(i) + " has id " + std::to_string(g.nodes[i].id),
                           std::nullopt, i});
        }
        if (!index_of.emplace(g.nodes[i].id, i).second)
            out.push_back({"id_unique", "duplicate node id " + std::to_string(g.nodes[i].id), std::nullopt, i});
    }

    std::vector<std::array<std::size_t, kEdgeTypeCount>> out_degree(g.nodes.size());
    std::vector<std::size_t> data_in(g.nodes.size(), 0);
    std::vector<bool> edge_ok(g.edges.size(), false);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const GraphEdge& edge = g.edges[e];
        auto s = index_of.find(edge.src);
        auto d = index_of.find(edge.dst);
        if (s == index_of.end() || d == index_of.end()) {
            out.push_back({"dangling_edge", "edge " + std::to_string(e) + " references a missing node", e, std::nullopt});
            continue;
        }
        edge_ok[e] = true;
        ++out_degree[s->second][static_cast<std::size_t>(edge.type)];
        if (edge.type == EdgeType::Data) ++data_in[d->second];
    }

    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        if (!edge_ok[e]) continue;
        const GraphEdge& edge = g.edges[e];
        const std::size_t si = index_of.at(edge.src);
        const std::size_t di = index_of.at(edge.dst);
        const NodeType st = g.nodes[si].type;
        const NodeType dt = g.nodes[di].type;
        const std::string desc = std::string(to_string(edge.type)) + " edge " + std::to_string(e) + " (" +
                                 std::to_string(edge.src) + " " + std::string(to_string(st)) + " -> " +
                                 std::to_string(edge.dst) + " " + std::string(to_string(dt)) + ")";
        bool typed_ok = false;
        switch (edge.type) {
            case EdgeType::Control:
            case EdgeType::Call: typed_ok = st == NodeType::Control && dt == NodeType::Control; break;
            case EdgeType::Data:
                typed_ok = (dt == NodeType::Control && st != NodeType::Control) ||
                           (st == NodeType::Control && dt == NodeType::Variable);
                break;
        }
        if (!typed_ok) {
            out.push_back({"edge_type", desc + " connects disallowed node types", e, std::nullopt});
            continue;
        }
        // Uses carry the operand slot of the destination; every other edge is
        // numbered among its source's outgoing edges of the same type.
        const bool use_edge = edge.type == EdgeType::Data && dt == NodeType::Control;
        const std::size_t bound = use_edge ? data_in[di] : out_degree[si][static_cast<std::size_t>(edge.type)];
        if (edge.position >= bound)
            out.push_back({"edge_position", desc + " has position " + std::to_string(edge.position) +
                                                " >= " + std::to_string(bound), e, std::nullopt});
    }

    for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        if (n.type != NodeType::Variable) continue;
        const std::size_t expected = n.is_param ? 0 : 1;
        if (data_in[i] != expected)
            out.push_back({"variable_definition",
                           "variable node " + std::to_string(n.id) + " has " + std::to_string(data_in[i]) +
                               " incoming data edges, expected " + std::to_string(expected),
                           std::nullopt, i});
    }
    return out;
}

GraphStats& GraphStats::operator+=(const GraphStats& o) {
    for (std::size_t i = 0; i < kNodeTypeCount; ++i) nodes[i] += o.nodes[i];
    for (std::size_t i = 0; i < kEdgeTypeCount; ++i) edges[i] += o.edges[i];
    return *this;
}

GraphStats graph_stats(const ProgramGraph& g) {
    GraphStats s;
    for (const GraphNode& n : g.nodes) ++s.nodes[static_cast<std::size_t>(n.type)];
    for (const GraphEdge& e : g.edges) ++s.edges[static_cast<std::size_t>(e.type)];
    return s;
}

nlohmann::json to_json(const ProgramGraph& g) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const GraphNode& n : g.nodes) {
        nlohmann::json j = {{"id", n.id}, {"type", to_string(n.type)}, {"token", n.token}};
        if (n.function) j["function"] = *n.function;
        if (n.is_param) j["param"] = true;
        nodes.push_back(std::move(j));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const GraphEdge& e : g.edges)
        edges.push_back({{"src", e.src}, {"dst", e.dst}, {"type", to_string(e.type)}, {"pos", e.position}});
    nlohmann::json j = {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
    j["label"] = g.label ? nlohmann::json(*g.label) : nlohmann::json(nullptr);
    return j;
}

namespace {

const nlohmann::json& field(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw SchemaViolation(where + "/" + key, "missing field");
    return obj.at(key);
}

std::size_t index_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    const nlohmann::json& v = field(obj, key, where);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw SchemaViolation(where + "/" + key, "expected a non-negative integer");
    return v.get<std::size_t>();
}

}  // namespace

ProgramGraph graph_from_json(const nlohmann::json& j) {
    ProgramGraph g;
    const nlohmann::json& nodes = field(j, "nodes", "");
    const nlohmann::json& edges = field(j, "edges", "");
    if (!nodes.is_array()) throw SchemaViolation("/nodes", "expected an array");
    if (!edges.is_array()) throw SchemaViolation("/edges", "expected an array");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::string where = "/nodes/" + std::to_string(i);
        GraphNode n;
        n.id = index_field(nodes[i], "id", where);
        try {
            n.type = node_type_from_string(field(nodes[i], "type", where).get<std::string>());
            n.token = field(nodes[i], "token", where).get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaViolation(where, e.what());
        } catch (const Error& e) {
            throw SchemaViolation(where + "/type", e.what());
        }
        if (nodes[i].contains("function")) n.function = nodes[i]["function"].get<std::string>();
        n.is_param = nodes[i].value("param", false);
        g.nodes.push_back(std::move(n));
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string where = "/edges/" + std::to_string(i);
        GraphEdge e;
        e.src = index_field(edges[i], "src", where);
        e.dst = index_field(edges[i], "dst", where);
        e.position = index_field(edges[i], "pos", where);
        try {
            e.type = edge_type_from_string(field(edges[i], "type", where).get<std::string>());
        } catch (const nlohmann::json::exception& ex) {
            throw SchemaViolation(where + "/type", ex.what());
        } catch (const Error& ex) {
            throw SchemaViolation(where + "/type", ex.what());
        }
        g.edges.push_back(e);
    }
    if (j.contains("label") && !j["label"].is_null()) g.label = j["label"].get<std::string>();
    return g;
}

}  // namespace mpisentinel::graph
