#pragma once

// Unified heterogeneous program graph over an IR module: instructions are
// control nodes, SSA values are variable nodes, operands that are not SSA
// values (literals, globals, function addresses) are constant nodes.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mpisentinel/ir.hpp"

namespace mpisentinel::graph {

enum class NodeType { Control = 0, Variable = 1, Constant = 2 };
enum class EdgeType { Control = 0, Data = 1, Call = 2 };

inline constexpr std::size_t kNodeTypeCount = 3;
inline constexpr std::size_t kEdgeTypeCount = 3;

std::string_view to_string(NodeType t);
std::string_view to_string(EdgeType t);
NodeType node_type_from_string(std::string_view s);
EdgeType edge_type_from_string(std::string_view s);

struct GraphNode {
    std::size_t id = 0;
    NodeType type = NodeType::Control;
    std::string token;
    std::optional<std::string> function;
    /// Variable node standing for a function parameter (no defining edge).
    bool is_param = false;

    friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct GraphEdge {
    std::size_t src = 0;
    std::size_t dst = 0;
    EdgeType type = EdgeType::Control;
    std::size_t position = 0;

    friend bool operator==(const GraphEdge&, const GraphEdge&) = default;
};

struct ProgramGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    std::optional<std::string> label;

    friend bool operator==(const ProgramGraph&, const ProgramGraph&) = default;
};

struct GraphOptions {
    /// Emit every edge with position 0 (ablation of edge ordinals).
    bool zero_positions = false;
};

/// Throws UndefinedLocal for operands without a definition.
ProgramGraph build_graph(const ir::Module& module, const GraphOptions& options = {});

struct Violation {
    std::string rule;
    std::string message;
    std::optional<std::size_t> edge_index;
    std::optional<std::size_t> node_index;
};

/// Empty iff the graph satisfies every typed-edge rule and id invariant.
std::vector<Violation> validate_graph(const ProgramGraph& g);

struct GraphStats {
    std::array<std::size_t, kNodeTypeCount> nodes{};
    std::array<std::size_t, kEdgeTypeCount> edges{};

    GraphStats& operator+=(const GraphStats& o);
    friend bool operator==(const GraphStats&, const GraphStats&) = default;
};

GraphStats graph_stats(const ProgramGraph& g);

nlohmann::json to_json(const ProgramGraph& g);
/// Throws SchemaViolation on malformed documents.
ProgramGraph graph_from_json(const nlohmann::json& j);

}  // namespace mpisentinel::graph
