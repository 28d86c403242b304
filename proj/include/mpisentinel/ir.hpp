#pragma once

// In-memory model of a textual LLVM IR compilation unit.
//
// The parser understands the subset of the grammar needed to recover
// instructions, their operands and the control-flow structure. Opcodes it has
// no dedicated rule for are still parsed generically as (opcode, type,
// operands), so newer IR degrades gracefully instead of being rejected.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mpisentinel::ir {

enum class OperandKind { LocalValue, GlobalValue, Constant, Label, FunctionRef };

std::string_view to_string(OperandKind kind);

struct Operand {
    OperandKind kind = OperandKind::Constant;
    /// "%x" / "@g" for identifiers, the block label (no sigil) for labels,
    /// and the literal text for constants.
    std::string token;

    friend bool operator==(const Operand&, const Operand&) = default;
};

struct Instruction {
    std::optional<std::string> result_id;
    std::string opcode;
    std::string type_str = "void";
    std::vector<Operand> operands;
    std::optional<std::string> call_target;
    /// Metadata-free source text; only used by render().
    std::string text;

    bool is_terminator() const;

    friend bool operator==(const Instruction& a, const Instruction& b) {
        return a.result_id == b.result_id && a.opcode == b.opcode && a.type_str == b.type_str &&
               a.operands == b.operands && a.call_target == b.call_target;
    }
};

struct Block {
    std::string label;
    std::vector<Instruction> instructions;

    friend bool operator==(const Block&, const Block&) = default;
};

struct Param {
    std::string id;
    std::string type_str;

    friend bool operator==(const Param&, const Param&) = default;
};

struct Function {
    std::string name;
    std::string return_type = "void";
    std::vector<Param> params;
    std::vector<Block> blocks;
    bool is_declaration = false;

    std::size_t instruction_count() const;
    /// Index of the block with `label`, if any.
    std::optional<std::size_t> block_index(std::string_view label) const;

    friend bool operator==(const Function&, const Function&) = default;
};

struct GlobalDecl {
    std::string id;
    std::string type_str;

    friend bool operator==(const GlobalDecl&, const GlobalDecl&) = default;
};

struct Module {
    std::string name;
    std::vector<Function> functions;
    std::vector<GlobalDecl> global_constants;
    /// Names of "%T = type ..." definitions, sorted.
    std::vector<std::string> named_types;

    std::size_t instruction_count() const;
    const Function* find_function(std::string_view name) const;

    friend bool operator==(const Module&, const Module&) = default;
};

struct TokenTriple {
    std::string opcode_token;
    std::string type_token;
    std::vector<std::string> arg_tokens;

    friend bool operator==(const TokenTriple&, const TokenTriple&) = default;
};

struct UseSite {
    std::size_t block_index = 0;
    std::size_t instr_index = 0;

    friend auto operator<=>(const UseSite&, const UseSite&) = default;
};

using DefUseMap = std::map<std::string, std::vector<UseSite>>;

/// Throws MalformedIr on structurally invalid input.
Module parse_ir(std::string_view text, std::string module_name = {});
Module parse_ir_file(const std::string& path);

/// Maps an LLVM type string onto one of the canonical classes
/// intTy, floatTy, ptrTy, vecTy, aggTy, void, labelTy, otherTy.
std::string canonical_type(std::string_view type_str);

TokenTriple token_triple(const Instruction& instr);

/// Throws UndefinedLocal when a local operand has no definition.
DefUseMap def_use_map(const Function& fn);

/// CFG successors, keyed by block label, in terminator operand order.
std::map<std::string, std::vector<std::string>> successor_map(const Function& fn);

/// Debug pretty-printer. The output re-parses to a structurally equal module;
/// it makes no compatibility promise beyond that.
std::string render(const Module& module);

}  // namespace mpisentinel::ir
