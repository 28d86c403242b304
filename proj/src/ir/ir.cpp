#include <algorithm>
#include <cctype>
#include <unordered_set>

#include "mpisentinel/error.hpp"
#include "mpisentinel/ir.hpp"

namespace mpisentinel::ir {

std::string_view to_string(OperandKind kind) {
    switch (kind) {
        case OperandKind::LocalValue: return "LocalValue";
        case OperandKind::GlobalValue: return "GlobalValue";
        case OperandKind::Constant: return "Constant";
        case OperandKind::Label: return "Label";
        case OperandKind::FunctionRef: return "FunctionRef";
    }
    return "Constant";
}

bool Instruction::is_terminator() const {
    static const std::unordered_set<std::string_view> terminators = {
        "ret", "br", "switch", "indirectbr", "invoke", "callbr", "resume", "unreachable",
        "cleanupret", "catchret", "catchswitch"};
    return terminators.count(opcode) > 0;
}

std::size_t Function::instruction_count() const {
    std::size_t n = 0;
    for (const Block& b : blocks) n += b.instructions.size();
    return n;
}

std::optional<std::size_t> Function::block_index(std::string_view label) const {
    for (std::size_t i = 0; i < blocks.size(); ++i)
        if (blocks[i].label == label) return i;
    return std::nullopt;
}

std::size_t Module::instruction_count() const {
    std::size_t n = 0;
    for (const Function& f : functions) n += f.instruction_count();
    return n;
}

const Function* Module::find_function(std::string_view fn_name) const {
    for (const Function& f : functions)
        if (f.name == fn_name) return &f;
    return nullptr;
}

std::string canonical_type(std::string_view t) {
    while (!t.empty() && t.back() == ' ') t.remove_suffix(1);
    if (t.empty()) return "otherTy";
    if (t == "void") return "void";
    if (t.back() == '*' || t.substr(0, 3) == "ptr") return "ptrTy";
    if (t.find('(') != std::string_view::npos) return "otherTy";
    if (t.size() > 1 && t[0] == 'i' &&
        std::all_of(t.begin() + 1, t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        return "intTy";
    static const std::unordered_set<std::string_view> floats = {
        "half", "bfloat", "float", "double", "fp128", "x86_fp80", "ppc_fp128"};
    if (floats.count(t)) return "floatTy";
    if (t.substr(0, 2) == "<{" || (t.size() > 2 && t[0] == '<' && t[2] == '{')) return "aggTy";
    if (t[0] == '<') return "vecTy";
    if (t[0] == '[' || t[0] == '{' || t[0] == '%') return "aggTy";
    if (t == "label") return "labelTy";
    return "otherTy";
}

TokenTriple token_triple(const Instruction& instr) {
    TokenTriple triple;
    triple.opcode_token = instr.opcode;
    triple.type_token = canonical_type(instr.type_str);
    for (const Operand& op : instr.operands) {
        if (op.kind == OperandKind::Label) continue;
        triple.arg_tokens.emplace_back(to_string(op.kind));
    }
    return triple;
}

DefUseMap def_use_map(const Function& fn) {
    DefUseMap uses;
    for (const Param& p : fn.params) uses.try_emplace(p.id);
    for (const Block& b : fn.blocks)
        for (const Instruction& in : b.instructions)
            if (in.result_id) uses.try_emplace(*in.result_id);
    for (std::size_t bi = 0; bi < fn.blocks.size(); ++bi) {
        const auto& instrs = fn.blocks[bi].instructions;
        for (std::size_t ii = 0; ii < instrs.size(); ++ii) {
            for (const Operand& op : instrs[ii].operands) {
                if (op.kind != OperandKind::LocalValue) continue;
                auto it = uses.find(op.token);
                if (it == uses.end()) throw UndefinedLocal(op.token);
                it->second.push_back(UseSite{bi, ii});
            }
        }
    }
    return uses;
}

std::map<std::string, std::vector<std::string>> successor_map(const Function& fn) {
    std::map<std::string, std::vector<std::string>> succ;
    for (const Block& b : fn.blocks) {
        auto& out = succ[b.label];
        if (b.instructions.empty()) continue;
        for (const Operand& op : b.instructions.back().operands)
            if (op.kind == OperandKind::Label) out.push_back(op.token);
    }
    return succ;
}

namespace {

std::string global_ref(std::string_view name) {
    const bool plain = std::all_of(name.begin(), name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '$' || c == '-';
    });
    return plain ? "@" + std::string(name) : "@\"" + std::string(name) + "\"";
}

}  // namespace

std::string render(const Module& module) {
    std::string out;
    for (const std::string& t : module.named_types) out += t + " = type opaque\n";
    for (const GlobalDecl& g : module.global_constants) out += g.id + " = external global " + g.type_str + "\n";
    for (const Function& fn : module.functions) {
        out += fn.is_declaration ? "declare " : "define ";
        out += fn.return_type + " " + global_ref(fn.name) + "(";
        for (std::size_t i = 0; i < fn.params.size(); ++i) {
            if (i) out += ", ";
            out += fn.params[i].type_str;
            if (!fn.params[i].id.empty()) out += " " + fn.params[i].id;
        }
        out += ")";
        if (fn.is_declaration) {
            out += "\n";
            continue;
        }
        out += " {\n";
        for (const Block& b : fn.blocks) {
            out += b.label + ":\n";
            for (const Instruction& in : b.instructions) out += "  " + in.text + "\n";
        }
        out += "}\n";
    }
    return out;
}

}  // namespace mpisentinel::ir
