#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "lexer.hpp"
#include "mpisentinel/error.hpp"
#include "mpisentinel/ir.hpp"

namespace mpisentinel::ir {

using detail::lex;
using detail::TokKind;
using detail::Token;

namespace {

const std::unordered_set<std::string_view> kTypeWords = {
    "void", "half", "bfloat", "float", "double", "fp128", "x86_fp80", "ppc_fp128", "x86_mmx",
    "x86_amx", "label", "metadata", "token", "ptr", "opaque"};

const std::unordered_set<std::string_view> kConstantWords = {
    "true", "false", "null", "none", "undef", "poison", "zeroinitializer"};

const std::unordered_set<std::string_view> kConstExprWords = {
    "getelementptr", "bitcast", "ptrtoint", "inttoptr", "addrspacecast", "trunc", "zext", "sext",
    "fptrunc", "fpext", "fptoui", "fptosi", "uitofp", "sitofp", "add", "sub", "mul", "shl",
    "lshr", "ashr", "udiv", "sdiv", "xor", "and", "or", "icmp", "fcmp", "select",
    "extractelement", "insertelement", "shufflevector", "blockaddress", "dso_local_equivalent",
    "no_cfi", "ptrauth"};

const std::unordered_set<std::string_view> kCastOps = {
    "trunc", "zext", "sext", "fptrunc", "fpext", "fptoui", "fptosi", "uitofp", "sitofp",
    "ptrtoint", "inttoptr", "bitcast", "addrspacecast"};

const std::unordered_set<std::string_view> kValuelessOps = {
    "ret", "br", "switch", "indirectbr", "unreachable", "store", "fence", "resume"};

// Every opcode the grammar knows about. Only used to reject instructions
// that appear at module scope.
const std::unordered_set<std::string_view> kKnownOpcodes = {
    "ret", "br", "switch", "indirectbr", "invoke", "callbr", "resume", "unreachable",
    "cleanupret", "catchret", "catchswitch", "fneg", "add", "fadd", "sub", "fsub", "mul", "fmul",
    "udiv", "sdiv", "fdiv", "urem", "srem", "frem", "shl", "lshr", "ashr", "and", "or", "xor",
    "extractelement", "insertelement", "shufflevector", "extractvalue", "insertvalue", "alloca",
    "load", "store", "fence", "cmpxchg", "atomicrmw", "getelementptr", "trunc", "zext", "sext",
    "fptrunc", "fpext", "fptoui", "fptosi", "uitofp", "sitofp", "ptrtoint", "inttoptr",
    "bitcast", "addrspacecast", "icmp", "fcmp", "phi", "select", "freeze", "call", "va_arg",
    "landingpad", "catchpad", "cleanuppad", "tail", "musttail", "notail"};

bool is_int_type_word(std::string_view w) {
    return w.size() > 1 && w[0] == 'i' &&
           std::all_of(w.begin() + 1, w.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

std::string strip_sigil(std::string_view id) {
    std::string_view s = id.substr(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return std::string(s);
}

std::string join_tokens(const std::vector<Token>& toks, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        const Token& t = toks[i];
        const bool tight_before = t.punct(',') || t.punct('*') || t.punct(')') || t.punct(']');
        const bool prev_open = i > begin && (toks[i - 1].punct('(') || toks[i - 1].punct('['));
        if (!out.empty() && !tight_before && !prev_open) out += ' ';
        out += t.text;
    }
    return out;
}

using Range = std::pair<std::size_t, std::size_t>;

/// Cursor over a half-open slice of a statement's tokens.
class Cursor {
public:
    Cursor(const std::vector<Token>& toks, std::size_t begin, std::size_t end,
           const std::set<std::string>& named_types)
        : toks_(toks), pos_(begin), end_(end), named_types_(named_types) {}

    bool done() const { return pos_ >= end_; }
    const Token* peek(std::size_t ahead = 0) const {
        return pos_ + ahead < end_ ? &toks_[pos_ + ahead] : nullptr;
    }
    const Token& take() { return toks_[pos_++]; }
    std::size_t pos() const { return pos_; }
    std::size_t end() const { return end_; }
    void seek(std::size_t p) { pos_ = p; }

    bool at_punct(char c) const { return !done() && toks_[pos_].punct(c); }
    bool at_word(std::string_view w) const { return !done() && toks_[pos_].word(w); }

    /// Skips a balanced group starting at the current opening bracket.
    void skip_group() {
        int depth = 0;
        do {
            const Token& t = take();
            if (t.punct('(') || t.punct('[') || t.punct('{') || t.punct('<')) ++depth;
            if (t.punct(')') || t.punct(']') || t.punct('}') || t.punct('>')) --depth;
        } while (depth > 0 && !done());
    }

    bool type_start() const {
        const Token* t = peek();
        if (!t) return false;
        if (t->kind == TokKind::Word)
            return kTypeWords.count(t->text) || is_int_type_word(t->text) || t->text == "target";
        if (t->kind == TokKind::LocalId) return named_types_.count(t->text) > 0;
        return t->punct('[') || t->punct('{') || t->punct('<');
    }

    std::optional<std::string> parse_type(bool allow_fn = true) {
        if (!type_start()) return std::nullopt;
        const std::size_t start = pos_;
        const Token& t = take();
        if (t.punct('[') || t.punct('<') || t.punct('{')) {
            seek(start);
            skip_group();
            // Packed struct: "<{ ... }>" parses as '<' '{' ... '}' '>'.
        } else if (t.word("target") && at_punct('(')) {
            skip_group();
        } else if (t.word("ptr") && at_word("addrspace")) {
            take();
            if (at_punct('(')) skip_group();
        }
        for (;;) {
            if (at_punct('*')) {
                take();
            } else if (at_word("addrspace") && peek(1) && peek(1)->punct('(')) {
                take();
                skip_group();
            } else if (allow_fn && at_punct('(')) {
                skip_group();
            } else {
                break;
            }
        }
        return join_tokens(toks_, start, pos_);
    }

    /// Skips parameter/return attributes (noundef, align 4, byval(T), ...).
    void skip_attributes() {
        while (!done() && peek()->kind == TokKind::Word) {
            const std::string& w = peek()->text;
            if (kConstantWords.count(w) || kConstExprWords.count(w) || w == "asm") break;
            take();
            if (at_punct('(')) skip_group();
            if ((w == "align" || w == "cc" || w == "dereferenceable" || w == "alignstack") && !done() &&
                peek()->kind == TokKind::Number)
                take();
        }
        while (!done() && peek()->kind == TokKind::AttrGroup) take();
    }

    std::optional<Operand> parse_value() {
        if (done()) return std::nullopt;
        const std::size_t start = pos_;
        const Token& t = *peek();
        switch (t.kind) {
            case TokKind::LocalId:
                take();
                return Operand{OperandKind::LocalValue, t.text};
            case TokKind::GlobalId:
                take();
                return Operand{OperandKind::GlobalValue, t.text};
            case TokKind::Number:
            case TokKind::CString:
                take();
                return Operand{OperandKind::Constant, t.text};
            case TokKind::MetaId:
                take();
                if (at_punct('(') || at_punct('{')) skip_group();
                return Operand{OperandKind::Constant, join_tokens(toks_, start, pos_)};
            case TokKind::Punct:
                if (t.punct('[') || t.punct('{') || t.punct('<')) {
                    skip_group();
                    if (at_punct('>')) take();
                    return Operand{OperandKind::Constant, join_tokens(toks_, start, pos_)};
                }
                return std::nullopt;
            case TokKind::Word:
                if (kConstantWords.count(t.text)) {
                    take();
                    return Operand{OperandKind::Constant, t.text};
                }
                if (t.text == "asm") {
                    take();
                    while (!done() && (peek()->kind == TokKind::Word || peek()->kind == TokKind::String ||
                                       peek()->punct(','))) {
                        // Stop before the argument list.
                        take();
                    }
                    return Operand{OperandKind::Constant, "asm"};
                }
                if (kConstExprWords.count(t.text)) {
                    take();
                    while (!done() && peek()->kind == TokKind::Word) take();
                    if (!at_punct('(')) {
                        seek(start);
                        return std::nullopt;
                    }
                    skip_group();
                    return Operand{OperandKind::Constant, join_tokens(toks_, start, pos_)};
                }
                return std::nullopt;
            default:
                return std::nullopt;
        }
    }

    /// "type [attrs] value" with the type optional.
    std::optional<Operand> parse_typed_value() {
        const std::size_t start = pos_;
        if (parse_type()) {
            skip_attributes();
            // "metadata <type> <value>" in debug intrinsics.
            if (type_start()) {
                parse_type();
                skip_attributes();
            }
            if (auto v = parse_value()) return v;
            seek(start);
        }
        return parse_value();
    }

    /// Splits [pos, end) at depth-0 commas.
    std::vector<Range> split_commas() const {
        std::vector<Range> parts;
        int depth = 0;
        std::size_t part_start = pos_;
        for (std::size_t i = pos_; i < end_; ++i) {
            const Token& t = toks_[i];
            if (t.punct('(') || t.punct('[') || t.punct('{') || t.punct('<')) ++depth;
            if (t.punct(')') || t.punct(']') || t.punct('}') || t.punct('>')) --depth;
            if (depth == 0 && t.punct(',')) {
                parts.emplace_back(part_start, i);
                part_start = i + 1;
            }
        }
        if (part_start < end_) parts.emplace_back(part_start, end_);
        return parts;
    }

    Cursor sub(Range r) const { return Cursor(toks_, r.first, r.second, named_types_); }

private:
    const std::vector<Token>& toks_;
    std::size_t pos_;
    std::size_t end_;
    const std::set<std::string>& named_types_;
};

/// Index of the bracket that closes the group opened at `open`.
std::size_t matching_close(const std::vector<Token>& toks, std::size_t open, std::size_t end) {
    int depth = 0;
    for (std::size_t i = open; i < end; ++i) {
        const Token& t = toks[i];
        if (t.punct('(') || t.punct('[') || t.punct('{')) ++depth;
        if (t.punct(')') || t.punct(']') || t.punct('}')) {
            --depth;
            if (depth == 0) return i;
        }
    }
    return end;
}

struct Statement {
    std::vector<Token> toks;
    std::size_t line = 0;
};

class Parser {
public:
    Parser(std::string_view text, std::string name) : toks_(lex(text)) { module_.name = std::move(name); }

    Module run() {
        collect_named_types();
        module_.named_types.assign(named_types_.begin(), named_types_.end());
        while (pos_ < toks_.size()) {
            skip_newlines();
            if (pos_ >= toks_.size()) break;
            const Token& t = toks_[pos_];
            if (t.word("define")) {
                parse_define();
            } else if (t.word("declare")) {
                Statement s = statement(true);
                Function fn = parse_signature(s, 0, s.toks.size(), true);
                add_function(std::move(fn), s.line);
            } else if (t.kind == TokKind::GlobalId && next_is('=')) {
                parse_global(statement(true));
            } else if (t.kind == TokKind::LocalId && next_is('=')) {
                if (pos_ + 2 < toks_.size() && toks_[pos_ + 2].word("type")) {
                    statement(true);
                } else {
                    throw MalformedIr(t.line, "instruction outside a function body");
                }
            } else if (t.kind == TokKind::LabelDef) {
                throw MalformedIr(t.line, "block label '" + t.text + "' outside a function body");
            } else if (t.punct('}')) {
                throw MalformedIr(t.line, "unbalanced '}' at module scope");
            } else if (t.kind == TokKind::Word && kKnownOpcodes.count(t.text)) {
                throw MalformedIr(t.line, "instruction '" + t.text + "' outside a block");
            } else {
                statement(true);  // metadata, attributes, target triple, comdats, ...
            }
        }
        resolve_function_refs();
        return std::move(module_);
    }

private:
    bool next_is(char c) const { return pos_ + 1 < toks_.size() && toks_[pos_ + 1].punct(c); }

    void skip_newlines() {
        while (pos_ < toks_.size() && toks_[pos_].kind == TokKind::Newline) ++pos_;
    }

    void collect_named_types() {
        bool at_start = true;
        for (std::size_t i = 0; i < toks_.size(); ++i) {
            const Token& t = toks_[i];
            if (t.kind == TokKind::Newline) {
                at_start = true;
                continue;
            }
            if (at_start && t.kind == TokKind::LocalId && i + 2 < toks_.size() && toks_[i + 1].punct('=') &&
                toks_[i + 2].word("type")) {
                named_types_.insert(t.text);
            }
            at_start = false;
        }
    }

    /// Consumes tokens up to a newline at bracket depth 0.
    Statement statement(bool count_braces) {
        Statement s;
        s.line = toks_[pos_].line;
        int depth = 0;
        while (pos_ < toks_.size()) {
            const Token& t = toks_[pos_];
            if (t.kind == TokKind::Newline && depth <= 0) break;
            ++pos_;
            if (t.kind == TokKind::Newline) continue;
            if (t.punct('(') || t.punct('[') || (count_braces && t.punct('{'))) ++depth;
            if (t.punct(')') || t.punct(']') || (count_braces && t.punct('}'))) --depth;
            s.toks.push_back(t);
        }
        if (count_braces && depth > 0) throw MalformedIr(s.line, "unbalanced brackets in statement");
        return s;
    }

    void add_function(Function fn, std::size_t line) {
        if (module_.find_function(fn.name)) throw MalformedIr(line, "duplicate function @" + fn.name);
        module_.functions.push_back(std::move(fn));
    }

    void parse_global(const Statement& s) {
        std::size_t i = 2;
        int depth = 0;
        for (; i < s.toks.size(); ++i) {
            const Token& t = s.toks[i];
            if (t.punct('(')) ++depth;
            if (t.punct(')')) --depth;
            if (depth == 0 && (t.word("global") || t.word("constant"))) break;
            if (depth == 0 && (t.word("alias") || t.word("ifunc"))) return;
        }
        if (i >= s.toks.size()) return;
        Cursor c(s.toks, i + 1, s.toks.size(), named_types_);
        auto type = c.parse_type();
        if (!type) throw MalformedIr(s.line, "global " + s.toks[0].text + " lacks a type");
        module_.global_constants.push_back(GlobalDecl{s.toks[0].text, *type});
    }

    /// Parses "define|declare ... <ret> @name(<params>) ..." from toks[begin, end).
    Function parse_signature(const Statement& s, std::size_t begin, std::size_t end, bool declaration) {
        Function fn;
        fn.is_declaration = declaration;
        std::size_t name_at = end;
        for (std::size_t i = begin; i < end; ++i) {
            if (s.toks[i].kind == TokKind::GlobalId && i + 1 < end && s.toks[i + 1].punct('(')) {
                name_at = i;
                break;
            }
        }
        if (name_at == end) throw MalformedIr(s.line, "function header without a name");
        fn.name = strip_sigil(s.toks[name_at].text);

        Cursor ret(s.toks, begin + 1, name_at, named_types_);
        while (!ret.done() && !ret.type_start()) {
            const Token& w = ret.take();
            if (ret.at_punct('(')) ret.skip_group();
            if ((w.word("align") || w.word("cc") || w.word("dereferenceable")) && !ret.done() &&
                ret.peek()->kind == TokKind::Number)
                ret.take();
        }
        if (auto rt = ret.parse_type(false)) fn.return_type = *rt;

        const std::size_t open = name_at + 1;
        const std::size_t close = matching_close(s.toks, open, end);
        if (close >= end) throw MalformedIr(s.line, "unterminated parameter list of @" + fn.name);
        Cursor params(s.toks, open + 1, close, named_types_);
        for (Range r : params.split_commas()) {
            Cursor p = params.sub(r);
            if (p.at_punct('.') || (p.peek() && p.peek()->text == "...")) continue;
            auto type = p.parse_type();
            if (!type) continue;
            p.skip_attributes();
            Param param{"", *type};
            if (!p.done() && p.peek()->kind == TokKind::LocalId) {
                param.id = p.take().text;
                note_numbered(param.id);
            } else if (!declaration) {
                param.id = "%" + std::to_string(next_unnamed_++);
            }
            fn.params.push_back(std::move(param));
        }
        return fn;
    }

    void note_numbered(const std::string& id) {
        if (id.size() > 1 && all_digits(std::string_view(id).substr(1)))
            next_unnamed_ = std::stoul(id.substr(1)) + 1;
    }

    void parse_define() {
        const std::size_t line = toks_[pos_].line;
        // Header: up to the first depth-0 '{' after the parameter list.
        Statement header;
        header.line = line;
        int depth = 0;
        bool params_closed = false;
        bool seen_name = false;
        for (;;) {
            if (pos_ >= toks_.size()) throw MalformedIr(line, "function header without a body");
            const Token& t = toks_[pos_++];
            if (t.kind == TokKind::Newline) continue;
            if (params_closed && depth == 0 && t.punct('{')) break;
            if (t.kind == TokKind::GlobalId && depth == 0 && !seen_name) seen_name = true;
            if (t.punct('(') || t.punct('[') || t.punct('{')) ++depth;
            if (t.punct(')') || t.punct(']') || t.punct('}')) {
                --depth;
                if (depth == 0 && seen_name && t.punct(')')) params_closed = true;
            }
            header.toks.push_back(t);
        }
        next_unnamed_ = 0;
        Function fn = parse_signature(header, 0, header.toks.size(), false);
        parse_body(fn, line);
        if (fn.blocks.empty()) throw MalformedIr(line, "function @" + fn.name + " has no blocks");
        validate_targets(fn);
        add_function(std::move(fn), line);
    }

    void parse_body(Function& fn, std::size_t header_line) {
        bool block_open = false;  // current block exists and lacks a terminator
        std::size_t block_line = header_line;
        auto start_block = [&](std::string label, std::size_t line) {
            for (const Block& b : fn.blocks)
                if (b.label == label) throw MalformedIr(line, "duplicate block label '" + label + "'");
            fn.blocks.push_back(Block{std::move(label), {}});
            block_open = true;
            block_line = line;
        };
        for (;;) {
            skip_newlines();
            if (pos_ >= toks_.size()) throw MalformedIr(header_line, "unbalanced braces: function @" + fn.name + " is not closed");
            const Token& t = toks_[pos_];
            if (t.punct('}')) {
                ++pos_;
                break;
            }
            if (t.kind == TokKind::LabelDef) {
                if (block_open)
                    throw MalformedIr(t.line, "block '" + fn.blocks.back().label + "' lacks a terminator");
                ++pos_;
                if (all_digits(t.text)) next_unnamed_ = std::stoul(t.text) + 1;
                start_block(t.text, t.line);
                continue;
            }
            Statement s = body_statement();
            if (s.toks.empty()) continue;
            if (!block_open) {
                // Implicit entry block, or an unlabeled block after a terminator.
                start_block(std::to_string(next_unnamed_++), s.line);
            }
            Instruction instr = parse_instruction(s);
            const bool term = instr.is_terminator();
            fn.blocks.back().instructions.push_back(std::move(instr));
            instr_lines_[&fn.blocks.back() - fn.blocks.data()].push_back(s.line);
            if (term) block_open = false;
        }
        if (block_open)
            throw MalformedIr(block_line, "block '" + fn.blocks.back().label + "' lacks a terminator");
    }

    /// One instruction: up to a newline, a depth-0 '}' or a label.
    Statement body_statement() {
        Statement s;
        s.line = toks_[pos_].line;
        int depth = 0;
        while (pos_ < toks_.size()) {
            const Token& t = toks_[pos_];
            if (depth <= 0 && (t.kind == TokKind::Newline || t.punct('}') || t.kind == TokKind::LabelDef)) break;
            ++pos_;
            if (t.kind == TokKind::Newline) continue;
            if (t.punct('(') || t.punct('[') || t.punct('{')) ++depth;
            if (t.punct(')') || t.punct(']') || t.punct('}')) --depth;
            s.toks.push_back(t);
        }
        // Drop metadata attachments (", !dbg !12") and anything after them.
        int d = 0;
        for (std::size_t i = 0; i < s.toks.size(); ++i) {
            const Token& t = s.toks[i];
            if (t.punct('(') || t.punct('[') || t.punct('{')) ++d;
            if (t.punct(')') || t.punct(']') || t.punct('}')) --d;
            if (d == 0 && t.punct(',') && i + 1 < s.toks.size() && s.toks[i + 1].kind == TokKind::MetaId) {
                s.toks.resize(i);
                break;
            }
        }
        return s;
    }

    Instruction parse_instruction(const Statement& s) {
        const auto& toks = s.toks;
        Instruction instr;
        instr.text = join_tokens(toks, 0, toks.size());
        std::size_t i = 0;
        if (toks.size() >= 2 && toks[0].kind == TokKind::LocalId && toks[1].punct('=')) {
            instr.result_id = toks[0].text;
            note_numbered(toks[0].text);
            i = 2;
        }
        if (i < toks.size() && (toks[i].word("tail") || toks[i].word("musttail") || toks[i].word("notail"))) ++i;
        if (i >= toks.size() || toks[i].kind != TokKind::Word)
            throw MalformedIr(s.line, "expected an opcode");
        instr.opcode = toks[i].text;
        Cursor c(toks, i + 1, toks.size(), named_types_);
        const std::string& op = instr.opcode;

        std::optional<std::string> type;
        if (op == "call" || op == "invoke" || op == "callbr") {
            type = parse_call(c, instr, s.line);
        } else if (op == "phi") {
            type = parse_phi(c, instr);
        } else if (op == "switch") {
            parse_switch(c, instr);
        } else {
            type = parse_generic(c, instr);
        }

        if (kValuelessOps.count(op)) {
            instr.type_str = "void";
        } else if (op == "call" || op == "invoke" || op == "callbr") {
            instr.type_str = type.value_or("void");
        } else if (!instr.result_id) {
            instr.type_str = "void";
        } else {
            instr.type_str = type.value_or("opaque");
        }
        if (instr.type_str != "void" && !instr.result_id) {
            instr.result_id = "%" + std::to_string(next_unnamed_++);
        }
        if (instr.type_str == "void" && instr.result_id) {
            throw MalformedIr(s.line, "void instruction '" + op + "' cannot define " + *instr.result_id);
        }
        return instr;
    }

    std::optional<std::string> parse_call(Cursor& c, Instruction& instr, std::size_t line) {
        while (!c.done() && !c.type_start()) {
            const Token& w = c.take();
            if (c.at_punct('(')) c.skip_group();
            if ((w.word("align") || w.word("cc") || w.word("dereferenceable")) && !c.done() &&
                c.peek()->kind == TokKind::Number)
                c.take();
        }
        auto ret = c.parse_type(false);
        if (!ret) throw MalformedIr(line, "call without a return type");
        if (c.at_punct('(')) {
            c.skip_group();
            while (c.at_punct('*')) c.take();
        }
        auto callee = c.parse_value();
        if (!callee) throw MalformedIr(line, "call without a callee");
        if (callee->kind == OperandKind::GlobalValue) {
            callee->kind = OperandKind::FunctionRef;
            instr.call_target = strip_sigil(callee->token);
        } else {
            instr.call_target = callee->token;
        }
        instr.operands.push_back(*callee);
        if (!c.at_punct('(')) throw MalformedIr(line, "call without an argument list");
        const std::size_t open = c.pos();
        c.skip_group();
        const std::size_t after = c.pos();
        Cursor args(c.sub({open + 1, after - 1}));
        for (Range r : args.split_commas()) {
            Cursor a = args.sub(r);
            if (auto v = a.parse_typed_value()) instr.operands.push_back(*v);
        }
        // invoke: "to label %normal unwind label %unwind"
        while (!c.done()) {
            if (c.at_word("label") && c.peek(1) && c.peek(1)->kind == TokKind::LocalId) {
                c.take();
                instr.operands.push_back(Operand{OperandKind::Label, strip_sigil(c.take().text)});
            } else {
                c.take();
            }
        }
        return ret;
    }

    std::optional<std::string> parse_phi(Cursor& c, Instruction& instr) {
        while (!c.done() && !c.type_start()) c.take();  // fast-math flags
        auto type = c.parse_type();
        for (Range r : c.split_commas()) {
            Cursor pair = c.sub(r);
            if (!pair.at_punct('[')) continue;
            pair.take();
            if (auto v = pair.parse_value()) instr.operands.push_back(*v);
            if (pair.at_punct(',')) pair.take();
            if (!pair.done() && pair.peek()->kind == TokKind::LocalId)
                instr.operands.push_back(Operand{OperandKind::Label, strip_sigil(pair.take().text)});
        }
        return type;
    }

    void parse_switch(Cursor& c, Instruction& instr) {
        if (auto v = c.parse_typed_value()) instr.operands.push_back(*v);
        while (!c.done()) {
            if (c.at_word("label") && c.peek(1) && c.peek(1)->kind == TokKind::LocalId) {
                c.take();
                instr.operands.push_back(Operand{OperandKind::Label, strip_sigil(c.take().text)});
            } else if (c.at_punct('[') || c.at_punct(']') || c.at_punct(',')) {
                c.take();
            } else if (c.type_start()) {
                if (auto v = c.parse_typed_value()) instr.operands.push_back(*v);
                else c.take();
            } else {
                c.take();
            }
        }
    }

    std::optional<std::string> parse_generic(Cursor& c, Instruction& instr) {
        const std::string& op = instr.opcode;
        // Leading modifiers: flags, predicates, orderings, atomicrmw operations.
        while (!c.done() && c.peek()->kind == TokKind::Word && !c.type_start() &&
               !kConstantWords.count(c.peek()->text) && !c.at_word("label") &&
               !(c.peek(1) && c.peek(1)->punct('(')))
            c.take();

        std::optional<std::string> result_type;
        std::vector<std::optional<std::string>> elem_types;
        auto parts = c.split_commas();
        std::size_t max_value_elems = parts.size();
        if (op == "extractvalue") max_value_elems = 1;
        if (op == "insertvalue") max_value_elems = 2;

        for (std::size_t k = 0; k < parts.size(); ++k) {
            Cursor e = c.sub(parts[k]);
            if (e.at_word("label") && e.peek(1) && e.peek(1)->kind == TokKind::LocalId) {
                e.take();
                instr.operands.push_back(Operand{OperandKind::Label, strip_sigil(e.take().text)});
                elem_types.emplace_back();
                continue;
            }
            const std::size_t start = e.pos();
            auto t = e.parse_type();
            elem_types.push_back(t);
            if (k >= max_value_elems) continue;
            std::optional<Operand> v;
            if (t) {
                e.skip_attributes();
                v = e.parse_value();
            } else {
                e.seek(start);
                v = e.parse_value();
            }
            if (v) instr.operands.push_back(*v);
            if (kCastOps.count(op)) {
                while (!e.done() && !e.at_word("to")) e.take();
                if (e.at_word("to")) {
                    e.take();
                    result_type = e.parse_type();
                }
            }
        }

        if (kCastOps.count(op)) return result_type;
        if (op == "icmp" || op == "fcmp") return std::string("i1");
        if (op == "alloca" || op == "getelementptr") return std::string("ptr");
        if (op == "select" || op == "atomicrmw") {
            if (elem_types.size() >= 2 && elem_types[1]) return elem_types[1];
            return std::nullopt;
        }
        if (op == "cmpxchg") {
            if (elem_types.size() >= 2 && elem_types[1]) return "{ " + *elem_types[1] + ", i1 }";
            return std::nullopt;
        }
        if (!elem_types.empty()) return elem_types.front();
        return std::nullopt;
    }

    void validate_targets(const Function& fn) {
        for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
            const auto& lines = instr_lines_[b];
            for (std::size_t i = 0; i < fn.blocks[b].instructions.size(); ++i) {
                for (const Operand& op : fn.blocks[b].instructions[i].operands) {
                    if (op.kind == OperandKind::Label && !fn.block_index(op.token)) {
                        throw MalformedIr(i < lines.size() ? lines[i] : 0,
                                          "branch to undefined block '" + op.token + "' in @" + fn.name);
                    }
                }
            }
        }
        instr_lines_.clear();
    }

    void resolve_function_refs() {
        std::set<std::string> names;
        for (const Function& f : module_.functions) names.insert("@" + f.name);
        for (Function& f : module_.functions)
            for (Block& b : f.blocks)
                for (Instruction& in : b.instructions)
                    for (Operand& op : in.operands)
                        if (op.kind == OperandKind::GlobalValue && names.count(op.token))
                            op.kind = OperandKind::FunctionRef;
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    std::set<std::string> named_types_;
    std::size_t next_unnamed_ = 0;
    std::map<std::size_t, std::vector<std::size_t>> instr_lines_;
    Module module_;
};

}  // namespace

Module parse_ir(std::string_view text, std::string module_name) {
    return Parser(text, std::move(module_name)).run();
}

Module parse_ir_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_ir(ss.str(), path);
}

}  // namespace mpisentinel::ir
