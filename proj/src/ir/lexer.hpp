#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mpisentinel::ir::detail {

enum class TokKind {
    Word,        // keywords, type names, numbers-as-words are never produced
    Number,
    LocalId,     // %x
    GlobalId,    // @x
    MetaId,      // !x, !0, !{ is emitted as MetaId "!" followed by '{'
    AttrGroup,   // #0
    String,      // "..." (text keeps the quotes)
    CString,     // c"..."
    LabelDef,    // name: at statement start (text without the colon)
    Punct,       // single character ( ) [ ] { } < > , = * : x
    Newline,
};

struct Token {
    TokKind kind;
    std::string text;
    std::size_t line;

    bool is(TokKind k, std::string_view t) const { return kind == k && text == t; }
    bool punct(char c) const { return kind == TokKind::Punct && text.size() == 1 && text[0] == c; }
    bool word(std::string_view t) const { return kind == TokKind::Word && text == t; }
};

/// Splits IR text into tokens. Comments are dropped; line breaks are kept as
/// Newline tokens so callers can form statements.
std::vector<Token> lex(std::string_view text);

}  // namespace mpisentinel::ir::detail
