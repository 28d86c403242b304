#include "lexer.hpp"

#include <cctype>

namespace mpisentinel::ir::detail {

namespace {

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '$' || c == '-';
}

bool word_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$';
}

class Lexer {
public:
    explicit Lexer(std::string_view text) : src_(text) {}

    std::vector<Token> run() {
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (c == '\n') {
                emit(TokKind::Newline, "\n");
                ++pos_;
                ++line_;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
                ++pos_;
            } else if (c == ';') {
                comment();
            } else if (c == '%' || c == '@') {
                identifier(c == '%' ? TokKind::LocalId : TokKind::GlobalId);
            } else if (c == '!') {
                metadata();
            } else if (c == '#' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
                std::size_t end = pos_ + 1;
                while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
                emit(TokKind::AttrGroup, std::string(src_.substr(pos_, end - pos_)));
                pos_ = end;
            } else if (c == '"') {
                std::string s = quoted();
                if (peek_is(':')) {
                    ++pos_;
                    emit(TokKind::LabelDef, s.size() >= 2 ? s.substr(1, s.size() - 2) : s);
                } else {
                    emit(TokKind::String, s);
                }
            } else if (c == 'c' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '"') {
                ++pos_;
                emit(TokKind::CString, "c" + quoted());
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       ((c == '-' || c == '+') && pos_ + 1 < src_.size() &&
                        std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                number();
            } else if (word_start(c)) {
                std::size_t end = pos_ + 1;
                while (end < src_.size() && ident_char(src_[end])) ++end;
                std::string w(src_.substr(pos_, end - pos_));
                pos_ = end;
                if (peek_is(':') && !next_is_colon_colon()) {
                    ++pos_;
                    emit(TokKind::LabelDef, std::move(w));
                } else {
                    emit(TokKind::Word, std::move(w));
                }
            } else if (c == '.' && src_.substr(pos_, 3) == "...") {
                emit(TokKind::Punct, "...");
                pos_ += 3;
            } else {
                emit(TokKind::Punct, std::string(1, c));
                ++pos_;
            }
        }
        return std::move(out_);
    }

private:
    void emit(TokKind kind, std::string text) { out_.push_back(Token{kind, std::move(text), line_}); }

    bool peek_is(char c) const { return pos_ < src_.size() && src_[pos_] == c; }
    bool next_is_colon_colon() const { return pos_ + 1 < src_.size() && src_[pos_ + 1] == ':'; }

    void comment() {
        std::size_t end = src_.find('\n', pos_);
        if (end == std::string_view::npos) end = src_.size();
        std::string_view body = src_.substr(pos_, end - pos_);
        // Older LLVM prints unnamed block labels as "; <label>:N".
        constexpr std::string_view marker = "; <label>:";
        if (body.substr(0, marker.size()) == marker) {
            std::size_t i = marker.size();
            std::size_t j = i;
            while (j < body.size() && std::isdigit(static_cast<unsigned char>(body[j]))) ++j;
            if (j > i) emit(TokKind::LabelDef, std::string(body.substr(i, j - i)));
        }
        pos_ = end;
    }

    std::string quoted() {
        // pos_ at opening quote; returns text including quotes.
        std::size_t end = pos_ + 1;
        while (end < src_.size() && src_[end] != '"') {
            if (src_[end] == '\n') ++line_;
            ++end;
        }
        if (end < src_.size()) ++end;
        std::string s(src_.substr(pos_, end - pos_));
        pos_ = end;
        return s;
    }

    void identifier(TokKind kind) {
        const char sigil = src_[pos_];
        ++pos_;
        if (peek_is('"')) {
            emit(kind, std::string(1, sigil) + quoted());
            return;
        }
        std::size_t end = pos_;
        while (end < src_.size() && ident_char(src_[end])) ++end;
        emit(kind, std::string(1, sigil) + std::string(src_.substr(pos_, end - pos_)));
        pos_ = end;
    }

    void metadata() {
        ++pos_;
        std::size_t end = pos_;
        while (end < src_.size() && ident_char(src_[end])) ++end;
        emit(TokKind::MetaId, "!" + std::string(src_.substr(pos_, end - pos_)));
        pos_ = end;
    }

    void number() {
        std::size_t end = pos_;
        if (src_[end] == '-' || src_[end] == '+') ++end;
        if (src_.substr(end, 2) == "0x") {
            end += 2;
            while (end < src_.size() && std::isalnum(static_cast<unsigned char>(src_[end]))) ++end;
        } else {
            while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
            if (end < src_.size() && src_[end] == '.') {
                ++end;
                while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
            }
            if (end < src_.size() && (src_[end] == 'e' || src_[end] == 'E')) {
                std::size_t k = end + 1;
                if (k < src_.size() && (src_[k] == '-' || src_[k] == '+')) ++k;
                if (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) {
                    end = k;
                    while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end]))) ++end;
                }
            }
        }
        std::string n(src_.substr(pos_, end - pos_));
        pos_ = end;
        if (peek_is(':') && !next_is_colon_colon()) {
            ++pos_;
            emit(TokKind::LabelDef, std::move(n));
        } else {
            emit(TokKind::Number, std::move(n));
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::vector<Token> out_;
};

}  // namespace

std::vector<Token> lex(std::string_view text) { return Lexer(text).run(); }

}  // namespace mpisentinel::ir::detail
