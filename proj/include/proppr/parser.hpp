#pragma once

#include "proppr/program.hpp"
#include "proppr/term.hpp"

#include <cctype>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace proppr {

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int col, const std::string& msg)
        : std::runtime_error("parse error at " + std::to_string(line) + ":" +
                             std::to_string(col) + ": " + msg),
          line_(line), col_(col) {}

    int line() const { return line_; }
    int col() const { return col_; }

private:
    int line_;
    int col_;
};

namespace detail {

enum class Tok { atom, var, quoted, lparen, rparen, comma, period, neck, hash, end };

struct Token {
    Tok kind;
    std::string text;
    int line;
    int col;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_ws();
        int line = line_, col = col_;
        if (pos_ >= src_.size()) return {Tok::end, "", line, col};
        char c = src_[pos_];
        if (c == '(') { advance(); return {Tok::lparen, "(", line, col}; }
        if (c == ')') { advance(); return {Tok::rparen, ")", line, col}; }
        if (c == ',') { advance(); return {Tok::comma, ",", line, col}; }
        if (c == '#') { advance(); return {Tok::hash, "#", line, col}; }
        if (c == ':') {
            if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '-') {
                advance(); advance();
                return {Tok::neck, ":-", line, col};
            }
            throw ParseError(line, col, "stray ':' (expected ':-')");
        }
        if (c == '\'') return quoted(line, col);
        if (is_digit(c)) return number(line, col);
        if (is_ident_start(c)) return identifier(line, col);
        if (c == '.') { advance(); return {Tok::period, ".", line, col}; }
        throw ParseError(line, col, std::string("unexpected character '") + c + "'");
    }

private:
    static bool is_digit(char c) { return c >= '0' && c <= '9'; }
    static bool is_upper(char c) { return (c >= 'A' && c <= 'Z') || c == '_'; }
    static bool is_lower(char c) {
        return (c >= 'a' && c <= 'z') || static_cast<unsigned char>(c) >= 0x80;
    }
    static bool is_ident_start(char c) { return is_upper(c) || is_lower(c); }
    static bool is_ident(char c) {
        return is_ident_start(c) || is_digit(c) || c == '\'';
    }

    void advance() {
        if (src_[pos_] == '\n') { ++line_; col_ = 1; }
        else ++col_;
        ++pos_;
    }

    void skip_ws() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '%') {
                while (pos_ < src_.size() && src_[pos_] != '\n') advance();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else {
                break;
            }
        }
    }

    Token identifier(int line, int col) {
        std::size_t start = pos_;
        bool upper = is_upper(src_[pos_]);
        while (pos_ < src_.size() && is_ident(src_[pos_])) advance();
        std::string text(src_.substr(start, pos_ - start));
        return {upper ? Tok::var : Tok::atom, text, line, col};
    }

    // Numbers are symbolic constants; a dot is part of the number only when
    // followed by a digit, so the clause terminator stays unambiguous.
    Token number(int line, int col) {
        std::size_t start = pos_;
        while (pos_ < src_.size() && is_digit(src_[pos_])) advance();
        if (pos_ + 1 < src_.size() && src_[pos_] == '.' && is_digit(src_[pos_ + 1])) {
            advance();
            while (pos_ < src_.size() && is_digit(src_[pos_])) advance();
        }
        while (pos_ < src_.size() && is_ident(src_[pos_])) advance();
        return {Tok::atom, std::string(src_.substr(start, pos_ - start)), line, col};
    }

    Token quoted(int line, int col) {
        advance(); // opening quote
        std::string text;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\\' && pos_ + 1 < src_.size()) {
                advance();
                text.push_back(src_[pos_]);
                advance();
                continue;
            }
            if (c == '\'') {
                advance();
                return {Tok::atom, text, line, col};
            }
            text.push_back(c);
            advance();
        }
        throw ParseError(line, col, "unterminated quoted constant");
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lexer_(src) { bump(); }

    Program parse_program() {
        Program prog;
        while (cur_.kind != Tok::end) prog.add(parse_clause());
        return prog;
    }

    // Comma-separated goal list, optional trailing period. Used for queries
    // and for answer literals.
    std::pair<std::vector<Goal>, std::vector<std::string>> parse_goal_list() {
        vars_.clear();
        var_names_.clear();
        std::vector<Goal> goals;
        goals.push_back(parse_goal(/*feature=*/false));
        while (cur_.kind == Tok::comma) {
            bump();
            goals.push_back(parse_goal(false));
        }
        if (cur_.kind == Tok::period) bump();
        expect(Tok::end, "extra input after goal list");
        return {std::move(goals), std::move(var_names_)};
    }

private:
    void bump() { cur_ = lexer_.next(); }

    void expect(Tok k, const std::string& what) {
        if (cur_.kind != k)
            throw ParseError(cur_.line, cur_.col,
                             what + " (got '" + (cur_.kind == Tok::end ? "<eof>" : cur_.text) + "')");
    }

    Clause parse_clause() {
        vars_.clear();
        var_names_.clear();
        Clause c;
        c.head = parse_goal(false);
        std::unordered_set<VarId> head_vars;
        for (const Term& t : c.head.args)
            if (t.is_variable()) head_vars.insert(t.var());

        if (cur_.kind == Tok::neck) {
            bump();
            c.body.push_back(parse_goal(false));
            while (cur_.kind == Tok::comma) {
                bump();
                c.body.push_back(parse_goal(false));
            }
            // `true` succeeds trivially; keeping it out of the body makes the
            // empty-body representation canonical.
            std::erase_if(c.body, [](const Goal& g) {
                return g.args.empty() && symbol_name(g.functor) == "true";
            });
        } else if (cur_.kind != Tok::hash && cur_.kind != Tok::period) {
            throw ParseError(cur_.line, cur_.col,
                             "expected ':-', '#' or '.' after clause head (got '" +
                                 cur_.text + "')");
        }

        if (cur_.kind == Tok::hash) {
            bump();
            head_vars_ = &head_vars;
            c.features.push_back(parse_goal(true));
            while (cur_.kind == Tok::comma) {
                bump();
                c.features.push_back(parse_goal(true));
            }
            head_vars_ = nullptr;
        }
        expect(Tok::period, "expected '.' at end of clause");
        bump();
        c.var_names = var_names_;
        return c;
    }

    Goal parse_goal(bool feature) {
        if (cur_.kind != Tok::atom)
            throw ParseError(cur_.line, cur_.col,
                             "expected predicate name (got '" + cur_.text + "')");
        Goal g;
        g.functor = intern(cur_.text);
        bump();
        if (cur_.kind == Tok::lparen) {
            bump();
            g.args.push_back(parse_term(feature));
            while (cur_.kind == Tok::comma) {
                bump();
                g.args.push_back(parse_term(feature));
            }
            expect(Tok::rparen, "expected ')' in argument list");
            bump();
        }
        return g;
    }

    Term parse_term(bool feature) {
        if (cur_.kind == Tok::atom) {
            Term t = Term::constant(cur_.text);
            bump();
            return t;
        }
        if (cur_.kind == Tok::var) {
            auto it = vars_.find(cur_.text);
            VarId id;
            if (it != vars_.end()) {
                id = it->second;
            } else {
                id = static_cast<VarId>(var_names_.size());
                var_names_.push_back(cur_.text);
                if (cur_.text != "_") vars_.emplace(cur_.text, id);
            }
            if (feature && head_vars_ && !head_vars_->count(id))
                throw ParseError(cur_.line, cur_.col,
                                 "feature template variable '" + cur_.text +
                                     "' does not appear in the clause head");
            bump();
            return Term::variable(id);
        }
        throw ParseError(cur_.line, cur_.col,
                         "expected constant or variable (got '" + cur_.text + "')");
    }

    Lexer lexer_;
    Token cur_{Tok::end, "", 0, 0};
    std::unordered_map<std::string, VarId> vars_;
    std::vector<std::string> var_names_;
    const std::unordered_set<VarId>* head_vars_ = nullptr;
};

} // namespace detail

inline Program parse_program(std::string_view text) {
    return detail::Parser(text).parse_program();
}

// Parses a conjunctive query / answer literal. Returns the goals plus the
// surface variable names (index = variable id).
inline std::pair<std::vector<Goal>, std::vector<std::string>>
parse_goals(std::string_view text) {
    return detail::Parser(text).parse_goal_list();
}

inline Goal parse_single_goal(std::string_view text) {
    auto [goals, names] = parse_goals(text);
    if (goals.size() != 1)
        throw ParseError(1, 1, "expected a single goal in '" + std::string(text) + "'");
    return goals[0];
}

} // namespace proppr
