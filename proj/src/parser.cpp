#include "fairscm/parser.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <vector>

#include "fairscm/errors.hpp"

namespace fairscm {

namespace {

struct Token {
    enum class Kind { Ident, Number, Symbol, End };
    Kind kind = Kind::End;
    std::string text;
    double number = 0.0;
    int line = 0;
    int column = 0;
};

class Lexer {
public:
    Lexer(const std::string& src, int line) : src_(src), line_(line) {}

    Token next() {
        skip_space();
        Token t;
        t.line = line_;
        t.column = static_cast<int>(pos_) + 1;
        if (pos_ >= src_.size() || src_[pos_] == '#') {
            t.kind = Token::Kind::End;
            return t;
        }
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                    src_[pos_] == '_')) {
                ++pos_;
            }
            t.kind = Token::Kind::Ident;
            t.text = src_.substr(start, pos_ - start);
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
                    src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E' ||
                    ((src_[pos_] == '+' || src_[pos_] == '-') && pos_ > start &&
                     (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E')))) {
                ++pos_;
            }
            std::string text = src_.substr(start, pos_ - start);
            double v = 0.0;
            auto res = std::from_chars(text.data(), text.data() + text.size(), v);
            if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
                throw ParseError("bad numeric literal '" + text + "'", t.line, t.column);
            }
            t.kind = Token::Kind::Number;
            t.number = v;
            t.text = text;
            return t;
        }
        static const char* two_char[] = {"==", "!=", "<=", ">=", "->"};
        for (const char* op : two_char) {
            if (src_.compare(pos_, 2, op) == 0) {
                t.kind = Token::Kind::Symbol;
                t.text = op;
                pos_ += 2;
                return t;
            }
        }
        static const std::string one_char = "+-*/<>(),={}~";
        if (one_char.find(c) != std::string::npos) {
            t.kind = Token::Kind::Symbol;
            t.text = std::string(1, c);
            ++pos_;
            return t;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", t.line,
                         t.column);
    }

private:
    void skip_space() {
        while (pos_ < src_.size() &&
               (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\r')) {
            ++pos_;
        }
    }

    const std::string& src_;
    size_t pos_ = 0;
    int line_;
};

class TokenStream {
public:
    TokenStream(const std::string& line, int line_no) {
        Lexer lex(line, line_no);
        for (;;) {
            Token t = lex.next();
            bool end = t.kind == Token::Kind::End;
            tokens_.push_back(std::move(t));
            if (end) break;
        }
    }

    const Token& peek() const { return tokens_[pos_]; }
    Token take() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    bool at_end() const { return peek().kind == Token::Kind::End; }

    bool accept_symbol(const std::string& s) {
        if (peek().kind == Token::Kind::Symbol && peek().text == s) {
            take();
            return true;
        }
        return false;
    }

    bool accept_ident(const std::string& s) {
        if (peek().kind == Token::Kind::Ident && peek().text == s) {
            take();
            return true;
        }
        return false;
    }

    Token expect_symbol(const std::string& s) {
        if (peek().kind != Token::Kind::Symbol || peek().text != s) {
            throw ParseError("expected '" + s + "'" + describe_here(), peek().line,
                             peek().column);
        }
        return take();
    }

    Token expect_ident() {
        if (peek().kind != Token::Kind::Ident) {
            throw ParseError("expected identifier" + describe_here(), peek().line,
                             peek().column);
        }
        return take();
    }

    Token expect_number() {
        bool neg = accept_symbol("-");
        if (peek().kind != Token::Kind::Number) {
            throw ParseError("expected number" + describe_here(), peek().line,
                             peek().column);
        }
        Token t = take();
        if (neg) t.number = -t.number;
        return t;
    }

    void expect_end() {
        if (!at_end()) {
            throw ParseError("unexpected trailing input" + describe_here(),
                             peek().line, peek().column);
        }
    }

    std::string describe_here() const {
        if (at_end()) return " at end of line";
        return ", found '" + peek().text + "'";
    }

private:
    std::vector<Token> tokens_;
    size_t pos_ = 0;
};

bool is_keyword(const std::string& s) {
    return s == "if" || s == "then" || s == "else" || s == "and" || s == "or" ||
           s == "not";
}

// Label resolution: an identifier that is not a declared variable may be a
// domain label, provided it names the same code everywhere it appears.
struct NameTable {
    std::set<std::string> variables;
    std::map<std::string, std::vector<long long>> labels;

    std::optional<double> resolve_label(const std::string& name) const {
        auto it = labels.find(name);
        if (it == labels.end()) return std::nullopt;
        for (long long c : it->second) {
            if (c != it->second.front()) return std::nullopt; // ambiguous
        }
        return static_cast<double>(it->second.front());
    }

    bool ambiguous_label(const std::string& name) const {
        auto it = labels.find(name);
        if (it == labels.end()) return false;
        for (long long c : it->second) {
            if (c != it->second.front()) return true;
        }
        return false;
    }
};

class ExprParser {
public:
    ExprParser(TokenStream& ts, const NameTable* names) : ts_(ts), names_(names) {}

    Expr::Ptr parse() { return parse_or(); }

private:
    Expr::Ptr parse_or() {
        Expr::Ptr e = parse_and();
        while (ts_.accept_ident("or")) {
            e = Expr::binary(BinOp::Or, e, parse_and());
        }
        return e;
    }

    Expr::Ptr parse_and() {
        Expr::Ptr e = parse_comparison();
        while (ts_.accept_ident("and")) {
            e = Expr::binary(BinOp::And, e, parse_comparison());
        }
        return e;
    }

    Expr::Ptr parse_comparison() {
        Expr::Ptr e = parse_additive();
        for (;;) {
            if (ts_.accept_symbol("==")) {
                e = Expr::binary(BinOp::Eq, e, parse_additive());
            } else if (ts_.accept_symbol("!=")) {
                e = Expr::binary(BinOp::Ne, e, parse_additive());
            } else if (ts_.accept_symbol("<=")) {
                e = Expr::binary(BinOp::Le, e, parse_additive());
            } else if (ts_.accept_symbol("<")) {
                e = Expr::binary(BinOp::Lt, e, parse_additive());
            } else if (ts_.accept_symbol(">=")) {
                // Sugar: a >= b parses as b <= a.
                e = Expr::binary(BinOp::Le, parse_additive(), e);
            } else if (ts_.accept_symbol(">")) {
                e = Expr::binary(BinOp::Lt, parse_additive(), e);
            } else {
                return e;
            }
        }
    }

    Expr::Ptr parse_additive() {
        Expr::Ptr e = parse_multiplicative();
        for (;;) {
            if (ts_.accept_symbol("+")) {
                e = Expr::binary(BinOp::Add, e, parse_multiplicative());
            } else if (ts_.accept_symbol("-")) {
                e = Expr::binary(BinOp::Sub, e, parse_multiplicative());
            } else {
                return e;
            }
        }
    }

    Expr::Ptr parse_multiplicative() {
        Expr::Ptr e = parse_unary();
        for (;;) {
            if (ts_.accept_symbol("*")) {
                e = Expr::binary(BinOp::Mul, e, parse_unary());
            } else if (ts_.accept_symbol("/")) {
                e = Expr::binary(BinOp::Div, e, parse_unary());
            } else {
                return e;
            }
        }
    }

    Expr::Ptr parse_unary() {
        if (ts_.accept_symbol("-")) {
            Expr::Ptr e = parse_unary();
            if (const auto* num = std::get_if<Expr::Num>(&e->node())) {
                return Expr::number(-num->value);
            }
            return Expr::unary(UnOp::Neg, e);
        }
        if (ts_.accept_ident("not")) {
            return Expr::unary(UnOp::Not, parse_unary());
        }
        return parse_atom();
    }

    Expr::Ptr parse_atom() {
        const Token& t = ts_.peek();
        if (t.kind == Token::Kind::Number) {
            return Expr::number(ts_.take().number);
        }
        if (ts_.accept_symbol("(")) {
            Expr::Ptr e = parse_or();
            ts_.expect_symbol(")");
            return e;
        }
        if (t.kind == Token::Kind::Ident) {
            if (t.text == "if") {
                ts_.take();
                Expr::Ptr c = parse_or();
                if (!ts_.accept_ident("then")) {
                    throw ParseError("expected 'then'" + ts_.describe_here(),
                                     ts_.peek().line, ts_.peek().column);
                }
                Expr::Ptr then_e = parse_or();
                if (!ts_.accept_ident("else")) {
                    throw ParseError("expected 'else'" + ts_.describe_here(),
                                     ts_.peek().line, ts_.peek().column);
                }
                Expr::Ptr else_e = parse_or();
                return Expr::if_then_else(c, then_e, else_e);
            }
            if (is_keyword(t.text)) {
                throw ParseError("unexpected keyword '" + t.text + "'", t.line,
                                 t.column);
            }
            Token id = ts_.take();
            if (names_) {
                if (names_->variables.count(id.text)) return Expr::ref(id.text);
                if (auto code = names_->resolve_label(id.text)) {
                    return Expr::number(*code);
                }
                if (names_->ambiguous_label(id.text)) {
                    throw ParseError("label '" + id.text +
                                         "' is ambiguous across domains",
                                     id.line, id.column);
                }
            }
            return Expr::ref(id.text);
        }
        throw ParseError("expected expression" + ts_.describe_here(), t.line,
                         t.column);
    }

    TokenStream& ts_;
    const NameTable* names_;
};

struct RawStatement {
    int line = 0;
    std::string text;
};

std::vector<RawStatement> split_lines(const std::string& text) {
    std::vector<RawStatement> out;
    std::string cur;
    int line = 1;
    for (char c : text) {
        if (c == '\n') {
            out.push_back({line, cur});
            cur.clear();
            ++line;
        } else {
            cur += c;
        }
    }
    out.push_back({line, cur});
    return out;
}

} // namespace

Expr::Ptr parse_expression(const std::string& text) {
    TokenStream ts(text, 1);
    ExprParser p(ts, nullptr);
    Expr::Ptr e = p.parse();
    ts.expect_end();
    return e;
}

ScmModel parse_model(const std::string& text) {
    ScmModel model;
    NameTable names;
    std::map<std::string, int> decl_lines;

    struct PendingVar {
        std::string name;
        std::string expr_text;
        int line = 0;
    };
    struct PendingTag {
        std::string statement;
        std::string name;
        int line = 0;
        int column = 0;
    };
    std::vector<PendingVar> pending_vars;
    std::vector<PendingTag> pending_tags;
    std::map<std::string, std::pair<Domain, int>> pending_domains;

    auto declare = [&](const std::string& name, int line, int column) {
        if (names.variables.count(name)) {
            throw ParseError("duplicate declaration of '" + name + "'", line, column);
        }
        names.variables.insert(name);
        decl_lines[name] = line;
    };

    // Pass 1: collect declarations. Equations are re-parsed in pass 2 once
    // every variable and label is known, so forward references work.
    for (const auto& raw : split_lines(text)) {
        TokenStream ts(raw.text, raw.line);
        if (ts.at_end()) continue;
        Token head = ts.expect_ident();

        if (head.text == "model") {
            Token name = ts.expect_ident();
            ts.expect_end();
            model.name = name.text;
        } else if (head.text == "background") {
            Token name = ts.expect_ident();
            declare(name.text, name.line, name.column);
            ts.expect_symbol("~");
            Token family = ts.expect_ident();
            NoiseDist dist;
            VariableDecl decl;
            decl.name = name.text;
            decl.role = VarRole::Background;
            ts.expect_symbol("(");
            if (family.text == "normal") {
                dist.family = NoiseDist::Family::Normal;
                dist.mean = ts.expect_number().number;
                ts.expect_symbol(",");
                dist.stddev = ts.expect_number().number;
            } else if (family.text == "bernoulli") {
                dist.family = NoiseDist::Family::Bernoulli;
                dist.p = ts.expect_number().number;
                decl.domain = Domain{{0, 1}, {"", ""}};
            } else if (family.text == "categorical") {
                dist.family = NoiseDist::Family::Categorical;
                dist.probs.push_back(ts.expect_number().number);
                while (ts.accept_symbol(",")) {
                    dist.probs.push_back(ts.expect_number().number);
                }
                Domain dom;
                for (size_t i = 0; i < dist.probs.size(); ++i) {
                    dom.codes.push_back(static_cast<long long>(i));
                    dom.labels.emplace_back();
                }
                decl.domain = dom;
            } else {
                throw ParseError("unknown distribution '" + family.text +
                                     "', expected normal, bernoulli or categorical",
                                 family.line, family.column);
            }
            ts.expect_symbol(")");
            ts.expect_end();
            model.variables.push_back(decl);
            model.noise[name.text] = dist;
        } else if (head.text == "discrete") {
            Token name = ts.expect_ident();
            Token kw = ts.expect_ident();
            if (kw.text != "in") {
                throw ParseError("expected 'in', found '" + kw.text + "'", kw.line,
                                 kw.column);
            }
            Domain dom;
            ts.expect_symbol("{");
            for (;;) {
                Token first = ts.peek();
                std::string label;
                long long code = 0;
                if (first.kind == Token::Kind::Ident) {
                    label = ts.take().text;
                    ts.expect_symbol("=");
                    code = static_cast<long long>(ts.expect_number().number);
                } else {
                    code = static_cast<long long>(ts.expect_number().number);
                }
                dom.codes.push_back(code);
                dom.labels.push_back(label);
                if (!label.empty()) names.labels[label].push_back(code);
                if (!ts.accept_symbol(",")) break;
            }
            ts.expect_symbol("}");
            ts.expect_end();
            if (pending_domains.count(name.text)) {
                throw ParseError("duplicate domain declaration for '" + name.text + "'",
                                 name.line, name.column);
            }
            pending_domains[name.text] = {dom, name.line};
        } else if (head.text == "var") {
            Token name = ts.expect_ident();
            declare(name.text, name.line, name.column);
            Token eq = ts.expect_symbol("=");
            VariableDecl decl;
            decl.name = name.text;
            decl.role = VarRole::Observed;
            model.variables.push_back(decl);
            // Stash the remainder of the line; parsed in pass 2 once every
            // name and label is known (forward references are legal).
            size_t cut = raw.text.find('=', static_cast<size_t>(eq.column) - 1);
            pending_vars.push_back({name.text, raw.text.substr(cut + 1), raw.line});
        } else if (head.text == "protected" || head.text == "outcome" ||
                   head.text == "prediction") {
            Token name = ts.expect_ident();
            ts.expect_end();
            pending_tags.push_back({head.text, name.text, name.line, name.column});
        } else {
            throw ParseError("unknown statement '" + head.text + "'", head.line,
                             head.column);
        }
    }

    // Attach pre-declared domains.
    for (auto& [var, entry] : pending_domains) {
        bool found = false;
        for (auto& decl : model.variables) {
            if (decl.name == var) {
                decl.domain = entry.first;
                found = true;
                break;
            }
        }
        if (!found) {
            throw ParseError("domain declared for unknown variable '" + var + "'",
                             entry.second, 1);
        }
    }

    // Pass 2: expressions, with full name/label knowledge.
    for (const auto& pv : pending_vars) {
        TokenStream ts(pv.expr_text, pv.line);
        ExprParser p(ts, &names);
        Expr::Ptr body = p.parse();
        ts.expect_end();
        for (const auto& ref : referenced_variables(body)) {
            if (!names.variables.count(ref)) {
                throw ParseError("undeclared variable '" + ref + "' in equation for '" +
                                     pv.name + "'",
                                 pv.line, 1);
            }
        }
        model.equations[pv.name] = body;
    }

    for (const auto& tag : pending_tags) {
        bool found = false;
        for (auto& decl : model.variables) {
            if (decl.name != tag.name) continue;
            found = true;
            if (tag.statement == "protected") decl.is_protected = true;
            if (tag.statement == "outcome") decl.is_outcome = true;
            if (tag.statement == "prediction") decl.is_prediction = true;
        }
        if (!found) {
            throw ParseError("'" + tag.statement + "' names undeclared variable '" +
                                 tag.name + "'",
                             tag.line, tag.column);
        }
    }

    model.finalize();
    auto report = model.validate();
    if (!report.ok()) {
        const auto& f = report.findings.front();
        int line = f.variable.empty() ? 1
                   : decl_lines.count(f.variable) ? decl_lines[f.variable]
                                                  : 1;
        throw ParseError(f.code + ": " + f.message, line, 1);
    }
    return model;
}

} // namespace fairscm
