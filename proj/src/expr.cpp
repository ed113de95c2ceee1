#include "fairscm/expr.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "fairscm/errors.hpp"

namespace fairscm {

namespace {

void collect_refs(const Expr::Ptr& e, std::set<std::string>& out) {
    const auto& n = e->node();
    if (const auto* r = std::get_if<Expr::Ref>(&n)) {
        out.insert(r->name);
    } else if (const auto* u = std::get_if<Expr::Unary>(&n)) {
        collect_refs(u->operand, out);
    } else if (const auto* b = std::get_if<Expr::Binary>(&n)) {
        collect_refs(b->lhs, out);
        collect_refs(b->rhs, out);
    } else if (const auto* i = std::get_if<Expr::If>(&n)) {
        collect_refs(i->cond, out);
        collect_refs(i->then_branch, out);
        collect_refs(i->else_branch, out);
    }
}

} // namespace

std::set<std::string> referenced_variables(const Expr::Ptr& e) {
    std::set<std::string> out;
    collect_refs(e, out);
    return out;
}

Expr::Ptr resolve_slots(const Expr::Ptr& e, const std::map<std::string, int>& slots) {
    const auto& n = e->node();
    if (const auto* num = std::get_if<Expr::Num>(&n)) {
        return Expr::number(num->value);
    }
    if (const auto* r = std::get_if<Expr::Ref>(&n)) {
        auto it = slots.find(r->name);
        if (it == slots.end()) {
            throw ModelError("reference to undeclared variable '" + r->name + "'");
        }
        return Expr::ref(r->name, it->second);
    }
    if (const auto* u = std::get_if<Expr::Unary>(&n)) {
        return Expr::unary(u->op, resolve_slots(u->operand, slots));
    }
    if (const auto* b = std::get_if<Expr::Binary>(&n)) {
        return Expr::binary(b->op, resolve_slots(b->lhs, slots),
                            resolve_slots(b->rhs, slots));
    }
    const auto& i = std::get<Expr::If>(n);
    return Expr::if_then_else(resolve_slots(i.cond, slots),
                              resolve_slots(i.then_branch, slots),
                              resolve_slots(i.else_branch, slots));
}

double eval_expr(const Expr::Ptr& e, std::span<const double> values,
                 const std::string& context) {
    const auto& n = e->node();
    if (const auto* num = std::get_if<Expr::Num>(&n)) {
        return num->value;
    }
    if (const auto* r = std::get_if<Expr::Ref>(&n)) {
        if (r->slot < 0 || r->slot >= static_cast<int>(values.size())) {
            throw ModelError("unresolved reference '" + r->name +
                             "' while evaluating " + context);
        }
        return values[static_cast<size_t>(r->slot)];
    }
    if (const auto* u = std::get_if<Expr::Unary>(&n)) {
        double v = eval_expr(u->operand, values, context);
        return u->op == UnOp::Neg ? -v : (v != 0.0 ? 0.0 : 1.0);
    }
    if (const auto* b = std::get_if<Expr::Binary>(&n)) {
        if (b->op == BinOp::And) {
            double l = eval_expr(b->lhs, values, context);
            if (l == 0.0) return 0.0;
            return eval_expr(b->rhs, values, context) != 0.0 ? 1.0 : 0.0;
        }
        if (b->op == BinOp::Or) {
            double l = eval_expr(b->lhs, values, context);
            if (l != 0.0) return 1.0;
            return eval_expr(b->rhs, values, context) != 0.0 ? 1.0 : 0.0;
        }
        double l = eval_expr(b->lhs, values, context);
        double r = eval_expr(b->rhs, values, context);
        switch (b->op) {
            case BinOp::Add: return l + r;
            case BinOp::Sub: return l - r;
            case BinOp::Mul: return l * r;
            case BinOp::Div:
                if (r == 0.0) {
                    throw EvalError("division by zero while evaluating '" +
                                        context + "'",
                                    context);
                }
                return l / r;
            case BinOp::Eq: return l == r ? 1.0 : 0.0;
            case BinOp::Ne: return l != r ? 1.0 : 0.0;
            case BinOp::Lt: return l < r ? 1.0 : 0.0;
            case BinOp::Le: return l <= r ? 1.0 : 0.0;
            default: break;
        }
        throw ModelError("unhandled binary operator");
    }
    const auto& i = std::get<Expr::If>(n);
    return eval_expr(i.cond, values, context) != 0.0
               ? eval_expr(i.then_branch, values, context)
               : eval_expr(i.else_branch, values, context);
}

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

// Precedence levels, loosest first: or < and < comparison < additive <
// multiplicative < unary < atom.
int precedence(BinOp op) {
    switch (op) {
        case BinOp::Or: return 1;
        case BinOp::And: return 2;
        case BinOp::Eq:
        case BinOp::Ne:
        case BinOp::Lt:
        case BinOp::Le: return 3;
        case BinOp::Add:
        case BinOp::Sub: return 4;
        case BinOp::Mul:
        case BinOp::Div: return 5;
    }
    return 0;
}

const char* op_token(BinOp op) {
    switch (op) {
        case BinOp::Add: return "+";
        case BinOp::Sub: return "-";
        case BinOp::Mul: return "*";
        case BinOp::Div: return "/";
        case BinOp::Eq: return "==";
        case BinOp::Ne: return "!=";
        case BinOp::Lt: return "<";
        case BinOp::Le: return "<=";
        case BinOp::And: return "and";
        case BinOp::Or: return "or";
    }
    return "?";
}

void print(const Expr::Ptr& e, int parent_prec, std::string& out) {
    const auto& n = e->node();
    if (const auto* num = std::get_if<Expr::Num>(&n)) {
        if (num->value < 0) {
            // Negative literals print as a unary minus expression.
            bool wrap = parent_prec > 6;
            if (wrap) out += '(';
            out += '-';
            out += format_number(-num->value);
            if (wrap) out += ')';
        } else {
            out += format_number(num->value);
        }
        return;
    }
    if (const auto* r = std::get_if<Expr::Ref>(&n)) {
        out += r->name;
        return;
    }
    if (const auto* u = std::get_if<Expr::Unary>(&n)) {
        bool wrap = parent_prec > 6;
        if (wrap) out += '(';
        out += u->op == UnOp::Neg ? "-" : "not ";
        print(u->operand, 6, out);
        if (wrap) out += ')';
        return;
    }
    if (const auto* b = std::get_if<Expr::Binary>(&n)) {
        int prec = precedence(b->op);
        bool wrap = prec < parent_prec;
        if (wrap) out += '(';
        print(b->lhs, prec, out);
        out += ' ';
        out += op_token(b->op);
        out += ' ';
        // Right operand needs a strictly tighter context for left-assoc ops.
        print(b->rhs, prec + 1, out);
        if (wrap) out += ')';
        return;
    }
    const auto& i = std::get<Expr::If>(n);
    bool wrap = parent_prec > 0;
    if (wrap) out += '(';
    out += "if ";
    print(i.cond, 1, out);
    out += " then ";
    print(i.then_branch, 1, out);
    out += " else ";
    print(i.else_branch, 0, out);
    if (wrap) out += ')';
}

} // namespace

std::string to_string(const Expr::Ptr& e) {
    std::string out;
    print(e, 0, out);
    return out;
}

LinearForm linearize(const Expr::Ptr& e) {
    LinearForm bad;
    const auto& n = e->node();
    if (const auto* num = std::get_if<Expr::Num>(&n)) {
        LinearForm f;
        f.is_linear = true;
        f.constant = num->value;
        return f;
    }
    if (const auto* r = std::get_if<Expr::Ref>(&n)) {
        LinearForm f;
        f.is_linear = true;
        f.coeffs[r->name] = 1.0;
        return f;
    }
    if (const auto* u = std::get_if<Expr::Unary>(&n)) {
        if (u->op != UnOp::Neg) return bad;
        LinearForm f = linearize(u->operand);
        if (!f.is_linear) return bad;
        f.constant = -f.constant;
        for (auto& [k, c] : f.coeffs) c = -c;
        return f;
    }
    if (const auto* b = std::get_if<Expr::Binary>(&n)) {
        LinearForm l = linearize(b->lhs);
        LinearForm r = linearize(b->rhs);
        if (!l.is_linear || !r.is_linear) return bad;
        LinearForm f;
        f.is_linear = true;
        switch (b->op) {
            case BinOp::Add:
            case BinOp::Sub: {
                double s = b->op == BinOp::Add ? 1.0 : -1.0;
                f.constant = l.constant + s * r.constant;
                f.coeffs = l.coeffs;
                for (const auto& [k, c] : r.coeffs) f.coeffs[k] += s * c;
                return f;
            }
            case BinOp::Mul: {
                const LinearForm* scalar = r.coeffs.empty() ? &r : nullptr;
                const LinearForm* other = &l;
                if (!scalar && l.coeffs.empty()) {
                    scalar = &l;
                    other = &r;
                }
                if (!scalar) return bad; // variable * variable
                f.constant = other->constant * scalar->constant;
                for (const auto& [k, c] : other->coeffs)
                    f.coeffs[k] = c * scalar->constant;
                return f;
            }
            case BinOp::Div: {
                if (!r.coeffs.empty() || r.constant == 0.0) return bad;
                f.constant = l.constant / r.constant;
                for (const auto& [k, c] : l.coeffs)
                    f.coeffs[k] = c / r.constant;
                return f;
            }
            default:
                return bad;
        }
    }
    return bad;
}

} // namespace fairscm
