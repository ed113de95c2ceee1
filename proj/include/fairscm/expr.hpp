#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace fairscm {

enum class BinOp { Add, Sub, Mul, Div, Eq, Ne, Lt, Le, And, Or };
enum class UnOp { Neg, Not };

/**
 * Arithmetic/conditional expression tree used as the body of every
 * structural equation. Nodes are immutable once built; trees are shared
 * via shared_ptr. Variable references may carry a resolved slot index
 * assigned when a model is finalized (see ScmModel), which makes
 * evaluation an index lookup instead of a name lookup.
 */
class Expr {
public:
    using Ptr = std::shared_ptr<const Expr>;

    struct Num {
        double value;
    };
    struct Ref {
        std::string name;
        int slot = -1; // assigned at model finalization
    };
    struct Unary {
        UnOp op;
        Ptr operand;
    };
    struct Binary {
        BinOp op;
        Ptr lhs;
        Ptr rhs;
    };
    struct If {
        Ptr cond;
        Ptr then_branch;
        Ptr else_branch;
    };

    using Node = std::variant<Num, Ref, Unary, Binary, If>;

    explicit Expr(Node node) : node_(std::move(node)) {}

    const Node& node() const { return node_; }

    static Ptr number(double v) { return std::make_shared<Expr>(Num{v}); }
    static Ptr ref(std::string name, int slot = -1) {
        return std::make_shared<Expr>(Ref{std::move(name), slot});
    }
    static Ptr unary(UnOp op, Ptr e) {
        return std::make_shared<Expr>(Unary{op, std::move(e)});
    }
    static Ptr binary(BinOp op, Ptr l, Ptr r) {
        return std::make_shared<Expr>(Binary{op, std::move(l), std::move(r)});
    }
    static Ptr if_then_else(Ptr c, Ptr t, Ptr e) {
        return std::make_shared<Expr>(If{std::move(c), std::move(t), std::move(e)});
    }

private:
    Node node_;
};

/// All variable names referenced anywhere in the expression.
std::set<std::string> referenced_variables(const Expr::Ptr& e);

/// Deep copy with Ref slots assigned from `slots`; throws ModelError on
/// names missing from the map.
Expr::Ptr resolve_slots(const Expr::Ptr& e, const std::map<std::string, int>& slots);

/**
 * Evaluate against a dense value vector indexed by Ref slot. Logical
 * operators treat nonzero as true and short-circuit, mirroring `if`.
 * Division by zero throws EvalError with `context` as the variable name.
 */
double eval_expr(const Expr::Ptr& e, std::span<const double> values,
                 const std::string& context);

/// Render with minimal parentheses; parsing the result reproduces the tree.
std::string to_string(const Expr::Ptr& e);

/// Shortest round-trip decimal rendering of a double (to_chars).
std::string format_number(double v);

/**
 * Affine view of an expression: constant + sum of coefficient * variable.
 * `is_linear` is false when the expression contains comparisons, logic,
 * conditionals, products of variables, or division by a variable.
 */
struct LinearForm {
    bool is_linear = false;
    double constant = 0.0;
    std::map<std::string, double> coeffs;
};

LinearForm linearize(const Expr::Ptr& e);

} // namespace fairscm
