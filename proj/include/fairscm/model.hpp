#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fairscm/dataset.hpp"
#include "fairscm/expr.hpp"

namespace fairscm {

enum class VarRole { Background, Observed };

/// Finite ordered integer-code domain of a discrete variable. Labels are
/// optional display names, parallel to `codes` (empty string when absent).
struct Domain {
    std::vector<long long> codes;
    std::vector<std::string> labels;

    bool contains(double v) const;
    std::string label_for(long long code) const;
};

struct VariableDecl {
    std::string name;
    VarRole role = VarRole::Observed;
    std::optional<Domain> domain; // present iff the variable is discrete
    bool is_protected = false;
    bool is_outcome = false;
    bool is_prediction = false;

    bool discrete() const { return domain.has_value(); }
};

struct NoiseDist {
    enum class Family { Normal, Bernoulli, Categorical };
    Family family = Family::Normal;
    double mean = 0.0;    // normal
    double stddev = 1.0;  // normal
    double p = 0.5;       // bernoulli
    std::vector<double> probs; // categorical
};

struct ValidationFinding {
    std::string code;
    std::string message;
    std::string variable; // empty when not variable-specific
};

struct ValidationReport {
    std::vector<ValidationFinding> findings;
    bool ok() const { return findings.empty(); }
};

/// Deterministic image of one background assignment under the structural
/// equations: every declared variable mapped to its value.
struct UnitAssignment {
    std::map<std::string, double> values;

    double at(const std::string& name) const;
};

/**
 * A structural causal model: declared variables, one equation per observed
 * variable, one noise distribution per background variable. Parent edges
 * are derived from equation references. Instances are immutable after
 * finalize() and safe to share across threads.
 */
class ScmModel {
public:
    ScmModel() = default;

    std::string name;
    std::vector<VariableDecl> variables;          // declaration order
    std::map<std::string, Expr::Ptr> equations;   // observed -> body
    std::map<std::string, NoiseDist> noise;       // background -> dist

    /// Resolve references, derive edges, compute evaluation order.
    /// Structural problems are reported through validate(); finalize only
    /// throws if a referenced name is undeclared.
    void finalize();

    bool finalized() const { return finalized_; }

    ValidationReport validate() const;

    /// Throws ModelError unless validate() is clean.
    void require_valid() const;

    // -- graph queries (require finalize()) --------------------------------

    int index_of(const std::string& name) const; // -1 when undeclared
    const VariableDecl& decl(const std::string& name) const;
    bool is_background(const std::string& name) const;

    /// Parents of each variable (indices into `variables`).
    const std::vector<std::vector<int>>& parents() const { return parents_; }
    const std::vector<std::vector<int>>& children() const { return children_; }

    /// Dependency order over all variables, backgrounds first among roots,
    /// ties broken by declaration order. Empty when the graph is cyclic.
    const std::vector<int>& topological_order() const { return topo_; }

    bool has_edge(const std::string& parent, const std::string& child) const;
    std::set<std::string> all_edges_from_closure(const std::string& root) const;

    std::set<std::string> descendants(const std::string& name) const;
    std::set<std::string> ancestors(const std::string& name) const;

    std::optional<std::string> protected_variable() const;
    std::optional<std::string> outcome_variable() const;
    std::optional<std::string> prediction_variable() const;

    // -- operations ---------------------------------------------------------

    /// Evaluate all observed variables from a full background assignment.
    UnitAssignment evaluate_unit(const std::map<std::string, double>& u) const;

    /// Ancestral sampling; emits one column per declared variable in
    /// declaration order. Bit-identical for equal (model, n, seed).
    Dataset sample(size_t n, uint64_t seed) const;

    /// Graph surgery: replace each assigned variable's equation by the
    /// constant. Assigned variables must be observed with in-domain values.
    ScmModel intervene(const std::map<std::string, double>& assignments) const;

    /// Canonical DSL rendering; parse(pretty_print(m)) is structurally m.
    std::string pretty_print() const;

    /// Drop the named variables (and their equations/noise) and every
    /// variable that depends on them; used to hide an outcome mechanism.
    ScmModel without(const std::set<std::string>& names) const;

    /// Evaluate into a dense slot vector (used by hot loops). `values` must
    /// have size variables.size() with background slots pre-filled.
    void evaluate_slots(std::vector<double>& values) const;

    /// Slot-resolved equation body of an observed variable.
    const Expr::Ptr& resolved_equation(const std::string& name) const;

private:
    bool finalized_ = false;
    std::map<std::string, int> index_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
    std::vector<int> topo_;
    std::vector<int> observed_topo_; // observed variables only, in order
    std::map<std::string, Expr::Ptr> resolved_;

    friend ScmModel intervene(const ScmModel&, const std::map<std::string, double>&);
};

/// Convenience free functions mirroring the member operations.
ValidationReport validate(const ScmModel& m);
std::vector<std::string> topological_order(const ScmModel& m);
std::set<std::string> descendants(const ScmModel& m, const std::string& v);
UnitAssignment evaluate_unit(const ScmModel& m, const std::map<std::string, double>& u);
Dataset sample(const ScmModel& m, size_t n, uint64_t seed);
ScmModel intervene(const ScmModel& m, const std::map<std::string, double>& assignments);

/// FNV-1a over the canonical pretty-printed source; stable model identity
/// for reports.
std::string model_hash(const ScmModel& m);

} // namespace fairscm
