#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fairscm/abduction.hpp"
#include "fairscm/model.hpp"

namespace fairscm {

/// A set of directed edges of the model graph, as (parent, child) pairs.
struct EdgeSet {
    std::set<std::pair<std::string, std::string>> edges;

    bool contains(const std::string& parent, const std::string& child) const {
        return edges.count({parent, child}) > 0;
    }
    bool empty() const { return edges.empty(); }

    /// Throws ModelError when any listed edge is absent from the graph.
    void check_against(const ScmModel& model) const;

    /// Parse "P->C" strings.
    static EdgeSet parse(const std::vector<std::string>& specs);
};

/**
 * Abduction–action–prediction: draw U ~ P(U | evidence), mutilate with the
 * intervention, re-evaluate. One row per draw; columns are every declared
 * variable in declaration order (backgrounds carry the abducted values).
 */
Dataset counterfactual_sample(const ScmModel& model, const Evidence& evidence,
                              const std::map<std::string, double>& intervention,
                              size_t n, uint64_t seed);

/**
 * Joint counterfactuals sharing one unit: each row holds a single abducted
 * u evaluated under every listed intervention. Background columns appear
 * once; observed columns repeat per world with a "#<k>" suffix.
 */
Dataset crossworld_sample(const ScmModel& model, const Evidence& evidence,
                          const std::vector<std::map<std::string, double>>& interventions,
                          size_t n, uint64_t seed);

/**
 * Edge-gated two-world evaluation for path-specific counterfactuals.
 *
 * The baseline world evaluates unit `u` under do(attr = baseline). The
 * modified world is built in dependency order: each variable reads a parent
 * through an edge in `active` from the modified world and through any other
 * edge from the baseline world; the protected attribute contributes
 * `counter` along active edges and `baseline` along inactive ones.
 *
 * active = every edge leaving attr and its descendants --> do(attr=counter);
 * active = {} --> the baseline world.
 */
UnitAssignment path_specific_eval(const ScmModel& model,
                                  const std::map<std::string, double>& u,
                                  const std::string& attr, double baseline,
                                  double counter, const EdgeSet& active);

/// Both worlds of the same evaluation (baseline first), for audits that
/// need factual and modified values together.
std::pair<UnitAssignment, UnitAssignment> path_specific_worlds(
    const ScmModel& model, const std::map<std::string, double>& u,
    const std::string& attr, double baseline, double counter,
    const EdgeSet& active);

/**
 * Edge-gating compiled against a fixed (model, attr, active) triple, for
 * audit loops that evaluate many units. evaluate() expects `base` sized to
 * the variable count with background slots pre-filled; it writes both
 * worlds into `base` and `mod`.
 */
class PathSpecificPlan {
public:
    PathSpecificPlan(const ScmModel& model, std::string attr, EdgeSet active);

    void evaluate(double baseline, double counter, std::vector<double>& base,
                  std::vector<double>& mod) const;

    const ScmModel& model() const { return *model_; }
    const std::string& attr() const { return attr_; }

private:
    struct ActiveParent {
        int slot;
        bool is_attr;
    };
    const ScmModel* model_;
    std::string attr_;
    EdgeSet active_;
    int attr_slot_;
    bool attr_fully_active_;
    std::vector<int> eval_order_; // observed vars minus attr, topo order
    std::vector<std::vector<ActiveParent>> active_parents_; // by var slot
    mutable std::vector<double> scratch_;
};

} // namespace fairscm
