#include "fairscm/counterfactual.hpp"

#include <algorithm>

#include "fairscm/errors.hpp"

namespace fairscm {

void EdgeSet::check_against(const ScmModel& model) const {
    for (const auto& [parent, child] : edges) {
        if (!model.has_edge(parent, child)) {
            throw ModelError("edge " + parent + "->" + child +
                             " does not exist in the model graph");
        }
    }
}

EdgeSet EdgeSet::parse(const std::vector<std::string>& specs) {
    EdgeSet out;
    for (const auto& s : specs) {
        size_t arrow = s.find("->");
        if (arrow == std::string::npos || arrow == 0 || arrow + 2 >= s.size()) {
            throw ModelError("bad edge spec '" + s + "', expected PARENT->CHILD");
        }
        out.edges.insert({s.substr(0, arrow), s.substr(arrow + 2)});
    }
    return out;
}

Dataset counterfactual_sample(const ScmModel& model, const Evidence& evidence,
                              const std::map<std::string, double>& intervention,
                              size_t n, uint64_t seed) {
    PosteriorU posterior = abduct(model, evidence);
    ScmModel mutilated = model.intervene(intervention);

    Dataset d;
    for (const auto& v : model.variables) d.columns.push_back(v.name);
    d.values.resize(n * d.columns.size());
    d.n_rows = n;
    d.provenance = Dataset::Provenance::Sampled;
    d.seed = seed;

    const auto& bg = posterior.background_names();
    std::vector<int> bg_slot(bg.size());
    for (size_t i = 0; i < bg.size(); ++i) bg_slot[i] = mutilated.index_of(bg[i]);

    std::vector<double> slots(model.variables.size(), 0.0);
    for (size_t r = 0; r < n; ++r) {
        std::vector<double> u = posterior.draw(seed, r);
        for (size_t i = 0; i < bg.size(); ++i) {
            slots[static_cast<size_t>(bg_slot[i])] = u[i];
        }
        mutilated.evaluate_slots(slots);
        std::copy(slots.begin(), slots.end(),
                  d.values.begin() + static_cast<long>(r * slots.size()));
    }
    return d;
}

Dataset crossworld_sample(const ScmModel& model, const Evidence& evidence,
                          const std::vector<std::map<std::string, double>>& interventions,
                          size_t n, uint64_t seed) {
    if (interventions.empty()) {
        throw ModelError("crossworld_sample needs at least one intervention");
    }
    PosteriorU posterior = abduct(model, evidence);

    std::vector<ScmModel> worlds;
    worlds.reserve(interventions.size());
    for (const auto& iv : interventions) worlds.push_back(model.intervene(iv));

    std::vector<std::string> observed;
    for (const auto& v : model.variables) {
        if (v.role == VarRole::Observed) observed.push_back(v.name);
    }

    Dataset d;
    const auto& bg = posterior.background_names();
    for (const auto& name : bg) d.columns.push_back(name);
    for (size_t w = 0; w < worlds.size(); ++w) {
        for (const auto& name : observed) {
            d.columns.push_back(name + "#" + std::to_string(w));
        }
    }
    d.values.resize(n * d.columns.size());
    d.n_rows = n;
    d.provenance = Dataset::Provenance::Sampled;
    d.seed = seed;

    std::vector<int> bg_slot(bg.size());
    for (size_t i = 0; i < bg.size(); ++i) bg_slot[i] = model.index_of(bg[i]);
    std::vector<int> obs_slot(observed.size());
    for (size_t i = 0; i < observed.size(); ++i) obs_slot[i] = model.index_of(observed[i]);

    std::vector<double> slots(model.variables.size(), 0.0);
    for (size_t r = 0; r < n; ++r) {
        std::vector<double> u = posterior.draw(seed, r);
        size_t col = 0;
        for (size_t i = 0; i < bg.size(); ++i) {
            d.at(r, col++) = u[i];
        }
        for (const auto& world : worlds) {
            for (size_t i = 0; i < bg.size(); ++i) {
                slots[static_cast<size_t>(bg_slot[i])] = u[i];
            }
            world.evaluate_slots(slots);
            for (size_t i = 0; i < observed.size(); ++i) {
                d.at(r, col++) = slots[static_cast<size_t>(obs_slot[i])];
            }
        }
    }
    return d;
}

PathSpecificPlan::PathSpecificPlan(const ScmModel& model, std::string attr,
                                   EdgeSet active)
    : model_(&model), attr_(std::move(attr)), active_(std::move(active)) {
    model.require_valid();
    const auto& attr_decl = model.decl(attr_);
    if (!attr_decl.is_protected) {
        throw ModelError("'" + attr_ + "' is not the protected attribute");
    }
    active_.check_against(model);
    std::set<std::string> allowed = model.descendants(attr_);
    allowed.insert(attr_);
    for (const auto& [parent, child] : active_.edges) {
        (void)child;
        if (!allowed.count(parent)) {
            throw ModelError("active edge from '" + parent +
                             "' does not originate from the protected attribute "
                             "or one of its descendants");
        }
    }

    attr_slot_ = model.index_of(attr_);
    const size_t nvars = model.variables.size();
    active_parents_.assign(nvars, {});
    for (int vi : model.topological_order()) {
        const auto& var = model.variables[static_cast<size_t>(vi)];
        if (var.role == VarRole::Background || vi == attr_slot_) continue;
        eval_order_.push_back(vi);
        for (int p : model.parents()[static_cast<size_t>(vi)]) {
            const auto& pname = model.variables[static_cast<size_t>(p)].name;
            if (active_.contains(pname, var.name)) {
                active_parents_[static_cast<size_t>(vi)].push_back(
                    {p, p == attr_slot_});
            }
        }
    }
    const auto& kids = model.children()[static_cast<size_t>(attr_slot_)];
    attr_fully_active_ = !kids.empty();
    for (int c : kids) {
        if (!active_.contains(attr_, model.variables[static_cast<size_t>(c)].name)) {
            attr_fully_active_ = false;
            break;
        }
    }
    scratch_.resize(nvars);
}

void PathSpecificPlan::evaluate(double baseline, double counter,
                                std::vector<double>& base,
                                std::vector<double>& mod) const {
    const ScmModel& m = *model_;
    const auto& attr_decl = m.variables[static_cast<size_t>(attr_slot_)];
    if (attr_decl.domain && (!attr_decl.domain->contains(baseline) ||
                             !attr_decl.domain->contains(counter))) {
        throw ModelError("baseline/counterfactual value outside the domain of '" +
                         attr_ + "'");
    }

    // Baseline world: do(attr = baseline).
    base[static_cast<size_t>(attr_slot_)] = baseline;
    for (int vi : eval_order_) {
        const auto& var = m.variables[static_cast<size_t>(vi)];
        double v = eval_expr(m.resolved_equation(var.name), base, var.name);
        if (var.domain && !var.domain->contains(v)) {
            throw EvalError("value " + format_number(v) + " of '" + var.name +
                                "' is outside its declared domain",
                            var.name);
        }
        base[static_cast<size_t>(vi)] = v;
    }

    // Modified world. A variable with no active in-edge reads baseline
    // inputs only, so its value is the baseline value.
    mod = base;
    mod[static_cast<size_t>(attr_slot_)] = attr_fully_active_ ? counter : baseline;
    for (int vi : eval_order_) {
        const auto& overrides = active_parents_[static_cast<size_t>(vi)];
        if (overrides.empty()) continue;
        scratch_ = base;
        for (const auto& ap : overrides) {
            scratch_[static_cast<size_t>(ap.slot)] =
                ap.is_attr ? counter : mod[static_cast<size_t>(ap.slot)];
        }
        const auto& var = m.variables[static_cast<size_t>(vi)];
        double v = eval_expr(m.resolved_equation(var.name), scratch_, var.name);
        if (var.domain && !var.domain->contains(v)) {
            throw EvalError("value " + format_number(v) + " of '" + var.name +
                                "' is outside its declared domain",
                            var.name);
        }
        mod[static_cast<size_t>(vi)] = v;
    }
}

std::pair<UnitAssignment, UnitAssignment> path_specific_worlds(
    const ScmModel& model, const std::map<std::string, double>& u,
    const std::string& attr, double baseline, double counter,
    const EdgeSet& active) {
    PathSpecificPlan plan(model, attr, active);
    const size_t nvars = model.variables.size();
    std::vector<double> base(nvars, 0.0), mod(nvars, 0.0);
    for (const auto& v : model.variables) {
        if (v.role != VarRole::Background) continue;
        auto it = u.find(v.name);
        if (it == u.end()) {
            throw ModelError("background variable '" + v.name + "' not assigned");
        }
        base[static_cast<size_t>(model.index_of(v.name))] = it->second;
    }
    plan.evaluate(baseline, counter, base, mod);
    UnitAssignment base_out, mod_out;
    for (size_t i = 0; i < nvars; ++i) {
        base_out.values[model.variables[i].name] = base[i];
        mod_out.values[model.variables[i].name] = mod[i];
    }
    return {base_out, mod_out};
}

UnitAssignment path_specific_eval(const ScmModel& model,
                                  const std::map<std::string, double>& u,
                                  const std::string& attr, double baseline,
                                  double counter, const EdgeSet& active) {
    return path_specific_worlds(model, u, attr, baseline, counter, active).second;
}

} // namespace fairscm
