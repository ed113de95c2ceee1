#include "fairscm/model.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <queue>
#include <sstream>

#include "fairscm/errors.hpp"
#include "fairscm/rng.hpp"

namespace fairscm {

bool Domain::contains(double v) const {
    for (long long c : codes) {
        if (static_cast<double>(c) == v) return true;
    }
    return false;
}

std::string Domain::label_for(long long code) const {
    for (size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] == code && !labels[i].empty()) return labels[i];
    }
    return std::to_string(code);
}

double UnitAssignment::at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ModelError("no value for variable '" + name + "'");
    return it->second;
}

void ScmModel::finalize() {
    index_.clear();
    for (size_t i = 0; i < variables.size(); ++i) {
        index_[variables[i].name] = static_cast<int>(i);
    }
    resolved_.clear();
    const size_t n = variables.size();
    parents_.assign(n, {});
    children_.assign(n, {});
    for (const auto& [var, body] : equations) {
        auto it = index_.find(var);
        if (it == index_.end()) {
            throw ModelError("equation for undeclared variable '" + var + "'");
        }
        resolved_[var] = resolve_slots(body, index_);
        int child = it->second;
        for (const auto& ref : referenced_variables(body)) {
            auto pit = index_.find(ref);
            if (pit == index_.end()) {
                throw ModelError("undeclared variable '" + ref +
                                 "' referenced by '" + var + "'");
            }
            parents_[static_cast<size_t>(child)].push_back(pit->second);
        }
    }
    for (auto& ps : parents_) {
        std::sort(ps.begin(), ps.end());
        ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
    }
    for (size_t c = 0; c < n; ++c) {
        for (int p : parents_[c]) {
            children_[static_cast<size_t>(p)].push_back(static_cast<int>(c));
        }
    }

    // Kahn's algorithm; the ready set is a min-heap on declaration index so
    // ties resolve to declaration order.
    std::vector<int> pending(n);
    std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
    for (size_t i = 0; i < n; ++i) {
        pending[i] = static_cast<int>(parents_[i].size());
        if (pending[i] == 0) ready.push(static_cast<int>(i));
    }
    topo_.clear();
    while (!ready.empty()) {
        int v = ready.top();
        ready.pop();
        topo_.push_back(v);
        for (int c : children_[static_cast<size_t>(v)]) {
            if (--pending[static_cast<size_t>(c)] == 0) ready.push(c);
        }
    }
    if (topo_.size() != n) topo_.clear(); // cyclic; validate() reports it
    observed_topo_.clear();
    for (int v : topo_) {
        if (variables[static_cast<size_t>(v)].role == VarRole::Observed) {
            observed_topo_.push_back(v);
        }
    }
    finalized_ = true;
}

namespace {

// Walks the graph to recover one concrete cycle for the error message.
std::string find_cycle(const ScmModel& m) {
    const size_t n = m.variables.size();
    std::vector<int> state(n, 0);
    std::vector<int> stack;
    std::string cycle;
    std::function<bool(int)> dfs = [&](int v) {
        state[static_cast<size_t>(v)] = 1;
        stack.push_back(v);
        for (int c : m.children()[static_cast<size_t>(v)]) {
            if (state[static_cast<size_t>(c)] == 1) {
                auto it = std::find(stack.begin(), stack.end(), c);
                for (auto p = it; p != stack.end(); ++p) {
                    cycle += m.variables[static_cast<size_t>(*p)].name;
                    cycle += " -> ";
                }
                cycle += m.variables[static_cast<size_t>(c)].name;
                return true;
            }
            if (state[static_cast<size_t>(c)] == 0 && dfs(c)) return true;
        }
        stack.pop_back();
        state[static_cast<size_t>(v)] = 2;
        return false;
    };
    for (size_t v = 0; v < n; ++v) {
        if (state[v] == 0 && dfs(static_cast<int>(v))) break;
    }
    return cycle;
}

} // namespace

ValidationReport ScmModel::validate() const {
    ValidationReport report;
    auto add = [&](std::string code, std::string msg, std::string var = "") {
        report.findings.push_back({std::move(code), std::move(msg), std::move(var)});
    };
    if (!finalized_) {
        add("NOT_FINALIZED", "model was not finalized before validation");
        return report;
    }

    std::set<std::string> seen;
    for (const auto& v : variables) {
        if (!seen.insert(v.name).second) {
            add("DUPLICATE_DECLARATION", "variable '" + v.name + "' declared twice",
                v.name);
        }
    }

    int n_protected = 0, n_outcome = 0, n_prediction = 0;
    for (const auto& v : variables) {
        n_protected += v.is_protected;
        n_outcome += v.is_outcome;
        n_prediction += v.is_prediction;
        if (v.domain) {
            if (v.domain->codes.empty()) {
                add("EMPTY_DOMAIN", "discrete domain of '" + v.name + "' is empty",
                    v.name);
            }
            std::set<long long> codes(v.domain->codes.begin(), v.domain->codes.end());
            if (codes.size() != v.domain->codes.size()) {
                add("DUPLICATE_DOMAIN_CODE",
                    "discrete domain of '" + v.name + "' repeats a code", v.name);
            }
        }
        if (v.role == VarRole::Background) {
            if (equations.count(v.name)) {
                add("BACKGROUND_HAS_EQUATION",
                    "background variable '" + v.name + "' has an equation", v.name);
            }
            if (!noise.count(v.name)) {
                add("MISSING_NOISE",
                    "background variable '" + v.name + "' has no distribution",
                    v.name);
            }
            int idx = index_of(v.name);
            if (idx >= 0 && !parents_[static_cast<size_t>(idx)].empty()) {
                add("BACKGROUND_HAS_PARENTS",
                    "background variable '" + v.name + "' has parents", v.name);
            }
        } else {
            if (!equations.count(v.name)) {
                add("MISSING_EQUATION",
                    "observed variable '" + v.name + "' has no equation", v.name);
            }
            if (noise.count(v.name)) {
                add("OBSERVED_HAS_NOISE",
                    "observed variable '" + v.name + "' has a noise distribution",
                    v.name);
            }
        }
    }
    if (n_protected > 1) {
        add("MULTIPLE_PROTECTED", "more than one variable tagged protected");
    }
    if (n_outcome > 1) {
        add("MULTIPLE_OUTCOME", "more than one variable tagged outcome");
    }
    if (n_prediction > 1) {
        add("MULTIPLE_PREDICTION", "more than one variable tagged prediction");
    }

    for (const auto& [var, dist] : noise) {
        switch (dist.family) {
            case NoiseDist::Family::Normal:
                if (!(dist.stddev > 0.0) || !std::isfinite(dist.stddev) ||
                    !std::isfinite(dist.mean)) {
                    add("INVALID_NOISE_PARAM",
                        "normal stddev of '" + var + "' must be positive", var);
                }
                if (index_of(var) >= 0 && decl(var).domain) {
                    add("DOMAIN_ON_CONTINUOUS_NOISE",
                        "'" + var + "' declares a discrete domain but draws from a "
                        "normal distribution", var);
                }
                break;
            case NoiseDist::Family::Bernoulli:
                if (!(dist.p >= 0.0 && dist.p <= 1.0)) {
                    add("INVALID_NOISE_PARAM",
                        "bernoulli p of '" + var + "' must be in [0,1]", var);
                }
                if (index_of(var) >= 0 && decl(var).domain &&
                    decl(var).domain->codes != std::vector<long long>{0, 1}) {
                    add("DOMAIN_MISMATCH",
                        "bernoulli variable '" + var + "' must have domain {0,1}",
                        var);
                }
                break;
            case NoiseDist::Family::Categorical: {
                double total = 0.0;
                bool neg = false;
                for (double p : dist.probs) {
                    total += p;
                    neg = neg || p < 0.0;
                }
                if (neg || dist.probs.empty() || std::abs(total - 1.0) > 1e-9) {
                    add("INVALID_NOISE_PARAM",
                        "categorical probabilities of '" + var +
                        "' must be nonnegative and sum to 1", var);
                }
                if (index_of(var) >= 0 && decl(var).domain &&
                    decl(var).domain->codes.size() != dist.probs.size()) {
                    add("DOMAIN_MISMATCH",
                        "declared domain of '" + var +
                        "' does not match the categorical arity", var);
                }
                break;
            }
        }
    }

    if (topo_.empty() && !variables.empty()) {
        add("CYCLE_DETECTED", "cycle detected: " + find_cycle(*this));
    }
    return report;
}

void ScmModel::require_valid() const {
    auto report = validate();
    if (!report.ok()) {
        throw ModelError("invalid model: " + report.findings.front().code + " — " +
                         report.findings.front().message);
    }
}

int ScmModel::index_of(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

const VariableDecl& ScmModel::decl(const std::string& name) const {
    int i = index_of(name);
    if (i < 0) throw ModelError("no such variable: '" + name + "'");
    return variables[static_cast<size_t>(i)];
}

bool ScmModel::is_background(const std::string& name) const {
    return decl(name).role == VarRole::Background;
}

bool ScmModel::has_edge(const std::string& parent, const std::string& child) const {
    int p = index_of(parent), c = index_of(child);
    if (p < 0 || c < 0) return false;
    const auto& ps = parents_[static_cast<size_t>(c)];
    return std::find(ps.begin(), ps.end(), p) != ps.end();
}

std::set<std::string> ScmModel::descendants(const std::string& name) const {
    int start = index_of(name);
    if (start < 0) throw ModelError("no such variable: '" + name + "'");
    std::set<std::string> out;
    std::deque<int> frontier{start};
    std::vector<bool> seen(variables.size(), false);
    while (!frontier.empty()) {
        int v = frontier.front();
        frontier.pop_front();
        for (int c : children_[static_cast<size_t>(v)]) {
            if (!seen[static_cast<size_t>(c)]) {
                seen[static_cast<size_t>(c)] = true;
                out.insert(variables[static_cast<size_t>(c)].name);
                frontier.push_back(c);
            }
        }
    }
    return out;
}

std::set<std::string> ScmModel::ancestors(const std::string& name) const {
    int start = index_of(name);
    if (start < 0) throw ModelError("no such variable: '" + name + "'");
    std::set<std::string> out;
    std::deque<int> frontier{start};
    std::vector<bool> seen(variables.size(), false);
    while (!frontier.empty()) {
        int v = frontier.front();
        frontier.pop_front();
        for (int p : parents_[static_cast<size_t>(v)]) {
            if (!seen[static_cast<size_t>(p)]) {
                seen[static_cast<size_t>(p)] = true;
                out.insert(variables[static_cast<size_t>(p)].name);
                frontier.push_back(p);
            }
        }
    }
    return out;
}

std::set<std::string> ScmModel::all_edges_from_closure(const std::string& root) const {
    // Every edge leaving the root or any of its descendants, encoded
    // "parent->child".
    std::set<std::string> sources = descendants(root);
    sources.insert(root);
    std::set<std::string> out;
    for (const auto& src : sources) {
        int s = index_of(src);
        for (int c : children_[static_cast<size_t>(s)]) {
            out.insert(src + "->" + variables[static_cast<size_t>(c)].name);
        }
    }
    return out;
}

std::optional<std::string> ScmModel::protected_variable() const {
    for (const auto& v : variables) {
        if (v.is_protected) return v.name;
    }
    return std::nullopt;
}

std::optional<std::string> ScmModel::outcome_variable() const {
    for (const auto& v : variables) {
        if (v.is_outcome) return v.name;
    }
    return std::nullopt;
}

std::optional<std::string> ScmModel::prediction_variable() const {
    for (const auto& v : variables) {
        if (v.is_prediction) return v.name;
    }
    return std::nullopt;
}

void ScmModel::evaluate_slots(std::vector<double>& values) const {
    for (int vi : observed_topo_) {
        const auto& var = variables[static_cast<size_t>(vi)];
        auto it = resolved_.find(var.name);
        double v = eval_expr(it->second, values, var.name);
        if (var.domain && !var.domain->contains(v)) {
            throw EvalError("value " + format_number(v) + " of '" + var.name +
                                "' is outside its declared domain",
                            var.name);
        }
        values[static_cast<size_t>(vi)] = v;
    }
}

const Expr::Ptr& ScmModel::resolved_equation(const std::string& name) const {
    auto it = resolved_.find(name);
    if (it == resolved_.end()) {
        throw ModelError("no equation for variable '" + name + "'");
    }
    return it->second;
}

UnitAssignment ScmModel::evaluate_unit(const std::map<std::string, double>& u) const {
    if (!finalized_) throw ModelError("model not finalized");
    if (topo_.empty() && !variables.empty()) {
        throw ModelError("cannot evaluate a cyclic model");
    }
    std::vector<double> values(variables.size(), 0.0);
    for (const auto& v : variables) {
        if (v.role != VarRole::Background) continue;
        auto it = u.find(v.name);
        if (it == u.end()) {
            throw ModelError("background variable '" + v.name + "' not assigned");
        }
        if (v.domain && !v.domain->contains(it->second)) {
            throw ModelError("value for background '" + v.name +
                             "' is outside its support");
        }
        values[static_cast<size_t>(index_of(v.name))] = it->second;
    }
    evaluate_slots(values);
    UnitAssignment out;
    for (size_t i = 0; i < variables.size(); ++i) {
        out.values[variables[i].name] = values[i];
    }
    return out;
}

Dataset ScmModel::sample(size_t n, uint64_t seed) const {
    require_valid();
    if (n < 1) throw ModelError("sample size must be at least 1");
    Dataset d;
    for (const auto& v : variables) d.columns.push_back(v.name);
    d.values.resize(n * variables.size());
    d.n_rows = n;
    d.provenance = Dataset::Provenance::Sampled;
    d.seed = seed;

    std::vector<double> row(variables.size());
    for (size_t r = 0; r < n; ++r) {
        RowRng rng(seed, r);
        // Backgrounds are always drawn in declaration order, referenced or
        // not, so mutilated variants consume the stream identically.
        for (size_t i = 0; i < variables.size(); ++i) {
            const auto& v = variables[i];
            if (v.role != VarRole::Background) continue;
            const NoiseDist& dist = noise.at(v.name);
            switch (dist.family) {
                case NoiseDist::Family::Normal:
                    row[i] = rng.next_normal(dist.mean, dist.stddev);
                    break;
                case NoiseDist::Family::Bernoulli:
                    row[i] = rng.next_bernoulli(dist.p);
                    break;
                case NoiseDist::Family::Categorical: {
                    int k = rng.next_categorical(dist.probs);
                    row[i] = v.domain ? static_cast<double>(v.domain->codes[static_cast<size_t>(k)])
                                      : static_cast<double>(k);
                    break;
                }
            }
        }
        evaluate_slots(row);
        std::copy(row.begin(), row.end(), d.values.begin() + static_cast<long>(r * row.size()));
    }
    return d;
}

ScmModel ScmModel::intervene(const std::map<std::string, double>& assignments) const {
    require_valid();
    ScmModel out = *this;
    for (const auto& [var, value] : assignments) {
        int i = index_of(var);
        if (i < 0) throw ModelError("cannot intervene on undeclared variable '" + var + "'");
        const auto& d = variables[static_cast<size_t>(i)];
        if (d.role == VarRole::Background) {
            throw ModelError("cannot intervene on background variable '" + var + "'");
        }
        if (d.domain && !d.domain->contains(value)) {
            throw ModelError("intervention value " + format_number(value) +
                             " is outside the domain of '" + var + "'");
        }
        out.equations[var] = Expr::number(value);
    }
    out.finalize();
    return out;
}

ScmModel ScmModel::without(const std::set<std::string>& names) const {
    std::set<std::string> drop = names;
    for (const auto& name : names) {
        for (const auto& d : descendants(name)) drop.insert(d);
    }
    ScmModel out;
    out.name = name;
    for (const auto& v : variables) {
        if (drop.count(v.name)) continue;
        out.variables.push_back(v);
        if (auto it = equations.find(v.name); it != equations.end()) {
            out.equations[v.name] = it->second;
        }
        if (auto it = noise.find(v.name); it != noise.end()) {
            out.noise[v.name] = it->second;
        }
    }
    out.finalize();
    return out;
}

std::string ScmModel::pretty_print() const {
    std::ostringstream out;
    out << "model " << (name.empty() ? "unnamed" : name) << "\n";
    for (const auto& v : variables) {
        if (v.role != VarRole::Background) continue;
        const NoiseDist& dist = noise.at(v.name);
        out << "background " << v.name << " ~ ";
        switch (dist.family) {
            case NoiseDist::Family::Normal:
                out << "normal(" << format_number(dist.mean) << ", "
                    << format_number(dist.stddev) << ")";
                break;
            case NoiseDist::Family::Bernoulli:
                out << "bernoulli(" << format_number(dist.p) << ")";
                break;
            case NoiseDist::Family::Categorical: {
                out << "categorical(";
                for (size_t i = 0; i < dist.probs.size(); ++i) {
                    if (i) out << ", ";
                    out << format_number(dist.probs[i]);
                }
                out << ")";
                break;
            }
        }
        out << "\n";
    }
    for (const auto& v : variables) {
        if (!v.domain) continue;
        // Bernoulli {0,1} domains are implied; only print informative ones.
        if (v.role == VarRole::Background) {
            const NoiseDist& dist = noise.at(v.name);
            if (dist.family == NoiseDist::Family::Bernoulli) continue;
            bool trivial = true;
            for (size_t i = 0; i < v.domain->codes.size(); ++i) {
                if (v.domain->codes[i] != static_cast<long long>(i) ||
                    !v.domain->labels[i].empty()) {
                    trivial = false;
                    break;
                }
            }
            if (trivial) continue;
        }
        out << "discrete " << v.name << " in {";
        for (size_t i = 0; i < v.domain->codes.size(); ++i) {
            if (i) out << ", ";
            if (!v.domain->labels[i].empty()) out << v.domain->labels[i] << "=";
            out << v.domain->codes[i];
        }
        out << "}\n";
    }
    for (const auto& v : variables) {
        if (v.role != VarRole::Observed) continue;
        auto it = equations.find(v.name);
        out << "var " << v.name << " = "
            << (it != equations.end() ? to_string(it->second) : "0") << "\n";
    }
    for (const auto& v : variables) {
        if (v.is_protected) out << "protected " << v.name << "\n";
    }
    for (const auto& v : variables) {
        if (v.is_outcome) out << "outcome " << v.name << "\n";
    }
    for (const auto& v : variables) {
        if (v.is_prediction) out << "prediction " << v.name << "\n";
    }
    return out.str();
}

ValidationReport validate(const ScmModel& m) { return m.validate(); }

std::vector<std::string> topological_order(const ScmModel& m) {
    if (m.topological_order().empty() && !m.variables.empty()) {
        throw ModelError("topological order undefined: model has a cycle");
    }
    std::vector<std::string> out;
    for (int i : m.topological_order()) {
        out.push_back(m.variables[static_cast<size_t>(i)].name);
    }
    return out;
}

std::set<std::string> descendants(const ScmModel& m, const std::string& v) {
    return m.descendants(v);
}

UnitAssignment evaluate_unit(const ScmModel& m, const std::map<std::string, double>& u) {
    return m.evaluate_unit(u);
}

Dataset sample(const ScmModel& m, size_t n, uint64_t seed) {
    return m.sample(n, seed);
}

ScmModel intervene(const ScmModel& m, const std::map<std::string, double>& assignments) {
    return m.intervene(assignments);
}

std::string model_hash(const ScmModel& m) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : m.pretty_print()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace fairscm
