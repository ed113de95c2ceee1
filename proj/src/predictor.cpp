#include "fairscm/predictor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>

#include <json.hpp>

#include "fairscm/errors.hpp"
#include "fairscm/rng.hpp"

namespace fairscm {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::Unconstrained: return "unconstrained";
        case Regime::CounterfactuallyFair: return "counterfactually-fair";
        case Regime::InterventionalConstrained: return "interventional-constrained";
        case Regime::PathSpecificFair: return "path-specific-fair";
    }
    return "unknown";
}

Regime regime_from_name(const std::string& name) {
    if (name == "unconstrained") return Regime::Unconstrained;
    if (name == "counterfactually-fair" || name == "cf") {
        return Regime::CounterfactuallyFair;
    }
    if (name == "interventional-constrained" || name == "interventional") {
        return Regime::InterventionalConstrained;
    }
    if (name == "path-specific-fair" || name == "path-specific") {
        return Regime::PathSpecificFair;
    }
    throw ModelError("unknown predictor regime '" + name + "'");
}

std::string Feature::describe() const {
    switch (kind) {
        case Kind::Raw: return var;
        case Kind::Background: return "u:" + var;
        case Kind::Clamped: return var + "@" + format_number(clamp_value);
    }
    return var;
}

namespace {

// Streaming normal-equation accumulation; the design never materializes.
class OlsAccumulator {
public:
    explicit OlsAccumulator(size_t p)
        : p_(p), xtx_(Eigen::MatrixXd::Zero(static_cast<long>(p + 1),
                                            static_cast<long>(p + 1))),
          xty_(Eigen::VectorXd::Zero(static_cast<long>(p + 1))) {}

    void add(std::span<const double> x, double y) {
        for (size_t i = 0; i < p_; ++i) {
            for (size_t j = i; j < p_; ++j) {
                xtx_(static_cast<long>(i), static_cast<long>(j)) += x[i] * x[j];
            }
            xtx_(static_cast<long>(i), static_cast<long>(p_)) += x[i];
            xty_(static_cast<long>(i)) += x[i] * y;
        }
        xtx_(static_cast<long>(p_), static_cast<long>(p_)) += 1.0;
        xty_(static_cast<long>(p_)) += y;
        yty_ += y * y;
        ++n_;
    }

    struct Fit {
        std::vector<double> weights;
        double intercept = 0.0;
        double mse = 0.0;
        size_t n = 0;
    };

    Fit solve(bool ridge_fallback, double ridge_lambda) const {
        if (n_ == 0) throw ModelError("no training rows");
        Eigen::MatrixXd orig = xtx_.selfadjointView<Eigen::Upper>();
        Eigen::MatrixXd full = orig;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(full);
        double lmax = eig.eigenvalues().cwiseAbs().maxCoeff();
        double lmin = eig.eigenvalues().minCoeff();
        bool singular = !(lmin > 1e-10 * std::max(lmax, 1.0));
        if (singular && !ridge_fallback) {
            throw ModelError(
                "singular design matrix: features are linearly dependent "
                "(re-run with the ridge fallback to force a solution)");
        }
        if (singular) {
            full += ridge_lambda * std::max(lmax, 1.0) *
                    Eigen::MatrixXd::Identity(full.rows(), full.cols());
        }
        Eigen::VectorXd beta = full.ldlt().solve(xty_);
        Fit fit;
        fit.n = n_;
        fit.weights.resize(p_);
        for (size_t i = 0; i < p_; ++i) fit.weights[i] = beta(static_cast<long>(i));
        fit.intercept = beta(static_cast<long>(p_));
        double rss = yty_ - 2.0 * beta.dot(xty_) + beta.dot(orig * beta);
        fit.mse = std::max(0.0, rss / static_cast<double>(n_));
        return fit;
    }

    const Eigen::MatrixXd& xtx() const { return xtx_; }

private:
    size_t p_;
    Eigen::MatrixXd xtx_; // upper triangle, intercept column last
    Eigen::VectorXd xty_;
    double yty_ = 0.0;
    size_t n_ = 0;
};

std::vector<std::string> observed_feature_names(const ScmModel& model,
                                                const std::string& target) {
    std::vector<std::string> out;
    for (const auto& v : model.variables) {
        if (v.role != VarRole::Observed) continue;
        if (v.name == target || v.is_prediction) continue;
        out.push_back(v.name);
    }
    return out;
}

void require_columns(const Dataset& data, const std::vector<std::string>& cols) {
    for (const auto& c : cols) {
        if (!data.has_column(c)) {
            throw DataError("training data lacks required column '" + c + "'");
        }
    }
}

// Hide the outcome mechanism: the returned model has no equation for the
// target (nor for anything downstream of it, nor backgrounds that fed only
// the removed part).
ScmModel redact_target(const ScmModel& model, const std::string& target) {
    if (model.index_of(target) < 0) return model;
    return model.without({target});
}

std::vector<std::string> admissible_backgrounds(const ScmModel& redacted,
                                                const std::string& attr) {
    auto anc = redacted.ancestors(attr);
    std::vector<std::string> out;
    for (const auto& v : redacted.variables) {
        if (v.role != VarRole::Background) continue;
        if (anc.count(v.name)) continue; // determines the attribute
        out.push_back(v.name);
    }
    return out;
}

std::vector<std::string> evidence_columns(const ScmModel& redacted,
                                          const Dataset& data) {
    std::vector<std::string> out;
    for (const auto& v : redacted.variables) {
        if (v.role == VarRole::Observed && data.has_column(v.name)) {
            out.push_back(v.name);
        }
    }
    return out;
}

std::string required_protected(const ScmModel& model) {
    auto attr = model.protected_variable();
    if (!attr) throw ModelError("model has no protected attribute");
    return *attr;
}

// Exact expectations of every observed variable under the mutilated model,
// by enumeration over the discrete background product.
std::map<std::string, double> enumerate_expectations(const ScmModel& model) {
    std::vector<std::string> bg;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> pmf;
    for (const auto& v : model.variables) {
        if (v.role != VarRole::Background) continue;
        bg.push_back(v.name);
        const NoiseDist& d = model.noise.at(v.name);
        if (d.family == NoiseDist::Family::Normal) {
            throw ModelError("exact enumeration needs discrete backgrounds");
        }
        std::vector<double> vals, ps;
        if (d.family == NoiseDist::Family::Bernoulli) {
            vals = {0.0, 1.0};
            ps = {1.0 - d.p, d.p};
        } else {
            for (size_t c = 0; c < d.probs.size(); ++c) {
                vals.push_back(v.domain ? static_cast<double>(v.domain->codes[c])
                                        : static_cast<double>(c));
                ps.push_back(d.probs[c]);
            }
        }
        values.push_back(std::move(vals));
        pmf.push_back(std::move(ps));
    }
    double states = 1.0;
    for (const auto& v : values) states *= static_cast<double>(v.size());
    if (states > (1 << 22)) {
        throw ModelError("discrete background state space too large to enumerate");
    }

    std::map<std::string, double> expect;
    std::vector<size_t> idx(bg.size(), 0);
    std::vector<double> slots(model.variables.size(), 0.0);
    std::vector<int> bg_slot(bg.size());
    for (size_t i = 0; i < bg.size(); ++i) bg_slot[i] = model.index_of(bg[i]);
    for (;;) {
        double w = 1.0;
        for (size_t i = 0; i < bg.size(); ++i) {
            slots[static_cast<size_t>(bg_slot[i])] = values[i][idx[i]];
            w *= pmf[i][idx[i]];
        }
        if (w > 0.0) {
            model.evaluate_slots(slots);
            for (const auto& v : model.variables) {
                if (v.role == VarRole::Observed) {
                    expect[v.name] +=
                        w * slots[static_cast<size_t>(model.index_of(v.name))];
                }
            }
        }
        size_t d = 0;
        while (d < bg.size() && ++idx[d] == values[d].size()) {
            idx[d] = 0;
            ++d;
        }
        if (d == bg.size()) break;
    }
    return expect;
}

// Total causal effect of the attribute on each feature, per unit of the
// attribute. Path coefficients when every equation is linear; otherwise an
// exact do-contrast by enumeration (binary attribute, discrete model).
std::map<std::string, double> total_effects(const ScmModel& model,
                                            const std::string& attr) {
    bool all_linear = true;
    std::map<std::string, LinearForm> forms;
    for (const auto& [var, body] : model.equations) {
        forms[var] = linearize(body);
        if (!forms[var].is_linear) all_linear = false;
    }
    std::map<std::string, double> te;
    if (all_linear) {
        te[attr] = 1.0;
        for (int vi : model.topological_order()) {
            const auto& v = model.variables[static_cast<size_t>(vi)];
            if (v.role != VarRole::Observed || v.name == attr) continue;
            double t = 0.0;
            for (const auto& [ref, coef] : forms[v.name].coeffs) {
                if (auto it = te.find(ref); it != te.end()) t += coef * it->second;
            }
            te[v.name] = t;
        }
        return te;
    }

    const auto& decl = model.decl(attr);
    if (!decl.domain || decl.domain->codes.size() != 2) {
        throw ModelError(
            "total-effect constraint needs linear equations, or a discrete "
            "model with a binary protected attribute");
    }
    double lo = static_cast<double>(decl.domain->codes[0]);
    double hi = static_cast<double>(decl.domain->codes[1]);
    auto e_lo = enumerate_expectations(model.intervene({{attr, lo}}));
    auto e_hi = enumerate_expectations(model.intervene({{attr, hi}}));
    te[attr] = 1.0;
    for (const auto& [var, ev] : e_hi) {
        if (var == attr) continue;
        te[var] = (ev - e_lo.at(var)) / (hi - lo);
    }
    return te;
}

std::vector<double> raw_row(const Dataset& data, size_t r,
                            const std::vector<int>& cols) {
    std::vector<double> out(cols.size());
    for (size_t i = 0; i < cols.size(); ++i) {
        out[i] = data.at(r, static_cast<size_t>(cols[i]));
    }
    return out;
}

} // namespace

Predictor train_unconstrained(const ScmModel& model, const Dataset& data,
                              const std::string& target, const TrainOptions& opts) {
    model.require_valid();
    if (!data.has_column(target)) {
        throw DataError("target column '" + target + "' not in training data");
    }
    auto names = observed_feature_names(model, target);
    require_columns(data, names);

    std::vector<int> cols;
    for (const auto& n : names) cols.push_back(data.column_index(n));
    int ycol = data.column_index(target);

    OlsAccumulator acc(names.size());
    for (size_t r = 0; r < data.n_rows; ++r) {
        acc.add(raw_row(data, r, cols), data.at(r, static_cast<size_t>(ycol)));
    }
    auto fit = acc.solve(opts.ridge_fallback, opts.ridge_lambda);

    Predictor p;
    p.regime = Regime::Unconstrained;
    p.target = target;
    for (const auto& n : names) p.features.push_back({Feature::Kind::Raw, n, 0.0});
    p.weights = fit.weights;
    p.intercept = fit.intercept;
    p.diagnostics = {fit.mse, data.n_rows, fit.n, 1, opts.seed, 0};
    p.trained_on_model = model_hash(model);
    return p;
}

Predictor train_counterfactually_fair(const ScmModel& model, const Dataset& data,
                                      const std::string& target,
                                      const TrainOptions& opts) {
    model.require_valid();
    if (!data.has_column(target)) {
        throw DataError("target column '" + target + "' not in training data");
    }
    std::string attr = required_protected(model);
    ScmModel redacted = redact_target(model, target);
    if (!abduction_supported(redacted)) {
        throw AbductionError("counterfactually fair training needs a model with "
                             "supported abduction");
    }

    auto desc = model.descendants(attr);
    std::vector<std::string> raw;
    for (const auto& v : redacted.variables) {
        if (v.role != VarRole::Observed) continue;
        if (v.name == attr || v.name == target || v.is_prediction) continue;
        if (desc.count(v.name)) continue;
        raw.push_back(v.name);
    }
    require_columns(data, raw);
    auto backgrounds = admissible_backgrounds(redacted, attr);
    auto evidence_vars = evidence_columns(redacted, data);

    std::vector<int> raw_cols;
    for (const auto& n : raw) raw_cols.push_back(data.column_index(n));
    int ycol = data.column_index(target);

    const size_t p = raw.size() + backgrounds.size();
    OlsAccumulator acc(p);
    size_t dropped = 0;
    std::vector<double> x(p);
    for (size_t r = 0; r < data.n_rows; ++r) {
        Evidence ev;
        for (const auto& c : evidence_vars) ev.values[c] = data.at(r, c);
        PosteriorU posterior;
        try {
            posterior = abduct(redacted, ev);
        } catch (const AbductionError&) {
            ++dropped;
            continue;
        }
        double y = data.at(r, static_cast<size_t>(ycol));
        for (size_t i = 0; i < raw.size(); ++i) {
            x[i] = data.at(r, static_cast<size_t>(raw_cols[i]));
        }
        const auto& names = posterior.background_names();
        size_t draws = posterior.is_point_mass() ? 1 : opts.n_mc;
        for (size_t j = 0; j < draws; ++j) {
            auto u = posterior.draw(opts.seed, r * opts.n_mc + j);
            for (size_t b = 0; b < backgrounds.size(); ++b) {
                auto it = std::find(names.begin(), names.end(), backgrounds[b]);
                x[raw.size() + b] = u[static_cast<size_t>(it - names.begin())];
            }
            acc.add(x, y);
        }
    }
    if (dropped == data.n_rows) {
        throw AbductionError("abduction failed on every training row");
    }
    auto fit = acc.solve(opts.ridge_fallback, opts.ridge_lambda);

    Predictor out;
    out.regime = Regime::CounterfactuallyFair;
    out.target = target;
    out.protected_attr = attr;
    for (const auto& n : raw) out.features.push_back({Feature::Kind::Raw, n, 0.0});
    for (const auto& n : backgrounds) {
        out.features.push_back({Feature::Kind::Background, n, 0.0});
    }
    out.weights = fit.weights;
    out.intercept = fit.intercept;
    out.diagnostics = {fit.mse, data.n_rows, fit.n, opts.n_mc, opts.seed, dropped};
    out.trained_on_model = model_hash(model);
    return out;
}

Predictor train_interventional_linear(const ScmModel& model, const Dataset& data,
                                      const std::string& target,
                                      const TrainOptions& opts) {
    model.require_valid();
    if (!data.has_column(target)) {
        throw DataError("target column '" + target + "' not in training data");
    }
    std::string attr = required_protected(model);
    auto names = observed_feature_names(model, target);
    require_columns(data, names);

    auto te = total_effects(model, attr);
    const size_t p = names.size();
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<long>(p));
    for (size_t i = 0; i < p; ++i) {
        if (auto it = te.find(names[i]); it != te.end()) {
            c(static_cast<long>(i)) = it->second;
        }
    }

    // Null-space reparameterization: w = N theta with N an orthonormal basis
    // of c-perp, so the constraint holds to machine precision by construction.
    Eigen::MatrixXd cmat(static_cast<long>(p), 1);
    cmat.col(0) = c;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(cmat);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd nullspace = q.rightCols(static_cast<long>(p - 1));

    std::vector<int> cols;
    for (const auto& n : names) cols.push_back(data.column_index(n));
    int ycol = data.column_index(target);

    OlsAccumulator acc(p - 1);
    Eigen::VectorXd xrow(static_cast<long>(p));
    std::vector<double> reduced(p - 1);
    for (size_t r = 0; r < data.n_rows; ++r) {
        for (size_t i = 0; i < p; ++i) {
            xrow(static_cast<long>(i)) = data.at(r, static_cast<size_t>(cols[i]));
        }
        Eigen::VectorXd z = nullspace.transpose() * xrow;
        for (size_t i = 0; i < p - 1; ++i) reduced[i] = z(static_cast<long>(i));
        acc.add(reduced, data.at(r, static_cast<size_t>(ycol)));
    }
    auto fit = acc.solve(opts.ridge_fallback, opts.ridge_lambda);

    Eigen::VectorXd theta(static_cast<long>(p - 1));
    for (size_t i = 0; i < p - 1; ++i) theta(static_cast<long>(i)) = fit.weights[i];
    Eigen::VectorXd w = nullspace * theta;

    Predictor out;
    out.regime = Regime::InterventionalConstrained;
    out.target = target;
    out.protected_attr = attr;
    for (const auto& n : names) out.features.push_back({Feature::Kind::Raw, n, 0.0});
    out.weights.resize(p);
    for (size_t i = 0; i < p; ++i) out.weights[i] = w(static_cast<long>(i));
    out.intercept = fit.intercept;
    out.diagnostics = {fit.mse, data.n_rows, fit.n, 1, opts.seed, 0};
    out.trained_on_model = model_hash(model);
    return out;
}

Predictor train_path_specific(const ScmModel& model, const Dataset& data,
                              const std::string& target, const EdgeSet& unfair_edges,
                              const TrainOptions& opts) {
    model.require_valid();
    if (!data.has_column(target)) {
        throw DataError("target column '" + target + "' not in training data");
    }
    std::string attr = required_protected(model);
    const auto& attr_decl = model.decl(attr);
    if (!attr_decl.domain) {
        throw ModelError("path-specific training needs a discrete protected "
                         "attribute (clamping is per protected value)");
    }
    unfair_edges.check_against(model);

    ScmModel redacted = redact_target(model, target);
    if (!abduction_supported(redacted)) {
        throw AbductionError("path-specific training needs a model with supported "
                             "abduction");
    }
    // Edges into redacted-away variables carry no features.
    EdgeSet effective;
    for (const auto& e : unfair_edges.edges) {
        if (redacted.has_edge(e.first, e.second)) effective.edges.insert(e);
    }
    PathSpecificPlan plan(redacted, attr, effective);

    // Variables reached by unfair flow, under edge gating: a variable is
    // touched when an active in-edge comes from the attribute or from a
    // touched variable.
    std::set<std::string> touched;
    for (int vi : redacted.topological_order()) {
        const auto& v = redacted.variables[static_cast<size_t>(vi)];
        if (v.role != VarRole::Observed) continue;
        for (int pi : redacted.parents()[static_cast<size_t>(vi)]) {
            const auto& pname = redacted.variables[static_cast<size_t>(pi)].name;
            if (!effective.contains(pname, v.name)) continue;
            if (pname == attr || touched.count(pname)) {
                touched.insert(v.name);
                break;
            }
        }
    }

    std::vector<std::string> clamped;
    for (const auto& v : redacted.variables) {
        if (v.role != VarRole::Observed || v.is_prediction || v.name == attr) continue;
        if (effective.contains(attr, v.name)) clamped.push_back(v.name);
    }
    std::vector<std::string> raw;
    for (const auto& v : redacted.variables) {
        if (v.role != VarRole::Observed) continue;
        if (v.name == attr || v.name == target || v.is_prediction) continue;
        if (touched.count(v.name)) continue;
        raw.push_back(v.name);
    }
    auto slot = model.prediction_variable();
    bool include_attr = slot ? (model.has_edge(attr, *slot) &&
                                !unfair_edges.contains(attr, *slot))
                             : unfair_edges.empty();

    auto backgrounds = admissible_backgrounds(redacted, attr);
    auto evidence_vars = evidence_columns(redacted, data);
    require_columns(data, {attr});

    std::vector<double> clamp_values;
    for (long long code : attr_decl.domain->codes) {
        clamp_values.push_back(static_cast<double>(code));
    }

    const size_t n_clamped = clamped.size() * clamp_values.size();
    const size_t p = n_clamped + raw.size() + (include_attr ? 1 : 0) +
                     backgrounds.size();
    OlsAccumulator acc(p);
    size_t dropped = 0;
    int ycol = data.column_index(target);

    const size_t nvars = redacted.variables.size();
    std::vector<double> base(nvars), mod(nvars), x(p);
    std::vector<int> clamped_slot, raw_slot;
    for (const auto& n : clamped) clamped_slot.push_back(redacted.index_of(n));
    for (const auto& n : raw) raw_slot.push_back(redacted.index_of(n));

    for (size_t r = 0; r < data.n_rows; ++r) {
        Evidence ev;
        for (const auto& c : evidence_vars) ev.values[c] = data.at(r, c);
        double a_factual = data.at(r, attr);
        PosteriorU posterior;
        try {
            posterior = abduct(redacted, ev);
        } catch (const AbductionError&) {
            ++dropped;
            continue;
        }
        double y = data.at(r, static_cast<size_t>(ycol));
        const auto& names = posterior.background_names();
        size_t draws = posterior.is_point_mass() ? 1 : opts.n_mc;
        for (size_t j = 0; j < draws; ++j) {
            auto u = posterior.draw(opts.seed, r * opts.n_mc + j);
            for (size_t i = 0; i < names.size(); ++i) {
                base[static_cast<size_t>(redacted.index_of(names[i]))] = u[i];
            }
            size_t f = 0;
            // Clamped features share the baseline world across protected
            // values; evaluate once per value.
            for (size_t k = 0; k < clamp_values.size(); ++k) {
                plan.evaluate(a_factual, clamp_values[k], base, mod);
                for (size_t ci = 0; ci < clamped.size(); ++ci) {
                    x[ci * clamp_values.size() + k] =
                        mod[static_cast<size_t>(clamped_slot[ci])];
                }
            }
            f = n_clamped;
            for (size_t i = 0; i < raw.size(); ++i) {
                x[f++] = base[static_cast<size_t>(raw_slot[i])];
            }
            if (include_attr) x[f++] = a_factual;
            for (size_t b = 0; b < backgrounds.size(); ++b) {
                auto it = std::find(names.begin(), names.end(), backgrounds[b]);
                x[f++] = u[static_cast<size_t>(it - names.begin())];
            }
            acc.add(x, y);
        }
    }
    if (dropped == data.n_rows) {
        throw AbductionError("abduction failed on every training row");
    }
    auto fit = acc.solve(opts.ridge_fallback, opts.ridge_lambda);

    Predictor out;
    out.regime = Regime::PathSpecificFair;
    out.target = target;
    out.protected_attr = attr;
    out.unfair_edges = unfair_edges;
    for (const auto& w : clamped) {
        for (double v : clamp_values) {
            out.features.push_back({Feature::Kind::Clamped, w, v});
        }
    }
    for (const auto& n : raw) out.features.push_back({Feature::Kind::Raw, n, 0.0});
    if (include_attr) out.features.push_back({Feature::Kind::Raw, attr, 0.0});
    for (const auto& n : backgrounds) {
        out.features.push_back({Feature::Kind::Background, n, 0.0});
    }
    out.weights = fit.weights;
    out.intercept = fit.intercept;
    out.diagnostics = {fit.mse, data.n_rows, fit.n, opts.n_mc, opts.seed, dropped};
    out.trained_on_model = model_hash(model);
    return out;
}

namespace {

bool needs_abduction(const Predictor& p) {
    for (const auto& f : p.features) {
        if (f.kind != Feature::Kind::Raw) return true;
    }
    return false;
}

} // namespace

double predict(const Predictor& predictor, const ScmModel& model,
               const Evidence& row, size_t n_mc, uint64_t seed) {
    model.require_valid();
    auto raw_value = [&](const std::string& var) {
        auto it = row.values.find(var);
        if (it == row.values.end()) {
            throw ModelError("prediction row is missing required variable '" + var +
                             "'");
        }
        return it->second;
    };

    if (!needs_abduction(predictor)) {
        double acc = predictor.intercept;
        for (size_t i = 0; i < predictor.features.size(); ++i) {
            acc += predictor.weights[i] * raw_value(predictor.features[i].var);
        }
        return acc;
    }

    ScmModel redacted = redact_target(model, predictor.target);
    Evidence ev;
    for (const auto& v : redacted.variables) {
        if (v.role != VarRole::Observed) continue;
        if (auto it = row.values.find(v.name); it != row.values.end()) {
            ev.values[v.name] = it->second;
        }
    }
    PosteriorU posterior = abduct(redacted, ev);
    const auto& names = posterior.background_names();

    bool has_clamped = false;
    for (const auto& f : predictor.features) {
        has_clamped = has_clamped || f.kind == Feature::Kind::Clamped;
    }
    std::unique_ptr<PathSpecificPlan> plan;
    double a_factual = 0.0;
    if (has_clamped) {
        EdgeSet effective;
        for (const auto& e : predictor.unfair_edges.edges) {
            if (redacted.has_edge(e.first, e.second)) effective.edges.insert(e);
        }
        plan = std::make_unique<PathSpecificPlan>(redacted, predictor.protected_attr,
                                                  effective);
        a_factual = raw_value(predictor.protected_attr);
    }

    const size_t nvars = redacted.variables.size();
    std::vector<double> base(nvars), mod(nvars);
    size_t draws = posterior.is_point_mass() ? 1 : n_mc;
    double total = 0.0;
    for (size_t j = 0; j < draws; ++j) {
        auto u = posterior.draw(seed, j);
        double acc = predictor.intercept;
        if (plan) {
            for (size_t i = 0; i < names.size(); ++i) {
                base[static_cast<size_t>(redacted.index_of(names[i]))] = u[i];
            }
        }
        std::map<double, std::vector<double>> clamped_worlds;
        for (size_t i = 0; i < predictor.features.size(); ++i) {
            const auto& f = predictor.features[i];
            double v = 0.0;
            switch (f.kind) {
                case Feature::Kind::Raw:
                    v = raw_value(f.var);
                    break;
                case Feature::Kind::Background: {
                    auto it = std::find(names.begin(), names.end(), f.var);
                    if (it == names.end()) {
                        throw ModelError("posterior has no background '" + f.var + "'");
                    }
                    v = u[static_cast<size_t>(it - names.begin())];
                    break;
                }
                case Feature::Kind::Clamped: {
                    auto w = clamped_worlds.find(f.clamp_value);
                    if (w == clamped_worlds.end()) {
                        plan->evaluate(a_factual, f.clamp_value, base, mod);
                        w = clamped_worlds.emplace(f.clamp_value, mod).first;
                    }
                    v = w->second[static_cast<size_t>(redacted.index_of(f.var))];
                    break;
                }
            }
            acc += predictor.weights[i] * v;
        }
        total += acc;
    }
    return total / static_cast<double>(draws);
}

WorldPredictor as_world_predictor(const Predictor& predictor, const ScmModel& model) {
    model.require_valid();
    struct Bound {
        std::vector<int> slots; // per feature: model slot
        std::vector<const Feature*> features;
        std::vector<double> weights;
        double intercept = 0.0;
        std::shared_ptr<PathSpecificPlan> plan;
        const ScmModel* model = nullptr;
        std::vector<double> base, mod;
        std::map<double, std::vector<double>> clamp_cache;
    };
    auto b = std::make_shared<Bound>();
    auto keep = std::make_shared<Predictor>(predictor);
    b->model = &model;
    b->weights = keep->weights;
    b->intercept = keep->intercept;
    bool has_clamped = false;
    for (const auto& f : keep->features) {
        b->features.push_back(&f);
        int s = model.index_of(f.var);
        if (s < 0) {
            throw ModelError("predictor feature '" + f.var +
                             "' is not a model variable");
        }
        b->slots.push_back(s);
        has_clamped = has_clamped || f.kind == Feature::Kind::Clamped;
    }
    if (has_clamped) {
        EdgeSet effective;
        for (const auto& e : keep->unfair_edges.edges) {
            if (model.has_edge(e.first, e.second)) effective.edges.insert(e);
        }
        b->plan = std::make_shared<PathSpecificPlan>(model, keep->protected_attr,
                                                     effective);
        b->base.resize(model.variables.size());
        b->mod.resize(model.variables.size());
    }

    return [b, keep](std::span<const double> slots, double factual_attr) {
        double acc = b->intercept;
        bool clamps_ready = false;
        for (size_t i = 0; i < b->features.size(); ++i) {
            const Feature& f = *b->features[i];
            double v = 0.0;
            if (f.kind == Feature::Kind::Clamped) {
                if (!clamps_ready) {
                    // Clamped features depend only on the unit's backgrounds
                    // and factual attribute; rebuild per call.
                    b->clamp_cache.clear();
                    for (const auto& var : b->model->variables) {
                        if (var.role == VarRole::Background) {
                            size_t s =
                                static_cast<size_t>(b->model->index_of(var.name));
                            b->base[s] = slots[s];
                        }
                    }
                    clamps_ready = true;
                }
                auto w = b->clamp_cache.find(f.clamp_value);
                if (w == b->clamp_cache.end()) {
                    b->plan->evaluate(factual_attr, f.clamp_value, b->base, b->mod);
                    w = b->clamp_cache.emplace(f.clamp_value, b->mod).first;
                }
                v = w->second[static_cast<size_t>(b->slots[i])];
            } else {
                v = slots[static_cast<size_t>(b->slots[i])];
            }
            acc += b->weights[i] * v;
        }
        return acc;
    };
}

std::vector<std::string> audit_recipe(const Predictor& predictor,
                                      const ScmModel& model) {
    std::vector<std::string> findings;
    auto add = [&](std::string s) { findings.push_back(std::move(s)); };
    const std::string& attr = predictor.protected_attr;

    switch (predictor.regime) {
        case Regime::Unconstrained:
            break;
        case Regime::CounterfactuallyFair: {
            auto desc = model.descendants(attr);
            for (const auto& f : predictor.features) {
                if (f.kind == Feature::Kind::Raw) {
                    if (f.var == attr) add("raw feature is the protected attribute");
                    if (desc.count(f.var)) {
                        add("raw feature '" + f.var +
                            "' is a descendant of the protected attribute");
                    }
                } else if (f.kind == Feature::Kind::Background) {
                    if (model.index_of(f.var) >= 0 && !model.is_background(f.var)) {
                        add("'" + f.var + "' is not a background variable");
                    }
                    if (model.ancestors(attr).count(f.var)) {
                        add("background feature '" + f.var +
                            "' is an ancestor of the protected attribute");
                    }
                }
            }
            break;
        }
        case Regime::InterventionalConstrained: {
            auto te = total_effects(model, attr);
            double resid = 0.0;
            for (size_t i = 0; i < predictor.features.size(); ++i) {
                auto it = te.find(predictor.features[i].var);
                if (it != te.end()) resid += predictor.weights[i] * it->second;
            }
            if (std::abs(resid) > 1e-8) {
                add("total-effect constraint residual " + format_number(resid) +
                    " exceeds 1e-8");
            }
            break;
        }
        case Regime::PathSpecificFair: {
            std::set<std::string> touched;
            for (int vi : model.topological_order()) {
                const auto& v = model.variables[static_cast<size_t>(vi)];
                if (v.role != VarRole::Observed) continue;
                for (int pi : model.parents()[static_cast<size_t>(vi)]) {
                    const auto& pname =
                        model.variables[static_cast<size_t>(pi)].name;
                    if (!predictor.unfair_edges.contains(pname, v.name)) continue;
                    if (pname == attr || touched.count(pname)) {
                        touched.insert(v.name);
                        break;
                    }
                }
            }
            auto slot = model.prediction_variable();
            for (const auto& f : predictor.features) {
                if (f.kind == Feature::Kind::Raw) {
                    if (f.var == attr) {
                        bool allowed = slot ? !predictor.unfair_edges.contains(attr, *slot)
                                            : predictor.unfair_edges.empty();
                        if (!allowed) {
                            add("raw attribute feature conflicts with an unfair "
                                "direct edge");
                        }
                    } else if (touched.count(f.var)) {
                        add("raw feature '" + f.var + "' receives unfair flow");
                    }
                } else if (f.kind == Feature::Kind::Clamped) {
                    if (!predictor.unfair_edges.contains(attr, f.var)) {
                        add("clamped feature '" + f.var +
                            "' has no unfair edge from the attribute");
                    }
                }
            }
            break;
        }
    }
    return findings;
}

std::string Predictor::serialize() const {
    nlohmann::ordered_json j;
    j["schema"] = "fairscm-predictor/1";
    j["regime"] = regime_name(regime);
    j["target"] = target;
    j["protected"] = protected_attr;
    nlohmann::ordered_json feats = nlohmann::ordered_json::array();
    for (const auto& f : features) {
        nlohmann::ordered_json fj;
        fj["kind"] = f.kind == Feature::Kind::Raw        ? "raw"
                     : f.kind == Feature::Kind::Background ? "background"
                                                           : "clamped";
        fj["var"] = f.var;
        if (f.kind == Feature::Kind::Clamped) fj["value"] = f.clamp_value;
        feats.push_back(fj);
    }
    j["features"] = feats;
    j["weights"] = weights;
    j["intercept"] = intercept;
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto& e : unfair_edges.edges) edges.push_back(e.first + "->" + e.second);
    j["unfair_edges"] = edges;
    j["diagnostics"] = {
        {"mse", diagnostics.mse},
        {"n_rows", diagnostics.n_rows},
        {"n_train_rows", diagnostics.n_train_rows},
        {"n_mc", diagnostics.n_mc},
        {"seed", diagnostics.seed},
        {"dropped_rows", diagnostics.dropped_rows},
    };
    j["model_hash"] = trained_on_model;
    return j.dump(2) + "\n";
}

Predictor Predictor::deserialize(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad predictor record: ") + e.what());
    }
    if (j.value("schema", "") != "fairscm-predictor/1") {
        throw DataError("unsupported predictor schema");
    }
    Predictor p;
    p.regime = regime_from_name(j.at("regime").get<std::string>());
    p.target = j.at("target").get<std::string>();
    p.protected_attr = j.value("protected", "");
    for (const auto& fj : j.at("features")) {
        Feature f;
        std::string kind = fj.at("kind").get<std::string>();
        f.kind = kind == "raw"        ? Feature::Kind::Raw
                 : kind == "background" ? Feature::Kind::Background
                                        : Feature::Kind::Clamped;
        f.var = fj.at("var").get<std::string>();
        f.clamp_value = fj.value("value", 0.0);
        p.features.push_back(f);
    }
    p.weights = j.at("weights").get<std::vector<double>>();
    p.intercept = j.at("intercept").get<double>();
    std::vector<std::string> edges =
        j.value("unfair_edges", std::vector<std::string>{});
    p.unfair_edges = EdgeSet::parse(edges);
    if (j.contains("diagnostics")) {
        const auto& d = j["diagnostics"];
        p.diagnostics.mse = d.value("mse", 0.0);
        p.diagnostics.n_rows = d.value("n_rows", size_t{0});
        p.diagnostics.n_train_rows = d.value("n_train_rows", size_t{0});
        p.diagnostics.n_mc = d.value("n_mc", size_t{1});
        p.diagnostics.seed = d.value("seed", uint64_t{0});
        p.diagnostics.dropped_rows = d.value("dropped_rows", size_t{0});
    }
    p.trained_on_model = j.value("model_hash", "");
    if (p.weights.size() != p.features.size()) {
        throw DataError("predictor record: weight/feature count mismatch");
    }
    return p;
}

} // namespace fairscm
