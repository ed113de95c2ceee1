#include "fairscm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fairscm/errors.hpp"
#include "fairscm/rng.hpp"

namespace fairscm {

namespace {

constexpr size_t kMaxDiscreteValues = 100;

std::vector<double> distinct_sorted(std::span<const double> xs) {
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

void require_discrete_column(const std::string& name, const std::vector<double>& col) {
    auto distinct = distinct_sorted(col);
    if (distinct.size() > kMaxDiscreteValues) {
        throw DataError("column '" + name + "' has " +
                        std::to_string(distinct.size()) +
                        " distinct values; a discrete column is required");
    }
    for (double v : col) {
        if (v != std::floor(v)) {
            throw DataError("column '" + name +
                            "' holds non-integer values; a discrete column is "
                            "required");
        }
    }
}

std::string value_text(double v) { return format_number(v); }

// Empirical distribution of `target` within each group of `key`, with
// optional Laplace smoothing over the global target support.
struct GroupedDist {
    std::vector<double> group_values;
    std::vector<double> target_values;
    std::map<double, Stratum> strata; // keyed by group value
};

GroupedDist grouped_distribution(const std::vector<double>& key,
                                 const std::vector<double>& target,
                                 const std::string& key_desc, double alpha) {
    GroupedDist out;
    out.group_values = distinct_sorted(key);
    out.target_values = distinct_sorted(target);
    std::map<double, std::map<double, size_t>> counts;
    std::map<double, size_t> totals;
    for (size_t i = 0; i < key.size(); ++i) {
        counts[key[i]][target[i]]++;
        totals[key[i]]++;
    }
    for (double g : out.group_values) {
        Stratum s;
        s.description = key_desc + "=" + value_text(g);
        s.count = totals[g];
        double denom = static_cast<double>(s.count) +
                       alpha * static_cast<double>(out.target_values.size());
        for (double t : out.target_values) {
            double c = 0.0;
            if (auto it = counts[g].find(t); it != counts[g].end()) {
                c = static_cast<double>(it->second);
            }
            s.probs[t] = (c + alpha) / denom;
        }
        out.strata[g] = std::move(s);
    }
    return out;
}

double max_pairwise_gap(const std::vector<const Stratum*>& strata,
                        const std::vector<double>& target_values) {
    double gap = 0.0;
    for (size_t a = 0; a < strata.size(); ++a) {
        for (size_t b = a + 1; b < strata.size(); ++b) {
            for (double t : target_values) {
                double pa = strata[a]->probs.count(t) ? strata[a]->probs.at(t) : 0.0;
                double pb = strata[b]->probs.count(t) ? strata[b]->probs.at(t) : 0.0;
                gap = std::max(gap, std::abs(pa - pb));
            }
        }
    }
    return gap;
}

} // namespace

GroupGap demographic_parity_gap(const Dataset& data, const std::string& pred,
                                const std::string& protected_col,
                                const MetricsConfig& cfg) {
    auto pred_col = data.column(pred);
    auto prot_col = data.column(protected_col);
    require_discrete_column(pred, pred_col);
    require_discrete_column(protected_col, prot_col);

    auto grouped = grouped_distribution(prot_col, pred_col, protected_col,
                                        cfg.laplace_alpha);
    if (grouped.group_values.size() < 2) {
        throw DataError("demographic-parity needs at least two protected groups "
                        "with rows; found " +
                        std::to_string(grouped.group_values.size()));
    }
    GroupGap out;
    out.criterion = "demographic-parity";
    for (const auto& [g, s] : grouped.strata) {
        (void)g;
        out.strata.push_back(s);
    }
    std::vector<const Stratum*> used;
    for (const auto& s : out.strata) used.push_back(&s);
    out.gap = max_pairwise_gap(used, grouped.target_values);
    return out;
}

namespace {

GroupGap conditional_gap(const Dataset& data, const std::string& pred,
                         const std::string& protected_col,
                         const std::string& cond_col, const MetricsConfig& cfg,
                         const std::string& criterion) {
    auto pred_col = data.column(pred);
    auto prot_col = data.column(protected_col);
    auto cond = data.column(cond_col);
    require_discrete_column(pred, pred_col);
    require_discrete_column(protected_col, prot_col);
    require_discrete_column(cond_col, cond);

    GroupGap out;
    out.criterion = criterion;
    auto cond_values = distinct_sorted(cond);
    auto target_values = distinct_sorted(pred_col);

    for (double cv : cond_values) {
        std::vector<double> sub_prot, sub_pred;
        for (size_t i = 0; i < cond.size(); ++i) {
            if (cond[i] == cv) {
                sub_prot.push_back(prot_col[i]);
                sub_pred.push_back(pred_col[i]);
            }
        }
        auto grouped = grouped_distribution(sub_prot, sub_pred, protected_col,
                                            cfg.laplace_alpha);
        std::vector<Stratum> kept;
        for (auto& [g, s] : grouped.strata) {
            (void)g;
            s.description += "," + cond_col + "=" + value_text(cv);
            if (s.count < cfg.min_stratum_count) {
                out.skipped_strata.push_back(s.description + " (n=" +
                                             std::to_string(s.count) + ")");
            } else {
                kept.push_back(s);
            }
        }
        std::vector<const Stratum*> ptrs;
        for (const auto& s : kept) ptrs.push_back(&s);
        out.gap = std::max(out.gap, max_pairwise_gap(ptrs, target_values));
        for (auto& s : kept) out.strata.push_back(std::move(s));
    }
    if (out.strata.empty()) {
        throw DataError(criterion + ": every stratum fell below the minimum count (" +
                        std::to_string(cfg.min_stratum_count) + ")");
    }
    return out;
}

} // namespace

GroupGap equalised_odds_gap(const Dataset& data, const std::string& pred,
                            const std::string& protected_col,
                            const std::string& outcome_col,
                            const MetricsConfig& cfg) {
    return conditional_gap(data, pred, protected_col, outcome_col, cfg,
                           "equalised-odds");
}

GroupGap calibration_gap(const Dataset& data, const std::string& pred,
                         const std::string& protected_col,
                         const std::string& outcome_col, const MetricsConfig& cfg) {
    // Calibration conditions on the prediction and audits the outcome.
    return conditional_gap(data, outcome_col, protected_col, pred, cfg,
                           "calibration");
}

std::vector<IfViolation> individual_fairness_report(
    const Dataset& data, const std::string& pred,
    const IndividualFairnessConfig& cfg) {
    if (cfg.delta < 0.0 || cfg.epsilon < 0.0) {
        throw DataError("individual-fairness thresholds must be nonnegative");
    }
    if (data.n_rows > cfg.max_rows && !cfg.allow_large) {
        throw DataError("individual-fairness scan is quadratic; " +
                        std::to_string(data.n_rows) + " rows exceeds the cutoff of " +
                        std::to_string(cfg.max_rows) +
                        " (pass allow_large to override)");
    }
    std::vector<std::string> feats = cfg.feature_columns;
    if (feats.empty()) {
        for (const auto& c : data.columns) {
            if (c != pred) feats.push_back(c);
        }
    }
    auto pred_col = data.column(pred);

    // standardized features: divide by the population standard deviation;
    // constant columns carry no distance information and are dropped
    std::vector<std::vector<double>> z;
    for (const auto& f : feats) {
        auto col = data.column(f);
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= static_cast<double>(col.size());
        double var = 0.0;
        for (double v : col) var += (v - mean) * (v - mean);
        var /= static_cast<double>(col.size());
        if (var <= 0.0) continue;
        double sd = std::sqrt(var);
        for (double& v : col) v /= sd;
        z.push_back(std::move(col));
    }

    std::vector<IfViolation> out;
    for (size_t i = 0; i < data.n_rows; ++i) {
        for (size_t j = i + 1; j < data.n_rows; ++j) {
            double d2 = 0.0;
            for (const auto& col : z) {
                double d = col[i] - col[j];
                d2 += d * d;
            }
            double dist = std::sqrt(d2);
            if (dist > cfg.delta) continue;
            double div = std::abs(pred_col[i] - pred_col[j]);
            if (div > cfg.epsilon) {
                out.push_back({i, j, dist, div});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const IfViolation& a, const IfViolation& b) {
        if (a.divergence != b.divergence) return a.divergence > b.divergence;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    return out;
}

TvEstimate tv_distance(std::span<const double> x, std::span<const double> y,
                       int bins) {
    TvEstimate out;
    if (x.empty() || y.empty()) return out;
    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    auto distinct = distinct_sorted(pooled);

    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    auto accumulate = [&](const std::vector<double>& px, const std::vector<double>& py) {
        double tv = 0.0, se = 0.0;
        for (size_t i = 0; i < px.size(); ++i) {
            tv += std::abs(px[i] - py[i]);
            se += std::sqrt(px[i] * (1.0 - px[i]) / nx + py[i] * (1.0 - py[i]) / ny);
        }
        out.tv = 0.5 * tv;
        out.se = 0.5 * se;
    };

    if (distinct.size() <= static_cast<size_t>(bins)) {
        // exact category frequencies
        std::map<double, size_t> cx, cy;
        for (double v : x) cx[v]++;
        for (double v : y) cy[v]++;
        std::vector<double> px, py;
        for (double v : distinct) {
            px.push_back(cx.count(v) ? static_cast<double>(cx[v]) / nx : 0.0);
            py.push_back(cy.count(v) ? static_cast<double>(cy[v]) / ny : 0.0);
        }
        accumulate(px, py);
        return out;
    }

    double lo = distinct.front(), hi = distinct.back();
    double width = (hi - lo) / static_cast<double>(bins);
    std::vector<double> px(static_cast<size_t>(bins), 0.0),
        py(static_cast<size_t>(bins), 0.0);
    auto bin_of = [&](double v) {
        int b = static_cast<int>((v - lo) / width);
        return std::clamp(b, 0, bins - 1);
    };
    for (double v : x) px[static_cast<size_t>(bin_of(v))] += 1.0 / nx;
    for (double v : y) py[static_cast<size_t>(bin_of(v))] += 1.0 / ny;
    accumulate(px, py);
    return out;
}

WorldPredictor variable_world_predictor(const ScmModel& model,
                                        const std::string& var) {
    int slot = model.index_of(var);
    if (slot < 0) throw ModelError("predictor variable '" + var + "' not declared");
    return [slot](std::span<const double> slots, double) {
        return slots[static_cast<size_t>(slot)];
    };
}

namespace {

// All observed variables evaluated under do(attr = value), in place.
struct DoPlan {
    const ScmModel* model;
    int attr_slot;
    std::vector<int> order; // observed topo order minus attr

    DoPlan(const ScmModel& m, const std::string& attr) : model(&m) {
        attr_slot = m.index_of(attr);
        if (attr_slot < 0) throw ModelError("no such variable: '" + attr + "'");
        for (int vi : m.topological_order()) {
            if (m.variables[static_cast<size_t>(vi)].role == VarRole::Observed &&
                vi != attr_slot) {
                order.push_back(vi);
            }
        }
    }

    void evaluate(double attr_value, std::vector<double>& slots) const {
        slots[static_cast<size_t>(attr_slot)] = attr_value;
        for (int vi : order) {
            const auto& var = model->variables[static_cast<size_t>(vi)];
            double v = eval_expr(model->resolved_equation(var.name), slots, var.name);
            if (var.domain && !var.domain->contains(v)) {
                throw EvalError("value " + format_number(v) + " of '" + var.name +
                                    "' is outside its declared domain",
                                var.name);
            }
            slots[static_cast<size_t>(vi)] = v;
        }
    }
};

std::vector<double> protected_domain_values(const ScmModel& model,
                                            const std::string& attr) {
    const auto& decl = model.decl(attr);
    if (!decl.domain) {
        throw ModelError("counterfactual audits need a discrete protected "
                         "attribute; '" +
                         attr + "' is continuous");
    }
    std::vector<double> out;
    for (long long c : decl.domain->codes) out.push_back(static_cast<double>(c));
    return out;
}

void fill_backgrounds(const ScmModel& model, const std::vector<std::string>& names,
                      const std::vector<double>& u, std::vector<double>& slots) {
    for (size_t i = 0; i < names.size(); ++i) {
        slots[static_cast<size_t>(model.index_of(names[i]))] = u[i];
    }
}

void summarize(CfGapReport& report) {
    double total = 0.0, total_se = 0.0;
    size_t ok = 0;
    for (const auto& p : report.points) {
        if (p.failed) {
            ++report.n_failed;
            continue;
        }
        report.max_gap = std::max(report.max_gap, p.gap);
        total += p.gap;
        total_se += p.se;
        ++ok;
    }
    if (ok > 0) {
        report.mean_gap = total / static_cast<double>(ok);
        report.se = total_se / static_cast<double>(ok);
    }
}

} // namespace

CfGapReport counterfactual_fairness_gap(const ScmModel& model,
                                        const WorldPredictor& predictor,
                                        const std::vector<Evidence>& evidence_points,
                                        size_t n, uint64_t seed,
                                        const MetricsConfig& cfg) {
    model.require_valid();
    auto attr = model.protected_variable();
    if (!attr) throw ModelError("model has no protected attribute");
    auto domain = protected_domain_values(model, *attr);
    DoPlan plan(model, *attr);

    CfGapReport report;
    report.criterion = "counterfactual-fairness";
    report.n_draws = n;

    for (size_t pi = 0; pi < evidence_points.size(); ++pi) {
        CfPointResult pr;
        pr.index = pi;
        const Evidence& ev = evidence_points[pi];
        try {
            auto a_it = ev.values.find(*attr);
            if (a_it == ev.values.end()) {
                throw AbductionError("evidence point lacks the protected attribute");
            }
            double a = a_it->second;
            PosteriorU posterior = abduct(model, ev);
            uint64_t point_seed = RowRng::mix64(seed ^ RowRng::mix64(pi + 1));

            std::vector<double> slots(model.variables.size(), 0.0);
            std::vector<double> factual_out(n), counter_out(n);
            for (double a_prime : domain) {
                if (a_prime == a) continue;
                for (size_t i = 0; i < n; ++i) {
                    auto u = posterior.draw(point_seed, i);
                    fill_backgrounds(model, posterior.background_names(), u, slots);
                    plan.evaluate(a, slots);
                    factual_out[i] = predictor(slots, a);
                    fill_backgrounds(model, posterior.background_names(), u, slots);
                    plan.evaluate(a_prime, slots);
                    counter_out[i] = predictor(slots, a);
                }
                auto tv = tv_distance(factual_out, counter_out, cfg.tv_bins);
                if (tv.tv > pr.gap) {
                    pr.gap = tv.tv;
                    pr.se = tv.se;
                }
            }
        } catch (const Error& e) {
            pr.failed = true;
            pr.error = e.what();
        }
        report.points.push_back(std::move(pr));
    }
    summarize(report);
    return report;
}

GroupGap interventional_gap(const ScmModel& model, const WorldPredictor& predictor,
                            double a, double a_prime, size_t n, uint64_t seed,
                            const MetricsConfig& cfg) {
    model.require_valid();
    auto attr = model.protected_variable();
    if (!attr) throw ModelError("model has no protected attribute");

    ScmModel world_a = model.intervene({{*attr, a}});
    ScmModel world_b = model.intervene({{*attr, a_prime}});
    Dataset da = world_a.sample(n, seed);
    Dataset db = world_b.sample(n, seed);

    std::vector<double> out_a(n), out_b(n);
    std::vector<double> slots(model.variables.size());
    for (size_t r = 0; r < n; ++r) {
        for (size_t c = 0; c < slots.size(); ++c) slots[c] = da.at(r, c);
        out_a[r] = predictor(slots, a);
        for (size_t c = 0; c < slots.size(); ++c) slots[c] = db.at(r, c);
        out_b[r] = predictor(slots, a_prime);
    }
    auto tv = tv_distance(out_a, out_b, cfg.tv_bins);

    GroupGap out;
    out.criterion = "interventional";
    out.gap = tv.tv;
    out.se = tv.se;
    Stratum sa, sb;
    sa.description = "do(" + *attr + "=" + value_text(a) + ")";
    sa.count = n;
    sb.description = "do(" + *attr + "=" + value_text(a_prime) + ")";
    sb.count = n;
    out.strata.push_back(std::move(sa));
    out.strata.push_back(std::move(sb));
    return out;
}

CfGapReport path_specific_cf_gap(const ScmModel& model,
                                 const WorldPredictor& predictor,
                                 const EdgeSet& active,
                                 const std::vector<Evidence>& evidence_points,
                                 size_t n, uint64_t seed,
                                 const MetricsConfig& cfg) {
    model.require_valid();
    auto attr = model.protected_variable();
    if (!attr) throw ModelError("model has no protected attribute");
    auto domain = protected_domain_values(model, *attr);
    PathSpecificPlan plan(model, *attr, active);

    // When the model carries a prediction-slot variable, the predictor's
    // inputs are gated by that slot's incoming edges.
    auto slot_var = model.prediction_variable();
    std::vector<int> slot_active; // variable slots read from the modified world
    bool attr_edge_active = false;
    if (slot_var) {
        for (const auto& v : model.variables) {
            if (v.name == *slot_var) continue;
            if (active.contains(v.name, *slot_var)) {
                if (v.name == *attr) {
                    attr_edge_active = true;
                } else {
                    slot_active.push_back(model.index_of(v.name));
                }
            }
        }
    }

    CfGapReport report;
    report.criterion = "path-specific-counterfactual";
    report.n_draws = n;

    const size_t nvars = model.variables.size();
    for (size_t pi = 0; pi < evidence_points.size(); ++pi) {
        CfPointResult pr;
        pr.index = pi;
        const Evidence& ev = evidence_points[pi];
        try {
            auto a_it = ev.values.find(*attr);
            if (a_it == ev.values.end()) {
                throw AbductionError("evidence point lacks the protected attribute");
            }
            double a = a_it->second;
            PosteriorU posterior = abduct(model, ev);
            uint64_t point_seed = RowRng::mix64(seed ^ RowRng::mix64(pi + 1));

            std::vector<double> base(nvars, 0.0), mod(nvars, 0.0), input(nvars, 0.0);
            std::vector<double> factual_out(n), modified_out(n);
            for (double a_prime : domain) {
                if (a_prime == a) continue;
                for (size_t i = 0; i < n; ++i) {
                    auto u = posterior.draw(point_seed, i);
                    fill_backgrounds(model, posterior.background_names(), u, base);
                    plan.evaluate(a, a_prime, base, mod);
                    factual_out[i] = predictor(base, a);
                    if (slot_var) {
                        input = base;
                        for (int s : slot_active) {
                            input[static_cast<size_t>(s)] = mod[static_cast<size_t>(s)];
                        }
                        input[static_cast<size_t>(model.index_of(*attr))] =
                            attr_edge_active ? a_prime : a;
                        modified_out[i] = predictor(input, a);
                    } else {
                        modified_out[i] = predictor(mod, a);
                    }
                }
                auto tv = tv_distance(factual_out, modified_out, cfg.tv_bins);
                if (tv.tv > pr.gap) {
                    pr.gap = tv.tv;
                    pr.se = tv.se;
                }
            }
        } catch (const Error& e) {
            pr.failed = true;
            pr.error = e.what();
        }
        report.points.push_back(std::move(pr));
    }
    summarize(report);
    return report;
}

std::vector<Evidence> evidence_grid(const ScmModel& model, const Dataset& data,
                                    size_t cap, uint64_t seed) {
    std::vector<std::string> cols;
    for (const auto& v : model.variables) {
        if (v.role != VarRole::Observed) continue;
        if (v.is_outcome || v.is_prediction) continue;
        if (data.has_column(v.name)) cols.push_back(v.name);
    }
    if (cols.empty()) throw DataError("no observed model columns in the dataset");

    std::set<std::vector<double>> distinct;
    std::vector<std::vector<double>> rows;
    for (size_t r = 0; r < data.n_rows; ++r) {
        std::vector<double> key;
        key.reserve(cols.size());
        for (const auto& c : cols) key.push_back(data.at(r, c));
        if (distinct.insert(key).second) rows.push_back(std::move(key));
    }
    if (rows.size() > cap) {
        // seeded uniform subsample without replacement (partial Fisher-Yates)
        RowRng rng(seed, 0xE71DE9CEull);
        for (size_t i = 0; i < cap; ++i) {
            size_t j = i + static_cast<size_t>(rng.next_u64() %
                                               static_cast<uint64_t>(rows.size() - i));
            std::swap(rows[i], rows[j]);
        }
        rows.resize(cap);
    }
    std::vector<Evidence> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        Evidence ev;
        for (size_t i = 0; i < cols.size(); ++i) ev.values[cols[i]] = row[i];
        out.push_back(std::move(ev));
    }
    return out;
}

} // namespace fairscm
