#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairscm/counterfactual.hpp"
#include "fairscm/dataset.hpp"
#include "fairscm/metrics.hpp"
#include "fairscm/model.hpp"

namespace fairscm {

enum class Regime {
    Unconstrained,
    CounterfactuallyFair,
    InterventionalConstrained,
    PathSpecificFair,
};

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

/// One input of a linear predictor.
struct Feature {
    enum class Kind {
        Raw,        // an observed model variable, read from the data/world
        Background, // an abducted background variable
        Clamped,    // an unfair-edge variable re-evaluated at a fixed
                    // protected value with fair-path inputs at baseline
    };
    Kind kind = Kind::Raw;
    std::string var;
    double clamp_value = 0.0; // protected value for Clamped features

    std::string describe() const;
};

struct TrainDiagnostics {
    double mse = 0.0;
    size_t n_rows = 0;       // dataset rows
    size_t n_train_rows = 0; // rows after Monte-Carlo augmentation
    size_t n_mc = 1;
    uint64_t seed = 0;
    size_t dropped_rows = 0; // abduction failures
};

/// A fitted linear predictor tagged with the fairness regime it was
/// trained under. Serializes to a self-describing JSON record.
struct Predictor {
    Regime regime = Regime::Unconstrained;
    std::string target;
    std::string protected_attr; // empty for the unconstrained regime
    std::vector<Feature> features;
    std::vector<double> weights; // parallel to features
    double intercept = 0.0;
    EdgeSet unfair_edges; // path-specific regime only
    TrainDiagnostics diagnostics;
    std::string trained_on_model; // model hash

    std::string serialize() const;
    static Predictor deserialize(const std::string& text);
};

struct TrainOptions {
    size_t n_mc = 50; // posterior draws per row for abducted features
    uint64_t seed = 0;
    bool ridge_fallback = false; // opt-in handling of singular designs
    double ridge_lambda = 1e-8;
};

/// Ordinary least squares of the target on every observed variable
/// (prediction-slot variables excluded). Throws on singular designs unless
/// ridge_fallback is set.
Predictor train_unconstrained(const ScmModel& model, const Dataset& data,
                              const std::string& target,
                              const TrainOptions& opts = {});

/**
 * Features: observed non-descendants of the protected attribute (itself
 * excluded) plus abducted background variables that are not ancestors of
 * the attribute. The target's structural equation is never read: training
 * runs against a model with the target mechanism removed, so only the data
 * column carries outcome information. Each row expands into n_mc posterior
 * draws. Rows whose evidence has zero posterior probability are dropped
 * and counted.
 */
Predictor train_counterfactually_fair(const ScmModel& model, const Dataset& data,
                                      const std::string& target,
                                      const TrainOptions& opts = {});

/**
 * Least squares over all observed variables subject to a zero total causal
 * effect of the protected attribute on the prediction, solved exactly by
 * null-space reparameterization. The effect coefficients come from path
 * coefficients (linear models) or exact enumeration (discrete models with
 * a binary attribute).
 */
Predictor train_interventional_linear(const ScmModel& model, const Dataset& data,
                                      const std::string& target,
                                      const TrainOptions& opts = {});

/**
 * Path-specific recipe: for every variable receiving an unfair edge from
 * the attribute, one clamped feature per protected value; plus observables
 * untouched by unfair flow; plus abducted backgrounds. No feature depends
 * on which protected value is factual.
 */
Predictor train_path_specific(const ScmModel& model, const Dataset& data,
                              const std::string& target, const EdgeSet& unfair_edges,
                              const TrainOptions& opts = {});

/**
 * Evaluate on a new row. Recipes without abducted features are an exact
 * dot product; otherwise the prediction is the Monte-Carlo average over
 * n_mc posterior draws (deterministic given the seed). Throws ModelError
 * when the row misses a needed variable.
 */
double predict(const Predictor& predictor, const ScmModel& model,
               const Evidence& row, size_t n_mc, uint64_t seed);

/// Predictor as a slot-level function for the audit metrics.
WorldPredictor as_world_predictor(const Predictor& predictor, const ScmModel& model);

/// Re-check the regime invariants of a fitted predictor against a model;
/// findings are empty when the recipe satisfies its regime.
std::vector<std::string> audit_recipe(const Predictor& predictor,
                                      const ScmModel& model);

} // namespace fairscm
