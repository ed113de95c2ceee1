#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fairscm/counterfactual.hpp"
#include "fairscm/dataset.hpp"
#include "fairscm/model.hpp"

namespace fairscm {

struct MetricsConfig {
    size_t min_stratum_count = 30; // conditional strata below this are skipped
    double laplace_alpha = 0.0;    // optional smoothing pseudo-count
    int tv_bins = 64;              // equal-width bins for continuous TV
    size_t evidence_cap = 256;     // evidence-grid subsample cap
};

/// One conditioning cell of a group criterion: its row count and the
/// empirical distribution of the audited column within it.
struct Stratum {
    std::string description;
    size_t count = 0;
    std::map<double, double> probs;
};

struct GroupGap {
    std::string criterion;
    double gap = 0.0;
    double se = 0.0; // Monte-Carlo standard error when estimated by sampling
    std::vector<Stratum> strata;
    std::vector<std::string> skipped_strata;
};

/// max over prediction values y and attribute pairs (a, a') of
/// |P(pred=y | A=a) - P(pred=y | A=a')|, from empirical frequencies.
GroupGap demographic_parity_gap(const Dataset& data, const std::string& pred,
                                const std::string& protected_col,
                                const MetricsConfig& cfg = {});

/// max over (y, a, a') of |P(pred=y | A=a, outcome=y') - P(pred=y | A=a', outcome=y')|;
/// strata under cfg.min_stratum_count are skipped and listed.
GroupGap equalised_odds_gap(const Dataset& data, const std::string& pred,
                            const std::string& protected_col,
                            const std::string& outcome_col,
                            const MetricsConfig& cfg = {});

/// Mirror of equalised odds with the roles of outcome and prediction swapped.
GroupGap calibration_gap(const Dataset& data, const std::string& pred,
                         const std::string& protected_col,
                         const std::string& outcome_col,
                         const MetricsConfig& cfg = {});

struct IndividualFairnessConfig {
    std::vector<std::string> feature_columns; // empty: every numeric column
                                              // except the prediction
    double delta = 0.0;   // distance threshold
    double epsilon = 0.0; // allowed prediction divergence
    size_t max_rows = 10000;
    bool allow_large = false; // override the O(n^2) cutoff
};

struct IfViolation {
    size_t i = 0;
    size_t j = 0;
    double distance = 0.0;
    double divergence = 0.0;
};

/// All pairs with standardized-Euclidean distance <= delta whose predictions
/// diverge by more than epsilon, sorted by divergence (descending).
std::vector<IfViolation> individual_fairness_report(
    const Dataset& data, const std::string& pred,
    const IndividualFairnessConfig& cfg);

/**
 * A predictor evaluated on one world of model values. `slots` hold every
 * model variable (declaration order); background slots carry the abducted
 * unit, so recipe predictors can read them directly. `factual_attr` is the
 * unit's factual protected value, needed by clamped-feature recipes.
 */
using WorldPredictor =
    std::function<double(std::span<const double> slots, double factual_attr)>;

/// Predictor that reads a single model variable.
WorldPredictor variable_world_predictor(const ScmModel& model,
                                        const std::string& var);

struct CfPointResult {
    size_t index = 0;
    double gap = 0.0;
    double se = 0.0;
    bool failed = false;
    std::string error;
};

struct CfGapReport {
    std::string criterion;
    double max_gap = 0.0;
    double mean_gap = 0.0;
    double se = 0.0; // mean of per-point standard-error estimates
    size_t n_draws = 0;
    size_t n_failed = 0;
    std::vector<CfPointResult> points;
};

/**
 * Counterfactual-fairness audit: per evidence point with factual attribute
 * value a, the total-variation distance between the predictor's output
 * distribution in the do(A=a) world and every do(A=a') world, over the
 * abducted posterior. Abduction failures mark the point failed, not the
 * whole audit.
 */
CfGapReport counterfactual_fairness_gap(const ScmModel& model,
                                        const WorldPredictor& predictor,
                                        const std::vector<Evidence>& evidence_points,
                                        size_t n, uint64_t seed,
                                        const MetricsConfig& cfg = {});

/// TV distance between predictor outputs under do(A=a) and do(A=a'),
/// sampling both worlds with the given seed.
GroupGap interventional_gap(const ScmModel& model, const WorldPredictor& predictor,
                            double a, double a_prime, size_t n, uint64_t seed,
                            const MetricsConfig& cfg = {});

/**
 * Path-specific variant: the modified side feeds the predictor through the
 * edge-gated worlds of `active`. When the model declares a prediction-slot
 * variable, the predictor's inputs are gated by that slot's incoming edges;
 * otherwise the predictor reads the modified world directly.
 */
CfGapReport path_specific_cf_gap(const ScmModel& model,
                                 const WorldPredictor& predictor,
                                 const EdgeSet& active,
                                 const std::vector<Evidence>& evidence_points,
                                 size_t n, uint64_t seed,
                                 const MetricsConfig& cfg = {});

/// Distinct observed rows of `data` as abduction evidence (outcome and
/// prediction-slot columns excluded), uniformly subsampled to `cap`.
std::vector<Evidence> evidence_grid(const ScmModel& model, const Dataset& data,
                                    size_t cap, uint64_t seed);

/// Total variation between two empirical samples plus a standard-error
/// estimate; exact category frequencies when the pooled support is small,
/// fixed equal-width binning otherwise.
struct TvEstimate {
    double tv = 0.0;
    double se = 0.0;
};
TvEstimate tv_distance(std::span<const double> x, std::span<const double> y,
                       int bins);

} // namespace fairscm
