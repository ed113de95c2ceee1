#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairscm/model.hpp"

namespace fairscm {

/// Observed-variable conditioning event for abduction.
struct Evidence {
    std::map<std::string, double> values;

    bool empty() const { return values.empty(); }
};

/**
 * Posterior over the background variables given evidence — the abduction
 * step. Three exact representations:
 *
 *   Gaussian   — conditional mean and covariance from joint-Gaussian
 *                conditioning (linear equations, normal backgrounds);
 *   Discrete   — weighted enumeration of background states (all-discrete
 *                backgrounds);
 *   Degenerate — a point mass; re-evaluating the model at the point
 *                reproduces the evidence exactly.
 *
 * Draws are keyed by (seed, index) with the same counter-based contract as
 * dataset sampling, so partitioned drawing is order-independent.
 */
class PosteriorU {
public:
    enum class Mode { Gaussian, Discrete, Degenerate };

    Mode mode() const { return mode_; }
    const std::vector<std::string>& background_names() const { return names_; }
    size_t dim() const { return names_.size(); }

    /// One background assignment, aligned with background_names().
    std::vector<double> draw(uint64_t seed, uint64_t index) const;

    bool is_point_mass() const { return mode_ == Mode::Degenerate; }
    const std::vector<double>& point() const { return point_; }

    // Gaussian accessors (valid in Gaussian mode).
    const std::vector<double>& mean() const { return mean_; }
    double covariance(size_t i, size_t j) const { return cov_[i * dim() + j]; }

    // Discrete accessors (valid in Discrete mode).
    const std::vector<std::vector<double>>& support() const { return support_; }
    const std::vector<double>& weights() const { return weights_; }

    static PosteriorU gaussian(std::vector<std::string> names,
                               std::vector<double> mean, std::vector<double> cov,
                               std::vector<double> factor);
    static PosteriorU discrete(std::vector<std::string> names,
                               std::vector<std::vector<double>> support,
                               std::vector<double> weights);
    static PosteriorU degenerate(std::vector<std::string> names,
                                 std::vector<double> point);

private:
    Mode mode_ = Mode::Degenerate;
    std::vector<std::string> names_;
    std::vector<double> point_;
    std::vector<double> mean_;
    std::vector<double> cov_;    // row-major dim x dim
    std::vector<double> factor_; // row-major dim x dim, cov = F F^T
    std::vector<std::vector<double>> support_;
    std::vector<double> weights_; // normalized
    std::vector<double> cumulative_;
};

/**
 * Compute P(U | evidence). Supported families: all equations linear with
 * normal backgrounds, or all backgrounds discrete with finite support.
 * Anything else, zero-probability evidence, and degenerate Gaussian
 * conditioning raise AbductionError.
 */
PosteriorU abduct(const ScmModel& model, const Evidence& evidence);

/// True when abduct() would accept the model (family check only).
bool abduction_supported(const ScmModel& model);

} // namespace fairscm
