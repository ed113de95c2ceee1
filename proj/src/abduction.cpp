#include "fairscm/abduction.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fairscm/errors.hpp"
#include "fairscm/rng.hpp"

namespace fairscm {

PosteriorU PosteriorU::gaussian(std::vector<std::string> names,
                                std::vector<double> mean, std::vector<double> cov,
                                std::vector<double> factor) {
    PosteriorU p;
    p.mode_ = Mode::Gaussian;
    p.names_ = std::move(names);
    p.mean_ = std::move(mean);
    p.cov_ = std::move(cov);
    p.factor_ = std::move(factor);
    return p;
}

PosteriorU PosteriorU::discrete(std::vector<std::string> names,
                                std::vector<std::vector<double>> support,
                                std::vector<double> weights) {
    PosteriorU p;
    if (support.size() == 1) {
        p.mode_ = Mode::Degenerate;
        p.names_ = std::move(names);
        p.point_ = support.front();
        return p;
    }
    p.mode_ = Mode::Discrete;
    p.names_ = std::move(names);
    p.support_ = std::move(support);
    p.weights_ = std::move(weights);
    double total = 0.0;
    for (double w : p.weights_) total += w;
    p.cumulative_.reserve(p.weights_.size());
    double acc = 0.0;
    for (double& w : p.weights_) {
        w /= total;
        acc += w;
        p.cumulative_.push_back(acc);
    }
    return p;
}

PosteriorU PosteriorU::degenerate(std::vector<std::string> names,
                                  std::vector<double> point) {
    PosteriorU p;
    p.mode_ = Mode::Degenerate;
    p.names_ = std::move(names);
    p.point_ = std::move(point);
    return p;
}

std::vector<double> PosteriorU::draw(uint64_t seed, uint64_t index) const {
    switch (mode_) {
        case Mode::Degenerate:
            return point_;
        case Mode::Discrete: {
            RowRng rng(seed, index);
            double u = rng.next_uniform();
            size_t lo = 0;
            while (lo + 1 < cumulative_.size() && u >= cumulative_[lo]) ++lo;
            return support_[lo];
        }
        case Mode::Gaussian: {
            RowRng rng(seed, index);
            const size_t k = dim();
            std::vector<double> z(k);
            for (size_t i = 0; i < k; ++i) z[i] = rng.next_normal(0.0, 1.0);
            std::vector<double> out(mean_);
            for (size_t i = 0; i < k; ++i) {
                double acc = 0.0;
                for (size_t j = 0; j < k; ++j) acc += factor_[i * k + j] * z[j];
                out[i] += acc;
            }
            return out;
        }
    }
    return {};
}

namespace {

enum class Family { Gaussian, Discrete, Unsupported };

Family detect_family(const ScmModel& model) {
    bool all_normal = true;
    bool all_discrete = true;
    for (const auto& [var, dist] : model.noise) {
        (void)var;
        if (dist.family == NoiseDist::Family::Normal) {
            all_discrete = false;
        } else {
            all_normal = false;
        }
    }
    if (all_normal) {
        for (const auto& [var, body] : model.equations) {
            (void)var;
            if (!linearize(body).is_linear) return Family::Unsupported;
        }
        return Family::Gaussian;
    }
    if (all_discrete) return Family::Discrete;
    return Family::Unsupported;
}

std::vector<std::string> background_names(const ScmModel& model) {
    std::vector<std::string> names;
    for (const auto& v : model.variables) {
        if (v.role == VarRole::Background) names.push_back(v.name);
    }
    return names;
}

void check_evidence(const ScmModel& model, const Evidence& evidence) {
    for (const auto& [var, value] : evidence.values) {
        int i = model.index_of(var);
        if (i < 0) throw AbductionError("evidence names undeclared variable '" + var + "'");
        const auto& d = model.variables[static_cast<size_t>(i)];
        if (d.role != VarRole::Observed) {
            throw AbductionError("evidence on background variable '" + var +
                                 "' is not allowed");
        }
        if (d.domain && !d.domain->contains(value)) {
            throw AbductionError("evidence value for '" + var +
                                 "' is outside its domain");
        }
    }
}

// Affine representation of every observed variable over the backgrounds:
// v = coeffs . u + constant, built by substitution in dependency order.
struct AffineRep {
    std::map<std::string, Eigen::VectorXd> coeffs;
    std::map<std::string, double> constants;
};

AffineRep affine_representation(const ScmModel& model,
                                const std::vector<std::string>& bg) {
    std::map<std::string, int> bg_index;
    for (size_t i = 0; i < bg.size(); ++i) bg_index[bg[i]] = static_cast<int>(i);
    AffineRep rep;
    for (int vi : model.topological_order()) {
        const auto& var = model.variables[static_cast<size_t>(vi)];
        if (var.role == VarRole::Background) continue;
        LinearForm form = linearize(model.equations.at(var.name));
        Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<long>(bg.size()));
        double k = form.constant;
        for (const auto& [ref, w] : form.coeffs) {
            if (auto it = bg_index.find(ref); it != bg_index.end()) {
                c[it->second] += w;
            } else {
                c += w * rep.coeffs.at(ref);
                k += w * rep.constants.at(ref);
            }
        }
        rep.coeffs[var.name] = std::move(c);
        rep.constants[var.name] = k;
    }
    return rep;
}

// Exact triangular inversion: valid when every observed variable is
// evidenced and every equation ends in "+ <private background>". The
// recovered point mass re-evaluates to the evidence bit for bit (the
// equation's partial sum T and the stored u = fl(v - T) recombine to v).
std::optional<std::vector<double>> try_sequential_inversion(
    const ScmModel& model, const Evidence& evidence,
    const std::vector<std::string>& bg) {
    for (const auto& v : model.variables) {
        if (v.role == VarRole::Observed && !evidence.values.count(v.name)) {
            return std::nullopt;
        }
    }
    std::map<std::string, const Expr*> pivot_lhs; // background -> partial expr
    std::set<std::string> used;
    for (const auto& [var, body] : model.equations) {
        (void)var;
        const auto* bin = std::get_if<Expr::Binary>(&body->node());
        if (!bin || bin->op != BinOp::Add) return std::nullopt;
        const auto* ref = std::get_if<Expr::Ref>(&bin->rhs->node());
        if (!ref || !model.is_background(ref->name)) return std::nullopt;
        if (!used.insert(ref->name).second) return std::nullopt;
        for (const auto& lhs_ref : referenced_variables(bin->lhs)) {
            if (model.is_background(lhs_ref)) return std::nullopt;
        }
        pivot_lhs[ref->name] = body.get();
    }
    if (used.size() != bg.size()) return std::nullopt;

    // Evaluate each equation's left part at the evidence values.
    std::vector<double> slots(model.variables.size(), 0.0);
    for (const auto& [var, value] : evidence.values) {
        slots[static_cast<size_t>(model.index_of(var))] = value;
    }
    std::vector<double> point(bg.size(), 0.0);
    for (size_t i = 0; i < bg.size(); ++i) {
        const std::string& u = bg[i];
        // Locate the observed variable whose equation pivots on u.
        for (const auto& [var, body] : model.equations) {
            const auto& bin = std::get<Expr::Binary>(body->node());
            const auto& ref = std::get<Expr::Ref>(bin.rhs->node());
            if (ref.name != u) continue;
            Expr::Ptr lhs = resolve_slots(bin.lhs, [&] {
                std::map<std::string, int> m;
                for (size_t j = 0; j < model.variables.size(); ++j) {
                    m[model.variables[j].name] = static_cast<int>(j);
                }
                return m;
            }());
            double partial = eval_expr(lhs, slots, var);
            point[i] = evidence.values.at(var) - partial;
            break;
        }
    }
    return point;
}

PosteriorU abduct_gaussian(const ScmModel& model, const Evidence& evidence,
                           const std::vector<std::string>& bg) {
    const long k = static_cast<long>(bg.size());
    Eigen::VectorXd mu(k);
    Eigen::VectorXd var_diag(k);
    for (long i = 0; i < k; ++i) {
        const NoiseDist& d = model.noise.at(bg[static_cast<size_t>(i)]);
        mu[i] = d.mean;
        var_diag[i] = d.stddev * d.stddev;
    }

    if (evidence.empty()) {
        std::vector<double> mean(bg.size()), cov(bg.size() * bg.size(), 0.0),
            factor(bg.size() * bg.size(), 0.0);
        for (long i = 0; i < k; ++i) {
            mean[static_cast<size_t>(i)] = mu[i];
            cov[static_cast<size_t>(i * k + i)] = var_diag[i];
            factor[static_cast<size_t>(i * k + i)] = std::sqrt(var_diag[i]);
        }
        return PosteriorU::gaussian(bg, std::move(mean), std::move(cov),
                                    std::move(factor));
    }

    if (auto point = try_sequential_inversion(model, evidence, bg)) {
        return PosteriorU::degenerate(bg, std::move(*point));
    }

    AffineRep rep = affine_representation(model, bg);
    const long m = static_cast<long>(evidence.values.size());
    Eigen::MatrixXd A(m, k);
    Eigen::VectorXd resid(m);
    long row = 0;
    for (const auto& [var, value] : evidence.values) {
        if (!rep.coeffs.count(var)) {
            throw AbductionError("evidence variable '" + var + "' has no equation");
        }
        A.row(row) = rep.coeffs.at(var).transpose();
        resid[row] = value - (rep.coeffs.at(var).dot(mu) + rep.constants.at(var));
        ++row;
    }

    Eigen::MatrixXd sigma_at = var_diag.asDiagonal() * A.transpose(); // k x m
    Eigen::MatrixXd s = A * sigma_at;                                 // m x m
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) {
        throw AbductionError(
            "degenerate Gaussian evidence: the evidence covariance is singular");
    }
    Eigen::VectorXd mean_post = mu + sigma_at * llt.solve(resid);
    Eigen::MatrixXd cov_post =
        Eigen::MatrixXd(var_diag.asDiagonal()) - sigma_at * llt.solve(sigma_at.transpose());
    cov_post = 0.5 * (cov_post + cov_post.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_post);
    double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    Eigen::VectorXd lambda = eig.eigenvalues();
    for (long i = 0; i < k; ++i) {
        if (lambda[i] < -1e-10 * scale) {
            throw AbductionError(
                "conditional covariance is not positive semidefinite");
        }
        lambda[i] = std::max(lambda[i], 0.0);
    }
    Eigen::MatrixXd fac =
        eig.eigenvectors() * lambda.cwiseSqrt().asDiagonal();

    std::vector<double> mean(bg.size()), cov(bg.size() * bg.size()),
        factor(bg.size() * bg.size());
    for (long i = 0; i < k; ++i) {
        mean[static_cast<size_t>(i)] = mean_post[i];
        for (long j = 0; j < k; ++j) {
            cov[static_cast<size_t>(i * k + j)] = cov_post(i, j);
            factor[static_cast<size_t>(i * k + j)] = fac(i, j);
        }
    }
    return PosteriorU::gaussian(bg, std::move(mean), std::move(cov),
                                std::move(factor));
}

PosteriorU abduct_discrete(const ScmModel& model, const Evidence& evidence,
                           const std::vector<std::string>& bg) {
    // Support and pmf per background variable.
    std::vector<std::vector<double>> values(bg.size());
    std::vector<std::vector<double>> pmf(bg.size());
    double state_count = 1.0;
    for (size_t i = 0; i < bg.size(); ++i) {
        const NoiseDist& d = model.noise.at(bg[i]);
        const auto& decl = model.decl(bg[i]);
        if (d.family == NoiseDist::Family::Bernoulli) {
            values[i] = {0.0, 1.0};
            pmf[i] = {1.0 - d.p, d.p};
        } else {
            for (size_t c = 0; c < d.probs.size(); ++c) {
                double code = decl.domain
                                  ? static_cast<double>(decl.domain->codes[c])
                                  : static_cast<double>(c);
                values[i].push_back(code);
                pmf[i].push_back(d.probs[c]);
            }
        }
        state_count *= static_cast<double>(values[i].size());
        if (state_count > 1 << 22) {
            throw AbductionError("discrete background state space too large to enumerate");
        }
    }

    std::vector<int> ev_slot;
    std::vector<double> ev_value;
    for (const auto& [var, value] : evidence.values) {
        ev_slot.push_back(model.index_of(var));
        ev_value.push_back(value);
    }

    std::vector<std::vector<double>> support;
    std::vector<double> weights;
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
            bool match = true;
            for (size_t j = 0; j < ev_slot.size(); ++j) {
                if (std::abs(slots[static_cast<size_t>(ev_slot[j])] - ev_value[j]) >
                    1e-9) {
                    match = false;
                    break;
                }
            }
            if (match) {
                std::vector<double> u(bg.size());
                for (size_t i = 0; i < bg.size(); ++i) u[i] = values[i][idx[i]];
                support.push_back(std::move(u));
                weights.push_back(w);
            }
        }
        // advance mixed-radix counter
        size_t d = 0;
        while (d < bg.size() && ++idx[d] == values[d].size()) {
            idx[d] = 0;
            ++d;
        }
        if (d == bg.size()) break;
    }

    if (support.empty()) {
        throw AbductionError("evidence event has zero probability under the model");
    }
    return PosteriorU::discrete(bg, std::move(support), std::move(weights));
}

} // namespace

bool abduction_supported(const ScmModel& model) {
    return detect_family(model) != Family::Unsupported;
}

PosteriorU abduct(const ScmModel& model, const Evidence& evidence) {
    model.require_valid();
    check_evidence(model, evidence);
    switch (detect_family(model)) {
        case Family::Gaussian:
            return abduct_gaussian(model, evidence, background_names(model));
        case Family::Discrete:
            return abduct_discrete(model, evidence, background_names(model));
        case Family::Unsupported:
            break;
    }
    throw AbductionError(
        "unsupported model family for abduction: requires all-linear equations "
        "with normal backgrounds, or all-discrete backgrounds");
}

} // namespace fairscm
