#pragma once

// Change-point Cox regression under current status censoring.
//
//   r(z) = alpha z + (beta1 + beta2 z) 1{z > zeta}
//   P(T <= v | z) = 1 - exp(-Lambda(v) e^{r(z)})
//
// Lambda is estimated nonparametrically as a nondecreasing step function with
// jumps at the distinct examination times, capped at M.

#include "expavg/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace expavg::cpcox {

inline constexpr double kDefaultCap = 30.0;

struct CPParams {
    double beta1 = 0.0;
    double beta2 = 0.0;
    double alpha = 0.0;
    double zeta = 0.5;

    static CPParams null_model(double alpha = 0.0) { return {0.0, 0.0, alpha, 0.5}; }
};

double r_gamma(double z, const CPParams& params);

/// Right-continuous nondecreasing step function on the distinct observed times.
class StepCumHazard {
public:
    StepCumHazard() = default;
    StepCumHazard(std::vector<double> knots, std::vector<double> values, double cap = kDefaultCap);

    /// Zero below the first knot.
    double operator()(double t) const;

    std::span<const double> knots() const { return knots_; }
    std::span<const double> values() const { return values_; }
    double cap() const { return cap_; }
    std::size_t size() const { return knots_.size(); }

    /// Knots are the distinct v's of ds; values start at zero.
    static StepCumHazard zeros_on(const Dataset& ds, double cap = kDefaultCap);

private:
    std::vector<double> knots_;
    std::vector<double> values_;
    double cap_ = kDefaultCap;
};

/// Weighted log-likelihood. Returns -inf when an event has zero hazard.
double loglik(const Dataset& ds, const CPParams& params, const StepCumHazard& Lambda,
              const CaseWeights& w);
double loglik(const Dataset& ds, const CPParams& params, const StepCumHazard& Lambda);

/// Z ~ U(0,1), V ~ U(0, v_max), T with cumulative hazard 3 t^2 e^{r(z)}.
Dataset simulate(std::size_t n, const CPParams& truth, double v_max, std::uint64_t seed);

struct IcmOptions {
    double tol = 1e-10;      ///< on the KKT violation, per unit of total weight
    int max_iter = 500;
    double cap = kDefaultCap;
};

struct IcmResult {
    StepCumHazard Lambda;
    FitReport report;
};

/// NPMLE of Lambda at fixed per-observation factors exp(r_i).
IcmResult icm_fit(const Dataset& ds, std::span<const double> exponents, const CaseWeights& w,
                  const std::optional<StepCumHazard>& init = std::nullopt,
                  const IcmOptions& opt = {});

/// PAVA-of-delta starting value, floored at 1e-6 from the first event time.
StepCumHazard initial_hazard(const Dataset& ds, const CaseWeights& w, double cap = kDefaultCap);

struct FitOptions {
    double loglik_tol = 1e-8;
    double step_tol = 1e-8;
    double grad_tol = 1e-6;     ///< on the per-unit-weight gradient at exit
    int max_outer = 500;
    /// Box |xi_j| <= bound on (beta1, beta2, alpha); fits under separation stop on its faces.
    double param_bound = 50.0;
    IcmOptions icm{};
};

struct NullFit : NullFitState {
    double alpha_hat = 0.0;
    StepCumHazard Lambda_hat;
};

struct AltFit {
    Eigen::Vector2d beta_hat = Eigen::Vector2d::Zero();
    double alpha_hat = 0.0;
    StepCumHazard Lambda_hat;
    double zeta = 0.0;
    FitReport report;
};

NullFit fit_null(const Dataset& ds, const CaseWeights& w, const FitOptions& opt = {});

/// Warm-started from `start` (beta = 0, its alpha and Lambda).
AltFit fit_alt(const Dataset& ds, double zeta, const CaseWeights& w, const NullFit& start,
               const FitOptions& opt = {});
AltFit fit_alt(const Dataset& ds, double zeta, const CaseWeights& w, const FitOptions& opt = {});

/// dl/dr for one observation at cumulative hazard x = Lambda(v) e^r,
/// i.e. Lambda(v) Q(x; theta). Equals 1 in the limit x -> 0 with an event.
double lambda_q(int delta, double x);

/// Step 2 of the efficient-score construction: removes from the (beta1,
/// beta2) columns their empirical projection on the alpha column.
Eigen::MatrixX2d project_out_alpha(const Eigen::MatrixX3d& resid);

struct ScoreResult {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::MatrixX2d per_obs;
};

/// Score for (beta1, beta2) at the restricted fit.
ScoreResult score_beta(const Dataset& ds, const NullFit& nf, double zeta, const CaseWeights& w);

/// Full score for (beta1, beta2, alpha) at the restricted fit, per observation.
Eigen::MatrixX3d score_xi(const Dataset& ds, const NullFit& nf, double zeta);

struct EffScoreConfig {
    bool unconditional = false;
    /// Gaussian kernel bandwidth in v; default 1.06 sd(v) n^{-1/5}.
    std::optional<double> bandwidth;
};

struct EfficientScore {
    Eigen::MatrixX2d per_obs;
    Eigen::Matrix2d info = Eigen::Matrix2d::Zero();   ///< empirical outer product
    double bandwidth_used = 0.0;                      ///< 0 for the unconditional variant
};

EfficientScore efficient_score(const Dataset& ds, const NullFit& nf, double zeta,
                               const EffScoreConfig& cfg = {});

/// ModelInterface adapter binding a dataset.
class CpCoxModel : public ModelInterface {
public:
    explicit CpCoxModel(Dataset ds, FitOptions opt = {}, double zeta_lo = 0.0, double zeta_hi = 1.0);

    std::size_t beta_dim() const override { return 2; }
    std::size_t sample_size() const override { return ds_.size(); }
    std::pair<double, double> zeta_range() const override { return {zeta_lo_, zeta_hi_}; }

    std::shared_ptr<const NullFitState> fit_null(const CaseWeights& w) const override;
    AltEstimate fit_alt(double zeta, const CaseWeights& w, const NullFitState& start) const override;
    ScoreBlock score_beta(const NullFitState& nf, double zeta, const CaseWeights& w) const override;
    ScoreBlock efficient_score(const NullFitState& nf, double zeta) const override;

    const Dataset& dataset() const { return ds_; }

private:
    Dataset ds_;
    FitOptions opt_;
    double zeta_lo_;
    double zeta_hi_;
};

}  // namespace expavg::cpcox
