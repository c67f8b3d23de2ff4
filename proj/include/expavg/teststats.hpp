#pragma once

// Pointwise statistic curves over the zeta grid and the functionals that
// aggregate them: the exponential average (with its c -> 0 and c -> infinity
// regimes) and the supremum.

#include "expavg/core.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace expavg {

struct ExpAvgConfig {
    /// c >= 0; +infinity selects log \int exp(s/2) dJ.
    double c = 1.0;
    std::size_t p = 1;

    bool infinite() const { return c == std::numeric_limits<double>::infinity(); }
    static ExpAvgConfig infinity(std::size_t p) {
        return {std::numeric_limits<double>::infinity(), p};
    }
};

enum class VarianceTag { outer_product, bootstrap };

/// Per-zeta p x p matrices. For outer_product they estimate the variance of
/// one score contribution; for bootstrap they are the bootstrap covariance of
/// beta-hat, so that n V is the variance of sqrt(n) (beta-hat - beta0) and its
/// inverse plays the role of the score variance.
struct VarianceSource {
    VarianceTag tag = VarianceTag::outer_product;
    std::vector<Eigen::MatrixXd> matrices;
};

/// Second moment (1/n) sum s_i s_i' of per-observation rows.
Eigen::MatrixXd outer_product(const Eigen::MatrixXd& per_obs);

/// n s' V^{-1} s per zeta (outer_product) or n s' (n V) s (bootstrap).
StatCurve score_stat_curve(const std::vector<Eigen::VectorXd>& means, const VarianceSource& vars,
                           std::size_t n);

/// n (b - b0)' I (b - b0) with I the per-observation information. Empty
/// beta vectors mark infeasible fits and yield -inf entries.
StatCurve wald_stat_curve(const std::vector<Eigen::VectorXd>& beta_hats,
                          const Eigen::VectorXd& beta0, const std::vector<Eigen::MatrixXd>& infos,
                          std::size_t n);

/// -2 (l0 - l(zeta)), clamped at 0. NaN log-likelihoods mark infeasible fits.
StatCurve lr_stat_curve(double loglik0, std::span<const double> logliks);

/// (1+c)^{-p/2} \int exp(c/(2(1+c)) s) dJ; \int s dJ at c = 0; log \int exp(s/2) dJ
/// at c = infinity. Atoms whose curve entry is -inf are dropped and the
/// remaining weights renormalized; `dropped` receives their number.
double exp_average(const StatCurve& curve, const ZetaPrior& prior, const ExpAvgConfig& cfg,
                   std::size_t* dropped = nullptr);

/// Same functional on raw values and weights (weights need not sum to one).
double exp_average(std::span<const double> values, std::span<const double> weights,
                   const ExpAvgConfig& cfg, std::size_t* dropped = nullptr);

struct SupResult {
    double value = kNegInf;
    std::size_t index = 0;
};

/// Maximum over feasible entries, first attaining index on ties.
SupResult sup_stat(const StatCurve& curve);

/// Solves V x = b for symmetric PSD V, adding a ridge 1e-10 (1 + tr V) when V
/// is numerically singular; singular_variance naming `index` if that fails.
Eigen::VectorXd solve_psd(const Eigen::MatrixXd& V, const Eigen::VectorXd& b, std::size_t index);

}  // namespace expavg
