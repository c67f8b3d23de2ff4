#pragma once

// Weighted bootstrap: random case weights, refits over the zeta grid,
// centering and standardization, replicate statistics, critical values.

#include "expavg/core.hpp"
#include "expavg/teststats.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace expavg {

/// Exp(1) draws conditioned on being at most 5, by rejection.
std::vector<double> draw_raw_weights(std::size_t n, std::uint64_t seed);

/// draw_raw_weights divided by their mean.
CaseWeights draw_weights(std::size_t n, std::uint64_t seed);

/// Squared coefficient of variation of the raw weights. The bootstrap
/// covariance of an estimator is this multiple of its sampling covariance.
double weight_cv2();

struct BootstrapDraws {
    std::vector<double> zetas;
    std::size_t M = 0;
    std::size_t p = 0;
    /// Row-major M x G; an empty vector marks a failed refit.
    std::vector<Eigen::VectorXd> d_beta;
    std::vector<std::uint64_t> seeds;
    std::size_t failures = 0;

    const Eigen::VectorXd& at(std::size_t k, std::size_t g) const { return d_beta[k * zetas.size() + g]; }
    bool present(std::size_t k, std::size_t g) const { return at(k, g).size() != 0; }
};

struct BootstrapOptions {
    std::size_t workers = 1;
    /// Error when more than this share of the refits fail.
    double max_failure_rate = 0.2;
};

/// Draw k uses weights from derive_seed(seed, k) and refits the null and
/// every zeta; results do not depend on the number of workers.
BootstrapDraws bootstrap_curves(const ModelInterface& model, std::span<const double> zetas,
                                std::size_t M, std::uint64_t seed,
                                const BootstrapOptions& opt = {});
BootstrapDraws bootstrap_curves(const ModelInterface& model, const ZetaPrior& prior,
                                std::size_t M, std::uint64_t seed,
                                const BootstrapOptions& opt = {});

struct BootstrapSummary {
    std::vector<double> zetas;
    std::vector<Eigen::VectorXd> mu;
    std::vector<Eigen::MatrixXd> V;
    std::vector<std::size_t> used;    ///< draws available per zeta
    std::vector<bool> ridged;
};

/// Per-zeta mean and covariance (divisor: number of available draws).
BootstrapSummary summarize(const BootstrapDraws& draws);

/// Curve of (d - mu)' V^{-1} (d - mu) for one set of per-zeta differences,
/// restricted to `columns` of the summary; `center` = false uses d itself.
StatCurve quad_curve(std::span<const Eigen::VectorXd> d, const BootstrapSummary& summary,
                     std::span<const std::size_t> columns, bool center = true);

/// Uncentered curve d' V^{-1} d with V rescaled to the sampling covariance
/// (V / weight_cv2()); the observed statistic paired with the replicates.
StatCurve wald_curve(std::span<const Eigen::VectorXd> d, const BootstrapSummary& summary,
                     std::span<const std::size_t> columns);

/// Exponential-average replicate statistics T_k over the given columns,
/// whose prior weights are `weights`.
std::vector<double> standardized_T(const BootstrapDraws& draws, const BootstrapSummary& summary,
                                   std::span<const std::size_t> columns,
                                   std::span<const double> weights, const ExpAvgConfig& cfg);
std::vector<double> standardized_T(const BootstrapDraws& draws, const BootstrapSummary& summary,
                                   const ZetaPrior& prior, const ExpAvgConfig& cfg);

/// Supremum replicate statistics over the given columns.
std::vector<double> standardized_sup(const BootstrapDraws& draws, const BootstrapSummary& summary,
                                     std::span<const std::size_t> columns);

/// Order statistic ceil((1 - alpha) M), 1-based.
double critical_value(std::span<const double> samples, double alpha);

/// (1 + #{T_k >= observed}) / (M + 1).
double p_value(double observed, std::span<const double> samples);

nlohmann::json to_json(const BootstrapSummary& summary);

}  // namespace expavg
