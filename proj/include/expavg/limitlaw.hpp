#pragma once

// Monte Carlo simulation of the limiting laws of the exponential-average and
// sup statistics, driven by a Gaussian process with a given covariance kernel.

#include "expavg/core.hpp"
#include "expavg/teststats.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace expavg {

struct CovKernel {
    std::vector<double> grid;
    std::size_t p = 1;
    /// (G p) x (G p) with p x p blocks sigma(zeta_i, zeta_j).
    Eigen::MatrixXd Sigma;
    /// Diagonal blocks, the efficient information per zeta.
    std::vector<Eigen::MatrixXd> info;
};

/// Builds the block matrix from a p x p kernel function.
CovKernel make_kernel(std::span<const double> grid, std::size_t p,
                      const std::function<Eigen::MatrixXd(double, double)>& block);

/// Empirical kernel (1/n) sum_i s_i(zeta_a) s_i(zeta_b)' from per-zeta n x p
/// efficient-score matrices.
CovKernel kernel_from_scores(std::span<const double> grid,
                             const std::vector<Eigen::MatrixXd>& scores);

struct LimitSamples {
    std::vector<double> values;
    ExpAvgConfig cfg;
    std::uint64_t seed = 0;
};

struct LimitOptions {
    std::size_t workers = 1;
    /// Draws per independently seeded batch; part of the result's identity.
    std::size_t batch = 4096;
};

/// Samples of the exponential average of G(zeta)' I(zeta)^{-1} G(zeta).
LimitSamples simulate_echi(const CovKernel& kernel, const ZetaPrior& prior,
                           const ExpAvgConfig& cfg, std::size_t draws, std::uint64_t seed,
                           const LimitOptions& opt = {});

/// Samples of sup_zeta G(zeta)' I(zeta)^{-1} G(zeta).
LimitSamples simulate_supchi(const CovKernel& kernel, const ZetaPrior& prior, std::size_t draws,
                             std::uint64_t seed, const LimitOptions& opt = {});

/// As simulate_echi with the drift Sigma(zeta, zeta1) h added to G(zeta).
/// zeta1 is snapped to the nearest grid point; `snapped` reports whether it moved.
LimitSamples simulate_fchi(const CovKernel& kernel, const ZetaPrior& prior,
                           const ExpAvgConfig& cfg, const Eigen::VectorXd& h_beta, double zeta1,
                           std::size_t draws, std::uint64_t seed, const LimitOptions& opt = {},
                           bool* snapped = nullptr);

/// Mean over samples of 1{x <= t} x.
double rchi_cdf(const LimitSamples& samples, double t);

/// Empirical (1 - alpha) quantile, same order-statistic convention as the bootstrap.
double limit_critical_value(const LimitSamples& samples, double alpha);

struct LimitRow {
    std::string statistic;
    double c = 0.0;
    double alpha = 0.05;
    double critical_value = 0.0;
    std::size_t draws = 0;
    std::uint64_t seed = 0;
};

/// Columns statistic,c,alpha,critical_value,draws,seed.
void write_limit_csv(std::ostream& out, const std::vector<LimitRow>& rows);

/// Text form of c: "inf" for the infinite regime.
std::string format_c(double c);

}  // namespace expavg
