#pragma once

// Gaussian change-point regression Y = mu + beta 1{Z > zeta} + sigma eps.
// Everything is available in closed form, which makes it the reference
// model for the limit-law and bootstrap machinery.

#include "expavg/core.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace expavg::gauss {

struct GaussCPParams {
    double mu = 0.0;
    double beta = 0.0;
    double sigma = 1.0;
    double zeta = 0.5;
};

struct GaussObservation {
    double y = 0.0;
    double z = 0.0;
};

using GaussData = std::vector<GaussObservation>;

/// Z ~ U(0,1), Y = mu + beta 1{Z > zeta} + sigma N(0,1).
GaussData g_simulate(std::size_t n, const GaussCPParams& params, std::uint64_t seed);

/// (1{z > zeta} - (1 - zeta)) (y - mu_hat) / sigma_hat^2 per observation.
Eigen::VectorXd g_efficient_score(const GaussData& data, double zeta, double mu_hat,
                                  double sigma_hat);

/// Same with the centering 1 - zeta replaced by the empirical fraction above zeta.
Eigen::VectorXd g_efficient_score_centered(const GaussData& data, double zeta, double mu_hat,
                                           double sigma_hat);

/// Covariance kernel [(1 - max(z1, z2)) - (1 - z1)(1 - z2)] / sigma^2.
double g_info_kernel(double zeta1, double zeta2, double sigma);

struct GaussFits {
    double mu0 = 0.0;
    double sigma0 = 0.0;   ///< ML (divisor n) standard deviation
    double loglik0 = 0.0;
    double mu1 = 0.0;      ///< mean of the z <= zeta side
    double beta = 0.0;     ///< above minus below
    double sigma1 = 0.0;
    double loglik1 = 0.0;
};

/// Closed-form weighted MLEs under the null and at the split zeta.
GaussFits g_fits(const GaussData& data, double zeta, const CaseWeights& w);
GaussFits g_fits(const GaussData& data, double zeta);

/// Profile log-likelihood in beta at fixed zeta (mu and sigma maximized out).
double g_profile_loglik(const GaussData& data, double zeta, double beta);

// CSV with header `y,z`.
GaussData read_gauss_csv(std::istream& in);
GaussData read_gauss_csv(const std::string& path);
void write_gauss_csv(std::ostream& out, const GaussData& data);

struct GaussNullFit : NullFitState {
    double mu_hat = 0.0;
    double sigma_hat = 0.0;
};

/// ModelInterface adapter, p = 1, admissible zeta in (0.05, 0.95).
class GaussCpModel : public ModelInterface {
public:
    explicit GaussCpModel(GaussData data);

    std::size_t beta_dim() const override { return 1; }
    std::size_t sample_size() const override { return data_.size(); }
    std::pair<double, double> zeta_range() const override { return {0.05, 0.95}; }

    std::shared_ptr<const NullFitState> fit_null(const CaseWeights& w) const override;
    AltEstimate fit_alt(double zeta, const CaseWeights& w, const NullFitState& start) const override;
    ScoreBlock score_beta(const NullFitState& nf, double zeta, const CaseWeights& w) const override;
    ScoreBlock efficient_score(const NullFitState& nf, double zeta) const override;

    const GaussData& data() const { return data_; }

private:
    GaussData data_;
};

}  // namespace expavg::gauss
