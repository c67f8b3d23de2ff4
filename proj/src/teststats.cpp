#include "expavg/teststats.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace expavg {

namespace {

void check_curve_entry(double& v) {
    // Quadratic forms can come out a hair below zero from rounding.
    if (v < 0.0 && v >= -1e-8) v = 0.0;
}

}  // namespace

Eigen::VectorXd solve_psd(const Eigen::MatrixXd& V, const Eigen::VectorXd& b, std::size_t index) {
    if (V.rows() != V.cols() || V.rows() != b.size())
        throw Error(ErrorCode::alignment, "variance matrix and vector sizes differ at zeta index " +
                                              std::to_string(index));
    if (!V.allFinite())
        throw Error(ErrorCode::singular_variance,
                    "nonfinite variance at zeta index " + std::to_string(index));
    const Eigen::MatrixXd S = 0.5 * (V + V.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    double lo = es.eigenvalues().minCoeff();
    Eigen::MatrixXd A = S;
    if (lo < 1e-12) {
        const double ridge = 1e-10 * (1.0 + std::abs(S.trace()));
        A += ridge * Eigen::MatrixXd::Identity(S.rows(), S.cols());
        lo += ridge;
    }
    if (!(lo > 0.0))
        throw Error(ErrorCode::singular_variance,
                    "singular variance at zeta index " + std::to_string(index));
    return A.ldlt().solve(b);
}

Eigen::MatrixXd outer_product(const Eigen::MatrixXd& per_obs) {
    if (per_obs.rows() == 0) throw Error(ErrorCode::empty_dataset, "empty-dataset");
    return per_obs.transpose() * per_obs / static_cast<double>(per_obs.rows());
}

StatCurve score_stat_curve(const std::vector<Eigen::VectorXd>& means, const VarianceSource& vars,
                           std::size_t n) {
    if (means.size() != vars.matrices.size())
        throw Error(ErrorCode::alignment, "score means and variances differ in grid length");
    const double dn = static_cast<double>(n);
    StatCurve out;
    out.values.resize(means.size());
    for (std::size_t g = 0; g < means.size(); ++g) {
        const Eigen::VectorXd& s = means[g];
        const Eigen::MatrixXd& V = vars.matrices[g];
        if (s.size() == 0) {
            out.values[g] = kNegInf;
            continue;
        }
        double v = 0.0;
        if (vars.tag == VarianceTag::outer_product) {
            v = dn * s.dot(solve_psd(V, s, g));
        } else {
            if (V.rows() != s.size() || V.cols() != s.size())
                throw Error(ErrorCode::alignment, "variance size differs at zeta index " +
                                                      std::to_string(g));
            v = dn * dn * s.dot(V * s);
        }
        check_curve_entry(v);
        out.values[g] = v;
    }
    return out;
}

StatCurve wald_stat_curve(const std::vector<Eigen::VectorXd>& beta_hats,
                          const Eigen::VectorXd& beta0, const std::vector<Eigen::MatrixXd>& infos,
                          std::size_t n) {
    if (beta_hats.size() != infos.size())
        throw Error(ErrorCode::alignment, "estimates and informations differ in grid length");
    StatCurve out;
    out.values.resize(beta_hats.size());
    for (std::size_t g = 0; g < beta_hats.size(); ++g) {
        if (beta_hats[g].size() == 0) {
            out.values[g] = kNegInf;
            continue;
        }
        if (beta_hats[g].size() != beta0.size() || infos[g].rows() != beta0.size() ||
            infos[g].cols() != beta0.size())
            throw Error(ErrorCode::alignment, "dimension mismatch at zeta index " +
                                                  std::to_string(g));
        const Eigen::VectorXd d = beta_hats[g] - beta0;
        double v = static_cast<double>(n) * d.dot(infos[g] * d);
        check_curve_entry(v);
        out.values[g] = v;
    }
    return out;
}

StatCurve lr_stat_curve(double loglik0, std::span<const double> logliks) {
    StatCurve out;
    out.values.resize(logliks.size());
    for (std::size_t g = 0; g < logliks.size(); ++g) {
        if (std::isnan(logliks[g])) {
            out.values[g] = kNegInf;
            continue;
        }
        if (logliks[g] < loglik0 - 1e-6)
            throw Error(ErrorCode::optimizer_inconsistency,
                        "alternative log-likelihood below the null fit at zeta index " +
                            std::to_string(g));
        out.values[g] = std::max(0.0, -2.0 * (loglik0 - logliks[g]));
    }
    return out;
}

double exp_average(std::span<const double> values, std::span<const double> weights,
                   const ExpAvgConfig& cfg, std::size_t* dropped) {
    if (values.size() != weights.size())
        throw Error(ErrorCode::alignment, "curve and prior differ in length");
    if (!(cfg.c >= 0.0)) throw Error(ErrorCode::invalid_argument, "c must be nonnegative");
    std::size_t n_drop = 0;
    double wsum = 0.0;
    double top = kNegInf;
    const double k = cfg.infinite() ? 0.5 : 0.5 * cfg.c / (1.0 + cfg.c);
    for (std::size_t g = 0; g < values.size(); ++g) {
        if (values[g] == kNegInf) {
            ++n_drop;
            continue;
        }
        if (std::isnan(values[g])) throw Error(ErrorCode::invalid_argument, "NaN curve entry");
        wsum += weights[g];
        top = std::max(top, k * values[g]);
    }
    if (dropped) *dropped = n_drop;
    if (!(wsum > 0.0))
        throw Error(ErrorCode::degenerate_data, "every atom of the prior is infeasible");

    if (cfg.c == 0.0) {
        double acc = 0.0;
        for (std::size_t g = 0; g < values.size(); ++g)
            if (values[g] != kNegInf) acc += weights[g] * values[g];
        return acc / wsum;
    }
    // log \int exp(k s) dJ, with the largest exponent factored out.
    double acc = 0.0;
    for (std::size_t g = 0; g < values.size(); ++g)
        if (values[g] != kNegInf) acc += weights[g] * std::exp(k * values[g] - top);
    const double log_int = top + std::log(acc / wsum);
    if (cfg.infinite()) return log_int;
    return std::exp(log_int - 0.5 * static_cast<double>(cfg.p) * std::log1p(cfg.c));
}

double exp_average(const StatCurve& curve, const ZetaPrior& prior, const ExpAvgConfig& cfg,
                   std::size_t* dropped) {
    return exp_average(curve.values, prior.weights(), cfg, dropped);
}

SupResult sup_stat(const StatCurve& curve) {
    if (curve.values.empty()) throw Error(ErrorCode::invalid_argument, "sup of an empty curve");
    SupResult r;
    bool any = false;
    for (std::size_t g = 0; g < curve.values.size(); ++g) {
        if (curve.values[g] == kNegInf) continue;
        if (!any || curve.values[g] > r.value) {
            r.value = curve.values[g];
            r.index = g;
            any = true;
        }
    }
    if (!any) throw Error(ErrorCode::degenerate_data, "every curve entry is infeasible");
    return r;
}

}  // namespace expavg
