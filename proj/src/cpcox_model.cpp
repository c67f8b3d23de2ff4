#include "expavg/cpcox.hpp"

namespace expavg::cpcox {

CpCoxModel::CpCoxModel(Dataset ds, FitOptions opt, double zeta_lo, double zeta_hi)
    : ds_(std::move(ds)), opt_(opt), zeta_lo_(zeta_lo), zeta_hi_(zeta_hi) {}

std::shared_ptr<const NullFitState> CpCoxModel::fit_null(const CaseWeights& w) const {
    return std::make_shared<const NullFit>(cpcox::fit_null(ds_, w, opt_));
}

AltEstimate CpCoxModel::fit_alt(double zeta, const CaseWeights& w, const NullFitState& start) const {
    const auto* nf = dynamic_cast<const NullFit*>(&start);
    if (!nf) throw Error(ErrorCode::invalid_argument, "null fit does not come from this model");
    const AltFit af = cpcox::fit_alt(ds_, zeta, w, *nf, opt_);
    AltEstimate est;
    est.beta = af.beta_hat;
    est.zeta = zeta;
    est.report = af.report;
    return est;
}

ScoreBlock CpCoxModel::score_beta(const NullFitState& nf, double zeta, const CaseWeights& w) const {
    const auto* fit = dynamic_cast<const NullFit*>(&nf);
    if (!fit) throw Error(ErrorCode::invalid_argument, "null fit does not come from this model");
    auto s = cpcox::score_beta(ds_, *fit, zeta, w);
    return {s.mean, s.per_obs};
}

ScoreBlock CpCoxModel::efficient_score(const NullFitState& nf, double zeta) const {
    const auto* fit = dynamic_cast<const NullFit*>(&nf);
    if (!fit) throw Error(ErrorCode::invalid_argument, "null fit does not come from this model");
    const auto es = cpcox::efficient_score(ds_, *fit, zeta);
    ScoreBlock out;
    out.per_obs = es.per_obs;
    out.mean = es.per_obs.colwise().mean().transpose();
    return out;
}

}  // namespace expavg::cpcox
