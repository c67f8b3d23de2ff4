#include "expavg/wboot.hpp"

#include "expavg/rng.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace expavg {

std::vector<double> draw_raw_weights(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw Error(ErrorCode::invalid_argument, "draw_weights: n must be positive");
    Engine eng = make_engine(seed);
    std::exponential_distribution<double> expo(1.0);
    std::vector<double> out(n);
    for (auto& k : out) {
        do {
            k = expo(eng);
        } while (k > 5.0 || !(k > 0.0));
    }
    return out;
}

CaseWeights draw_weights(std::size_t n, std::uint64_t seed) {
    return CaseWeights::standardize(draw_raw_weights(n, seed));
}

double weight_cv2() {
    const double e = std::exp(-5.0);
    const double m1 = (1.0 - 6.0 * e) / (1.0 - e);
    const double m2 = (2.0 - 37.0 * e) / (1.0 - e);
    return (m2 - m1 * m1) / (m1 * m1);
}

BootstrapDraws bootstrap_curves(const ModelInterface& model, std::span<const double> zetas,
                                std::size_t M, std::uint64_t seed, const BootstrapOptions& opt) {
    if (M < 2) throw Error(ErrorCode::insufficient_draws, "bootstrap needs at least 2 draws");
    if (zetas.empty()) throw Error(ErrorCode::invalid_argument, "bootstrap needs a zeta grid");
    const std::size_t G = zetas.size();
    const std::size_t n = model.sample_size();
    const Eigen::VectorXd b0 = model.beta0();

    BootstrapDraws out;
    out.zetas.assign(zetas.begin(), zetas.end());
    out.M = M;
    out.p = model.beta_dim();
    out.d_beta.assign(M * G, Eigen::VectorXd());
    out.seeds.resize(M);
    std::vector<std::size_t> fails(M, 0);

    detail::parallel_for(M, opt.workers, [&](std::size_t k) {
        const std::uint64_t s = derive_seed(seed, k);
        out.seeds[k] = s;
        const CaseWeights w = draw_weights(n, s);
        std::shared_ptr<const NullFitState> nf;
        try {
            nf = model.fit_null(w);
        } catch (const Error&) {
            nf.reset();
        }
        if (!nf || !nf->report.converged) {
            fails[k] = G;
            return;
        }
        for (std::size_t g = 0; g < G; ++g) {
            try {
                const AltEstimate est = model.fit_alt(zetas[g], w, *nf);
                if (est.report.converged && est.beta.allFinite())
                    out.d_beta[k * G + g] = est.beta - b0;
                else
                    ++fails[k];
            } catch (const Error&) {
                ++fails[k];
            }
        }
    });

    for (std::size_t f : fails) out.failures += f;
    if (static_cast<double>(out.failures) > opt.max_failure_rate * static_cast<double>(M * G))
        throw Error(ErrorCode::bootstrap_instability,
                    std::to_string(out.failures) + " of " + std::to_string(M * G) +
                        " bootstrap refits failed");
    return out;
}

BootstrapDraws bootstrap_curves(const ModelInterface& model, const ZetaPrior& prior,
                                std::size_t M, std::uint64_t seed, const BootstrapOptions& opt) {
    return bootstrap_curves(model, prior.points(), M, seed, opt);
}

BootstrapSummary summarize(const BootstrapDraws& draws) {
    if (draws.M < 2) throw Error(ErrorCode::insufficient_draws, "summary needs at least 2 draws");
    const std::size_t G = draws.zetas.size();
    BootstrapSummary s;
    s.zetas = draws.zetas;
    s.mu.resize(G);
    s.V.resize(G);
    s.used.assign(G, 0);
    s.ridged.assign(G, false);
    const auto p = static_cast<Eigen::Index>(draws.p);
    for (std::size_t g = 0; g < G; ++g) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(p);
        std::size_t m = 0;
        for (std::size_t k = 0; k < draws.M; ++k) {
            if (!draws.present(k, g)) continue;
            mu += draws.at(k, g);
            ++m;
        }
        if (m < 2)
            throw Error(ErrorCode::insufficient_draws,
                        "fewer than 2 successful draws at zeta index " + std::to_string(g));
        mu /= static_cast<double>(m);
        Eigen::MatrixXd V = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t k = 0; k < draws.M; ++k) {
            if (!draws.present(k, g)) continue;
            const Eigen::VectorXd d = draws.at(k, g) - mu;
            V.noalias() += d * d.transpose();
        }
        V /= static_cast<double>(m);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < 1e-12) {
            V += 1e-10 * (1.0 + V.trace()) * Eigen::MatrixXd::Identity(p, p);
            s.ridged[g] = true;
        }
        s.mu[g] = std::move(mu);
        s.V[g] = std::move(V);
        s.used[g] = m;
    }
    return s;
}

StatCurve quad_curve(std::span<const Eigen::VectorXd> d, const BootstrapSummary& summary,
                     std::span<const std::size_t> columns, bool center) {
    if (d.size() != summary.zetas.size())
        throw Error(ErrorCode::alignment, "differences and summary differ in grid length");
    StatCurve out;
    out.values.resize(columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const std::size_t g = columns[j];
        if (g >= d.size()) throw Error(ErrorCode::alignment, "column outside the grid");
        if (d[g].size() == 0) {
            out.values[j] = kNegInf;
            continue;
        }
        const Eigen::VectorXd x = center ? Eigen::VectorXd(d[g] - summary.mu[g]) : d[g];
        out.values[j] = std::max(0.0, x.dot(solve_psd(summary.V[g], x, g)));
    }
    return out;
}

StatCurve wald_curve(std::span<const Eigen::VectorXd> d, const BootstrapSummary& summary,
                     std::span<const std::size_t> columns) {
    StatCurve out = quad_curve(d, summary, columns, false);
    const double k = weight_cv2();
    for (double& v : out.values)
        if (v != kNegInf) v *= k;
    return out;
}

namespace {

template <class Stat>
std::vector<double> replicate_stats(const BootstrapDraws& draws, const BootstrapSummary& summary,
                                    std::span<const std::size_t> columns, Stat&& stat) {
    const std::size_t G = draws.zetas.size();
    std::vector<double> out;
    out.reserve(draws.M);
    for (std::size_t k = 0; k < draws.M; ++k) {
        const std::span<const Eigen::VectorXd> row(draws.d_beta.data() + k * G, G);
        const StatCurve curve = quad_curve(row, summary, columns, true);
        // A draw with every atom missing carries no replicate.
        if (std::all_of(curve.values.begin(), curve.values.end(),
                        [](double v) { return v == kNegInf; }))
            continue;
        out.push_back(stat(curve));
    }
    return out;
}

}  // namespace

std::vector<double> standardized_T(const BootstrapDraws& draws, const BootstrapSummary& summary,
                                   std::span<const std::size_t> columns,
                                   std::span<const double> weights, const ExpAvgConfig& cfg) {
    if (weights.size() != columns.size())
        throw Error(ErrorCode::alignment, "prior weights and columns differ in length");
    return replicate_stats(draws, summary, columns, [&](const StatCurve& curve) {
        return exp_average(curve.values, weights, cfg);
    });
}

std::vector<double> standardized_T(const BootstrapDraws& draws, const BootstrapSummary& summary,
                                   const ZetaPrior& prior, const ExpAvgConfig& cfg) {
    if (prior.size() != summary.zetas.size())
        throw Error(ErrorCode::alignment, "prior and bootstrap grid differ in length");
    std::vector<std::size_t> cols(prior.size());
    for (std::size_t g = 0; g < cols.size(); ++g) cols[g] = g;
    return standardized_T(draws, summary, cols, prior.weights(), cfg);
}

std::vector<double> standardized_sup(const BootstrapDraws& draws, const BootstrapSummary& summary,
                                     std::span<const std::size_t> columns) {
    return replicate_stats(draws, summary, columns,
                           [](const StatCurve& curve) { return sup_stat(curve).value; });
}

double critical_value(std::span<const double> samples, double alpha) {
    if (samples.empty()) throw Error(ErrorCode::insufficient_draws, "no bootstrap samples");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
    std::vector<double> s(samples.begin(), samples.end());
    const double M = static_cast<double>(s.size());
    // The guard keeps e.g. 0.95 * 100 from rounding up to 96.
    auto idx = static_cast<std::size_t>(std::ceil((1.0 - alpha) * M - 1e-9));
    idx = std::clamp<std::size_t>(idx, 1, s.size());
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(idx - 1), s.end());
    return s[idx - 1];
}

double p_value(double observed, std::span<const double> samples) {
    if (samples.empty()) throw Error(ErrorCode::insufficient_draws, "no bootstrap samples");
    std::size_t ge = 0;
    for (double t : samples) ge += t >= observed ? 1 : 0;
    return (1.0 + static_cast<double>(ge)) / (static_cast<double>(samples.size()) + 1.0);
}

nlohmann::json to_json(const BootstrapSummary& summary) {
    nlohmann::json j;
    j["zetas"] = summary.zetas;
    auto& mu = j["mu"] = nlohmann::json::array();
    auto& V = j["V"] = nlohmann::json::array();
    for (std::size_t g = 0; g < summary.zetas.size(); ++g) {
        mu.push_back(std::vector<double>(summary.mu[g].data(),
                                         summary.mu[g].data() + summary.mu[g].size()));
        nlohmann::json m = nlohmann::json::array();
        for (Eigen::Index r = 0; r < summary.V[g].rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(summary.V[g].cols()));
            for (Eigen::Index c = 0; c < summary.V[g].cols(); ++c)
                row[static_cast<std::size_t>(c)] = summary.V[g](r, c);
            m.push_back(row);
        }
        V.push_back(m);
    }
    j["used"] = summary.used;
    j["ridged"] = summary.ridged;
    return j;
}

}  // namespace expavg
