#include "expavg/cpcox.hpp"
#include "expavg/rng.hpp"

#include "checks.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

using namespace expavg;
using namespace expavg::cpcox;
using Catch::Approx;

namespace {

Dataset make(std::vector<Observation> raw) { return validate_dataset(raw); }

std::vector<double> alpha_exponents(const Dataset& ds, double alpha) {
    std::vector<double> e(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) e[i] = std::exp(alpha * ds[i].z);
    return e;
}

}  // namespace

TEST_CASE("r_gamma") {
    CHECK(r_gamma(0.5, CPParams{0.0, 0.0, 0.0, 0.3}) == 0.0);
    CHECK(r_gamma(0.3, CPParams{9.0, 9.0, 1.0, 0.5}) == Approx(0.3));
    CHECK(r_gamma(0.8, CPParams{-0.5, -0.8, 0.0, 0.5}) == Approx(-1.14));
}

TEST_CASE("loglik single-observation values") {
    const StepCumHazard zero({1.0}, {0.0});
    CHECK(loglik(make({{1.0, 0, 0.5}}), CPParams{}, zero) == 0.0);
    CHECK(loglik(make({{1.0, 1, 0.5}}), CPParams{}, zero) == kNegInf);

    const StepCumHazard half({1.0}, {std::log(2.0)});
    CHECK(loglik(make({{1.0, 1, 0.5}}), CPParams{}, half) == Approx(-0.693147).epsilon(1e-6));

    const StepCumHazard capped({1.0}, {30.0});
    const double v = loglik(make({{1.0, 1, 0.5}}), CPParams{}, capped);
    CHECK(v == Approx(-9.357622968840175e-14).epsilon(1e-6));
}

TEST_CASE("loglik agrees with the direct per-observation formula") {
    const auto ds = simulate(120, CPParams{-0.5, -0.8, 0.3, 0.4}, 5.0, 3);
    const StepCumHazard L = initial_hazard(ds, CaseWeights::unit(ds.size()));
    const CPParams p{0.2, -0.4, 0.3, 0.4};
    std::vector<double> raw(ds.size());
    auto eng = make_engine(9);
    for (auto& x : raw) x = 0.5 + uniform_open(eng);
    const auto w = CaseWeights::standardize(raw);
    double direct = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i)
        direct += w[i] * oracle::obs_loglik(ds[i].delta, L(ds[i].v), r_gamma(ds[i].z, p));
    CHECK(loglik(ds, p, L, w) == Approx(direct).epsilon(1e-12));
}

TEST_CASE("step hazard evaluation and validation") {
    const StepCumHazard L({1.0, 2.0, 3.0}, {0.1, 0.5, 0.5});
    CHECK(L(0.5) == 0.0);
    CHECK(L(1.0) == 0.1);
    CHECK(L(1.5) == 0.1);
    CHECK(L(2.0) == 0.5);
    CHECK(L(10.0) == 0.5);
    CHECK_THROWS_AS(StepCumHazard({1.0, 2.0}, {0.5, 0.1}), Error);
    CHECK_THROWS_AS(StepCumHazard({1.0, 1.0}, {0.1, 0.2}), Error);
    CHECK_THROWS_AS(StepCumHazard({1.0}, {31.0}), Error);
}

TEST_CASE("simulate is deterministic") {
    const auto a = simulate(500, CPParams{-0.5, -0.8, 0.0, 0.5}, 5.0, 42);
    const auto b = simulate(500, CPParams{-0.5, -0.8, 0.0, 0.5}, 5.0, 42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].v == b[i].v);
        CHECK(a[i].delta == b[i].delta);
        CHECK(a[i].z == b[i].z);
    }
    const auto c = simulate(500, CPParams{-0.5, -0.8, 0.0, 0.5}, 5.0, 43);
    CHECK(c[0].v != a[0].v);
}

TEST_CASE("null censoring rate matches the closed-form probability") {
    // P(T > V) = (1/5) int_0^5 exp(-3 v^2) dv = sqrt(pi/3) erf(5 sqrt 3) / 10.
    const double exact = std::sqrt(M_PI / 3.0) * std::erf(5.0 * std::sqrt(3.0)) / 10.0;
    CHECK(exact == Approx(0.1023).margin(5e-5));
    const auto ds = simulate(1000000, CPParams::null_model(), 5.0, 2024);
    double cens = 0.0;
    for (const auto& o : ds.observations()) cens += 1 - o.delta;
    cens /= static_cast<double>(ds.size());
    CHECK(std::abs(cens - exact) <= 0.001);
}

TEST_CASE("icm_fit boundary cases") {
    const auto none = make({{1.0, 0, 0.1}, {2.0, 0, 0.5}, {3.0, 0, 0.9}});
    const std::vector<double> e3(3, 1.0);
    const auto r0 = icm_fit(none, e3, CaseWeights::unit(3));
    for (double v : r0.Lambda.values()) CHECK(v == 0.0);
    CHECK(r0.report.converged);

    const auto one = make({{1.0, 1, 0.5}});
    const std::vector<double> e1(1, 1.0);
    const auto r1 = icm_fit(one, e1, CaseWeights::unit(1));
    CHECK(r1.Lambda.values()[0] == kDefaultCap);
}

TEST_CASE("icm_fit reproduces the isotonic regression example") {
    const auto ds = make({{1.0, 0, 0.1}, {2.0, 1, 0.2}, {3.0, 0, 0.3}, {4.0, 1, 0.4}});
    const std::vector<double> e(4, 1.0);
    const auto r = icm_fit(ds, e, CaseWeights::unit(4));
    const auto v = r.Lambda.values();
    CHECK(v[0] == Approx(0.0).margin(1e-9));
    CHECK(v[1] == Approx(std::log(2.0)).epsilon(1e-8));
    CHECK(v[2] == Approx(std::log(2.0)).epsilon(1e-8));
    CHECK(v[3] == kDefaultCap);
}

TEST_CASE("icm_fit equals weighted isotonic regression with ties and weights") {
    for (std::uint64_t s = 0; s < 100; ++s) CHECK(checks::icm_pava_gap(1000 + s) <= 1e-8);
}

TEST_CASE("icm iterates ascend and stay monotone and capped") {
    auto eng = make_engine(17);
    std::uniform_int_distribution<int> nd(20, 200);
    std::uniform_real_distribution<double> ad(-2.0, 2.0);
    for (int rep = 0; rep < 100; ++rep) {
        const auto n = static_cast<std::size_t>(nd(eng));
        const double alpha = ad(eng);
        const auto sample = oracle::tied_sample(n, derive_seed(17, rep));
        const auto e = alpha_exponents(sample.ds, alpha);
        const CPParams p{0.0, 0.0, alpha, 0.5};
        const auto full = icm_fit(sample.ds, e, sample.w);
        double prev = kNegInf;
        for (int k = 0; k <= full.report.iterations; ++k) {
            IcmOptions opt;
            opt.max_iter = k;
            const auto r = icm_fit(sample.ds, e, sample.w, std::nullopt, opt);
            const auto v = r.Lambda.values();
            for (std::size_t j = 0; j < v.size(); ++j) {
                CHECK(v[j] >= 0.0);
                CHECK(v[j] <= kDefaultCap);
                if (j > 0) CHECK(v[j] >= v[j - 1]);
            }
            const double ll = loglik(sample.ds, p, r.Lambda, sample.w);
            CHECK(ll >= prev);
            prev = ll;
        }
        CHECK(full.report.converged);
    }
}

TEST_CASE("scaling the exponents rescales the hazard") {
    for (int rep = 0; rep < 20; ++rep) {
        const auto ds = simulate(150, CPParams{0.0, 0.0, 0.7, 0.5}, 5.0, 300 + rep);
        const auto w = CaseWeights::unit(ds.size());
        const auto e = alpha_exponents(ds, 0.7);
        const auto base = icm_fit(ds, e, w);
        for (double lam : {0.5, 2.0}) {
            std::vector<double> es(e);
            for (auto& x : es) x *= lam;
            const auto scaled = icm_fit(ds, es, w);
            const auto a = base.Lambda.values();
            const auto b = scaled.Lambda.values();
            const double limit = kDefaultCap * std::min(1.0, 1.0 / lam);
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (a[j] >= limit || b[j] >= kDefaultCap) continue;
                CHECK(b[j] == Approx(a[j] / lam).epsilon(1e-5).margin(1e-8));
            }
        }
    }
}

TEST_CASE("fit_null: unit weights equal the unweighted fit") {
    const auto ds = simulate(200, CPParams::null_model(), 5.0, 5);
    const auto a = fit_null(ds, CaseWeights::unit(ds.size()));
    const auto b = fit_null(ds, CaseWeights(std::vector<double>(ds.size(), 1.0)));
    CHECK(a.alpha_hat == b.alpha_hat);
    CHECK(a.report.loglik == b.report.loglik);
    CHECK(a.report.converged);
}

TEST_CASE("fit_null matches a brute-force profile search over alpha") {
    for (int rep = 0; rep < 10; ++rep) {
        const auto ds = simulate(100, CPParams::null_model(0.4), 5.0, 700 + rep);
        const auto w = CaseWeights::unit(ds.size());
        const auto nf = fit_null(ds, w);
        auto profile = [&](double a) {
            const auto r = icm_fit(ds, alpha_exponents(ds, a), w);
            return loglik(ds, CPParams::null_model(a), r.Lambda, w);
        };
        double best_a = 0.0, best = kNegInf;
        for (int k = -40; k <= 40; ++k) {
            const double ll = profile(0.1 * k);
            if (ll > best) best = ll, best_a = 0.1 * k;
        }
        for (double step : {0.01, 0.001, 0.0001}) {
            const double centre = best_a;
            for (int k = -10; k <= 10; ++k) {
                const double a = centre + step * k;
                const double ll = profile(a);
                if (ll > best) best = ll, best_a = a;
            }
        }
        CHECK(std::abs(nf.report.loglik - best) <= 1e-4);
        CHECK(nf.report.loglik >= best - 1e-8);
    }
}

TEST_CASE("fit_null consistency at n = 5000") {
    // Thresholds calibrated on 20 independent replicates:
    // the alpha estimate has sd about 0.13 and the survival-scale error stays
    // below 0.16. The cumulative hazard itself is capped where the data
    // carry no censored information, so the comparison uses exp(-Lambda).
    const auto ds = simulate(5000, CPParams::null_model(), 5.0, 1000);
    const auto nf = fit_null(ds, CaseWeights::unit(ds.size()));
    CHECK(nf.report.converged);
    CHECK(std::abs(nf.alpha_hat) <= 0.6);
    double sup = 0.0;
    for (double t = 0.5; t <= 2.0; t += 0.01)
        sup = std::max(sup, std::abs(std::exp(-nf.Lambda_hat(t)) - std::exp(-3.0 * t * t)));
    CHECK(sup <= 0.25);
    double sup_low = 0.0;
    for (double t = 0.5; t <= 0.8; t += 0.01)
        sup_low = std::max(sup_low, std::abs(nf.Lambda_hat(t) - 3.0 * t * t));
    CHECK(sup_low <= 0.5);
}

TEST_CASE("fit_null rejects data without both outcomes") {
    const auto ds = make({{1.0, 1, 0.1}, {2.0, 1, 0.5}});
    try {
        fit_null(ds, CaseWeights::unit(2));
        FAIL("expected degenerate-data");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::degenerate_data);
    }
}

TEST_CASE("fit_alt nests the null fit on random small datasets") {
    const auto prior = make_uniform_prior(0.05, 0.95, 10);
    auto eng = make_engine(55);
    std::uniform_int_distribution<int> nd(40, 120);
    for (int rep = 0; rep < 50; ++rep) {
        const CPParams truth = rep % 2 ? CPParams{-0.5, -0.8, 0.0, 0.5} : CPParams::null_model();
        const auto ds = simulate(static_cast<std::size_t>(nd(eng)), truth, 5.0, 5000 + rep);
        const CpCoxModel model(ds);
        const auto w = CaseWeights::unit(ds.size());
        const auto nf = model.fit_null(w);
        for (double z : prior.points()) {
            try {
                const auto af = model.fit_alt(z, w, *nf);
                CHECK(af.report.loglik >= nf->report.loglik - 1e-6);
                if (af.report.converged) CHECK(af.report.final_gradient_norm <= 1e-6);
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::unidentified_direction);
            }
        }
    }
}

TEST_CASE("fit_alt is deterministic and rejects empty sides") {
    const auto ds = simulate(200, CPParams{-0.5, -0.8, 0.0, 0.5}, 5.0, 8);
    const auto w = CaseWeights::unit(ds.size());
    const auto a = fit_alt(ds, 0.5, w);
    const auto b = fit_alt(ds, 0.5, w);
    CHECK(a.beta_hat == b.beta_hat);
    CHECK(a.alpha_hat == b.alpha_hat);
    CHECK(a.report.loglik == b.report.loglik);
    try {
        fit_alt(ds, 1.5, w);
        FAIL("expected unidentified-direction");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unidentified_direction);
        CHECK(std::string(e.what()).find("1.5") != std::string::npos);
    }
}

TEST_CASE("fit_alt consistency at n = 5000") {
    // Calibrated on 20 replicates: sd(beta1) about 0.25, sd(beta2) about 0.55.
    const auto ds = simulate(5000, CPParams{-0.5, -0.8, 0.0, 0.5}, 5.0, 2000);
    const auto af = fit_alt(ds, 0.5, CaseWeights::unit(ds.size()));
    CHECK(af.report.converged);
    CHECK(std::abs(af.beta_hat[0] + 0.5) <= 1.0);
    CHECK(std::abs(af.beta_hat[1] + 0.8) <= 2.0);
}

TEST_CASE("score_beta") {
    const auto ds = simulate(150, CPParams::null_model(0.5), 5.0, 78);
    const auto w = CaseWeights::unit(ds.size());
    const auto nf = fit_null(ds, w);

    const auto above_all = score_beta(ds, nf, 1.0, w);
    CHECK(above_all.mean[0] == 0.0);
    CHECK(above_all.mean[1] == 0.0);

    const auto s = score_beta(ds, nf, 0.4, w);
    const Eigen::Vector2d mean = s.per_obs.colwise().mean().transpose();
    CHECK((s.mean - mean).norm() <= 1e-12);
}

TEST_CASE("alpha score vanishes at converged interior null fits") {
    // Under separation the fit stops on the box face, where the alpha score
    // need not vanish.
    int interior = 0;
    for (std::uint64_t seed = 200; seed < 220; ++seed) {
        const auto ds = simulate(150, CPParams::null_model(0.5), 5.0, seed);
        const auto nf = fit_null(ds, CaseWeights::unit(ds.size()));
        if (std::abs(nf.alpha_hat) >= FitOptions{}.param_bound) continue;
        CHECK(nf.report.converged);
        ++interior;
        CHECK(std::abs(score_xi(ds, nf, 0.4).col(2).mean()) <= 1e-6);
    }
    CHECK(interior >= 15);
}

TEST_CASE("lambda_q") {
    CHECK(lambda_q(1, 0.0) == 1.0);
    CHECK(lambda_q(1, 1e-12) == Approx(1.0));
    CHECK(lambda_q(0, 2.0) == -2.0);
}

TEST_CASE("score_beta matches finite differences") {
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(checks::score_fd_relerr(9000 + s) <= 1e-5);
}

TEST_CASE("total beta score matches finite differences of the library loglik") {
    const auto ds = simulate(120, CPParams::null_model(-0.3), 5.0, 99);
    const auto w = CaseWeights::unit(ds.size());
    const auto nf = fit_null(ds, w);
    const double zeta = 0.35, h = 1e-5;
    const auto s = score_beta(ds, nf, zeta, w);
    auto ll = [&](double b1, double b2) {
        return loglik(ds, CPParams{b1, b2, nf.alpha_hat, zeta}, nf.Lambda_hat, w);
    };
    const double n = static_cast<double>(ds.size());
    CHECK((ll(h, 0) - ll(-h, 0)) / (2 * h) / n == Approx(s.mean[0]).epsilon(1e-5));
    CHECK((ll(0, h) - ll(0, -h)) / (2 * h) / n == Approx(s.mean[1]).epsilon(1e-5));
}

TEST_CASE("projection removes the alpha direction") {
    auto eng = make_engine(4);
    std::normal_distribution<double> norm(0.0, 1.0);
    Eigen::MatrixX3d r(400, 3);
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = norm(eng) + (j == 2 ? 0.5 * r(i, 0) : 0.0);
    const Eigen::RowVector3d mean = r.colwise().mean();
    r.rowwise() -= mean;
    const auto p = project_out_alpha(r);
    CHECK(p.colwise().mean().norm() <= 1e-8);
    CHECK(std::abs(p.col(0).dot(r.col(2))) <= 1e-8 * r.rows());
    CHECK(std::abs(p.col(1).dot(r.col(2))) <= 1e-8 * r.rows());
}

TEST_CASE("efficient score information is symmetric PSD") {
    const auto ds = simulate(300, CPParams::null_model(), 5.0, 31);
    const auto nf = fit_null(ds, CaseWeights::unit(ds.size()));
    for (double z : {0.2, 0.5, 0.8}) {
        const auto es = efficient_score(ds, nf, z);
        CHECK(es.bandwidth_used > 0.0);
        CHECK((es.info - es.info.transpose()).norm() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(es.info);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
    }
    EffScoreConfig bad;
    bad.bandwidth = -1.0;
    CHECK_THROWS_AS(efficient_score(ds, nf, 0.5, bad), Error);
}

TEST_CASE("unconditional and kernel efficient scores agree when Z is independent of V") {
    // Relative difference of the diagonal information over independent
    // datasets; the mean must sit within 3 Monte Carlo standard errors.
    const int R = 20;
    std::vector<std::vector<double>> rel(4);
    for (int r = 0; r < R; ++r) {
        const auto ds = simulate(10000, CPParams::null_model(), 5.0, 5000 + r);
        const auto nf = fit_null(ds, CaseWeights::unit(ds.size()));
        EffScoreConfig unc;
        unc.unconditional = true;
        EffScoreConfig narrow;
        narrow.bandwidth = 0.05;
        int k = 0;
        for (double z : {0.3, 0.7}) {
            const auto a = efficient_score(ds, nf, z, unc);
            const auto b = efficient_score(ds, nf, z, narrow);
            CHECK(a.bandwidth_used == 0.0);
            CHECK(b.bandwidth_used == 0.05);
            for (int i = 0; i < 2; ++i, ++k) rel[k].push_back((a.info(i, i) - b.info(i, i)) / a.info(i, i));
        }
    }
    for (const auto& d : rel) {
        const auto m = oracle::mean_se(d);
        CHECK(std::abs(m.mean) <= 3.0 * m.se);
    }
}

TEST_CASE("model adapter") {
    const auto ds = simulate(150, CPParams::null_model(), 5.0, 12);
    const CpCoxModel model(ds);
    CHECK(model.beta_dim() == 2);
    CHECK(model.sample_size() == 150);
    const auto w = CaseWeights::unit(150);
    const auto nf = model.fit_null(w);
    const auto direct = fit_null(ds, w);
    CHECK(nf->report.loglik == direct.report.loglik);
    const auto sb = model.score_beta(*nf, 0.5, w);
    CHECK(sb.per_obs.cols() == 2);
    const auto es = model.efficient_score(*nf, 0.5);
    CHECK(es.per_obs.rows() == 150);
    CHECK(model.beta0().isZero());
}
