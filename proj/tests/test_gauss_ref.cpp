#include "expavg/gauss_ref.hpp"
#include "expavg/limitlaw.hpp"
#include "expavg/teststats.hpp"

#include "equivalence.hpp"
#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

using namespace expavg;
using namespace expavg::gauss;
using Catch::Approx;

TEST_CASE("g_simulate: marginal mean and seed determinism") {
    const std::size_t n = 1000000;
    const auto d = g_simulate(n, GaussCPParams{1.5, 0.0, 2.0, 0.5}, 1);
    double m = 0.0;
    for (const auto& o : d) m += o.y;
    m /= static_cast<double>(n);
    CHECK(std::abs(m - 1.5) <= 4.0 * 2.0 / std::sqrt(static_cast<double>(n)));

    const auto a = g_simulate(100, GaussCPParams{}, 9);
    const auto b = g_simulate(100, GaussCPParams{}, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].y == b[i].y);
        CHECK(a[i].z == b[i].z);
    }
}

TEST_CASE("g_simulate: group means split at the change point") {
    const auto d = g_simulate(1000000, GaussCPParams{0.0, 3.0, 0.1, 0.5}, 2);
    double hi = 0, lo = 0, nh = 0, nl = 0;
    for (const auto& o : d) {
        if (o.z > 0.5) hi += o.y, nh += 1;
        else lo += o.y, nl += 1;
    }
    CHECK(std::abs(hi / nh - lo / nl - 3.0) <= 0.01);
}

TEST_CASE("efficient score vanishes at zeta = 0") {
    const auto d = g_simulate(200, GaussCPParams{}, 3);
    const auto s = g_efficient_score(d, 0.0, 0.1, 1.0);
    for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(s[i] == 0.0);
}

TEST_CASE("efficient score matches the profile log-likelihood derivative") {
    for (int rep = 0; rep < 20; ++rep) {
        const auto d = g_simulate(500, GaussCPParams{0.3, 0.0, 1.3, 0.5}, 100 + rep);
        const double zeta = 0.2 + 0.03 * rep;
        const auto f = g_fits(d, zeta);
        const double total = g_efficient_score(d, zeta, f.mu0, f.sigma0).sum();
        const double fd = oracle::central_diff(
            [&](double b) { return g_profile_loglik(d, zeta, b); }, 0.0, 1e-5);
        CHECK(total == Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("score means under literal and empirical centering") {
    // Both centerings give sum 1{z > zeta}(y - ybar) / (n sigma^2) because the
    // residuals sum to zero; the mean is O(n^{-1/2}), not zero.
    const std::size_t n = 2000;
    for (int rep = 0; rep < 100; ++rep) {
        const auto d = g_simulate(n, GaussCPParams{}, 500 + rep);
        const auto f = g_fits(d, 0.5);
        const double lit = g_efficient_score(d, 0.5, f.mu0, f.sigma0).mean();
        const double cen = g_efficient_score_centered(d, 0.5, f.mu0, f.sigma0).mean();
        double direct = 0.0;
        for (const auto& o : d) direct += o.z > 0.5 ? o.y - f.mu0 : 0.0;
        direct /= static_cast<double>(n) * f.sigma0 * f.sigma0;
        CHECK(lit == Approx(direct).margin(1e-12));
        CHECK(cen == Approx(direct).margin(1e-12));
        CHECK(std::abs(lit) <= 5.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("info kernel: closed form, symmetry, degeneration") {
    CHECK(g_info_kernel(0.3, 0.3, 2.0) == Approx(0.3 * 0.7 / 4.0));
    CHECK(g_info_kernel(0.2, 0.7, 1.0) == g_info_kernel(0.7, 0.2, 1.0));
    CHECK(std::abs(g_info_kernel(1.0 - 1e-12, 0.4, 1.0)) <= 1e-11);
}

TEST_CASE("info kernel diagonal matches the Monte Carlo score variance") {
    const std::size_t n = 100000;
    const auto d = g_simulate(n, GaussCPParams{0.0, 0.0, 1.0, 0.5}, 4);
    for (double z : {0.25, 0.5, 0.8}) {
        const auto s = g_efficient_score(d, z, 0.0, 1.0);
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = s[static_cast<Eigen::Index>(i)] * s[static_cast<Eigen::Index>(i)];
        const auto ms = oracle::mean_se(sq);
        CHECK(std::abs(ms.mean - g_info_kernel(z, z, 1.0)) <= 3.0 * ms.se);
    }
}

TEST_CASE("info kernel is PSD on a grid") {
    const auto prior = make_uniform_prior(0.05, 0.95, 19);
    const auto k = make_kernel(prior.points(), 1, [](double a, double b) {
        return Eigen::MatrixXd::Constant(1, 1, g_info_kernel(a, b, 1.0));
    });
    Eigen::LLT<Eigen::MatrixXd> llt(k.Sigma);
    CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("g_fits closed forms") {
    const auto d = g_simulate(300, GaussCPParams{0.5, 0.0, 1.0, 0.5}, 5);
    for (double z : {0.1, 0.5, 0.9}) {
        const auto f = g_fits(d, z);
        double hi = 0, lo = 0, nh = 0, nl = 0;
        for (const auto& o : d) {
            if (o.z > z) hi += o.y, nh += 1;
            else lo += o.y, nl += 1;
        }
        CHECK(f.beta == Approx(hi / nh - lo / nl).epsilon(1e-12));
        CHECK(f.mu1 == Approx(lo / nl).epsilon(1e-12));
        const double lr = -2.0 * (f.loglik0 - f.loglik1);
        CHECK(lr >= 0.0);
        const double n = static_cast<double>(d.size());
        CHECK(std::abs(lr - n * std::log(f.sigma0 * f.sigma0 / (f.sigma1 * f.sigma1))) <= 1e-10 * std::max(1.0, lr));
    }
    try {
        g_fits(d, 0.9999999);
        FAIL("expected unidentified-direction");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unidentified_direction);
        CHECK(std::string(e.what()).find("zeta") != std::string::npos);
    }
}

TEST_CASE("weighted fits with unit weights equal unweighted fits") {
    const auto d = g_simulate(100, GaussCPParams{}, 6);
    const auto a = g_fits(d, 0.4);
    const auto b = g_fits(d, 0.4, CaseWeights::unit(d.size()));
    CHECK(a.beta == b.beta);
    CHECK(a.loglik1 == b.loglik1);
}

TEST_CASE("Gaussian model nests the null on random datasets") {
    const auto prior = make_uniform_prior(0.05, 0.95, 10);
    for (int rep = 0; rep < 50; ++rep) {
        const auto d = g_simulate(30 + rep, GaussCPParams{0.0, rep % 2 ? 1.0 : 0.0, 1.0, 0.5}, 900 + rep);
        const GaussCpModel model(d);
        const auto w = CaseWeights::unit(d.size());
        const auto nf = model.fit_null(w);
        for (double z : prior.points()) {
            try {
                const auto af = model.fit_alt(z, w, *nf);
                CHECK(af.report.loglik >= nf->report.loglik - 1e-6);
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::unidentified_direction);
            }
        }
    }
}

TEST_CASE("CSV round trip") {
    const auto d = g_simulate(40, GaussCPParams{}, 7);
    std::stringstream ss;
    write_gauss_csv(ss, d);
    const auto back = read_gauss_csv(ss);
    REQUIRE(back.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(back[i].y == d[i].y);
        CHECK(back[i].z == d[i].z);
    }
    std::istringstream bad("a,b\n1,2\n");
    CHECK_THROWS_AS(read_gauss_csv(bad), Error);
}

TEST_CASE("score, Wald and LR curves agree at n = 10000") {
    const auto prior = make_uniform_prior(0.05, 0.95, 10);
    int within = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const auto d = g_simulate(10000, GaussCPParams{}, 4000 + rep);
        const auto c = equivalence::curves(d, prior);
        for (std::size_t g = 0; g < prior.size(); ++g) {
            CHECK(c.lr.values[g] >= 0.0);
            CHECK(c.wald.values[g] >= 0.0);
            CHECK(c.score.values[g] >= 0.0);
        }
        within += equivalence::max_gap(c) <= 0.5;
    }
    CHECK(within >= 18);
}
