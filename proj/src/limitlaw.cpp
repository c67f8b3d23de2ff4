#include "expavg/limitlaw.hpp"

#include "expavg/rng.hpp"
#include "expavg/wboot.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace expavg {

CovKernel make_kernel(std::span<const double> grid, std::size_t p,
                      const std::function<Eigen::MatrixXd(double, double)>& block) {
    if (grid.empty() || p == 0) throw Error(ErrorCode::kernel_error, "empty kernel grid");
    const auto G = static_cast<Eigen::Index>(grid.size());
    const auto P = static_cast<Eigen::Index>(p);
    CovKernel k;
    k.grid.assign(grid.begin(), grid.end());
    k.p = p;
    k.Sigma.resize(G * P, G * P);
    for (Eigen::Index a = 0; a < G; ++a) {
        for (Eigen::Index b = 0; b < G; ++b) {
            const Eigen::MatrixXd B = block(grid[static_cast<std::size_t>(a)],
                                            grid[static_cast<std::size_t>(b)]);
            if (B.rows() != P || B.cols() != P)
                throw Error(ErrorCode::kernel_error, "kernel block has the wrong size");
            k.Sigma.block(a * P, b * P, P, P) = B;
        }
    }
    for (Eigen::Index a = 0; a < G; ++a) k.info.push_back(k.Sigma.block(a * P, a * P, P, P));
    return k;
}

CovKernel kernel_from_scores(std::span<const double> grid,
                             const std::vector<Eigen::MatrixXd>& scores) {
    if (grid.size() != scores.size() || grid.empty())
        throw Error(ErrorCode::alignment, "score matrices and grid differ in length");
    const Eigen::Index n = scores[0].rows();
    const Eigen::Index P = scores[0].cols();
    for (const auto& s : scores)
        if (s.rows() != n || s.cols() != P)
            throw Error(ErrorCode::alignment, "score matrices differ in shape");
    if (n == 0 || P == 0) throw Error(ErrorCode::kernel_error, "empty score matrices");
    const auto G = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd all(n, G * P);
    for (Eigen::Index a = 0; a < G; ++a) all.middleCols(a * P, P) = scores[static_cast<std::size_t>(a)];
    CovKernel k;
    k.grid.assign(grid.begin(), grid.end());
    k.p = static_cast<std::size_t>(P);
    k.Sigma = all.transpose() * all / static_cast<double>(n);
    for (Eigen::Index a = 0; a < G; ++a) k.info.push_back(k.Sigma.block(a * P, a * P, P, P));
    return k;
}

namespace {

struct Prepared {
    Eigen::MatrixXd L;
    std::vector<Eigen::MatrixXd> info_inv;
    std::size_t G = 0;
    std::size_t p = 0;
};

Prepared prepare(const CovKernel& kernel, const ZetaPrior& prior) {
    const std::size_t G = kernel.grid.size();
    const auto P = static_cast<Eigen::Index>(kernel.p);
    if (prior.size() != G)
        throw Error(ErrorCode::alignment, "prior and kernel grid differ in length");
    for (std::size_t g = 0; g < G; ++g)
        if (std::abs(prior.points()[g] - kernel.grid[g]) > 1e-12)
            throw Error(ErrorCode::alignment, "prior and kernel grid points differ");
    const auto dim = static_cast<Eigen::Index>(G) * P;
    if (kernel.Sigma.rows() != dim || kernel.Sigma.cols() != dim || kernel.info.size() != G)
        throw Error(ErrorCode::kernel_error, "kernel matrix has the wrong size");
    if (!kernel.Sigma.allFinite()) throw Error(ErrorCode::kernel_error, "nonfinite kernel");
    if (!kernel.Sigma.isApprox(kernel.Sigma.transpose(), 1e-10))
        throw Error(ErrorCode::kernel_error, "kernel matrix is not symmetric");

    Prepared out;
    out.G = G;
    out.p = kernel.p;
    const Eigen::MatrixXd S = 0.5 * (kernel.Sigma + kernel.Sigma.transpose());
    const double scale = std::max(1.0, S.diagonal().cwiseAbs().mean());
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    for (double jitter : {1e-12, 1e-11, 1e-10}) {
        if (llt.info() == Eigen::Success) break;
        llt.compute(S + jitter * scale * Eigen::MatrixXd::Identity(dim, dim));
    }
    if (llt.info() != Eigen::Success)
        throw Error(ErrorCode::kernel_error, "kernel is not positive semidefinite");
    out.L = llt.matrixL();
    if (!out.L.allFinite()) throw Error(ErrorCode::kernel_error, "kernel factorization failed");

    for (std::size_t g = 0; g < G; ++g) {
        const Eigen::MatrixXd& I = kernel.info[g];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(I, Eigen::EigenvaluesOnly);
        if (!(es.eigenvalues().minCoeff() > 1e-14 * std::max(1.0, I.trace())))
            throw Error(ErrorCode::kernel_error,
                        "singular information at zeta index " + std::to_string(g));
        out.info_inv.push_back(I.inverse());
    }
    return out;
}

// Draws are generated in fixed-size batches, each from its own derived seed,
// so the output does not depend on how batches are spread over threads.
template <class Stat>
std::vector<double> simulate_forms(const Prepared& prep, const Eigen::VectorXd& drift,
                                   std::size_t draws, std::uint64_t seed,
                                   const LimitOptions& opt, Stat&& stat) {
    if (draws == 0) throw Error(ErrorCode::invalid_argument, "draws must be positive");
    const std::size_t batch = std::max<std::size_t>(1, opt.batch);
    const std::size_t n_batches = (draws + batch - 1) / batch;
    const auto P = static_cast<Eigen::Index>(prep.p);
    const auto dim = static_cast<Eigen::Index>(prep.G) * P;
    std::vector<double> out(draws);
    detail::parallel_for(n_batches, opt.workers, [&](std::size_t b) {
        Engine eng = make_engine(derive_seed(seed, b));
        std::normal_distribution<double> norm(0.0, 1.0);
        Eigen::VectorXd z(dim), x(dim);
        std::vector<double> q(prep.G);
        const std::size_t end = std::min(draws, (b + 1) * batch);
        for (std::size_t d = b * batch; d < end; ++d) {
            for (Eigen::Index i = 0; i < dim; ++i) z[i] = norm(eng);
            x.noalias() = prep.L.triangularView<Eigen::Lower>() * z;
            if (drift.size() != 0) x += drift;
            for (std::size_t g = 0; g < prep.G; ++g) {
                const auto seg = x.segment(static_cast<Eigen::Index>(g) * P, P);
                q[g] = seg.dot(prep.info_inv[g] * seg);
            }
            out[d] = stat(q);
        }
    });
    return out;
}

}  // namespace

LimitSamples simulate_echi(const CovKernel& kernel, const ZetaPrior& prior,
                           const ExpAvgConfig& cfg, std::size_t draws, std::uint64_t seed,
                           const LimitOptions& opt) {
    const Prepared prep = prepare(kernel, prior);
    ExpAvgConfig c = cfg;
    c.p = kernel.p;
    LimitSamples s;
    s.cfg = c;
    s.seed = seed;
    s.values = simulate_forms(prep, Eigen::VectorXd(), draws, seed, opt,
                              [&](const std::vector<double>& q) {
                                  return exp_average(q, prior.weights(), c);
                              });
    return s;
}

LimitSamples simulate_supchi(const CovKernel& kernel, const ZetaPrior& prior, std::size_t draws,
                             std::uint64_t seed, const LimitOptions& opt) {
    const Prepared prep = prepare(kernel, prior);
    LimitSamples s;
    s.cfg = ExpAvgConfig::infinity(kernel.p);
    s.seed = seed;
    s.values = simulate_forms(prep, Eigen::VectorXd(), draws, seed, opt,
                              [](const std::vector<double>& q) {
                                  return *std::max_element(q.begin(), q.end());
                              });
    return s;
}

LimitSamples simulate_fchi(const CovKernel& kernel, const ZetaPrior& prior,
                           const ExpAvgConfig& cfg, const Eigen::VectorXd& h_beta, double zeta1,
                           std::size_t draws, std::uint64_t seed, const LimitOptions& opt,
                           bool* snapped) {
    const Prepared prep = prepare(kernel, prior);
    const auto P = static_cast<Eigen::Index>(kernel.p);
    if (h_beta.size() != P) throw Error(ErrorCode::alignment, "h_beta has the wrong dimension");
    std::size_t g1 = 0;
    for (std::size_t g = 1; g < kernel.grid.size(); ++g)
        if (std::abs(kernel.grid[g] - zeta1) < std::abs(kernel.grid[g1] - zeta1)) g1 = g;
    if (snapped) *snapped = kernel.grid[g1] != zeta1;
    const Eigen::VectorXd drift =
        kernel.Sigma.middleCols(static_cast<Eigen::Index>(g1) * P, P) * h_beta;
    ExpAvgConfig c = cfg;
    c.p = kernel.p;
    LimitSamples s;
    s.cfg = c;
    s.seed = seed;
    s.values = simulate_forms(prep, drift, draws, seed, opt, [&](const std::vector<double>& q) {
        return exp_average(q, prior.weights(), c);
    });
    return s;
}

double rchi_cdf(const LimitSamples& samples, double t) {
    if (samples.values.empty()) throw Error(ErrorCode::insufficient_draws, "no limit samples");
    double acc = 0.0;
    for (double x : samples.values) acc += x <= t ? x : 0.0;
    return acc / static_cast<double>(samples.values.size());
}

double limit_critical_value(const LimitSamples& samples, double alpha) {
    return critical_value(samples.values, alpha);
}

std::string format_c(double c) {
    return c == std::numeric_limits<double>::infinity() ? "inf" : format_double(c);
}

void write_limit_csv(std::ostream& out, const std::vector<LimitRow>& rows) {
    out << "statistic,c,alpha,critical_value,draws,seed\n";
    for (const auto& r : rows) {
        out << r.statistic << ',' << (r.statistic == "supchi" ? std::string() : format_c(r.c))
            << ',' << format_double(r.alpha) << ',' << format_double(r.critical_value) << ','
            << r.draws << ',' << r.seed << '\n';
    }
}

}  // namespace expavg
